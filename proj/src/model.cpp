#include "mvjump/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "mvjump/error.hpp"
#include "mvjump/hash.hpp"

namespace mvjump {

std::vector<double> CoefficientSet::eval_drift(double t, std::span<const double> x,
                                               const MeasureView& mu) const {
  std::vector<double> out(dim_state);
  drift(t, x, mu, out);
  return out;
}

std::vector<double> CoefficientSet::eval_diffusion(double t, std::span<const double> x,
                                                   const MeasureView& mu) const {
  std::vector<double> out(dim_state * dim_noise);
  diffusion(t, x, mu, out);
  return out;
}

std::vector<double> CoefficientSet::eval_jump(double t, std::span<const double> x,
                                              const MeasureView& mu, JumpMark u) const {
  std::vector<double> out(dim_state);
  jump(t, x, mu, u, out);
  return out;
}

namespace {

class Params {
 public:
  explicit Params(const ModelConfig& c) : c_(c) {}

  double get(const std::string& key, double fallback) {
    seen_.insert(key);
    const auto it = c_.params.find(key);
    const double v = it == c_.params.end() ? fallback : it->second;
    if (!std::isfinite(v)) throw InvalidArgument(c_.id + ": parameter '" + key + "' must be finite");
    return v;
  }
  double nonneg(const std::string& key, double fallback) {
    const double v = get(key, fallback);
    if (v < 0.0) throw InvalidArgument(c_.id + ": parameter '" + key + "' must be >= 0");
    return v;
  }
  std::size_t count(const std::string& key, double fallback) {
    const double v = get(key, fallback);
    if (v < 1.0 || v != std::floor(v) || v > 1e6)
      throw InvalidArgument(c_.id + ": parameter '" + key + "' must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  std::optional<std::vector<double>> array(const std::string& key) {
    seen_.insert(key);
    const auto it = c_.arrays.find(key);
    if (it == c_.arrays.end()) return std::nullopt;
    for (double v : it->second)
      if (!std::isfinite(v)) throw InvalidArgument(c_.id + ": array '" + key + "' must be finite");
    return it->second;
  }
  void finish() const {
    for (const auto& [k, v] : c_.params)
      if (!seen_.count(k)) throw InvalidArgument(c_.id + ": unknown parameter '" + k + "'");
    for (const auto& [k, v] : c_.arrays)
      if (!seen_.count(k)) throw InvalidArgument(c_.id + ": unknown array '" + k + "'");
  }

 private:
  const ModelConfig& c_;
  std::set<std::string> seen_;
};

std::uint64_t fingerprint(const ModelConfig& c) {
  Fnv1a h;
  h.str(c.id);
  for (const auto& [k, v] : c.params) h.str(k).num(v);
  for (const auto& [k, arr] : c.arrays) {
    h.str(k);
    for (double v : arr) h.num(v);
  }
  for (const auto& m : c.marks) h.num(m.mark).num(m.weight);
  return h.value();
}

void fill_zero(std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); }

SdeSystem zero_model(Params& p, SystemConstants& k) {
  const std::size_t d = p.count("dim", 1);
  SdeSystem s;
  s.coefficients.dim_state = d;
  s.coefficients.dim_noise = d;
  s.coefficients.drift = [](double, auto, const MeasureView&, std::span<double> out) { fill_zero(out); };
  s.coefficients.diffusion = [](double, auto, const MeasureView&, std::span<double> out) {
    fill_zero(out);
  };
  s.coefficients.jump = [](double, auto, const MeasureView&, JumpMark, std::span<double> out) {
    fill_zero(out);
  };
  s.coefficients.measure_dependent = false;
  k = {};
  return s;
}

SdeSystem const_drift_model(Params& p, SystemConstants& k) {
  auto v = p.array("v").value_or(std::vector<double>{1.0});
  if (v.empty()) throw InvalidArgument("const-drift: 'v' must be non-empty");
  SdeSystem s;
  s.coefficients.dim_state = v.size();
  s.coefficients.dim_noise = v.size();
  s.coefficients.drift = [v](double, auto, const MeasureView&, std::span<double> out) {
    std::copy(v.begin(), v.end(), out.begin());
  };
  s.coefficients.diffusion = [](double, auto, const MeasureView&, std::span<double> out) {
    fill_zero(out);
  };
  s.coefficients.jump = [](double, auto, const MeasureView&, JumpMark, std::span<double> out) {
    fill_zero(out);
  };
  s.coefficients.measure_dependent = false;
  double vv = 0.0;
  for (double x : v) vv += x * x;
  k = {};
  k.c1 = vv;
  return s;
}

// b = -a x + beta mean(mu), sigma = s0 I, f = gamma u (1,...,1),
// marks {-1, +1} with weight rho/2 each.
SdeSystem mvou_jump_model(Params& p, SystemConstants& k) {
  const double a = p.get("a", 0.1);
  const double beta = p.get("beta", 0.01);
  const double s0sq = p.nonneg("s0sq", 0.005);
  const double gamma = p.get("gamma", 0.01);
  const double rho = p.nonneg("rho", 0.01);
  const std::size_t d = p.count("dim", 1);
  const double s0 = std::sqrt(s0sq);
  SdeSystem s;
  auto& c = s.coefficients;
  c.dim_state = d;
  c.dim_noise = d;
  c.drift = [a, beta](double, std::span<const double> x, const MeasureView& mu,
                      std::span<double> out) {
    const auto m = mu.mean();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = -a * x[i] + beta * m[i];
  };
  c.diffusion = [s0, d](double, auto, const MeasureView&, std::span<double> out) {
    fill_zero(out);
    for (std::size_t i = 0; i < d; ++i) out[i * d + i] = s0;
  };
  c.jump = [gamma](double, auto, const MeasureView&, JumpMark u, std::span<double> out) {
    std::fill(out.begin(), out.end(), gamma * u);
  };
  c.measure_dependent = beta != 0.0;
  s.nu = rho > 0.0 ? JumpMeasure::symmetric_pair(rho) : JumpMeasure::none();
  const double dd = static_cast<double>(d);
  k.c1 = std::max({dd * s0sq, 2.0 * a * a, 2.0 * beta * beta});
  k.c4 = dd * gamma * gamma;
  k.c3 = std::abs(beta);
  k.c3_prime = std::abs(beta);
  k.c4_prime = 2.0 * a - std::abs(beta);
  return s;
}

// User descriptor: b = A x + B mean(mu) + c + t c_t, sigma = S (d x m),
// f = u g, marks from the config.
SdeSystem linear_model(Params& p, const ModelConfig& config) {
  const auto A = p.array("A");
  if (!A) throw InvalidArgument("linear: drift matrix 'A' is required");
  const auto d = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(A->size()))));
  if (d == 0 || d * d != A->size()) throw InvalidArgument("linear: 'A' must be square");
  const auto B = p.array("B").value_or(std::vector<double>(d * d, 0.0));
  const auto c0 = p.array("c").value_or(std::vector<double>(d, 0.0));
  const auto ct = p.array("c_t");
  const auto S = p.array("S").value_or(std::vector<double>(d * d, 0.0));
  const auto g = p.array("g").value_or(std::vector<double>(d, 0.0));
  if (B.size() != d * d || c0.size() != d || g.size() != d || (ct && ct->size() != d))
    throw InvalidArgument("linear: array sizes must match the state dimension");
  if (S.empty() || S.size() % d != 0) throw InvalidArgument("linear: 'S' must be d x m");
  const std::size_t m = S.size() / d;
  const std::vector<double> ctv = ct.value_or(std::vector<double>(d, 0.0));
  SdeSystem s;
  auto& c = s.coefficients;
  c.dim_state = d;
  c.dim_noise = m;
  c.drift = [A = *A, B, c0, ctv, d](double t, std::span<const double> x, const MeasureView& mu,
                                      std::span<double> out) {
    const auto mean = mu.mean();
    for (std::size_t i = 0; i < d; ++i) {
      double v = c0[i] + t * ctv[i];
      for (std::size_t j = 0; j < d; ++j) v += A[i * d + j] * x[j] + B[i * d + j] * mean[j];
      out[i] = v;
    }
  };
  c.diffusion = [S](double, auto, const MeasureView&, std::span<double> out) {
    std::copy(S.begin(), S.end(), out.begin());
  };
  c.jump = [g](double, auto, const MeasureView&, JumpMark u, std::span<double> out) {
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = u * g[i];
  };
  c.autonomous = !ct || std::all_of(ctv.begin(), ctv.end(), [](double v) { return v == 0.0; });
  c.measure_dependent = std::any_of(B.begin(), B.end(), [](double v) { return v != 0.0; });
  s.nu = config.marks.empty() ? JumpMeasure::none() : JumpMeasure(DiscreteMarks{config.marks});
  return s;
}

SystemConstants audited_constants(const SdeSystem& sys, std::uint64_t seed) {
  ModelPair probe_pair;
  probe_pair.base = sys;
  Params none(ModelConfig{"zero", {{"dim", double(sys.dim())}}, {}, {}});
  SystemConstants zero_k;
  probe_pair.hat = zero_model(none, zero_k);
  ProbePlan plan;
  plan.pairs = 4000;
  plan.seed = seed;
  const auto report = audit_assumptions(probe_pair, plan);
  SystemConstants k;
  k.c1 = report.entry("base", "growth").observed;
  k.c3 = report.entry("base", "monotone").observed;
  k.c4 = std::max(report.entry("base", "jump_growth").observed,
                  report.entry("base", "jump_lipschitz").observed);
  std::tie(k.c3_prime, k.c4_prime) = fit_dissipativity(sys, plan);
  return k;
}

}  // namespace

std::vector<std::string> zoo_ids() { return {"mvou-jump", "zero", "const-drift", "linear"}; }

SdeSystem build_system(const ModelConfig& config, std::optional<SystemConstants>* analytic) {
  Params p(config);
  SystemConstants k;
  SdeSystem s;
  bool has_constants = true;
  if (config.id == "mvou-jump") {
    s = mvou_jump_model(p, k);
  } else if (config.id == "zero") {
    s = zero_model(p, k);
  } else if (config.id == "const-drift") {
    s = const_drift_model(p, k);
  } else if (config.id == "linear") {
    s = linear_model(p, config);
    has_constants = false;
  } else {
    throw InvalidArgument("unknown model id: '" + config.id + "'");
  }
  p.finish();
  if (config.id != "linear" && !config.marks.empty())
    throw InvalidArgument(config.id + ": zoo models define their own marks");
  s.id = config.id;
  s.fingerprint = fingerprint(config);
  if (analytic) *analytic = has_constants ? std::optional<SystemConstants>(k) : std::nullopt;
  return s;
}

ModelPair build_model(const PairConfig& config) {
  ModelPair pair;
  std::optional<SystemConstants> kb, kh;
  pair.base = build_system(config.model, &kb);
  const ModelConfig hat_cfg =
      config.hat_model.value_or(ModelConfig{"zero", {{"dim", double(pair.base.dim())}}, {}, {}});
  pair.hat = build_system(hat_cfg, &kh);
  if (pair.base.dim() != pair.hat.dim())
    throw InvalidArgument("model and hat_model must share the state dimension");
  if (config.declared) {
    pair.constants = *config.declared;
  } else {
    pair.constants.base = kb ? *kb : audited_constants(pair.base, pair.base.fingerprint);
    pair.constants.hat = kh ? *kh : audited_constants(pair.hat, pair.hat.fingerprint);
  }
  const Rates r = theoretical_rates(pair.constants, pair.base.nu.total_mass(), pair.hat.nu.total_mass());
  pair.constants.lambda = r.lambda;
  pair.constants.lambda_hat = r.lambda_hat;
  return pair;
}

Rates theoretical_rates(const AssumptionConstants& k, double nu1_mass, double nu2_mass) {
  Rates r;
  r.lambda = k.base.c4_prime - k.base.c3_prime - (6.0 * k.base.c4 + 1.0) * nu1_mass;
  r.lambda_hat = k.hat.c4_prime - (3.0 * k.hat.c4 + 1.0) * nu2_mass;
  r.base_condition = r.lambda > 4.0 * k.base.c1;
  r.hat_condition = r.lambda_hat > 2.0 * k.hat.c1;
  return r;
}

}  // namespace mvjump
