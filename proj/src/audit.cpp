#include <algorithm>
#include <cmath>
#include <limits>

#include "mvjump/error.hpp"
#include "mvjump/model.hpp"
#include "mvjump/sampler.hpp"

namespace mvjump {

namespace {

constexpr std::uint32_t kProbeStream = 0xA0D17u;

class ProbeUniforms {
 public:
  ProbeUniforms(std::uint64_t seed, std::size_t index)
      : key_{seed, StreamRole::Auxiliary, kProbeStream, index, 0} {}
  double next() {
    if (pos_ == 4) {
      buf_ = keyed_uniforms(key_, block_++);
      pos_ = 0;
    }
    return buf_[pos_++];
  }
  double symmetric(double r) { return r * (2.0 * next() - 1.0); }

 private:
  NoiseStreamKey key_;
  std::uint32_t block_ = 0;
  std::array<double, 4> buf_{};
  int pos_ = 4;
};

std::vector<double> ball_point(ProbeUniforms& u, std::size_t d, double r) {
  std::vector<double> x(d);
  double nn = 0.0;
  for (auto& v : x) {
    v = u.symmetric(r);
    nn += v * v;
  }
  const double norm = std::sqrt(nn);
  if (norm > r) {
    const double s = r / norm * u.next();
    for (auto& v : x) v *= s;
  }
  return x;
}

double sq(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double sq_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double dot_diff(std::span<const double> dx, std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += dx[i] * (a[i] - b[i]);
  return s;
}

enum Cond { Growth, JumpGrowth, JumpIntegrated, JumpLipschitz, Monotone, Dissipative, NCond };
constexpr const char* kCondNames[NCond] = {"growth",         "jump_growth", "jump_growth_integrated",
                                           "jump_lipschitz", "monotone",    "dissipative"};

// Per-probe evidence for one condition: the constant it requires and, for
// the witness, the raw sides of the inequality at the declared constant.
struct Evidence {
  double value = 0.0;  // required constant (max-type) or admissible constant (min-type)
  bool applicable = false;
  bool violated = false;
  double lhs = 0.0, rhs = 0.0, mark = 0.0;
};

struct ProbeEvidence {
  Evidence e[NCond];
};

ProbeEvidence examine(const SdeSystem& sys, const SystemConstants& k, const ProbePair& p, double w2,
                      double tol) {
  const auto& c = sys.coefficients;
  const auto v1 = p.mu1.view(), v2 = p.mu2.view();
  const auto b1 = c.eval_drift(p.t, p.x1, v1), b2 = c.eval_drift(p.t, p.x2, v2);
  const auto s1 = c.eval_diffusion(p.t, p.x1, v1), s2 = c.eval_diffusion(p.t, p.x2, v2);
  const double den1 = 1.0 + sq(p.x1) + p.mu1.second_moment();
  const double den2 = 1.0 + sq(p.x2) + p.mu2.second_moment();
  const double dx2 = sq_diff(p.x1, p.x2);
  const double lip_den = dx2 + w2;
  std::vector<double> dx(p.x1.size());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = p.x1[i] - p.x2[i];
  ProbeEvidence ev;
  auto max_type = [&](Cond cond, double lhs, double den, double declared, double mark) {
    Evidence& e = ev.e[cond];
    const double ratio = lhs / den;
    const double rhs = declared * den;
    const bool bad = lhs > rhs + tol * std::max({1.0, std::abs(rhs), std::abs(lhs)});
    if (!e.applicable || ratio > e.value) e.value = ratio;
    if (bad && !e.violated) {
      e.violated = true;
      e.lhs = lhs;
      e.rhs = rhs;
      e.mark = mark;
    }
    e.applicable = true;
  };

  max_type(Growth, sq(b1) + sq(s1), den1, k.c1, 0.0);
  max_type(Growth, sq(b2) + sq(s2), den2, k.c1, 0.0);

  const double mass = sys.nu.total_mass();
  if (mass > 0.0) {
    double integrated1 = 0.0, integrated2 = 0.0;
    for (const auto& atom : sys.nu.quadrature()) {
      const auto f1 = c.eval_jump(p.t, p.x1, v1, atom.mark);
      const auto f2 = c.eval_jump(p.t, p.x2, v2, atom.mark);
      max_type(JumpGrowth, sq(f1), den1, k.c4, atom.mark);
      max_type(JumpGrowth, sq(f2), den2, k.c4, atom.mark);
      integrated1 += atom.weight * sq(f1);
      integrated2 += atom.weight * sq(f2);
      if (lip_den > 0.0) max_type(JumpLipschitz, sq_diff(f1, f2), lip_den, k.c4, atom.mark);
    }
    max_type(JumpIntegrated, integrated1, den1, k.c4 * mass, 0.0);
    max_type(JumpIntegrated, integrated2, den2, k.c4 * mass, 0.0);
  }

  const double one_sided = 2.0 * dot_diff(dx, b1, b2) + sq_diff(s1, s2);
  if (lip_den > 0.0) max_type(Monotone, one_sided, lip_den, k.c3, 0.0);

  // one_sided <= c3' W2^2 - c4' |dx|^2; report the largest admissible c4'.
  Evidence& e = ev.e[Dissipative];
  const double rhs = k.c3_prime * w2 - k.c4_prime * dx2;
  const double scale = std::max({1.0, std::abs(one_sided), std::abs(k.c3_prime * w2),
                                 std::abs(k.c4_prime * dx2)});
  if (dx2 > 0.0) {
    e.applicable = true;
    e.value = (k.c3_prime * w2 - one_sided) / dx2;
  }
  if (one_sided > rhs + tol * scale) {
    e.violated = true;
    e.lhs = one_sided;
    e.rhs = rhs;
  }
  return ev;
}

}  // namespace

ProbePair make_probe(const ProbePlan& plan, std::size_t dim, std::size_t i) {
  ProbeUniforms u(plan.seed, i);
  // Half of the probes shrink toward the origin, where the growth ratios peak.
  const double shrink = (i / 4) % 2 == 1 ? u.next() * u.next() : 1.0;
  const double xr = plan.x_radius * shrink, cr = plan.cloud_radius * shrink;
  ProbePair p{plan.t_max * u.next(), ball_point(u, dim, xr), {},
              EmpiricalMeasure::dirac(std::vector<double>(dim, 0.0)),
              EmpiricalMeasure::dirac(std::vector<double>(dim, 0.0))};
  p.x2 = ball_point(u, dim, xr);
  const std::size_t k = std::max<std::size_t>(1, plan.cloud_size);
  std::vector<double> a(k * dim), b(k * dim);
  for (auto& v : a) v = u.symmetric(cr);
  for (auto& v : b) v = u.symmetric(cr);
  switch (i % 4) {
    case 1:  // same measure
      b = a;
      break;
    case 2:  // same point
      p.x2 = p.x1;
      break;
    case 3: {  // translated measure: |mean difference|^2 = W2^2
      const auto shift = ball_point(u, dim, cr);
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t q = 0; q < dim; ++q) b[j * dim + q] = a[j * dim + q] + shift[q];
      break;
    }
    default:
      break;
  }
  p.mu1 = EmpiricalMeasure(std::move(a), dim);
  p.mu2 = EmpiricalMeasure(std::move(b), dim);
  return p;
}

bool AuditReport::all_pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const AuditEntry& e) { return e.pass; });
}

const AuditEntry& AuditReport::entry(const std::string& system, const std::string& condition) const {
  for (const auto& e : entries)
    if (e.system == system && e.condition == condition) return e;
  throw InvalidArgument("audit report has no entry " + system + "/" + condition);
}

std::pair<double, double> fit_dissipativity(const SdeSystem& sys, const ProbePlan& plan) {
  if (plan.pairs == 0) throw InvalidArgument("fit_dissipativity: probe plan is empty");
  struct Triple {
    double w2, lhs, dx2;
  };
  std::vector<Triple> probes(plan.pairs);
  const auto& c = sys.coefficients;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(plan.pairs); ++i) {
    const ProbePair p = make_probe(plan, sys.dim(), static_cast<std::size_t>(i));
    const auto v1 = p.mu1.view(), v2 = p.mu2.view();
    const auto b1 = c.eval_drift(p.t, p.x1, v1), b2 = c.eval_drift(p.t, p.x2, v2);
    const auto s1 = c.eval_diffusion(p.t, p.x1, v1), s2 = c.eval_diffusion(p.t, p.x2, v2);
    std::vector<double> dx(p.x1.size());
    for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = p.x1[j] - p.x2[j];
    probes[i] = {w2_squared(p.mu1, p.mu2), 2.0 * dot_diff(dx, b1, b2) + sq_diff(s1, s2),
                 sq_diff(p.x1, p.x2)};
  }
  double best_c3 = 0.0, best_c4 = -std::numeric_limits<double>::infinity();
  for (int k = -1; k <= 80; ++k) {
    const double c3 = k < 0 ? 0.0 : std::pow(10.0, (k - 64) / 8.0);
    double c4 = std::numeric_limits<double>::infinity();
    bool feasible = true;
    for (const auto& t : probes) {
      if (t.dx2 > 0.0)
        c4 = std::min(c4, (c3 * t.w2 - t.lhs) / t.dx2);
      else if (t.lhs > c3 * t.w2 + plan.rel_tol * std::max(1.0, std::abs(t.lhs)))
        feasible = false;
    }
    if (feasible && std::isfinite(c4) && c4 - c3 > best_c4 - best_c3) {
      best_c3 = c3;
      best_c4 = c4;
    }
  }
  if (!std::isfinite(best_c4)) best_c4 = 0.0;
  return {best_c3, best_c4};
}

AuditReport audit_assumptions(const ModelPair& model, const ProbePlan& plan) {
  if (plan.pairs == 0) throw InvalidArgument("audit_assumptions: probe plan is empty");
  const std::size_t d = model.base.dim();
  const std::size_t n = plan.pairs;
  AuditReport report;
  report.probes = n;

  const std::pair<const char*, std::pair<const SdeSystem*, const SystemConstants*>> systems[2] = {
      {"base", {&model.base, &model.constants.base}}, {"hat", {&model.hat, &model.constants.hat}}};

  std::vector<ProbeEvidence> evidence(2 * n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const ProbePair p = make_probe(plan, d, static_cast<std::size_t>(i));
    const double w2 = w2_squared(p.mu1, p.mu2);
    for (int s = 0; s < 2; ++s)
      evidence[2 * i + s] =
          examine(*systems[s].second.first, *systems[s].second.second, p, w2, plan.rel_tol);
  }

  for (int s = 0; s < 2; ++s) {
    const SystemConstants& k = *systems[s].second.second;
    const double declared[NCond] = {k.c1,  k.c4, k.c4 * systems[s].second.first->nu.total_mass(),
                                     k.c4, k.c3, k.c4_prime};
    for (int cond = 0; cond < NCond; ++cond) {
      AuditEntry entry{systems[s].first, kCondNames[cond], declared[cond], 0.0, true};
      const bool min_type = cond == Dissipative;
      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        const Evidence& e = evidence[2 * i + s].e[cond];
        if (e.applicable) {
          entry.observed = !any ? e.value
                           : min_type ? std::min(entry.observed, e.value)
                                      : std::max(entry.observed, e.value);
          any = true;
        }
        if (e.violated && entry.pass) {
          entry.pass = false;
          const ProbePair p = make_probe(plan, d, i);
          report.counterexamples.push_back({entry.system, entry.condition, i, p.t, p.x1, p.x2,
                                            std::vector<double>(p.mu1.points().begin(), p.mu1.points().end()),
                                            std::vector<double>(p.mu2.points().begin(), p.mu2.points().end()),
                                            e.mark, e.lhs, e.rhs});
        }
      }
      if (!any) entry.observed = min_type ? std::numeric_limits<double>::infinity() : 0.0;
      if (min_type && entry.pass && any) {
        const double tol = plan.rel_tol * std::max(1.0, std::abs(entry.declared));
        if (entry.declared > entry.observed + tol) entry.pass = false;
      }
      report.entries.push_back(entry);
    }
  }
  return report;
}

}  // namespace mvjump
