// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "../support/oracles.hpp"
#include "mvjump/cli.hpp"
#include "mvjump/csv.hpp"
#include "mvjump/ergodicity.hpp"
#include "mvjump/generator.hpp"
#include "mvjump/measure.hpp"
#include "mvjump/picard.hpp"
#include "mvjump/sampler.hpp"

using namespace mvjump;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = MVJUMP_SOURCE_DIR;
const fs::path kWork = MVJUMP_WORK_DIR;
constexpr double kBiasPerStep = 0.05;  // moment allowance c_bias * h

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

std::string config(const std::string& name) { return (kSource / "configs" / (name + ".json")).string(); }

ExperimentConfig load(const std::string& name) { return cli::prepare_config(config(name), {}); }

std::vector<double> check_times(const TimeGrid& grid, std::size_t every) {
  std::vector<double> t;
  for (std::size_t k = every; k <= grid.steps(); k += every) t.push_back(grid.time(k));
  return t;
}

ModelConfig mvou(double a = 0.1, double beta = 0.01) {
  return {"mvou-jump", {{"a", a}, {"beta", beta}, {"s0sq", 0.005}, {"gamma", 0.01}, {"rho", 0.01}}, {}, {}};
}

EmpiricalMeasure random_cloud(std::mt19937_64& rng, std::size_t n, std::size_t d, double spread) {
  std::normal_distribution<double> N(0.0, spread);
  std::vector<double> pts(n * d);
  for (double& v : pts) v = N(rng);
  return EmpiricalMeasure(pts, d);
}

// In-process CLI run; the outcome carries every gate's line.
Outcome cli_gates(const std::string& sub, const std::string& cfg, const std::string& out) {
  cli::Overrides o;
  o.out = (kWork / out).string();
  std::ostringstream log;
  const auto r = cli::run(sub, config(cfg), o, log);
  Outcome res;
  res.pass = r.exit_code == cli::kExitOk;
  for (const auto& g : r.gates) res.detail += (res.detail.empty() ? "" : "; ") + g.name + " " + g.detail;
  for (const auto& d : r.diagnostics) res.detail += "; error: " + d;
  if (r.gates.empty()) res.pass = false;
  return res;
}

Outcome transport_exactness() {
  std::mt19937_64 rng(20260101);
  std::uniform_int_distribution<std::size_t> small(1, 6), dims(1, 3), large(1, 256);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = small(rng), d = dims(rng);
    const auto a = random_cloud(rng, n, d, 1.0), b = random_cloud(rng, n, d, 1.5);
    W2Options o;
    o.method = W2Method::ExactAssignment;
    const double got = wasserstein2(a, b, o).distance_squared;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do best = std::min(best, plan_cost(a.view(), b.view(), perm));
    while (std::next_permutation(perm.begin(), perm.end()));
    if (got != best) ++mismatches;
  }
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = large(rng);
    const auto a = random_cloud(rng, n, 1, 1.0), b = random_cloud(rng, n, 1, 2.0);
    W2Options o1, oa;
    o1.method = W2Method::Exact1d;
    oa.method = W2Method::ExactAssignment;
    worst = std::max(worst, std::abs(wasserstein2(a, b, o1).distance_squared - wasserstein2(a, b, oa).distance_squared));
  }
  return {mismatches == 0 && worst <= 1e-12,
          std::to_string(mismatches) + " brute-force mismatches, max 1-D gap " + num(worst)};
}

Outcome moment_fidelity() {
  const auto sys = build_system(mvou());
  const TimeGrid grid(0, 5, 0.01);
  std::vector<double> at;
  for (int j = 1; j <= 10; ++j) at.push_back(0.5 * j);
  const oracle::MvouParams p;
  const auto ref = oracle::integrate_moments(p, p, {1.0, 1.0, 0.0, 0.0}, at);
  SimulationOptions o;
  o.record_every = 50;
  o.keep_jump_logs = false;
  std::size_t failures = 0;
  double worst = 0.0;  // in units of the allowance
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    o.seed = seed;
    const auto flow = simulate_mv(sys, InitialLaw::dirac({1.0}), 10000, grid, o).flow;
    for (std::size_t j = 0; j < at.size(); ++j) {
      const auto st = oracle::sample_stats(flow.cloud(*flow.grid().index_of(at[j])));
      const double am = 3 * st.mean_se + kBiasPerStep * grid.dt();
      const double ap = 3 * st.m2_se + kBiasPerStep * grid.dt();
      const double em = std::abs(st.mean - ref[j].m), ep = std::abs(st.m2 - ref[j].p);
      worst = std::max({worst, em / am, ep / ap});
      failures += (em > am) + (ep > ap);
    }
  }
  return {failures == 0, std::to_string(failures) + " of 100 checks outside 3 SE + c h; worst at " + num(worst) +
                             " of the allowance"};
}

Outcome picard_contraction() {
  const auto cfg = load("picard");
  const auto sys = build_system(cfg.model);
  const auto xi = cfg.xi.build();
  const double h = cfg.numeric.h;
  const auto window = contraction_window(sys, xi, h, cfg.numeric.seeds.front()).t0;
  PicardOptions po;
  po.keep_iterates = false;
  bool ok = true;
  double worst = 0.0;
  for (auto seed : cfg.numeric.seeds) {
    const auto tr = picard_iterate(sys, xi, cfg.numeric.n, window, h, cfg.run.iterations, seed, po);
    for (std::size_t k = 1; k <= 4; ++k) {
      ok = ok && tr.ratios[k] <= 0.5 + 3 * tr.ratio_se[k];
      worst = std::max(worst, tr.ratios[k]);
    }
  }
  // Coefficients that ignore the measure settle after one frozen solve.
  const auto free_sys = build_system(mvou(0.1, 0.0));
  const auto tr = picard_iterate(free_sys, xi, cfg.numeric.n, window, h, cfg.run.iterations, 1, po);
  bool zero = true;
  for (std::size_t k = 1; k < tr.diffs.size(); ++k) zero = zero && tr.diffs[k] == 0.0;
  return {ok && zero, "window " + num(window) + ", max ratio " + num(worst) +
                          (zero ? ", measure-free diffs exactly 0" : ", measure-free diffs nonzero")};
}

Outcome weak_fpe() {
  const auto cfg = load("canonical");
  const auto pair = build_model(cfg.pair_config());
  const auto grid = cfg.grid();
  const auto battery = default_battery(1);
  const auto times = check_times(grid, cfg.run.check_every);
  SimulationOptions o;
  o.keep_jump_logs = false;
  bool ok = true;
  double worst = 0.0, tol = 0.0;
  for (auto seed : cfg.numeric.seeds) {
    o.seed = seed;
    const auto flow = simulate_mv(pair.base, cfg.xi.build(), cfg.numeric.n, grid, o).flow;
    const auto t = fpe_residual(pair.base, flow, battery, times, cfg.numeric.fpe_tolerance());
    ok = ok && t.pass();
    worst = std::max(worst, t.max_abs);
    tol = t.tolerance;
  }
  const TimeGrid g(0, 1, 0.01);
  o.seed = 1;
  const auto zero = build_system({"zero", {}, {}, {}});
  const auto zflow = simulate_mv(zero, InitialLaw::gaussian({0.0}, {1.0}), 1000, g, o).flow;
  const double zres = fpe_residual(zero, zflow, battery, check_times(g, 10), {}).max_abs;
  const auto drift = build_system({"const-drift", {}, {{"v", {0.5}}}, {}});
  const auto dflow = simulate_mv(drift, InitialLaw::gaussian({0.0}, {1.0}), 1000, g, o).flow;
  const double dres = fpe_residual(drift, dflow, battery, check_times(g, 10), {}).max_abs;
  return {ok && zres == 0.0 && dres <= 1e-3, "canonical max " + num(worst) + " vs tol " + num(tol) + "; zero model " +
                                                 num(zres) + "; transport " + num(dres)};
}

Outcome lifted_fpe() {
  const auto cfg = load("canonical");
  const auto pair = build_model(cfg.pair_config());
  const auto grid = cfg.grid();
  const auto cyl = default_cylindrical_battery(1);
  const auto battery = default_battery(1);
  std::vector<CylindricalFunction> reduced;
  for (const auto& phi : battery)
    reduced.push_back({phi.id(), TestFunction::one(1), OuterFunction::linear({1.0}), {phi}});
  const auto times = check_times(grid, cfg.run.check_every);
  SimulationOptions o;
  o.keep_jump_logs = false;
  bool ok = true, bitwise = true;
  double worst = 0.0, tol = 0.0;
  for (auto seed : cfg.numeric.seeds) {
    o.seed = seed;
    const auto cf = simulate_coupled(pair, cfg.xi.build(), cfg.theta.build(), cfg.numeric.n, cfg.numeric.n, grid, o);
    const auto t = lifted_fpe_residual(pair, cf, cyl, times, cfg.numeric.lifted_tolerance());
    ok = ok && t.pass();
    worst = std::max(worst, t.max_abs);
    tol = t.tolerance;
    const auto direct = fpe_residual(pair.base, cf.base, battery, times, {});
    const auto lifted = lifted_fpe_residual(pair, cf, reduced, times, {});
    bitwise = bitwise && direct.rows.size() == lifted.rows.size();
    for (std::size_t i = 0; bitwise && i < direct.rows.size(); ++i)
      bitwise = direct.rows[i].residual == lifted.rows[i].residual;
  }
  return {ok && bitwise, "max " + num(worst) + " vs tol " + num(tol) +
                             (bitwise ? "; reduction bitwise equal" : "; reduction differs")};
}

Outcome l_derivative_fd() {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> dims(1, 3), pick(0, 5);
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-6 * std::max({std::abs(a), std::abs(b), 1e-6}); };
  std::size_t bad = 0;
  for (int probe = 0; probe < 100; ++probe) {
    const std::size_t d = dims(rng);
    const auto phi = default_cylindrical_battery(d)[pick(rng)];
    const auto zeta = random_cloud(rng, 7, d, 1.0);
    std::vector<double> y(d), a(d * d), c(d);
    for (double& v : y) v = U(rng);
    for (double& v : a) v = 2 * U(rng);
    for (double& v : c) v = 3 * U(rng);
    auto field = [&](std::span<const double> x) {
      std::vector<double> e(d);
      for (std::size_t i = 0; i < d; ++i) {
        double s = c[i];
        for (std::size_t j = 0; j < d; ++j) s += a[i * d + j] * x[j];
        e[i] = std::sin(s);
      }
      return e;
    };
    auto pushed = [&](double eps) {
      std::vector<double> pts(zeta.points().begin(), zeta.points().end());
      for (std::size_t i = 0; i < zeta.size(); ++i) {
        const auto e = field(zeta.point(i));
        for (std::size_t j = 0; j < d; ++j) pts[i * d + j] += eps * e[j];
      }
      return phi.value(y, EmpiricalMeasure(pts, d).view());
    };
    const double eps = 1e-5;
    const double fd = (pushed(eps) - pushed(-eps)) / (2 * eps);
    const auto ld = l_derivatives(phi, y, zeta.view());
    double an = 0.0;
    for (std::size_t i = 0; i < zeta.size(); ++i) {
      const auto dz = ld.d_zeta(zeta.point(i));
      const auto e = field(zeta.point(i));
      for (std::size_t j = 0; j < d; ++j) an += dz[j] * e[j];
    }
    an /= static_cast<double>(zeta.size());
    if (!close(an, fd)) ++bad;
  }
  return {bad == 0, std::to_string(bad) + " of 100 probes off"};
}

Outcome flow_property() {
  const auto cfg = load("canonical");
  const auto pair = build_model(cfg.pair_config());
  const double horizon = cfg.numeric.t0 + cfg.numeric.horizon;
  const auto rep = flow_property_check(pair, cfg.xi.build(), cfg.theta.build(), *cfg.run.restart, horizon, cfg.numeric.h,
                                       cfg.numeric.n, cfg.numeric.seeds, cfg.numeric.gap_tolerance());
  double worst = 0.0;
  for (const auto& r : rep.rows) worst = std::max({worst, r.base_gap, r.hat_gap});
  bool exact = true;
  for (const ModelConfig& m : {ModelConfig{"zero", {}, {}, {}}, ModelConfig{"const-drift", {}, {{"v", {0.5}}}, {}}}) {
    const auto det = build_model({m, m, std::nullopt});
    const auto r = flow_property_check(det, InitialLaw::gaussian({0.0}, {1.0}), InitialLaw::gaussian({1.0}, {0.5}), 1.0,
                                       2.0, 0.01, 500, {1, 2, 3, 4, 5}, {});
    for (const auto& row : r.rows) exact = exact && row.base_gap == 0.0 && row.hat_gap == 0.0;
  }
  return {rep.pass && exact, "max gap " + num(worst) + " vs tol " + num(rep.tolerance) +
                                 (exact ? "; deterministic gaps exactly 0" : "; deterministic gaps nonzero")};
}

Outcome determinism() {
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* threads : {"1", "4"}) {
    const fs::path out = kWork / (std::string("determinism_threads") + threads);
    fs::remove_all(out);
    const std::string cmd = std::string("MVJUMP_THREADS=") + threads + " '" + MVJUMP_CLI + "' ergodicity --config '" +
                            config("ergodicity") + "' --out '" + out.string() + "' > '" + out.string() + ".log' 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, std::string("run with MVJUMP_THREADS=") + threads + " exited " + std::to_string(rc)};
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(out))
      if (e.path().extension() == ".csv") {
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        files[e.path().filename().string()] = s.str();
      }
    runs.push_back(std::move(files));
  }
  const bool same = !runs[0].empty() && runs[0] == runs[1];
  return {same, std::to_string(runs[0].size()) + " numeric CSVs " + (same ? "byte-identical" : "differ")};
}

Outcome coupled_domination() {
  const auto a = cli_gates("coupled-ergodicity", "coupled_ergodicity", "coupled_canonical");
  const auto b = cli_gates("coupled-ergodicity", "coupled_equal_rate", "coupled_equal_rate");
  return {a.pass && b.pass, "canonical: " + a.detail + "; equal-rate: " + b.detail};
}

}  // namespace

int main() {
  fs::create_directories(kWork);
  struct Criterion {
    int id;
    std::string name;
    double budget;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "transport exactness", 30, transport_exactness},
      {2, "moment-oracle fidelity", 60, moment_fidelity},
      {3, "Picard contraction", 60, picard_contraction},
      {4, "weak forward equation", 120, weak_fpe},
      {5, "lifted forward equation", 120, lifted_fpe},
      {6, "L-derivative finite differences", 10, l_derivative_fd},
      {7, "ergodicity bound domination", 300, [] { return cli_gates("ergodicity", "ergodicity", "ergodicity"); }},
      {8, "coupled bound domination", 300, coupled_domination},
      {9, "flow property", 60, flow_property},
      {10, "thread-count determinism", 600, determinism},
      {11, "propagation-of-chaos trend", 120, [] { return cli_gates("chaos", "chaos", "chaos"); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = secs < c.budget;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (pass ? "PASS" : "FAIL") << " [" << num(secs)
              << " s of " << num(c.budget) << " s" << (in_budget ? "" : ", over budget") << "] " << o.detail
              << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria fail") << std::endl;
  return failed == 0 ? 0 : 1;
}
