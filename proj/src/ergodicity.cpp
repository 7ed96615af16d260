#include "mvjump/ergodicity.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mvjump/csv.hpp"
#include "mvjump/error.hpp"

namespace mvjump {

namespace {

constexpr std::uint64_t kRestartSalt = 0x9E3779B97F4A7C15ULL;

void require_autonomous(const SdeSystem& sys, const char* what) {
  if (!sys.coefficients.autonomous)
    throw InvalidArgument(std::string(what) + ": model '" + sys.id + "' is not autonomous");
}

std::vector<std::size_t> checkpoint_indices(const TimeGrid& grid, std::size_t count) {
  if (count == 0) throw InvalidArgument("decay: need at least one checkpoint");
  std::vector<std::size_t> out;
  const double span = grid.horizon() - grid.t0();
  for (std::size_t j = 1; j <= count; ++j) {
    const double t = grid.t0() + span * static_cast<double>(j) / static_cast<double>(count);
    const auto k = grid.index_of(t);
    if (!k) throw InvalidArgument("decay: checkpoint " + csv::num(t) + " is not on the grid");
    out.push_back(*k);
  }
  return out;
}

double mean_pair_distance(std::span<const double> a, std::span<const double> b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double z = a[i] - b[i];
    s += z * z;
  }
  return s / static_cast<double>(a.size() / dim);
}

// -slope of the least-squares line through (t, log y) for positive y in the window.
double fit_rate(const std::vector<double>& t, const std::vector<double>& y, double from, double to) {
  std::vector<double> xs, ls;
  bool any_positive = false;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < from - 1e-12 || t[i] > to + 1e-12) continue;
    if (y[i] > 0.0) {
      any_positive = true;
      xs.push_back(t[i]);
      ls.push_back(std::log(y[i]));
    }
  }
  if (!any_positive) return std::numeric_limits<double>::infinity();
  if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ls[i];
  }
  mx /= xs.size();
  my /= ls.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ls[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return -sxy / sxx;
}

// Seed mean and standard error per checkpoint.
void aggregate(const std::vector<std::vector<double>>& per_seed, std::vector<double>& mean, std::vector<double>& se) {
  const std::size_t s = per_seed.size(), m = per_seed.front().size();
  mean.assign(m, 0.0);
  se.assign(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double acc = 0.0;
    for (const auto& row : per_seed) acc += row[j];
    mean[j] = acc / s;
    if (s > 1) {
      double ss = 0.0;
      for (const auto& row : per_seed) ss += (row[j] - mean[j]) * (row[j] - mean[j]);
      se[j] = std::sqrt(ss / (s - 1) / s);
    }
  }
}

StationaryEstimate run_to_stationarity(ParticleSystem& ps, const TimeGrid& grid, const MeasureSource* frozen,
                                       std::uint64_t seed, const StationaryOptions& options) {
  StationaryEstimate est;
  est.burn_in = grid.horizon() - grid.t0();
  est.seeds = {seed};
  std::vector<std::size_t> lag_index;
  for (double lag : options.ladder) {
    if (!(lag > 0.0) || lag > est.burn_in + 1e-12) continue;
    const auto k = grid.index_of(grid.horizon() - lag);
    if (!k) continue;
    est.lags.push_back(lag);
    lag_index.push_back(*k);
  }
  std::vector<std::vector<double>> snaps(lag_index.size());
  auto capture = [&] {
    for (std::size_t j = 0; j < lag_index.size(); ++j)
      if (lag_index[j] == ps.step_index()) snaps[j].assign(ps.state().begin(), ps.state().end());
  };
  capture();
  while (!ps.done()) {
    if (frozen)
      ps.step((*frozen)(ps.step_index(), ps.time()));
    else
      ps.step_self();
    capture();
  }
  est.cloud = EmpiricalMeasure(std::vector<double>(ps.state().begin(), ps.state().end()), ps.dim());
  est.threshold = options.threshold_fraction * est.cloud.second_moment() + 1e-12;
  est.stationary = true;
  for (const auto& s : snaps) {
    const EmpiricalMeasure past(s, ps.dim());
    const double inc = cloud_w2_squared(past.view(), est.cloud.view(), options.distance);
    est.increments.push_back(inc);
    if (!(inc <= est.threshold)) est.stationary = false;
  }
  return est;
}

}  // namespace

double cloud_w2_squared(const MeasureView& a, const MeasureView& b, const DistanceOptions& options) {
  W2Options o;
  o.assignment_cap = options.assignment_cap;
  if (a.dim() == 1) {
    o.method = W2Method::Exact1d;
  } else if (a.size() <= options.assignment_cap) {
    o.method = W2Method::ExactAssignment;
  } else if (options.allow_sliced) {
    o.method = W2Method::Sliced;
    o.slices = options.slices;
  } else {
    throw InvalidArgument("W2: d > 1 with " + std::to_string(a.size()) +
                          " atoms exceeds the assignment cap and no estimator was selected");
  }
  return wasserstein2(a, b, o).distance_squared;
}

StationaryEstimate estimate_stationary(const SdeSystem& model, std::size_t n, double h, double burn_in,
                                       std::uint64_t seed, const StationaryOptions& options) {
  require_autonomous(model, "estimate_stationary");
  if (n < 2) throw InvalidArgument("estimate_stationary: need at least 2 particles");
  const TimeGrid grid(0.0, burn_in, h);
  ParticleSystem ps(model, std::vector<double>(n * model.dim(), 0.0), grid, seed, kBaseRoles, options.jump_mode);
  return run_to_stationarity(ps, grid, nullptr, seed, options);
}

StationaryEstimate estimate_hat_stationary(const SdeSystem& hat, const EmpiricalMeasure& base_stationary,
                                           std::size_t n, double h, double burn_in, std::uint64_t seed,
                                           const StationaryOptions& options) {
  require_autonomous(hat, "estimate_hat_stationary");
  if (n < 2) throw InvalidArgument("estimate_hat_stationary: need at least 2 particles");
  if (base_stationary.dim() != hat.dim()) throw InvalidArgument("estimate_hat_stationary: dimension mismatch");
  const TimeGrid grid(0.0, burn_in, h);
  ParticleSystem ps(hat, std::vector<double>(n * hat.dim(), 0.0), grid, seed, kHatRoles, options.jump_mode);
  const MeasureSource frozen = constant_source(base_stationary);
  return run_to_stationarity(ps, grid, &frozen, seed, options);
}

std::vector<std::string> rate_warnings(const ModelPair& pair) {
  const Rates r = theoretical_rates(pair.constants, pair.base.nu.total_mass(), pair.hat.nu.total_mass());
  std::vector<std::string> out;
  if (!r.base_condition)
    out.push_back("base rate condition lambda > 4 c1 fails (lambda = " + csv::num(r.lambda) +
                  ", c1 = " + csv::num(pair.constants.base.c1) + ")");
  if (!r.hat_condition)
    out.push_back("hat rate condition lambda_hat > 2 c1_hat fails (lambda_hat = " + csv::num(r.lambda_hat) +
                  ", c1_hat = " + csv::num(pair.constants.hat.c1) + ")");
  return out;
}

bool DecayCurve::dominated(double k) const {
  for (std::size_t j = 0; j < times.size(); ++j)
    if (!(w2sq[j] <= bound[j] + k * se[j])) return false;
  return true;
}

DecayCurve decay_curve(const SdeSystem& model, const InitialLaw& xi, const StationaryEstimate& stationary,
                       const TimeGrid& grid, std::size_t n, const std::vector<std::uint64_t>& seeds, double lambda,
                       const DecayOptions& options) {
  require_autonomous(model, "decay_curve");
  if (seeds.empty()) throw InvalidArgument("decay_curve: no seeds");
  if (xi.dim() != model.dim() || stationary.cloud.dim() != model.dim())
    throw InvalidArgument("decay_curve: dimension mismatch");
  if (stationary.cloud.size() != n)
    throw InvalidArgument("decay_curve: the stationary cloud must have n = " + std::to_string(n) + " atoms");
  const std::size_t d = model.dim();
  const auto at = checkpoint_indices(grid, options.checkpoints);
  const MeasureView inf = stationary.cloud.view();

  std::vector<std::vector<double>> w2(seeds.size()), pair(seeds.size());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    std::vector<double> x0 = xi.sample(n, seeds[s], 0);
    // Twin started from the stationary cloud, paired optimally with x0.
    std::vector<std::size_t> match(n);
    for (std::size_t i = 0; i < n; ++i) match[i] = i;
    const EmpiricalMeasure start(x0, d);
    if (d == 1 || n <= options.distance.assignment_cap) {
      W2Options o;
      o.method = d == 1 ? W2Method::Exact1d : W2Method::ExactAssignment;
      o.assignment_cap = options.distance.assignment_cap;
      o.want_plan = true;
      match = wasserstein2(start.view(), inf, o).plan->assignment;
    }
    std::vector<double> y0(n * d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) y0[i * d + j] = inf.point(match[i])[j];
    ParticleSystem main(model, std::move(x0), grid, seeds[s], kBaseRoles, options.jump_mode);
    ParticleSystem twin(model, std::move(y0), grid, seeds[s], kBaseRoles, options.jump_mode);
    std::size_t next = 0;
    while (next < at.size()) {
      main.step_self();
      twin.step_self();
      if (main.step_index() == at[next]) {
        w2[s].push_back(cloud_w2_squared(main.self_view(), inf, options.distance));
        pair[s].push_back(mean_pair_distance(main.state(), twin.state(), d));
        ++next;
      }
    }
  }

  DecayCurve c;
  c.seeds = seeds;
  c.rate = lambda;
  c.branch = "base";
  for (std::size_t k : at) c.times.push_back(grid.time(k));
  aggregate(w2, c.w2sq, c.se);
  std::vector<double> unused;
  aggregate(pair, c.pair_distance, unused);
  const double pre = 2.0 * (xi.second_moment() + stationary.cloud.second_moment());
  for (double t : c.times) c.bound.push_back(pre * std::exp(-lambda * (t - grid.t0())));
  c.fitted_rate = fit_rate(c.times, c.pair_distance, grid.t0() + options.fit_from, grid.t0() + options.fit_to);
  return c;
}

double CoupledBound::operator()(double t) const {
  const double head = 2.0 * start * std::exp(-lambda_hat * t);
  const double mix = equal_rates ? t * std::exp(-lambda_hat * t)
                                 : (std::exp(-lambda * t) - std::exp(-lambda_hat * t)) / (lambda_hat - lambda);
  return head + factor * 2.0 * base_start * mix;
}

CoupledBound coupled_bound(const ModelPair& pair, double x_sq, double xi_sq, const EmpiricalMeasure& base_stationary,
                           const EmpiricalMeasure& hat_stationary, double branch_eps) {
  const Rates r = theoretical_rates(pair.constants, pair.base.nu.total_mass(), pair.hat.nu.total_mass());
  CoupledBound b;
  b.lambda = r.lambda;
  b.lambda_hat = r.lambda_hat;
  b.start = x_sq + hat_stationary.second_moment();
  b.base_start = xi_sq + base_stationary.second_moment();
  b.factor = pair.constants.hat.c3_prime + 3.0 * pair.constants.hat.c4 * pair.hat.nu.total_mass();
  b.equal_rates = std::abs(r.lambda_hat - r.lambda) < branch_eps * std::max(std::abs(r.lambda), std::abs(r.lambda_hat));
  return b;
}

namespace {

// Steps base and hat in lockstep (the hat reads the base measure at the
// start of each step) and calls visit at each checkpoint index.
template <class Visit>
void run_coupled(const ModelPair& pair, const std::vector<double>& x, const InitialLaw& xi, const TimeGrid& grid,
                 std::size_t n, std::uint64_t seed, JumpMode mode, const std::vector<std::size_t>& at, Visit&& visit) {
  std::vector<double> hat0;
  for (std::size_t i = 0; i < n; ++i) hat0.insert(hat0.end(), x.begin(), x.end());
  ParticleSystem base(pair.base, xi.sample(n, seed, 0), grid, seed, kBaseRoles, mode);
  ParticleSystem hat(pair.hat, std::move(hat0), grid, seed, kHatRoles, mode);
  std::size_t next = 0;
  while (next < at.size()) {
    hat.step(base.self_view());
    base.step_self();
    if (base.step_index() == at[next]) {
      visit(next, base, hat);
      ++next;
    }
  }
}

void check_pair_inputs(const ModelPair& pair, const std::vector<double>& x, const InitialLaw& xi,
                       const StationaryEstimate& base_st, const StationaryEstimate& hat_st, std::size_t n,
                       const char* what) {
  require_autonomous(pair.base, what);
  require_autonomous(pair.hat, what);
  const std::size_t d = pair.base.dim();
  if (x.size() != d || xi.dim() != d || pair.hat.dim() != d)
    throw InvalidArgument(std::string(what) + ": dimension mismatch");
  if (base_st.cloud.dim() != d || hat_st.cloud.dim() != d)
    throw InvalidArgument(std::string(what) + ": missing or mismatched stationary inputs");
  if (hat_st.cloud.size() != n)
    throw InvalidArgument(std::string(what) + ": the hat stationary cloud must have n atoms");
}

}  // namespace

DecayCurve coupled_decay(const ModelPair& pair, const std::vector<double>& x, const InitialLaw& xi,
                         const StationaryEstimate& base_stationary, const StationaryEstimate& hat_stationary,
                         const TimeGrid& grid, std::size_t n, const std::vector<std::uint64_t>& seeds,
                         const DecayOptions& options) {
  check_pair_inputs(pair, x, xi, base_stationary, hat_stationary, n, "coupled_decay");
  if (seeds.empty()) throw InvalidArgument("coupled_decay: no seeds");
  const auto at = checkpoint_indices(grid, options.checkpoints);
  const MeasureView inf = hat_stationary.cloud.view();
  std::vector<std::vector<double>> w2(seeds.size());
  for (std::size_t s = 0; s < seeds.size(); ++s)
    run_coupled(pair, x, xi, grid, n, seeds[s], options.jump_mode, at,
                [&](std::size_t, const ParticleSystem&, const ParticleSystem& hat) {
                  w2[s].push_back(cloud_w2_squared(hat.self_view(), inf, options.distance));
                });
  double x_sq = 0.0;
  for (double v : x) x_sq += v * v;
  const CoupledBound bound = coupled_bound(pair, x_sq, xi.second_moment(), base_stationary.cloud, hat_stationary.cloud);
  DecayCurve c;
  c.seeds = seeds;
  c.rate = bound.lambda_hat;
  c.branch = bound.equal_rates ? "equal" : "distinct";
  for (std::size_t k : at) c.times.push_back(grid.time(k));
  aggregate(w2, c.w2sq, c.se);
  for (double t : c.times) c.bound.push_back(bound(t - grid.t0()));
  c.fitted_rate = fit_rate(c.times, c.w2sq, grid.t0() + options.fit_from, grid.t0() + options.fit_to);
  return c;
}

FlowCheckReport flow_property_check(const ModelPair& pair, const InitialLaw& xi, const InitialLaw& theta, double r,
                                    double horizon, double h, std::size_t n, const std::vector<std::uint64_t>& seeds,
                                    const GapTolerance& tolerance, const DistanceOptions& distance) {
  const TimeGrid grid(0.0, horizon, h);
  if (!grid.index_of(r) || !(r > 0.0 && r < horizon))
    throw InvalidArgument("flow_property_check: r must be a grid time strictly inside (0, T)");
  FlowCheckReport rep;
  rep.r = r;
  rep.horizon = horizon;
  rep.tolerance = tolerance(n, h);
  for (std::uint64_t seed : seeds) {
    SimulationOptions o;
    o.seed = seed;
    o.keep_jump_logs = false;
    const CoupledFlow direct = simulate_coupled(pair, xi, theta, n, n, grid, o);
    SimulationOptions fresh = o;
    fresh.seed = seed ^ kRestartSalt;
    const MeasureFlow base_r = restart_flow(pair.base, direct.base, r, horizon, h, fresh);
    const auto hat_at_r = direct.hat.flow.cloud(*grid.index_of(r));
    const TimeGrid tail(base_r.grid());
    const PathEnsemble hat_r = simulate_frozen(pair.hat, flow_source(base_r, tail),
                                               std::vector<double>(hat_at_r.begin(), hat_at_r.end()), pair.hat.dim(),
                                               tail, fresh, kHatRoles);
    FlowCheckRow row;
    row.seed = seed;
    row.base_gap = cloud_w2_squared(direct.base.view(grid.steps()), base_r.view(tail.steps()), distance);
    row.hat_gap = cloud_w2_squared(direct.hat.flow.view(grid.steps()), hat_r.flow.view(tail.steps()), distance);
    rep.pass = rep.pass && row.base_gap <= rep.tolerance && row.hat_gap <= rep.tolerance;
    rep.rows.push_back(row);
  }
  return rep;
}

EquivalenceReport ergodicity_equivalence_report(const ModelPair& pair, const std::vector<double>& x,
                                                const InitialLaw& xi, const StationaryEstimate& base_stationary,
                                                const StationaryEstimate& hat_stationary, const TimeGrid& grid,
                                                std::size_t n, std::uint64_t seed,
                                                const std::vector<CylindricalFunction>& battery, double tolerance,
                                                const DecayOptions& options) {
  check_pair_inputs(pair, x, xi, base_stationary, hat_stationary, n, "ergodicity_equivalence_report");
  if (base_stationary.cloud.size() != n)
    throw InvalidArgument("ergodicity_equivalence_report: the base stationary cloud must have n atoms");
  for (const auto& f : battery) f.validate();
  const auto at = checkpoint_indices(grid, options.checkpoints);
  const MeasureView mu_inf = base_stationary.cloud.view(), hat_inf = hat_stationary.cloud.view();
  auto lambda_of = [](const CylindricalFunction& f, const MeasureView& hat_cloud, const MeasureView& mu) {
    const double m0 = integrate(hat_cloud, [&](std::span<const double> y) { return f.phi0.value(y); });
    return m0 * f.g.value(f.inner_integrals(mu));
  };
  std::vector<double> limit;
  for (const auto& f : battery) limit.push_back(lambda_of(f, hat_inf, mu_inf));

  EquivalenceReport rep;
  rep.tolerance = tolerance;
  run_coupled(pair, x, xi, grid, n, seed, options.jump_mode, at,
              [&](std::size_t j, const ParticleSystem& base, const ParticleSystem& hat) {
                const double t = grid.time(at[j]);
                rep.times.push_back(t);
                rep.base_w2sq.push_back(cloud_w2_squared(base.self_view(), mu_inf, options.distance));
                rep.hat_w2sq.push_back(cloud_w2_squared(hat.self_view(), hat_inf, options.distance));
                for (std::size_t p = 0; p < battery.size(); ++p) {
                  const double gap = std::abs(lambda_of(battery[p], hat.self_view(), base.self_view()) - limit[p]);
                  rep.rows.push_back({t, battery[p].id, gap});
                  if (j + 1 == at.size()) rep.final_max_gap = std::max(rep.final_max_gap, gap);
                }
              });
  rep.pass = rep.final_max_gap <= tolerance;
  return rep;
}

void write_decay_csv(std::ostream& out, const DecayCurve& curve) {
  out << "t,w2sq,bound,se\n";
  for (std::size_t j = 0; j < curve.times.size(); ++j)
    out << csv::num(curve.times[j]) << ',' << csv::num(curve.w2sq[j]) << ',' << csv::num(curve.bound[j]) << ','
        << csv::num(curve.se[j]) << '\n';
}

void write_coupling_csv(std::ostream& out, const DecayCurve& curve) {
  out << "t,pair_distance\n";
  for (std::size_t j = 0; j < curve.pair_distance.size(); ++j)
    out << csv::num(curve.times[j]) << ',' << csv::num(curve.pair_distance[j]) << '\n';
}

void write_flow_check_csv(std::ostream& out, const FlowCheckReport& report) {
  out << "seed,base_gap,hat_gap\n";
  for (const auto& r : report.rows) out << r.seed << ',' << csv::num(r.base_gap) << ',' << csv::num(r.hat_gap) << '\n';
}

void write_equivalence_csv(std::ostream& out, const EquivalenceReport& report) {
  out << "t,function_id,gap\n";
  for (const auto& r : report.rows) out << csv::num(r.t) << ',' << r.function_id << ',' << csv::num(r.gap) << '\n';
}

void write_decay_plot_script(std::ostream& out, const std::string& csv_path, const std::string& title) {
  out << "set datafile separator ','\n"
      << "set key autotitle columnhead\n"
      << "set logscale y\n"
      << "set xlabel 't'\n"
      << "set ylabel 'W2^2'\n"
      << "set title '" << title << "'\n"
      << "plot '" << csv_path << "' using 1:2:4 with yerrorbars title 'measured', \\\n"
      << "     '' using 1:3 with lines title 'bound'\n";
}

}  // namespace mvjump
