#include "mvjump/picard.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "mvjump/csv.hpp"
#include "mvjump/error.hpp"

namespace mvjump {

namespace {

PathEnsemble constant_iterate(const std::vector<double>& initial, std::size_t n, std::size_t dim,
                              const TimeGrid& grid) {
  std::vector<double> states;
  states.reserve(initial.size() * grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) states.insert(states.end(), initial.begin(), initial.end());
  PathEnsemble out;
  out.flow = MeasureFlow(grid, n, dim, std::move(states));
  out.jump_logs.assign(n, {});
  return out;
}

// Per-particle max over the grid of |a_i(t) - b_i(t)|^2.
std::vector<double> sup_gaps(const PathEnsemble& a, const PathEnsemble& b) {
  const std::size_t n = a.particles(), d = a.flow.dim();
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < a.grid().size(); ++k) {
    const auto ca = a.flow.cloud(k), cb = b.flow.cloud(k);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double z = ca[i * d + j] - cb[i * d + j];
        s += z * z;
      }
      out[i] = std::max(out[i], s);
    }
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Ratio of means and its delta-method standard error.
std::pair<double, double> ratio_with_se(const std::vector<double>& num, const std::vector<double>& den) {
  const double a = mean_of(den), b = mean_of(num);
  if (a == 0.0) {
    if (b == 0.0) return {0.0, 0.0};
    return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  const double r = b / a;
  const double n = static_cast<double>(num.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < num.size(); ++i) {
    const double z = num[i] - r * den[i];
    ss += z * z;
  }
  return {r, std::sqrt(ss / (n * (n - 1.0))) / a};
}

double snap_to_grid(double t, double h) { return std::floor(t / h + 1e-9) * h; }

}  // namespace

IterationTrace picard_iterate(const SdeSystem& model, const InitialLaw& xi, std::size_t n_particles,
                              double window_t0, double h, std::size_t n_iters, std::uint64_t seed,
                              const PicardOptions& options) {
  if (n_iters < 2) throw InvalidArgument("picard_iterate: need at least 2 iterations");
  if (n_particles < 2) throw InvalidArgument("picard_iterate: need at least 2 particles");
  if (xi.dim() != model.dim()) throw InvalidArgument("picard_iterate: initial law dimension mismatch");
  const TimeGrid grid(0.0, window_t0, h);
  const std::size_t d = xi.dim();
  const std::vector<double> initial = xi.sample(n_particles, seed, 0);

  SimulationOptions sim;
  sim.seed = seed;
  sim.jump_mode = options.jump_mode;

  IterationTrace trace;
  trace.window = window_t0;
  trace.iterations = n_iters;
  trace.iterates.push_back(constant_iterate(initial, n_particles, d, grid));
  std::vector<std::vector<double>> gaps;
  for (std::size_t k = 1; k <= n_iters; ++k) {
    const PathEnsemble& prev = trace.iterates.back();
    PathEnsemble next = simulate_frozen(model, flow_source(prev.flow, grid), initial, d, grid, sim, kBaseRoles);
    gaps.push_back(sup_gaps(next, prev));
    trace.diffs.push_back(mean_of(gaps.back()));
    trace.iterates.push_back(std::move(next));
    if (!options.keep_iterates && trace.iterates.size() > 2) {
      trace.iterates.erase(trace.iterates.begin());
      ++trace.first_kept;
    }
  }
  for (std::size_t k = 0; k + 1 < gaps.size(); ++k) {
    const auto [r, se] = ratio_with_se(gaps[k + 1], gaps[k]);
    trace.ratios.push_back(r);
    trace.ratio_se.push_back(se);
  }
  for (std::size_t k = 1; k < trace.ratios.size(); ++k) trace.envelope_rate = std::max(trace.envelope_rate, trace.ratios[k]);
  std::size_t rising = 0;
  for (std::size_t k = 1; k < trace.diffs.size(); ++k) {
    rising = trace.diffs[k] > trace.diffs[k - 1] ? rising + 1 : 0;
    if (rising >= 3) trace.diverged = true;
  }
  // Geometric envelope from the first contracting step on.
  for (std::size_t k = 1; k < trace.diffs.size(); ++k) {
    const double bound = trace.diffs[1] * std::pow(trace.envelope_rate, static_cast<double>(k - 1));
    if (trace.diffs[k] > bound * (1.0 + 1e-9) + 1e-300)
      throw NumericalError("picard_iterate: diff " + std::to_string(k) + " exceeds its geometric envelope");
  }
  return trace;
}

WindowSearch contraction_window(const SdeSystem& model, const InitialLaw& xi, double h, std::uint64_t seed,
                                const WindowSearchOptions& options) {
  if (!(h > 0.0) || !(options.max_window > h))
    throw InvalidArgument("contraction_window: need 0 < h < max_window");
  WindowSearch out;
  auto test = [&](double t0) {
    WindowProbe p;
    p.t0 = t0;
    p.pass = true;
    PicardOptions po;
    po.jump_mode = options.jump_mode;
    po.keep_iterates = false;
    for (std::size_t s = 0; s < options.seeds; ++s) {
      const auto tr = picard_iterate(model, xi, options.particles, t0, h, 3, seed + s, po);
      p.ratios.push_back(tr.ratios[1]);
      if (!(tr.ratios[1] <= options.threshold)) p.pass = false;
    }
    out.probes.push_back(p);
    return p.pass;
  };

  const double min_window = 2.0 * h;
  double hi = snap_to_grid(options.max_window, h);
  if (test(hi)) {
    out.t0 = hi;
    return out;
  }
  double lo = 0.0;
  for (double t = snap_to_grid(hi / 2.0, h); t >= min_window - 1e-12; t = snap_to_grid(t / 2.0, h)) {
    if (test(t)) {
      lo = t;
      break;
    }
    hi = t;
  }
  if (lo == 0.0) {
    std::ostringstream msg;
    msg << "contraction_window: no window in (h, " << options.max_window << "] passes; probes:";
    for (const auto& p : out.probes) {
      msg << " t0=" << p.t0 << " ratios=[";
      for (std::size_t i = 0; i < p.ratios.size(); ++i) msg << (i ? "," : "") << p.ratios[i];
      msg << "]";
    }
    throw NumericalError(msg.str());
  }
  for (std::size_t r = 0; r < options.refinements && hi - lo > h * 1.5; ++r) {
    const double mid = snap_to_grid((lo + hi) / 2.0, h);
    if (mid <= lo || mid >= hi) break;
    if (test(mid))
      lo = mid;
    else
      hi = mid;
  }
  out.t0 = lo;
  return out;
}

PicardDirectReport picard_vs_direct(const SdeSystem& model, const InitialLaw& xi, std::size_t n_particles,
                                    double window_t0, double h, std::size_t n_iters, std::uint64_t seed,
                                    const PicardOptions& options) {
  PicardDirectReport rep;
  PicardOptions po = options;
  po.keep_iterates = false;
  rep.trace = picard_iterate(model, xi, n_particles, window_t0, h, n_iters, seed, po);
  SimulationOptions sim;
  sim.seed = seed;
  sim.jump_mode = options.jump_mode;
  sim.keep_jump_logs = false;
  const MeasureFlow direct = simulate_mv(model, xi, n_particles, TimeGrid(0.0, window_t0, h), sim).flow;
  const MeasureFlow& last = rep.trace.last().flow;
  const bool exact = model.dim() == 1 || n_particles <= 1024;
  rep.gap_exact = exact;
  std::vector<std::size_t> identity(n_particles);
  for (std::size_t i = 0; i < n_particles; ++i) identity[i] = i;
  for (std::size_t k = 0; k < direct.size(); ++k) {
    const double g = exact ? w2_squared(last.view(k), direct.view(k)) : plan_cost(last.view(k), direct.view(k), identity);
    rep.gap = std::max(rep.gap, g);
  }
  rep.last_diff = rep.trace.diffs.back();
  rep.within_tail = rep.gap <= 2.0 * rep.last_diff;
  return rep;
}

void write_trace_csv(std::ostream& out, const IterationTrace& trace) {
  out << "iteration,diff,ratio\n";
  for (std::size_t k = 0; k < trace.diffs.size(); ++k) {
    out << k << ',' << csv::num(trace.diffs[k]) << ',';
    if (k > 0) out << csv::num(trace.ratios[k - 1]);
    out << '\n';
  }
}

}  // namespace mvjump
