#include "mvjump/particle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mvjump/csv.hpp"
#include "mvjump/error.hpp"

namespace mvjump {

TimeGrid::TimeGrid(double t0, double horizon, double dt) : t0_(t0), horizon_(horizon), dt_(dt) {
  if (!std::isfinite(t0) || !std::isfinite(horizon) || !std::isfinite(dt) || !(dt > 0.0))
    throw InvalidArgument("TimeGrid: need finite t0, horizon and dt > 0");
  if (horizon < t0) throw InvalidArgument("TimeGrid: horizon precedes t0");
  const double span = horizon - t0;
  const double steps = std::round(span / dt);
  if (std::abs(steps * dt - span) > 1e-12 * std::max(1.0, span))
    throw InvalidArgument("TimeGrid: dt does not divide the horizon");
  steps_ = static_cast<std::size_t>(steps);
}

double TimeGrid::time(std::size_t k) const {
  if (k > steps_) throw InvalidArgument("TimeGrid: index past the horizon");
  return k == steps_ ? horizon_ : t0_ + static_cast<double>(k) * dt_;
}

std::vector<double> TimeGrid::times() const {
  std::vector<double> out(size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = time(k);
  return out;
}

std::optional<std::size_t> TimeGrid::index_of(double t) const {
  const double k = std::round((t - t0_) / dt_);
  if (k < 0.0 || k > static_cast<double>(steps_)) return std::nullopt;
  const auto idx = static_cast<std::size_t>(k);
  if (std::abs(time(idx) - t) > 1e-9 * std::max(1.0, std::abs(t))) return std::nullopt;
  return idx;
}

TimeGrid TimeGrid::coarsen(std::size_t stride) const {
  if (stride == 0 || steps_ % stride != 0)
    throw InvalidArgument("TimeGrid: stride must divide the step count");
  return TimeGrid(t0_, horizon_, dt_ * static_cast<double>(stride));
}

InitialLaw InitialLaw::dirac(std::vector<double> point) {
  if (point.empty()) throw InvalidArgument("InitialLaw: empty point");
  for (double v : point)
    if (!std::isfinite(v)) throw InvalidArgument("InitialLaw: non-finite point");
  return InitialLaw(Dirac{std::move(point)});
}

InitialLaw InitialLaw::gaussian(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.empty() || mean.size() != stddev.size())
    throw InvalidArgument("InitialLaw: mean and stddev must have equal, positive length");
  for (std::size_t i = 0; i < mean.size(); ++i)
    if (!std::isfinite(mean[i]) || !std::isfinite(stddev[i]) || stddev[i] < 0.0)
      throw InvalidArgument("InitialLaw: Gaussian parameters must be finite, stddev >= 0");
  return InitialLaw(Gaussian{std::move(mean), std::move(stddev)});
}

InitialLaw InitialLaw::cloud(EmpiricalMeasure cloud) { return InitialLaw(Cloud{std::move(cloud)}); }

std::size_t InitialLaw::dim() const {
  return std::visit(
      [](const auto& f) -> std::size_t {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Dirac>)
          return f.point.size();
        else if constexpr (std::is_same_v<T, Gaussian>)
          return f.mean.size();
        else
          return f.cloud.dim();
      },
      form_);
}

std::vector<double> InitialLaw::sample(std::size_t n, std::uint64_t seed, std::uint32_t stream) const {
  const std::size_t d = dim();
  std::vector<double> out(n * d);
  if (const auto* dirac = std::get_if<Dirac>(&form_)) {
    for (std::size_t i = 0; i < n; ++i) std::copy(dirac->point.begin(), dirac->point.end(), out.begin() + i * d);
  } else if (const auto* g = std::get_if<Gaussian>(&form_)) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::span<double> row(out.data() + i * d, d);
      standard_normals({seed, StreamRole::InitialCondition, static_cast<std::uint32_t>(i), 0, stream}, row);
      for (std::size_t k = 0; k < d; ++k) row[k] = g->mean[k] + g->stddev[k] * row[k];
    }
  } else {
    const auto& c = std::get<Cloud>(form_).cloud;
    if (c.size() == n) {
      std::copy(c.points().begin(), c.points().end(), out.begin());
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const double u =
            keyed_uniforms({seed, StreamRole::InitialCondition, static_cast<std::uint32_t>(i), 0, stream}, 0)[0];
        const auto j = std::min(c.size() - 1, static_cast<std::size_t>(u * static_cast<double>(c.size())));
        const auto src = c.point(j);
        std::copy(src.begin(), src.end(), out.begin() + i * d);
      }
    }
  }
  return out;
}

double InitialLaw::second_moment() const {
  if (const auto* dirac = std::get_if<Dirac>(&form_)) {
    double s = 0.0;
    for (double v : dirac->point) s += v * v;
    return s;
  }
  if (const auto* g = std::get_if<Gaussian>(&form_)) {
    double s = 0.0;
    for (std::size_t k = 0; k < g->mean.size(); ++k) s += g->mean[k] * g->mean[k] + g->stddev[k] * g->stddev[k];
    return s;
  }
  return std::get<Cloud>(form_).cloud.second_moment();
}

std::string jump_mode_name(JumpMode mode) { return mode == JumpMode::Raw ? "raw" : "compensated"; }

JumpMode jump_mode_from_name(const std::string& name) {
  if (name == "raw") return JumpMode::Raw;
  if (name == "compensated") return JumpMode::Compensated;
  throw InvalidArgument("unknown jump mode: '" + name + "' (expected raw or compensated)");
}

MeasureFlow::MeasureFlow(TimeGrid grid, std::size_t n, std::size_t dim, std::vector<double> states)
    : grid_(grid), n_(n), dim_(dim) {
  if (n == 0 || dim == 0) throw InvalidArgument("MeasureFlow: need particles and a dimension");
  if (states.size() != grid.size() * n * dim) throw InvalidArgument("MeasureFlow: storage size mismatch");
  std::vector<double> means(grid.size() * dim), m2(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k)
    m2[k] = summarize_cloud(std::span<const double>(states).subspan(k * n * dim, n * dim), dim,
                            std::span<double>(means).subspan(k * dim, dim));
  states_ = std::make_shared<const std::vector<double>>(std::move(states));
  means_ = std::make_shared<const std::vector<double>>(std::move(means));
  second_moments_ = std::make_shared<const std::vector<double>>(std::move(m2));
}

std::span<const double> MeasureFlow::cloud(std::size_t k) const {
  if (k >= size()) throw InvalidArgument("MeasureFlow: index out of range");
  return std::span<const double>(*states_).subspan(k * n_ * dim_, n_ * dim_);
}

std::span<const double> MeasureFlow::mean(std::size_t k) const {
  if (k >= size()) throw InvalidArgument("MeasureFlow: index out of range");
  return std::span<const double>(*means_).subspan(k * dim_, dim_);
}

double MeasureFlow::second_moment(std::size_t k) const {
  if (k >= size()) throw InvalidArgument("MeasureFlow: index out of range");
  return (*second_moments_)[k];
}

MeasureView MeasureFlow::view(std::size_t k) const { return {cloud(k), dim_, mean(k), second_moment(k)}; }

EmpiricalMeasure MeasureFlow::measure(std::size_t k) const {
  const auto c = cloud(k);
  return EmpiricalMeasure(std::vector<double>(c.begin(), c.end()), dim_);
}

MeasureFlow MeasureFlow::slice(std::size_t first, std::size_t last) const {
  if (first > last || last >= size()) throw InvalidArgument("MeasureFlow: bad slice");
  const TimeGrid g(grid_.time(first), grid_.time(last), grid_.dt());
  const auto begin = states_->begin() + static_cast<std::ptrdiff_t>(first * n_ * dim_);
  const auto end = states_->begin() + static_cast<std::ptrdiff_t>((last + 1) * n_ * dim_);
  return MeasureFlow(g, n_, dim_, std::vector<double>(begin, end));
}

bool MeasureFlow::operator==(const MeasureFlow& o) const {
  if (n_ != o.n_ || dim_ != o.dim_ || grid_.size() != o.grid_.size()) return false;
  if (!states_ || !o.states_) return states_ == o.states_;
  return *states_ == *o.states_ && grid_.times() == o.grid_.times();
}

MeasureSource flow_source(const MeasureFlow& flow, const TimeGrid& grid) {
  const TimeGrid& fg = flow.grid();
  if (std::abs(fg.t0() - grid.t0()) > 1e-12 * std::max(1.0, std::abs(grid.t0())))
    throw InvalidArgument("flow grid starts at a different time");
  const double ratio = std::round(grid.dt() / fg.dt());
  if (ratio < 1.0 || std::abs(ratio * fg.dt() - grid.dt()) > 1e-12 * grid.dt())
    throw InvalidArgument("flow grid is not a refinement of the simulation grid");
  const auto stride = static_cast<std::size_t>(ratio);
  if (grid.steps() * stride > fg.steps()) throw InvalidArgument("flow grid ends before the simulation grid");
  return [flow, stride](std::size_t k, double) { return flow.view(k * stride); };
}

MeasureSource constant_source(const EmpiricalMeasure& mu) {
  auto held = std::make_shared<const EmpiricalMeasure>(mu);
  return [held](std::size_t, double) { return held->view(); };
}

ParticleSystem::ParticleSystem(const SdeSystem& system, std::vector<double> initial, const TimeGrid& grid,
                               std::uint64_t seed, NoiseRoles roles, JumpMode mode)
    : sys_(system),
      grid_(grid),
      seed_(seed),
      roles_(roles),
      mode_(mode),
      d_(system.coefficients.dim_state),
      m_(system.coefficients.dim_noise),
      x_(std::move(initial)) {
  if (x_.empty() || x_.size() % d_ != 0)
    throw InvalidArgument("ParticleSystem: initial states do not match the state dimension");
  for (double v : x_)
    if (!std::isfinite(v)) throw InvalidArgument("ParticleSystem: non-finite initial state");
  n_ = x_.size() / d_;
  if (n_ > 0xFFFFFFFFu) throw InvalidArgument("ParticleSystem: too many particles");
  next_.resize(x_.size());
  mean_.resize(d_);
  events_.resize(n_);
  cursor_.assign(n_, 0);
  if (sys_.nu.total_mass() > 0.0) {
    const double span = grid_.horizon() - grid_.t0();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_); ++i)
      events_[i] = sample_jump_events({seed_, roles_.jumps, static_cast<std::uint32_t>(i), 0, 0}, sys_.nu,
                                      span, grid_.t0());
  }
  if (mode_ == JumpMode::Compensated) (void)sys_.nu.quadrature();  // throws for unbounded densities
  refresh_summary();
}

void ParticleSystem::refresh_summary() { second_moment_ = summarize_cloud(x_, d_, mean_); }

std::vector<std::vector<JumpEvent>> ParticleSystem::jump_logs() const { return events_; }

void ParticleSystem::advance(std::size_t i, const MeasureView& mu, double t, std::span<double> scratch) {
  const auto& c = sys_.coefficients;
  const double h = grid_.dt();
  const double t_next = grid_.time(k_ + 1);
  const std::span<const double> x(x_.data() + i * d_, d_);
  const std::span<double> out(next_.data() + i * d_, d_);
  auto b = scratch.subspan(0, d_);
  auto sig = scratch.subspan(d_, d_ * m_);
  auto dB = scratch.subspan(d_ + d_ * m_, m_);
  auto W = scratch.subspan(d_ + d_ * m_ + m_, m_);
  auto z = scratch.subspan(d_ + d_ * m_ + 2 * m_, m_);
  auto xpre = scratch.subspan(d_ + d_ * m_ + 3 * m_, d_);
  auto f = scratch.subspan(2 * d_ + d_ * m_ + 3 * m_, d_);
  auto J = scratch.subspan(3 * d_ + d_ * m_ + 3 * m_, d_);

  c.drift(t, x, mu, b);
  c.diffusion(t, x, mu, sig);
  if (mode_ == JumpMode::Compensated) {
    for (const auto& atom : sys_.nu.quadrature()) {
      c.jump(t, x, mu, atom.mark, f);
      for (std::size_t j = 0; j < d_; ++j) b[j] -= atom.weight * f[j];
    }
  }
  const auto pid = static_cast<std::uint32_t>(i);
  gaussian_increment({seed_, roles_.brownian, pid, k_, 0}, h, dB);
  for (std::size_t j = 0; j < d_; ++j) {
    double noise = 0.0;
    for (std::size_t l = 0; l < m_; ++l) noise += sig[j * m_ + l] * dB[l];
    out[j] = x[j] + b[j] * h + noise;
  }

  const auto& ev = events_[i];
  std::size_t& cur = cursor_[i];
  if (cur >= ev.size() || ev[cur].time > t_next) return;

  std::fill(W.begin(), W.end(), 0.0);
  std::fill(J.begin(), J.end(), 0.0);
  double s_prev = 0.0;
  for (std::uint32_t j = 1; cur < ev.size() && ev[cur].time <= t_next; ++cur, ++j) {
    const double tau = ev[cur].time;
    const double s = std::clamp(tau - t, s_prev, h);
    // Bridge from (s_prev, W) to (h, dB).
    standard_normals({seed_, roles_.brownian, pid, k_, j}, z);
    const double rest = h - s_prev;
    if (rest > 0.0) {
      const double w = (s - s_prev) / rest;
      const double sd = std::sqrt(std::max(0.0, (s - s_prev) * (h - s) / rest));
      for (std::size_t l = 0; l < m_; ++l) W[l] += w * (dB[l] - W[l]) + sd * z[l];
    }
    s_prev = s;
    for (std::size_t q = 0; q < d_; ++q) {
      double noise = 0.0;
      for (std::size_t l = 0; l < m_; ++l) noise += sig[q * m_ + l] * W[l];
      xpre[q] = x[q] + b[q] * s + noise + J[q];
    }
    c.jump(tau, xpre, mu, ev[cur].mark, f);
    for (std::size_t q = 0; q < d_; ++q) J[q] += f[q];
  }
  for (std::size_t q = 0; q < d_; ++q) out[q] += J[q];
}

void ParticleSystem::step(const MeasureView& mu) {
  if (done()) throw InvalidArgument("ParticleSystem: stepped past the horizon");
  if (mu.dim() != d_) throw InvalidArgument("ParticleSystem: measure dimension mismatch");
  const double t = time();
  const std::size_t scratch_size = 4 * d_ + d_ * m_ + 3 * m_;
#pragma omp parallel
  {
    std::vector<double> scratch(scratch_size);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_); ++i)
      advance(static_cast<std::size_t>(i), mu, t, scratch);
  }
  for (std::size_t idx = 0; idx < next_.size(); ++idx) {
    if (!std::isfinite(next_[idx])) {
      const std::size_t i = idx / d_;
      std::ostringstream msg;
      msg << "non-finite state at step " << k_ << " (t=" << t << "), particle " << i << "; state before step:";
      for (std::size_t q = 0; q < d_; ++q) msg << ' ' << x_[i * d_ + q];
      msg << "; measure mean:";
      for (double v : mu.mean()) msg << ' ' << v;
      msg << ", second moment " << mu.second_moment();
      throw NumericalError(msg.str());
    }
  }
  x_.swap(next_);
  ++k_;
  refresh_summary();
}

namespace {

class Recorder {
 public:
  Recorder(const TimeGrid& grid, std::size_t every, std::size_t n, std::size_t d)
      : grid_(grid.coarsen(every)), every_(every), n_(n), d_(d) {
    buf_.reserve(grid_.size() * n * d);
  }
  void offer(const ParticleSystem& ps) {
    if (ps.step_index() % every_ == 0) buf_.insert(buf_.end(), ps.state().begin(), ps.state().end());
  }
  MeasureFlow finish() { return MeasureFlow(grid_, n_, d_, std::move(buf_)); }

 private:
  TimeGrid grid_;
  std::size_t every_, n_, d_;
  std::vector<double> buf_;
};

void check_dim(const SdeSystem& sys, std::size_t dim) {
  if (sys.dim() != dim)
    throw InvalidArgument("initial law dimension " + std::to_string(dim) + " does not match model dimension " +
                          std::to_string(sys.dim()));
}

}  // namespace

SimulationResult simulate_mv(const SdeSystem& model, std::vector<double> initial, std::size_t dim,
                             const TimeGrid& grid, const SimulationOptions& options) {
  check_dim(model, dim);
  const std::size_t n = initial.size() / dim;
  if (n < 2) throw InvalidArgument("simulate_mv: need at least 2 particles");
  ParticleSystem ps(model, std::move(initial), grid, options.seed, kBaseRoles, options.jump_mode);
  Recorder rec(grid, options.record_every, n, dim);
  rec.offer(ps);
  while (!ps.done()) {
    ps.step_self();
    rec.offer(ps);
  }
  SimulationResult r;
  r.paths.flow = rec.finish();
  if (options.keep_jump_logs) r.paths.jump_logs = ps.jump_logs();
  r.flow = r.paths.flow;
  return r;
}

SimulationResult simulate_mv(const SdeSystem& model, const InitialLaw& xi, std::size_t n, const TimeGrid& grid,
                             const SimulationOptions& options) {
  check_dim(model, xi.dim());
  if (n < 2) throw InvalidArgument("simulate_mv: need at least 2 particles");
  return simulate_mv(model, xi.sample(n, options.seed, 0), xi.dim(), grid, options);
}

PathEnsemble simulate_frozen(const SdeSystem& hat, const MeasureSource& flow, std::vector<double> initial,
                             std::size_t dim, const TimeGrid& grid, const SimulationOptions& options,
                             NoiseRoles roles) {
  check_dim(hat, dim);
  const std::size_t n = initial.size() / dim;
  if (n < 1) throw InvalidArgument("simulate_frozen: need at least 1 particle");
  ParticleSystem ps(hat, std::move(initial), grid, options.seed, roles, options.jump_mode);
  Recorder rec(grid, options.record_every, n, dim);
  rec.offer(ps);
  while (!ps.done()) {
    ps.step(flow(ps.step_index(), ps.time()));
    rec.offer(ps);
  }
  PathEnsemble out;
  out.flow = rec.finish();
  if (options.keep_jump_logs) out.jump_logs = ps.jump_logs();
  return out;
}

PathEnsemble simulate_frozen(const SdeSystem& hat, const MeasureSource& flow, const InitialLaw& theta,
                             std::size_t n, const TimeGrid& grid, const SimulationOptions& options,
                             NoiseRoles roles) {
  check_dim(hat, theta.dim());
  return simulate_frozen(hat, flow, theta.sample(n, options.seed, 1), theta.dim(), grid, options, roles);
}

CoupledFlow simulate_coupled(const ModelPair& pair, const InitialLaw& xi, const InitialLaw& theta,
                             std::size_t n_base, std::size_t n_hat, const TimeGrid& grid,
                             const SimulationOptions& options) {
  SimulationOptions base_opts = options;
  base_opts.record_every = 1;
  CoupledFlow out;
  out.base = simulate_mv(pair.base, xi, n_base, grid, base_opts).flow;
  out.hat = simulate_frozen(pair.hat, flow_source(out.base, grid), theta, n_hat, grid, options);
  return out;
}

MeasureFlow restart_flow(const SdeSystem& model, const MeasureFlow& prefix, double r, double horizon, double dt,
                         const SimulationOptions& options) {
  const auto idx = prefix.grid().index_of(r);
  if (!idx) throw InvalidArgument("restart_flow: r is not a time of the flow grid");
  const auto cloud = prefix.cloud(*idx);
  return simulate_mv(model, std::vector<double>(cloud.begin(), cloud.end()), prefix.dim(),
                     TimeGrid(prefix.grid().time(*idx), horizon, dt), options)
      .flow;
}

void write_flow_csv(std::ostream& out, const MeasureFlow& flow) {
  out << "t,particle";
  for (std::size_t q = 0; q < flow.dim(); ++q) out << ",x" << q;
  out << '\n';
  for (std::size_t k = 0; k < flow.size(); ++k) {
    const std::string t = csv::num(flow.grid().time(k));
    const auto c = flow.cloud(k);
    for (std::size_t i = 0; i < flow.particles(); ++i) {
      out << t << ',' << i;
      for (std::size_t q = 0; q < flow.dim(); ++q) out << ',' << csv::num(c[i * flow.dim() + q]);
      out << '\n';
    }
  }
}

void write_flow_summary_csv(std::ostream& out, const MeasureFlow& flow) {
  out << 't';
  for (std::size_t q = 0; q < flow.dim(); ++q) out << ",mean_" << q;
  out << ",second_moment\n";
  for (std::size_t k = 0; k < flow.size(); ++k) {
    out << csv::num(flow.grid().time(k));
    for (double v : flow.mean(k)) out << ',' << csv::num(v);
    out << ',' << csv::num(flow.second_moment(k)) << '\n';
  }
}

ChaosTrend chaos_trend(const SdeSystem& model, const InitialLaw& xi, const std::vector<std::size_t>& sizes,
                       const TimeGrid& grid, std::size_t replications, std::uint64_t seed, JumpMode mode) {
  if (sizes.empty()) throw InvalidArgument("chaos_trend: no particle counts");
  if (replications < 2) throw InvalidArgument("chaos_trend: need at least 2 replications");
  const std::size_t d = model.dim();
  SimulationOptions opt;
  opt.jump_mode = mode;
  opt.record_every = grid.steps();
  opt.keep_jump_logs = false;
  ChaosTrend trend;
  for (std::size_t n : sizes) {
    std::vector<double> means(replications * d);
    for (std::size_t r = 0; r < replications; ++r) {
      opt.seed = seed + r;
      const auto res = simulate_mv(model, xi, n, grid, opt);
      const auto m = res.flow.mean(res.flow.size() - 1);
      std::copy(m.begin(), m.end(), means.begin() + r * d);
    }
    double var = 0.0;
    for (std::size_t q = 0; q < d; ++q) {
      double avg = 0.0;
      for (std::size_t r = 0; r < replications; ++r) avg += means[r * d + q];
      avg /= static_cast<double>(replications);
      double ss = 0.0;
      for (std::size_t r = 0; r < replications; ++r) ss += (means[r * d + q] - avg) * (means[r * d + q] - avg);
      var += ss / static_cast<double>(replications - 1);
    }
    trend.points.push_back({n, var, static_cast<double>(n) * var});
  }
  double lo = trend.points.front().scaled, hi = lo;
  for (const auto& p : trend.points) {
    lo = std::min(lo, p.scaled);
    hi = std::max(hi, p.scaled);
  }
  trend.spread = lo > 0.0 ? hi / lo : (hi > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  return trend;
}

void write_chaos_csv(std::ostream& out, const ChaosTrend& trend) {
  out << "n,variance,scaled\n";
  for (const auto& p : trend.points) out << p.n << ',' << csv::num(p.variance) << ',' << csv::num(p.scaled) << '\n';
}

}  // namespace mvjump
