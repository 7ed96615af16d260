#pragma once

// Particle integrators: the self-consistent interacting system, the system
// frozen against an external measure flow, the two-stage coupled solve and
// flow restarts.
//
// Scheme for one step [t_k, t_k + h] of particle i:
//   x <- x + b(t_k, x_k, mu_k) h + sigma(t_k, x_k, mu_k) dB_k
//   and for each event (tau, u) of the particle's jump process in the step,
//   in time order, x <- x + f(tau, x(tau-), mu_k, u).
// mu_k is the measure at the start of the step; x(tau-) is the frozen-
// coefficient path at tau, with the Brownian path filled in by a bridge.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mvjump/measure.hpp"
#include "mvjump/model.hpp"
#include "mvjump/sampler.hpp"

namespace mvjump {

class TimeGrid {
 public:
  TimeGrid() = default;
  // Requires dt > 0 and (horizon - t0) / dt an integer within 1e-12.
  TimeGrid(double t0, double horizon, double dt);

  double t0() const { return t0_; }
  double horizon() const { return horizon_; }
  double dt() const { return dt_; }
  std::size_t steps() const { return steps_; }
  std::size_t size() const { return steps_ + 1; }
  double time(std::size_t k) const;
  std::vector<double> times() const;
  // Index of grid time t, or nullopt when t is not on the grid.
  std::optional<std::size_t> index_of(double t) const;
  // Every `stride`-th time; stride must divide steps.
  TimeGrid coarsen(std::size_t stride) const;

 private:
  double t0_ = 0.0, horizon_ = 0.0, dt_ = 1.0;
  std::size_t steps_ = 0;
};

// Initial law: a point mass, i.i.d. Gaussian, or a given cloud (used as is
// when its size matches, else resampled uniformly with replacement).
class InitialLaw {
 public:
  struct Dirac {
    std::vector<double> point;
  };
  struct Gaussian {
    std::vector<double> mean;
    std::vector<double> stddev;
  };
  struct Cloud {
    EmpiricalMeasure cloud;
  };

  static InitialLaw dirac(std::vector<double> point);
  static InitialLaw gaussian(std::vector<double> mean, std::vector<double> stddev);
  static InitialLaw cloud(EmpiricalMeasure cloud);

  std::size_t dim() const;
  // n points, row-major; draws use the initial_condition stream of `seed`,
  // sub-stream `stream` (0 for the base system, 1 for the hat system).
  std::vector<double> sample(std::size_t n, std::uint64_t seed, std::uint32_t stream = 0) const;
  // Exact second moment of the law (of the cloud itself for Cloud).
  double second_moment() const;
  const auto& form() const { return form_; }

 private:
  explicit InitialLaw(std::variant<Dirac, Gaussian, Cloud> f) : form_(std::move(f)) {}
  std::variant<Dirac, Gaussian, Cloud> form_;
};

enum class JumpMode { Raw, Compensated };
std::string jump_mode_name(JumpMode mode);
JumpMode jump_mode_from_name(const std::string& name);

// Snapshots of an n-particle cloud on a grid. Storage is time-major and
// shared with the PathEnsemble that produced it.
class MeasureFlow {
 public:
  MeasureFlow() = default;
  MeasureFlow(TimeGrid grid, std::size_t n, std::size_t dim, std::vector<double> states);

  const TimeGrid& grid() const { return grid_; }
  std::size_t size() const { return grid_.size(); }
  std::size_t particles() const { return n_; }
  std::size_t dim() const { return dim_; }
  MeasureView view(std::size_t k) const;
  EmpiricalMeasure measure(std::size_t k) const;
  std::span<const double> cloud(std::size_t k) const;
  std::span<const double> mean(std::size_t k) const;
  double second_moment(std::size_t k) const;
  // Restriction to grid indices [first, last].
  MeasureFlow slice(std::size_t first, std::size_t last) const;

  bool operator==(const MeasureFlow& o) const;

 private:
  TimeGrid grid_;
  std::size_t n_ = 0, dim_ = 0;
  std::shared_ptr<const std::vector<double>> states_;
  std::shared_ptr<const std::vector<double>> means_;
  std::shared_ptr<const std::vector<double>> second_moments_;
};

struct PathEnsemble {
  MeasureFlow flow;                           // states of every particle at every recorded time
  std::vector<std::vector<JumpEvent>> jump_logs;  // per particle, events inside the horizon

  const TimeGrid& grid() const { return flow.grid(); }
  std::size_t particles() const { return flow.particles(); }
  std::span<const double> state(std::size_t k, std::size_t i) const {
    return flow.cloud(k).subspan(i * flow.dim(), flow.dim());
  }
};

// The measure argument fed to a frozen system at step k (time t).
using MeasureSource = std::function<MeasureView(std::size_t k, double t)>;

// Reads `flow` on `grid`: each grid time must be a flow time.
MeasureSource flow_source(const MeasureFlow& flow, const TimeGrid& grid);
MeasureSource constant_source(const EmpiricalMeasure& mu);

struct NoiseRoles {
  StreamRole brownian = StreamRole::BaseBrownian;
  StreamRole jumps = StreamRole::BaseJumps;
};
inline constexpr NoiseRoles kBaseRoles{StreamRole::BaseBrownian, StreamRole::BaseJumps};
inline constexpr NoiseRoles kHatRoles{StreamRole::HatBrownian, StreamRole::HatJumps};

struct SimulationOptions {
  std::uint64_t seed = 0;
  JumpMode jump_mode = JumpMode::Raw;
  std::size_t record_every = 1;  // record every k-th grid time; must divide the step count
  bool keep_jump_logs = true;
};

// Steps n particles of one system. The measure argument is supplied per
// step, so the same engine drives the self-consistent and frozen systems.
class ParticleSystem {
 public:
  ParticleSystem(const SdeSystem& system, std::vector<double> initial, const TimeGrid& grid,
                 std::uint64_t seed, NoiseRoles roles, JumpMode mode);

  std::size_t particles() const { return n_; }
  std::size_t dim() const { return d_; }
  std::size_t step_index() const { return k_; }
  double time() const { return grid_.time(k_); }
  bool done() const { return k_ >= grid_.steps(); }
  std::span<const double> state() const { return x_; }
  // The system's own empirical measure.
  MeasureView self_view() const { return {x_, d_, mean_, second_moment_}; }

  // Advances every particle from t_k to t_{k+1} against mu.
  void step(const MeasureView& mu);
  void step_self() { step(self_view()); }

  std::vector<std::vector<JumpEvent>> jump_logs() const;

 private:
  void advance(std::size_t i, const MeasureView& mu, double t, std::span<double> scratch);
  void refresh_summary();

  const SdeSystem& sys_;
  TimeGrid grid_;
  std::uint64_t seed_;
  NoiseRoles roles_;
  JumpMode mode_;
  std::size_t n_, d_, m_;
  std::size_t k_ = 0;
  std::vector<double> x_, next_;
  std::vector<double> mean_;
  double second_moment_ = 0.0;
  std::vector<std::vector<JumpEvent>> events_;
  std::vector<std::size_t> cursor_;
};

struct SimulationResult {
  PathEnsemble paths;
  MeasureFlow flow;  // same storage as paths.flow
};

SimulationResult simulate_mv(const SdeSystem& model, const InitialLaw& xi, std::size_t n,
                             const TimeGrid& grid, const SimulationOptions& options);
// Starts from given particle states instead of sampling.
SimulationResult simulate_mv(const SdeSystem& model, std::vector<double> initial, std::size_t dim,
                             const TimeGrid& grid, const SimulationOptions& options);

PathEnsemble simulate_frozen(const SdeSystem& hat, const MeasureSource& flow, const InitialLaw& theta,
                             std::size_t n, const TimeGrid& grid, const SimulationOptions& options,
                             NoiseRoles roles = kHatRoles);
PathEnsemble simulate_frozen(const SdeSystem& hat, const MeasureSource& flow,
                             std::vector<double> initial, std::size_t dim, const TimeGrid& grid,
                             const SimulationOptions& options, NoiseRoles roles = kHatRoles);

struct CoupledFlow {
  MeasureFlow base;
  PathEnsemble hat;
};

// Base flow first, then the hat system frozen against it. The base flow is
// recorded at every step regardless of record_every, since the hat system
// reads it at every step.
CoupledFlow simulate_coupled(const ModelPair& pair, const InitialLaw& xi, const InitialLaw& theta,
                             std::size_t n_base, std::size_t n_hat, const TimeGrid& grid,
                             const SimulationOptions& options);

// Relaunches the self-consistent system from the flow's cloud at time r
// with fresh noise (seed) and runs to `horizon` with the flow's step.
MeasureFlow restart_flow(const SdeSystem& model, const MeasureFlow& prefix, double r, double horizon,
                         double dt, const SimulationOptions& options);

// Replication spread of the empirical mean at the horizon, per particle
// count. Replication r of size n uses seed + r.
struct ChaosPoint {
  std::size_t n = 0;
  double variance = 0.0;  // trace of the covariance of the empirical mean across replications
  double scaled = 0.0;    // n * variance
};
struct ChaosTrend {
  std::vector<ChaosPoint> points;
  double spread = 0.0;  // max scaled / min scaled
};
ChaosTrend chaos_trend(const SdeSystem& model, const InitialLaw& xi, const std::vector<std::size_t>& sizes,
                       const TimeGrid& grid, std::size_t replications, std::uint64_t seed,
                       JumpMode mode = JumpMode::Raw);
// CSV: "n,variance,scaled".
void write_chaos_csv(std::ostream& out, const ChaosTrend& trend);

// Flow CSV: header "t,particle,x0,...,x{d-1}", one row per particle per time.
void write_flow_csv(std::ostream& out, const MeasureFlow& flow);
// Summary CSV: "t,mean_0,...,second_moment".
void write_flow_summary_csv(std::ostream& out, const MeasureFlow& flow);

struct Checkpoint {
  MeasureFlow flow;
  std::uint64_t seed = 0;
  std::uint64_t model_fingerprint = 0;
};
// Binary checkpoint: magic "MVJF", format version, dims, particle count,
// grid, seed and model fingerprint, then the snapshots as little-endian
// doubles.
void write_checkpoint(std::ostream& out, const Checkpoint& cp);
Checkpoint read_checkpoint(std::istream& in);
void write_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace mvjump
