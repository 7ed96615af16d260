#pragma once

// Long-run behaviour: stationary clouds, W2 decay of the base flow against
// its exponential bound, the hat component against the coupled bound, the
// flow (Chapman-Kolmogorov) property under restarts, and the product-form
// limit of the lifted measure. Autonomous models only.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "mvjump/generator.hpp"
#include "mvjump/measure.hpp"
#include "mvjump/model.hpp"
#include "mvjump/particle.hpp"

namespace mvjump {

// Distances between clouds: rank pairing for d = 1, exact assignment up to
// the cap, sliced above it only when allowed.
struct DistanceOptions {
  std::size_t assignment_cap = 1024;
  bool allow_sliced = false;
  std::size_t slices = 64;
};
double cloud_w2_squared(const MeasureView& a, const MeasureView& b, const DistanceOptions& options = {});

struct StationaryOptions {
  std::vector<double> ladder{1.0, 2.0, 4.0, 8.0};  // lags for the increment diagnostic
  double threshold_fraction = 0.05;                 // of the cloud's second moment
  JumpMode jump_mode = JumpMode::Raw;
  DistanceOptions distance;
};

struct StationaryEstimate {
  EmpiricalMeasure cloud{std::vector<double>{0.0}, 1};
  double burn_in = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> lags;        // ladder entries not exceeding the burn-in
  std::vector<double> increments;  // W2^2(mu_{T - lag}, mu_T)
  double threshold = 0.0;
  bool stationary = false;  // every increment below the threshold
};

// Runs the particle system from delta_0 for burn_in and keeps the final cloud.
StationaryEstimate estimate_stationary(const SdeSystem& model, std::size_t n, double h, double burn_in,
                                       std::uint64_t seed, const StationaryOptions& options = {});

// The frozen hat equation against the constant measure mu_inf, from delta_0.
StationaryEstimate estimate_hat_stationary(const SdeSystem& hat, const EmpiricalMeasure& base_stationary,
                                           std::size_t n, double h, double burn_in, std::uint64_t seed,
                                           const StationaryOptions& options = {});

// Theoretical rate-condition warnings for the pair (empty when both hold).
std::vector<std::string> rate_warnings(const ModelPair& pair);

struct DecayOptions {
  std::size_t checkpoints = 20;  // equally spaced in (t0, horizon]; must fall on the grid
  double fit_from = 0.0;         // regression window for fitted_rate
  double fit_to = std::numeric_limits<double>::infinity();
  JumpMode jump_mode = JumpMode::Raw;
  DistanceOptions distance;
};

struct DecayCurve {
  std::vector<double> times;
  std::vector<double> w2sq;   // seed mean of W2^2(law at t, stationary cloud)
  std::vector<double> se;     // seed-dispersion standard error of w2sq
  std::vector<double> bound;  // theoretical bound at t
  // Base curves: mean squared distance of the common-noise coupling started
  // from the optimal pairing of the initial and stationary clouds.
  std::vector<double> pair_distance;
  double rate = 0.0;  // the theoretical rate used in the bound
  // -slope of log(pair_distance) (base) or log(w2sq) (hat) over the window;
  // +infinity when the fitted series is identically zero.
  double fitted_rate = 0.0;
  std::string branch;  // "base", "distinct" or "equal"
  std::vector<std::uint64_t> seeds;

  // Every point satisfies w2sq <= bound + k * se.
  bool dominated(double k = 3.0) const;
};

DecayCurve decay_curve(const SdeSystem& model, const InitialLaw& xi, const StationaryEstimate& stationary,
                       const TimeGrid& grid, std::size_t n, const std::vector<std::uint64_t>& seeds, double lambda,
                       const DecayOptions& options = {});

// Bound on W2^2(law(X-hat_t), mu-hat_inf) with the equal-rate branch taken
// when |lambda_hat - lambda| < branch_eps * max(|lambda|, |lambda_hat|).
struct CoupledBound {
  double lambda = 0.0, lambda_hat = 0.0;
  double start = 0.0;       // |x|^2 + |mu-hat_inf|_2^2
  double base_start = 0.0;  // |xi|_2^2 + |mu_inf|_2^2
  double factor = 0.0;      // C3'-hat + 3 C4-hat nu2(U2)
  bool equal_rates = false;
  double operator()(double t) const;
};
CoupledBound coupled_bound(const ModelPair& pair, double x_sq, double xi_sq, const EmpiricalMeasure& base_stationary,
                           const EmpiricalMeasure& hat_stationary, double branch_eps = 1e-9);

// Hat component of the coupled system from (xi, delta_x).
DecayCurve coupled_decay(const ModelPair& pair, const std::vector<double>& x, const InitialLaw& xi,
                         const StationaryEstimate& base_stationary, const StationaryEstimate& hat_stationary,
                         const TimeGrid& grid, std::size_t n, const std::vector<std::uint64_t>& seeds,
                         const DecayOptions& options = {});

// eps(n, h) = c_n / n + c_h h for cloud-to-cloud W2^2 gaps.
struct GapTolerance {
  double c_n = 0.0;
  double c_h = 0.0;
  double operator()(std::size_t n, double h) const { return c_n / static_cast<double>(n) + c_h * h; }
};

struct FlowCheckRow {
  std::uint64_t seed = 0;
  double base_gap = 0.0;
  double hat_gap = 0.0;
};

struct FlowCheckReport {
  double r = 0.0, horizon = 0.0;
  std::vector<FlowCheckRow> rows;
  double tolerance = 0.0;
  bool pass = true;
};

// Direct coupled run on [0, T] versus a restart at r with fresh noise:
// W2^2 between the terminal clouds of each component.
FlowCheckReport flow_property_check(const ModelPair& pair, const InitialLaw& xi, const InitialLaw& theta, double r,
                                    double horizon, double h, std::size_t n, const std::vector<std::uint64_t>& seeds,
                                    const GapTolerance& tolerance, const DistanceOptions& distance = {});

struct EquivalenceRow {
  double t = 0.0;
  std::string function_id;
  double gap = 0.0;  // |Lambda_t(Phi) - Lambda_inf(Phi)|
};

struct EquivalenceReport {
  std::vector<double> times;
  std::vector<double> base_w2sq;  // W2^2(mu_t, mu_inf)
  std::vector<double> hat_w2sq;   // W2^2(law(X-hat_t), mu-hat_inf)
  std::vector<EquivalenceRow> rows;
  double final_max_gap = 0.0;
  double tolerance = 0.0;
  bool pass = true;  // final_max_gap <= tolerance
};

// Lambda_t = law(X-hat_t) x delta_{mu_t} against Lambda_inf = mu-hat_inf x delta_{mu_inf}
// on a battery of cylindrical functions.
EquivalenceReport ergodicity_equivalence_report(const ModelPair& pair, const std::vector<double>& x,
                                                const InitialLaw& xi, const StationaryEstimate& base_stationary,
                                                const StationaryEstimate& hat_stationary, const TimeGrid& grid,
                                                std::size_t n, std::uint64_t seed,
                                                const std::vector<CylindricalFunction>& battery, double tolerance,
                                                const DecayOptions& options = {});

// CSV: "t,w2sq,bound,se".
void write_decay_csv(std::ostream& out, const DecayCurve& curve);
// CSV: "t,pair_distance".
void write_coupling_csv(std::ostream& out, const DecayCurve& curve);
// CSV: "seed,base_gap,hat_gap".
void write_flow_check_csv(std::ostream& out, const FlowCheckReport& report);
// CSV: "t,function_id,gap".
void write_equivalence_csv(std::ostream& out, const EquivalenceReport& report);
// gnuplot script drawing a decay CSV on a log scale.
void write_decay_plot_script(std::ostream& out, const std::string& csv_path, const std::string& title);

}  // namespace mvjump
