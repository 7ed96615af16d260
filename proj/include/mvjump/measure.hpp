#pragma once

// Equal-weight empirical measures on R^d and Wasserstein-2 distances.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mvjump {

// Non-owning view of an equal-weight particle cloud, with its mean and
// second moment precomputed. Coefficient functions receive this.
class MeasureView {
 public:
  MeasureView(std::span<const double> points, std::size_t dim, std::span<const double> mean,
              double second_moment)
      : points_(points), dim_(dim), mean_(mean), second_moment_(second_moment) {}

  std::size_t size() const { return points_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> points() const { return points_; }
  std::span<const double> point(std::size_t i) const { return points_.subspan(i * dim_, dim_); }
  std::span<const double> mean() const { return mean_; }
  double second_moment() const { return second_moment_; }

 private:
  std::span<const double> points_;
  std::size_t dim_;
  std::span<const double> mean_;
  double second_moment_;
};

// Writes the coordinate means of `points` into `mean` and returns the
// second moment (1/n) sum |x_i|^2.
double summarize_cloud(std::span<const double> points, std::size_t dim, std::span<double> mean);

class EmpiricalMeasure {
 public:
  // `points` is row-major, n x dim. Requires n >= 1 and finite entries.
  EmpiricalMeasure(std::vector<double> points, std::size_t dim);

  static EmpiricalMeasure dirac(std::span<const double> atom);
  static EmpiricalMeasure from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t size() const { return points_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> points() const { return points_; }
  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(points_).subspan(i * dim_, dim_);
  }
  std::span<const double> mean() const { return mean_; }
  double second_moment() const { return second_moment_; }
  MeasureView view() const { return {points_, dim_, mean_, second_moment_}; }

  bool operator==(const EmpiricalMeasure& other) const {
    return dim_ == other.dim_ && points_ == other.points_;
  }

 private:
  std::vector<double> points_;
  std::size_t dim_;
  std::vector<double> mean_;
  double second_moment_ = 0.0;
};

double second_moment(const MeasureView& mu);
inline double second_moment(const EmpiricalMeasure& mu) { return mu.second_moment(); }

struct Moments {
  std::vector<double> mean;        // d
  std::vector<double> raw_second;  // d x d row-major, (1/n) sum x x^T
};
Moments moments(const MeasureView& mu);
inline Moments moments(const EmpiricalMeasure& mu) { return moments(mu.view()); }

// Mean of phi over the atoms: mu(phi).
template <class F>
double integrate(const MeasureView& mu, F&& phi) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) acc += phi(mu.point(i));
  return acc / static_cast<double>(mu.size());
}

struct TransportPlan {
  std::vector<std::size_t> assignment;  // source i -> target assignment[i]
  double cost = 0.0;                    // (1/n) sum |x_i - y_assignment[i]|^2
};

enum class W2Method { Exact1d, ExactAssignment, Sliced };

struct W2Options {
  W2Method method = W2Method::Exact1d;
  std::size_t slices = 64;
  std::uint64_t seed = 0;
  std::size_t assignment_cap = 1024;
  bool want_plan = false;
};

struct W2Result {
  double distance_squared = 0.0;
  std::optional<TransportPlan> plan;
  bool estimate = false;  // true for sliced
};

W2Result wasserstein2(const MeasureView& mu, const MeasureView& nu, const W2Options& options);
inline W2Result wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                             const W2Options& options) {
  return wasserstein2(mu.view(), nu.view(), options);
}

// Exact W2^2 with the method implied by the dimension: rank pairing for
// d = 1, assignment otherwise (subject to the cap).
double w2_squared(const MeasureView& mu, const MeasureView& nu, std::size_t assignment_cap = 1024);
inline double w2_squared(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  return w2_squared(mu.view(), nu.view());
}

// Cost of a given pairing; never below the optimal W2^2.
double plan_cost(const MeasureView& mu, const MeasureView& nu,
                 std::span<const std::size_t> assignment);

// Minimum-cost perfect matching on a dense n x n cost matrix (row-major).
// Shortest augmenting paths with potentials, O(n^3).
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

// Cloud CSV: first line "dim,<d>", then one comma-separated point per row.
EmpiricalMeasure read_cloud_csv(std::istream& in);
EmpiricalMeasure read_cloud_csv(const std::string& path);
void write_cloud_csv(std::ostream& out, const MeasureView& mu);
// Plan CSV: header "i,j,cost_ij".
void write_plan_csv(std::ostream& out, const MeasureView& mu, const MeasureView& nu,
                    const TransportPlan& plan);

}  // namespace mvjump
