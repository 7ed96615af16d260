#include "mvjump/measure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "mvjump/csv.hpp"
#include "mvjump/error.hpp"
#include "mvjump/kernels.hpp"
#include "mvjump/sampler.hpp"

namespace mvjump {

namespace csv {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\r' || field.back() == '\t'))
      field.remove_suffix(1);
    out.emplace_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view field) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    throw InvalidArgument("csv: cannot parse number '" + std::string(field) + "'");
  return v;
}

}  // namespace csv

double summarize_cloud(std::span<const double> points, std::size_t dim, std::span<double> mean) {
  const std::size_t n = points.size() / dim;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < dim; ++k)
    mean[k] = kernels::strided_sum(points.data() + k, n, dim) * inv_n;
  return kernels::sum_squares(points) * inv_n;
}

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> points, std::size_t dim)
    : points_(std::move(points)), dim_(dim), mean_(dim) {
  if (dim_ == 0) throw InvalidArgument("EmpiricalMeasure: dim must be positive");
  if (points_.empty() || points_.size() % dim_ != 0)
    throw InvalidArgument("EmpiricalMeasure: need n >= 1 points of length dim");
  for (double v : points_)
    if (!std::isfinite(v)) throw InvalidArgument("EmpiricalMeasure: non-finite coordinate");
  second_moment_ = summarize_cloud(points_, dim_, mean_);
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> atom) {
  return EmpiricalMeasure(std::vector<double>(atom.begin(), atom.end()), atom.size());
}

EmpiricalMeasure EmpiricalMeasure::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw InvalidArgument("EmpiricalMeasure: no points");
  const std::size_t d = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.size() != d) throw InvalidArgument("EmpiricalMeasure: ragged points");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return EmpiricalMeasure(std::move(flat), d);
}

double second_moment(const MeasureView& mu) { return mu.second_moment(); }

Moments moments(const MeasureView& mu) {
  const std::size_t d = mu.dim(), n = mu.size();
  Moments m;
  m.mean.assign(mu.mean().begin(), mu.mean().end());
  m.raw_second.assign(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = mu.point(i);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) m.raw_second[a * d + b] += x[a] * x[b];
  }
  for (double& v : m.raw_second) v /= static_cast<double>(n);
  return m;
}

namespace {

void check_same_shape(const MeasureView& mu, const MeasureView& nu) {
  if (mu.dim() != nu.dim()) throw InvalidArgument("wasserstein2: dimension mismatch");
  if (mu.size() != nu.size())
    throw InvalidArgument("wasserstein2: exact methods need equal cloud sizes");
}

std::vector<std::size_t> argsort_1d(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  return idx;
}

W2Result exact_1d(const MeasureView& mu, const MeasureView& nu, bool want_plan) {
  if (mu.dim() != 1) throw InvalidArgument("wasserstein2: exact_1d requires d = 1");
  check_same_shape(mu, nu);
  const std::size_t n = mu.size();
  std::vector<double> a(mu.points().begin(), mu.points().end());
  std::vector<double> b(nu.points().begin(), nu.points().end());
  W2Result r;
  if (want_plan) {
    const auto ia = argsort_1d(a), ib = argsort_1d(b);
    TransportPlan plan;
    plan.assignment.resize(n);
    for (std::size_t k = 0; k < n; ++k) plan.assignment[ia[k]] = ib[k];
    plan.cost = plan_cost(mu, nu, plan.assignment);
    r.plan = std::move(plan);
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  r.distance_squared = kernels::sq_diff_sum(a, b) / static_cast<double>(n);
  return r;
}

W2Result exact_assignment(const MeasureView& mu, const MeasureView& nu, std::size_t cap) {
  check_same_shape(mu, nu);
  const std::size_t n = mu.size();
  if (n > cap)
    throw InvalidArgument("wasserstein2: exact_assignment capped at n <= " + std::to_string(cap) +
                          "; choose sliced or subsample");
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    kernels::squared_distances(mu.point(i), nu.points(), std::span<double>(cost).subspan(i * n, n));
  TransportPlan plan;
  plan.assignment = solve_assignment(cost, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i * n + plan.assignment[i]];
  plan.cost = total / static_cast<double>(n);
  W2Result r;
  r.distance_squared = plan.cost;
  r.plan = std::move(plan);
  return r;
}

W2Result sliced(const MeasureView& mu, const MeasureView& nu, std::size_t slices, std::uint64_t seed) {
  check_same_shape(mu, nu);
  if (slices == 0) throw InvalidArgument("wasserstein2: sliced needs at least one direction");
  const std::size_t d = mu.dim(), n = mu.size();
  std::vector<double> dir(d), pa(n), pb(n), zero{0.0};
  double acc = 0.0;
  for (std::size_t s = 0; s < slices; ++s) {
    double norm = 0.0;
    do {
      standard_normals({seed, StreamRole::Auxiliary, 0, s, 0}, dir);
      norm = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
    } while (norm == 0.0);
    for (double& v : dir) v /= norm;
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = std::inner_product(dir.begin(), dir.end(), mu.point(i).begin(), 0.0);
      pb[i] = std::inner_product(dir.begin(), dir.end(), nu.point(i).begin(), 0.0);
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    acc += kernels::sq_diff_sum(pa, pb) / static_cast<double>(n);
  }
  W2Result r;
  r.distance_squared = acc / static_cast<double>(slices);
  r.estimate = true;
  return r;
}

}  // namespace

W2Result wasserstein2(const MeasureView& mu, const MeasureView& nu, const W2Options& options) {
  switch (options.method) {
    case W2Method::Exact1d:
      return exact_1d(mu, nu, options.want_plan);
    case W2Method::ExactAssignment:
      return exact_assignment(mu, nu, options.assignment_cap);
    case W2Method::Sliced:
      return sliced(mu, nu, options.slices, options.seed);
  }
  throw InvalidArgument("wasserstein2: unknown method");
}

double w2_squared(const MeasureView& mu, const MeasureView& nu, std::size_t assignment_cap) {
  W2Options o;
  o.method = mu.dim() == 1 ? W2Method::Exact1d : W2Method::ExactAssignment;
  o.assignment_cap = assignment_cap;
  return wasserstein2(mu, nu, o).distance_squared;
}

double plan_cost(const MeasureView& mu, const MeasureView& nu,
                 std::span<const std::size_t> assignment) {
  check_same_shape(mu, nu);
  const std::size_t n = mu.size(), d = mu.dim();
  if (assignment.size() != n) throw InvalidArgument("plan_cost: assignment size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = mu.point(i), y = nu.point(assignment[i]);
    double c = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = x[k] - y[k];
      c += diff * diff;
    }
    total += c;
  }
  return total / static_cast<double>(n);
}

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw InvalidArgument("solve_assignment: cost must be n x n");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials u (rows), v (columns); col_of_row via p (column -> row).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      const double* row = cost.data() + (i0 - 1) * n;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

EmpiricalMeasure read_cloud_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("cloud csv: empty input");
  const auto header = csv::split(line);
  if (header.size() != 2 || header[0] != "dim")
    throw InvalidArgument("cloud csv: first line must be 'dim,<d>'");
  const double dd = csv::parse_double(header[1]);
  if (!(dd >= 1.0) || dd != std::floor(dd)) throw InvalidArgument("cloud csv: bad dimension");
  const auto d = static_cast<std::size_t>(dd);
  std::vector<double> flat;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = csv::split(line);
    if (fields.size() != d)
      throw InvalidArgument("cloud csv: row " + std::to_string(row) + " has wrong length");
    for (const auto& f : fields) flat.push_back(csv::parse_double(f));
  }
  return EmpiricalMeasure(std::move(flat), d);
}

EmpiricalMeasure read_cloud_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open cloud file: " + path);
  return read_cloud_csv(in);
}

void write_cloud_csv(std::ostream& out, const MeasureView& mu) {
  out << "dim," << mu.dim() << '\n';
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto x = mu.point(i);
    for (std::size_t k = 0; k < x.size(); ++k) out << (k ? "," : "") << csv::num(x[k]);
    out << '\n';
  }
}

void write_plan_csv(std::ostream& out, const MeasureView& mu, const MeasureView& nu,
                    const TransportPlan& plan) {
  out << "i,j,cost_ij\n";
  for (std::size_t i = 0; i < plan.assignment.size(); ++i) {
    const std::size_t j = plan.assignment[i];
    const auto x = mu.point(i), y = nu.point(j);
    double c = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) c += (x[k] - y[k]) * (x[k] - y[k]);
    out << i << ',' << j << ',' << csv::num(c) << '\n';
  }
}

}  // namespace mvjump
