#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "mvjump/error.hpp"
#include "mvjump/measure.hpp"
#include "mvjump/sampler.hpp"

using namespace mvjump;

namespace {

EmpiricalMeasure random_cloud(std::size_t n, std::size_t d, std::uint64_t seed, std::uint32_t id) {
  std::vector<double> pts(n * d);
  standard_normals({seed, StreamRole::Auxiliary, id, 0, 0}, pts);
  return EmpiricalMeasure(std::move(pts), d);
}

// Exhaustive minimum over all pairings.
double brute_force_w2(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
      for (std::size_t k = 0; k < a.dim(); ++k) {
        const double diff = a.point(i)[k] - b.point(perm[i])[k];
        c += diff * diff;
      }
    best = std::min(best, c / double(perm.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

W2Options with(W2Method m) {
  W2Options o;
  o.method = m;
  return o;
}

}  // namespace

TEST_CASE("second moments") {
  const std::vector<double> a{3.0, 4.0};
  CHECK(second_moment(EmpiricalMeasure::dirac(a)) == 25.0);
  CHECK(second_moment(EmpiricalMeasure({1.0, -1.0}, 1)) == 1.0);
  CHECK(second_moment(EmpiricalMeasure({0.0, 1.0, 2.0}, 1)) == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("moments") {
  auto m = moments(EmpiricalMeasure({1.0, -1.0}, 1));
  CHECK(m.mean[0] == 0.0);
  CHECK(m.raw_second[0] == 1.0);
  m = moments(EmpiricalMeasure::dirac(std::vector<double>{2.0, -3.0}));
  CHECK(m.mean == std::vector<double>{2.0, -3.0});
  CHECK(m.raw_second == std::vector<double>{4.0, -6.0, -6.0, 9.0});
  m = moments(EmpiricalMeasure({0.0, 1.0, 2.0}, 1));
  CHECK(m.mean[0] == 1.0);
  CHECK(m.raw_second[0] == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("empirical measure validation") {
  CHECK_THROWS_AS(EmpiricalMeasure({}, 1), InvalidArgument);
  CHECK_THROWS_AS(EmpiricalMeasure({1.0, 2.0, 3.0}, 2), InvalidArgument);
  CHECK_THROWS_AS(EmpiricalMeasure({1.0, NAN}, 1), InvalidArgument);
  CHECK_THROWS_AS(EmpiricalMeasure({1.0}, 0), InvalidArgument);
}

TEST_CASE("w2 small examples") {
  const std::vector<double> a{1.5, -2.0};
  const auto da = EmpiricalMeasure::dirac(a);
  CHECK(wasserstein2(da, da, with(W2Method::ExactAssignment)).distance_squared == 0.0);
  const EmpiricalMeasure x({0.0, 2.0}, 1), y({1.0, 3.0}, 1);
  CHECK(wasserstein2(x, y, with(W2Method::Exact1d)).distance_squared == 1.0);
  CHECK(wasserstein2(x, y, with(W2Method::ExactAssignment)).distance_squared == 1.0);
  CHECK_THROWS_AS(wasserstein2(x, EmpiricalMeasure({1.0}, 1), with(W2Method::Exact1d)),
                  InvalidArgument);
  CHECK_THROWS_AS(wasserstein2(da, da, with(W2Method::Exact1d)), InvalidArgument);
}

TEST_CASE("assignment matches permutation brute force") {
  for (std::uint32_t trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + trial % 3;
    const auto a = random_cloud(6, d, 100, trial), b = random_cloud(6, d, 200, trial);
    const auto r = wasserstein2(a, b, with(W2Method::ExactAssignment));
    CHECK(r.distance_squared == doctest::Approx(brute_force_w2(a, b)).epsilon(1e-14));
    REQUIRE(r.plan);
    auto sorted = r.plan->assignment;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
    CHECK(plan_cost(a.view(), b.view(), r.plan->assignment) ==
          doctest::Approx(r.distance_squared).epsilon(1e-14));
  }
}

TEST_CASE("w2 properties on 1-d clouds") {
  for (std::uint32_t trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + 13 * trial;
    const auto a = random_cloud(n, 1, 1, trial), b = random_cloud(n, 1, 2, trial),
               c = random_cloud(n, 1, 3, trial);
    const double ab = w2_squared(a, b), ba = w2_squared(b, a);
    CHECK(ab == ba);
    const double ac = w2_squared(a, c), bc = w2_squared(b, c);
    CHECK(std::sqrt(ac) <= std::sqrt(ab) + std::sqrt(bc) + 1e-12);
    const double asg = wasserstein2(a, b, with(W2Method::ExactAssignment)).distance_squared;
    CHECK(std::abs(asg - ab) <= 1e-12 * std::max(1.0, ab));
    // Identity pairing is a coupling, so it can only cost more.
    std::vector<std::size_t> id(n);
    std::iota(id.begin(), id.end(), std::size_t{0});
    CHECK(plan_cost(a.view(), b.view(), id) >= ab);
  }
}

TEST_CASE("w2 translation behaviour") {
  const auto a = random_cloud(40, 2, 7, 0), b = random_cloud(40, 2, 8, 0);
  const double base = w2_squared(a, b);
  auto shift = [](const EmpiricalMeasure& m, double vx, double vy) {
    std::vector<double> p(m.points().begin(), m.points().end());
    for (std::size_t i = 0; i < m.size(); ++i) {
      p[2 * i] += vx;
      p[2 * i + 1] += vy;
    }
    return EmpiricalMeasure(std::move(p), 2);
  };
  CHECK(w2_squared(shift(a, 3.0, -1.0), shift(b, 3.0, -1.0)) == doctest::Approx(base).epsilon(1e-12));
  const std::vector<double> z{0.0, 0.0};
  const auto d0 = EmpiricalMeasure::dirac(z);
  CHECK(w2_squared(d0, shift(d0, 3.0, 4.0)) == doctest::Approx(25.0));
}

TEST_CASE("sliced estimate is flagged and exact for 1-d") {
  const auto a = random_cloud(50, 1, 9, 0), b = random_cloud(50, 1, 10, 0);
  W2Options o = with(W2Method::Sliced);
  o.slices = 8;
  const auto r = wasserstein2(a, b, o);
  CHECK(r.estimate);
  CHECK(r.distance_squared == doctest::Approx(w2_squared(a, b)).epsilon(1e-12));
  const auto a2 = random_cloud(50, 3, 9, 1), b2 = random_cloud(50, 3, 10, 1);
  const auto s2 = wasserstein2(a2, b2, o).distance_squared;
  CHECK(s2 <= w2_squared(a2, b2) + 1e-12);
}

TEST_CASE("assignment cap is enforced") {
  const auto a = random_cloud(10, 2, 1, 0), b = random_cloud(10, 2, 2, 0);
  W2Options o = with(W2Method::ExactAssignment);
  o.assignment_cap = 9;
  CHECK_THROWS_AS(wasserstein2(a, b, o), InvalidArgument);
}

TEST_CASE("cloud csv round trip") {
  const auto a = random_cloud(12, 3, 4, 0);
  std::stringstream ss;
  write_cloud_csv(ss, a.view());
  CHECK(read_cloud_csv(ss) == a);
  std::stringstream bad("dim,2\n1,2\n3\n");
  CHECK_THROWS_AS(read_cloud_csv(bad), InvalidArgument);
  std::stringstream plan;
  const EmpiricalMeasure x({0.0, 2.0}, 1), y({1.0, 3.0}, 1);
  W2Options o = with(W2Method::Exact1d);
  o.want_plan = true;
  write_plan_csv(plan, x.view(), y.view(), *wasserstein2(x, y, o).plan);
  CHECK(plan.str() == "i,j,cost_ij\n0,0,1\n1,1,1\n");
}
