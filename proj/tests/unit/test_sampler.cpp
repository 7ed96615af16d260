#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mvjump/error.hpp"
#include "mvjump/jump_measure.hpp"
#include "mvjump/philox.hpp"
#include "mvjump/sampler.hpp"

using namespace mvjump;

TEST_CASE("philox known answers") {
  // Reference vectors distributed with Random123.
  constexpr auto z = philox4x32_10({0, 0, 0, 0}, {0, 0});
  CHECK(z == PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  constexpr auto f = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                   {0xffffffffu, 0xffffffffu});
  CHECK(f == PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  const auto pi = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                {0xa4093822u, 0x299f31d0u});
  CHECK(pi == PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("gaussian_increment is deterministic in its key") {
  const NoiseStreamKey key{42, StreamRole::BaseBrownian, 7, 3, 0};
  CHECK(gaussian_increment(key, 0.5, 5) == gaussian_increment(key, 0.5, 5));
  NoiseStreamKey other = key;
  other.particle = 8;
  CHECK(gaussian_increment(key, 0.5, 5) != gaussian_increment(other, 0.5, 5));
  CHECK_THROWS_AS(gaussian_increment(key, 0.0, 1), InvalidArgument);
  CHECK_THROWS_AS(gaussian_increment(key, -1.0, 1), InvalidArgument);
}

TEST_CASE("gaussian_increment moments") {
  const std::size_t n = 1000000;
  double s = 0.0, s2 = 0.0, s4 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = gaussian_increment({1, StreamRole::BaseBrownian, 0, i, 0}, 1.0, 1)[0];
    s += z;
    s2 += z * z;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
  CHECK(std::abs(var - 1.0) < 0.01);
  s = s2 = 0.0;
  const std::size_t m = 200000;
  for (std::size_t i = 0; i < m; ++i) {
    const double z = gaussian_increment({2, StreamRole::HatBrownian, 0, i, 0}, 4.0, 1)[0];
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  const double v4 = s2 / m;
  // SE of the sample second moment for N(0,4) is sqrt(2)*4/sqrt(m).
  CHECK(std::abs(v4 - 4.0) < 4.0 * std::sqrt(2.0) * 4.0 / std::sqrt(double(m)));
  (void)s4;
}

TEST_CASE("jump events: empty measure and horizon") {
  const NoiseStreamKey key{3, StreamRole::BaseJumps, 0, 0, 0};
  CHECK(sample_jump_events(key, JumpMeasure::none(), 10.0).empty());
  CHECK(sample_jump_events(key, JumpMeasure::symmetric_pair(1.0), 0.0).empty());
  const auto ev = sample_jump_events(key, JumpMeasure::symmetric_pair(5.0), 3.0);
  for (std::size_t i = 1; i < ev.size(); ++i) CHECK(ev[i].time > ev[i - 1].time);
  for (const auto& e : ev) CHECK((e.mark == -1.0 || e.mark == 1.0));
}

TEST_CASE("jump event counts are Poisson with mean rate*T") {
  const JumpMeasure nu = JumpMeasure::symmetric_pair(2.0);
  const std::size_t reps = 10000;
  double total = 0.0;
  for (std::uint32_t r = 0; r < reps; ++r)
    total += double(sample_jump_events({11, StreamRole::BaseJumps, r, 0, 0}, nu, 5.0).size());
  CHECK(std::abs(total / reps - 10.0) < 4.0 * std::sqrt(10.0) / 100.0);
}

TEST_CASE("symmetric marks average to zero") {
  const JumpMeasure nu = JumpMeasure::symmetric_pair(1.0);
  double s = 0.0;
  std::size_t count = 0;
  for (std::uint32_t r = 0; count < 100000; ++r)
    for (const auto& e : sample_jump_events({5, StreamRole::HatJumps, r, 0, 0}, nu, 50.0)) {
      s += e.mark;
      ++count;
    }
  CHECK(std::abs(s / double(count)) < 4.0 / std::sqrt(double(count)));
}

TEST_CASE("brownian and jump drivers are uncorrelated") {
  const JumpMeasure nu = JumpMeasure::symmetric_pair(3.0);
  const std::size_t reps = 10000;
  std::vector<double> a(reps), b(reps);
  for (std::uint32_t r = 0; r < reps; ++r) {
    a[r] = gaussian_increment({9, StreamRole::BaseBrownian, r, 0, 0}, 1.0, 1)[0];
    b[r] = double(sample_jump_events({9, StreamRole::BaseJumps, r, 0, 0}, nu, 1.0).size());
  }
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / reps;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / reps;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < reps; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  CHECK(std::abs(sab / std::sqrt(saa * sbb)) < 4.0 / std::sqrt(double(reps)));
}

TEST_CASE("counts on disjoint intervals are independent") {
  // 2x2 contingency of (count in [0,1) > median, count in [1,2) > median).
  const JumpMeasure nu = JumpMeasure::symmetric_pair(2.0);
  double tab[2][2] = {{0, 0}, {0, 0}};
  const std::size_t reps = 20000;
  for (std::uint32_t r = 0; r < reps; ++r) {
    int c1 = 0, c2 = 0;
    for (const auto& e : sample_jump_events({21, StreamRole::BaseJumps, r, 0, 0}, nu, 2.0))
      (e.time < 1.0 ? c1 : c2)++;
    tab[c1 >= 2][c2 >= 2] += 1.0;
  }
  double chi2 = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double row = tab[i][0] + tab[i][1], col = tab[0][j] + tab[1][j];
      const double expect = row * col / reps;
      chi2 += (tab[i][j] - expect) * (tab[i][j] - expect) / expect;
    }
  CHECK(chi2 < 10.83);  // 1 dof, p = 0.001
}

TEST_CASE("interval marks sample within range and integrate the density") {
  IntervalMarks iv;
  iv.lo = 0.0;
  iv.hi = 2.0;
  iv.density = [](double u) { return 0.5 * u; };
  iv.density_bound = 1.0;
  const JumpMeasure nu(iv);
  CHECK(nu.total_mass() == doctest::Approx(1.0).epsilon(1e-14));
  double s = 0;
  std::size_t count = 0;
  for (std::uint32_t r = 0; r < 2000; ++r)
    for (const auto& e : sample_jump_events({4, StreamRole::BaseJumps, r, 0, 0}, nu, 10.0)) {
      CHECK(e.mark >= 0.0);
      CHECK(e.mark <= 2.0);
      s += e.mark;
      ++count;
    }
  // Mean of density u/2 on [0,2] is 4/3, variance 2/9.
  CHECK(std::abs(s / count - 4.0 / 3.0) < 4.0 * std::sqrt(2.0 / 9.0 / count));
  IntervalMarks unbounded = iv;
  unbounded.density_bound = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(JumpMeasure(unbounded).quadrature(), InvalidArgument);
}

TEST_CASE("gauss-legendre on [0,1] integrates polynomials of degree 2q-1") {
  for (std::size_t q : {1u, 2u, 3u, 5u, 8u, 12u}) {
    const auto rule = gauss_legendre_unit(q);
    for (std::size_t k = 0; k <= 2 * q - 1; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < q; ++i) acc += rule.weights[i] * std::pow(rule.nodes[i], double(k));
      CHECK(acc == doctest::Approx(1.0 / double(k + 1)).epsilon(1e-13));
    }
  }
}

TEST_CASE("stream roles round-trip by name") {
  for (auto r : {StreamRole::BaseBrownian, StreamRole::BaseJumps, StreamRole::HatBrownian,
                 StreamRole::HatJumps, StreamRole::InitialCondition, StreamRole::Auxiliary})
    CHECK(role_from_name(role_name(r)) == r);
  CHECK_THROWS_AS(role_from_name("bogus"), InvalidArgument);
}
