#include <cmath>
#include <vector>

#include "doctest.h"
#include "mvjump/kernels.hpp"
#include "mvjump/sampler.hpp"

using namespace mvjump;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n);
  standard_normals({seed, StreamRole::Auxiliary, 0, 0, 0}, v);
  return v;
}

}  // namespace

TEST_CASE("scalar and avx2 kernels agree") {
  const auto* avx = kernels::avx2_table();
  if (!avx) {
    MESSAGE("avx2 unavailable; equivalence test skipped");
    return;
  }
  const auto& sc = kernels::scalar_table();
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 33u, 1000u, 4097u}) {
    const auto a = noise(n, 1 + n), b = noise(n, 1000 + n);
    const double tol = 1e-13 * (1.0 + double(n));
    CHECK(std::abs(sc.sum(a.data(), n) - avx->sum(a.data(), n)) <= tol);
    CHECK(std::abs(sc.sum_squares(a.data(), n) - avx->sum_squares(a.data(), n)) <= tol);
    CHECK(std::abs(sc.sq_diff_sum(a.data(), b.data(), n) - avx->sq_diff_sum(a.data(), b.data(), n)) <=
          tol);
    for (std::size_t stride : {1u, 2u, 3u}) {
      const std::size_t m = n / stride;
      CHECK(std::abs(sc.strided_sum(a.data(), m, stride) - avx->strided_sum(a.data(), m, stride)) <=
            tol);
    }
    for (std::size_t dim : {1u, 2u, 3u, 5u}) {
      const std::size_t pts = n / dim;
      std::vector<double> o1(pts), o2(pts);
      sc.squared_distances(b.data(), a.data(), pts, dim, o1.data());
      avx->squared_distances(b.data(), a.data(), pts, dim, o2.data());
      CHECK(o1 == o2);  // elementwise: bitwise equal
    }
  }
}

TEST_CASE("scalar kernels match naive loops") {
  const auto& sc = kernels::scalar_table();
  const std::vector<double> x{1.0, -2.0, 3.0, 0.5, 4.0, -1.0};
  CHECK(sc.sum(x.data(), x.size()) == doctest::Approx(5.5));
  CHECK(sc.sum_squares(x.data(), x.size()) == doctest::Approx(31.25));
  CHECK(sc.strided_sum(x.data(), 3, 2) == doctest::Approx(8.0));
  CHECK(sc.strided_sum(x.data() + 1, 3, 2) == doctest::Approx(-2.5));
  const std::vector<double> p{1.0, 1.0};
  std::vector<double> out(3);
  sc.squared_distances(p.data(), x.data(), 3, 2, out.data());
  CHECK(out[0] == doctest::Approx(9.0));
  CHECK(out[1] == doctest::Approx(4.25));
  CHECK(out[2] == doctest::Approx(13.0));
}

TEST_CASE("active table reports its isa") {
  const auto name = kernels::isa_name(kernels::active().isa);
  CHECK((name == "scalar" || name == "avx2"));
}
