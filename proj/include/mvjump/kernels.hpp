#pragma once

// Arithmetic inner loops shared by the measure, transport, and particle
// code. Each kernel has a scalar reference implementation and an AVX2
// variant; the variant is chosen once per process.
//
// Elementwise kernels (squared_distances) are bitwise identical across
// variants. Reductions differ only in summation order.

#include <cstddef>
#include <span>
#include <string_view>

namespace mvjump::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  double (*sum)(const double* x, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  double (*strided_sum)(const double* x, std::size_t n, std::size_t stride);
  double (*sq_diff_sum)(const double* a, const double* b, std::size_t n);
  void (*squared_distances)(const double* point, const double* cloud,
                            std::size_t n, std::size_t dim, double* out);
};

const KernelTable& scalar_table();
// Null when the build or the CPU lacks AVX2.
const KernelTable* avx2_table();

// The table in use. Selection honours MVJUMP_SIMD={scalar,avx2,auto}.
const KernelTable& active();
std::string_view isa_name(Isa isa);

inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }
inline double sum_squares(std::span<const double> x) {
  return active().sum_squares(x.data(), x.size());
}
inline double strided_sum(const double* x, std::size_t n, std::size_t stride) {
  return active().strided_sum(x, n, stride);
}
inline double sq_diff_sum(std::span<const double> a, std::span<const double> b) {
  return active().sq_diff_sum(a.data(), b.data(), a.size());
}
inline void squared_distances(std::span<const double> point, std::span<const double> cloud,
                              std::span<double> out) {
  active().squared_distances(point.data(), cloud.data(), out.size(), point.size(), out.data());
}

}  // namespace mvjump::kernels
