#include "mvjump/kernels.hpp"

namespace mvjump::kernels {
namespace {

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sum_squares_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double strided_sum_scalar(const double* x, std::size_t n, std::size_t stride) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i * stride];
  return acc;
}

double sq_diff_sum_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void squared_distances_scalar(const double* point, const double* cloud, std::size_t n,
                              std::size_t dim, double* out) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* y = cloud + j * dim;
    double acc = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = point[k] - y[k];
      acc += d * d;
    }
    out[j] = acc;
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::Scalar,        sum_scalar,         sum_squares_scalar,
                                 strided_sum_scalar, sq_diff_sum_scalar, squared_distances_scalar};
  return table;
}

}  // namespace mvjump::kernels
