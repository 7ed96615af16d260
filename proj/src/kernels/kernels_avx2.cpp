#include "mvjump/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define MVJUMP_HAVE_X86 1
#include <immintrin.h>
#else
#define MVJUMP_HAVE_X86 0
#endif

namespace mvjump::kernels {

#if MVJUMP_HAVE_X86
namespace {

#define MVJUMP_AVX2 __attribute__((target("avx2")))

MVJUMP_AVX2 inline double hsum(__m256d v) {
  // Lane order is fixed: (l0 + l2) + (l1 + l3).
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  const __m128d swapped = _mm_unpackhi_pd(pair, pair);
  return _mm_cvtsd_f64(_mm_add_sd(pair, swapped));
}

MVJUMP_AVX2 double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i];
  return hsum(acc) + tail;
}

MVJUMP_AVX2 double sum_squares_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(v, v));
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i] * x[i];
  return hsum(acc) + tail;
}

MVJUMP_AVX2 double strided_sum_avx2(const double* x, std::size_t n, std::size_t stride) {
  if (stride == 1) return sum_avx2(x, n);
  const auto s = static_cast<long long>(stride);
  const __m256i idx = _mm256_set_epi64x(3 * s, 2 * s, s, 0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_i64gather_pd(x + i * stride, idx, 8));
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i * stride];
  return hsum(acc) + tail;
}

MVJUMP_AVX2 double sq_diff_sum_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double tail = 0.0;
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    tail += d * d;
  }
  return hsum(acc) + tail;
}

MVJUMP_AVX2 void squared_distances_avx2(const double* point, const double* cloud, std::size_t n,
                                        std::size_t dim, double* out) {
  const auto s = static_cast<long long>(dim);
  const __m256i idx = _mm256_set_epi64x(3 * s, 2 * s, s, 0);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const double* base = cloud + j * dim;
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t k = 0; k < dim; ++k) {
      const __m256d y = dim == 1 ? _mm256_loadu_pd(base) : _mm256_i64gather_pd(base + k, idx, 8);
      const __m256d d = _mm256_sub_pd(_mm256_set1_pd(point[k]), y);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
    }
    _mm256_storeu_pd(out + j, acc);
  }
  for (; j < n; ++j) {
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

const KernelTable* avx2_table() {
  static const bool supported = __builtin_cpu_supports("avx2");
  static const KernelTable table{Isa::Avx2,        sum_avx2,         sum_squares_avx2,
                                 strided_sum_avx2, sq_diff_sum_avx2, squared_distances_avx2};
  return supported ? &table : nullptr;
}

#else

const KernelTable* avx2_table() { return nullptr; }

#endif

}  // namespace mvjump::kernels
