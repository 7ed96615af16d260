#pragma once

// Independent reference values used by the unit and acceptance tests.

#include <array>
#include <cmath>
#include <vector>

namespace oracle {

struct MvouParams {
  double a = 0.1, beta = 0.01, s0sq = 0.005, gamma = 0.01, rho = 0.01;
};

// Moments of the canonical linear model pair, 1-D:
//   m'  = (beta - a) m
//   p'  = -2 a p + 2 beta m^2 + s0^2 + gamma^2 rho
//   mh' = -ah mh + betah m
//   ph' = -2 ah ph + 2 betah mh m + s0h^2 + gammah^2 rhoh
struct Moments {
  double m, p, mh, ph;
};

inline Moments moment_rhs(const MvouParams& b, const MvouParams& h, const Moments& y) {
  return {(b.beta - b.a) * y.m,
          -2.0 * b.a * y.p + 2.0 * b.beta * y.m * y.m + b.s0sq + b.gamma * b.gamma * b.rho,
          -h.a * y.mh + h.beta * y.m,
          -2.0 * h.a * y.ph + 2.0 * h.beta * y.mh * y.m + h.s0sq + h.gamma * h.gamma * h.rho};
}

// Classical RK4 with a fixed tiny step; returns the state at each t in `at`
// (ascending).
inline std::vector<Moments> integrate_moments(const MvouParams& base, const MvouParams& hat, Moments y0,
                                              const std::vector<double>& at, double step = 1e-4) {
  std::vector<Moments> out;
  double t = 0.0;
  Moments y = y0;
  auto axpy = [](const Moments& y, double s, const Moments& k) {
    return Moments{y.m + s * k.m, y.p + s * k.p, y.mh + s * k.mh, y.ph + s * k.ph};
  };
  for (double target : at) {
    while (t < target - 1e-15) {
      const double hstep = std::min(step, target - t);
      const Moments k1 = moment_rhs(base, hat, y);
      const Moments k2 = moment_rhs(base, hat, axpy(y, hstep / 2, k1));
      const Moments k3 = moment_rhs(base, hat, axpy(y, hstep / 2, k2));
      const Moments k4 = moment_rhs(base, hat, axpy(y, hstep, k3));
      y.m += hstep / 6 * (k1.m + 2 * k2.m + 2 * k3.m + k4.m);
      y.p += hstep / 6 * (k1.p + 2 * k2.p + 2 * k3.p + k4.p);
      y.mh += hstep / 6 * (k1.mh + 2 * k2.mh + 2 * k3.mh + k4.mh);
      y.ph += hstep / 6 * (k1.ph + 2 * k2.ph + 2 * k3.ph + k4.ph);
      t += hstep;
    }
    out.push_back(y);
  }
  return out;
}

// Sample mean and its standard error; same for the second moment.
struct SampleStats {
  double mean, mean_se, m2, m2_se;
};

template <class Span>
SampleStats sample_stats(const Span& x) {
  const double n = static_cast<double>(x.size());
  double s = 0, s2 = 0, s4 = 0;
  for (double v : x) {
    s += v;
    s2 += v * v;
    s4 += v * v * v * v;
  }
  const double mean = s / n, m2 = s2 / n, m4 = s4 / n;
  return {mean, std::sqrt(std::max(0.0, m2 - mean * mean) / n), m2, std::sqrt(std::max(0.0, m4 - m2 * m2) / n)};
}

}  // namespace oracle
