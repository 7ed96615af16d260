#pragma once

// Test functions, cylindrical functions on R^d x P2(R^d), their
// L-derivatives, the generators of the base and hat equations, the lifted
// operator on cylindrical functions, and weak Fokker-Planck residuals of
// simulated flows.

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mvjump/measure.hpp"
#include "mvjump/model.hpp"
#include "mvjump/particle.hpp"

namespace mvjump {

// Polynomial-type factor of a test function.
struct TestFactor {
  enum class Kind { One, Power, Cos, Product };
  Kind kind = Kind::One;
  std::size_t coord = 0;   // Power, Cos; first coordinate of Product
  std::size_t coord2 = 0;  // Product
  int power = 1;           // Power
  double freq = 1.0;       // Cos: cos(freq * x[coord] + phase)
  double phase = 0.0;
};

// Smooth radial cutoff around `center`.
//   Plateau: 1 on |x-c| <= inner, 0 beyond radius, quintic smoothstep between (C^2).
//   Bump:    exp(1 - 1/(1 - |x-c|^2/radius^2)) inside the ball (C^infinity).
//   None:    identically 1 (not compactly supported; used for the unit function).
struct Cutoff {
  enum class Kind { None, Plateau, Bump };
  Kind kind = Kind::None;
  std::vector<double> center;
  double inner = 0.0;
  double radius = std::numeric_limits<double>::infinity();
};

// phi(x) = factor(x) * cutoff(x), with analytic gradient and Hessian.
class TestFunction {
 public:
  TestFunction() = default;
  TestFunction(std::string id, std::size_t dim, TestFactor factor, Cutoff cutoff);

  static TestFunction one(std::size_t dim);
  static TestFunction bump(std::size_t dim, std::vector<double> center, double radius);
  static TestFunction plateau(std::size_t dim, TestFactor factor, std::vector<double> center, double inner,
                              double radius);

  const std::string& id() const { return id_; }
  std::size_t dim() const { return dim_; }
  const TestFactor& factor() const { return factor_; }
  const Cutoff& cutoff() const { return cutoff_; }
  // value, gradient and Hessian vanish for |x| >= support_radius().
  double support_radius() const;
  bool outside_support(std::span<const double> x) const;

  double value(std::span<const double> x) const;
  std::vector<double> gradient(std::span<const double> x) const;
  std::vector<double> hessian(std::span<const double> x) const;  // d x d row-major
  // All three at once; grad and hess may be empty to skip them.
  double eval(std::span<const double> x, std::span<double> grad, std::span<double> hess) const;

 private:
  std::string id_;
  std::size_t dim_ = 1;
  TestFactor factor_;
  Cutoff cutoff_;
};

// The default 8-function battery: localized bumps, odd and even
// polynomials under plateau cutoffs and an oscillating bump.
std::vector<TestFunction> default_battery(std::size_t dim);

// Outer function g: R^n -> R with gradient and Hessian.
//   Constant: c.   Linear: c + w.r.   Quadratic: c + w.r + r^T Q r / 2.   Exp: exp(w.r).
class OuterFunction {
 public:
  enum class Kind { Constant, Linear, Quadratic, Exp };
  OuterFunction() = default;
  static OuterFunction constant(std::size_t arity, double c);
  static OuterFunction linear(std::vector<double> w, double c = 0.0);
  static OuterFunction quadratic(std::vector<double> w, std::vector<double> q, double c = 0.0);
  static OuterFunction exp(std::vector<double> w);

  Kind kind() const { return kind_; }
  std::size_t arity() const { return arity_; }
  const std::vector<double>& weights() const { return w_; }
  const std::vector<double>& quadratic_form() const { return q_; }
  double offset() const { return c_; }

  double value(std::span<const double> r) const;
  std::vector<double> gradient(std::span<const double> r) const;
  std::vector<double> hessian(std::span<const double> r) const;  // n x n row-major

 private:
  Kind kind_ = Kind::Constant;
  std::size_t arity_ = 0;
  std::vector<double> w_, q_;
  double c_ = 1.0;
};

// Phi(y, zeta) = phi0(y) * g(zeta(phi_1), ..., zeta(phi_n)).
struct CylindricalFunction {
  std::string id;
  TestFunction phi0;
  OuterFunction g;
  std::vector<TestFunction> inner;

  std::size_t dim() const { return phi0.dim(); }
  // Throws InvalidArgument on arity or dimension mismatch.
  void validate() const;
  // zeta(phi_i) for each inner function.
  std::vector<double> inner_integrals(const MeasureView& zeta) const;
  double value(std::span<const double> y, const MeasureView& zeta) const;
};

// The default 6-function cylindrical battery: phi0 alone, zeta(phi) alone,
// products with linear, squared, bilinear and exponential outer functions.
std::vector<CylindricalFunction> default_cylindrical_battery(std::size_t dim);

// L-derivatives of Phi at (y, zeta). The measure derivatives are functions
// of the spatial point z.
class LDerivatives {
 public:
  LDerivatives(const CylindricalFunction& phi, std::span<const double> y, const MeasureView& zeta);

  std::vector<double> d_zeta(std::span<const double> z) const;                                 // d
  std::vector<double> dz_d_zeta(std::span<const double> z) const;                              // d x d
  std::vector<double> d2_zeta(std::span<const double> z1, std::span<const double> z2) const;  // d x d
  const std::vector<double>& d_y() const { return d_y_; }
  const std::vector<double>& d2_y() const { return d2_y_; }
  // phi0(y) * dg/dr_i, the weight of grad phi_i in d_zeta.
  const std::vector<double>& inner_weights() const { return weights_; }

 private:
  std::vector<TestFunction> inner_;
  std::vector<double> weights_;
  std::vector<double> second_;  // phi0(y) * d2g/dr_i dr_j
  std::vector<double> d_y_, d2_y_;
  std::size_t dim_;
};

LDerivatives l_derivatives(const CylindricalFunction& phi, std::span<const double> y, const MeasureView& zeta);

// Coefficients of one equation at a point, with the jump sizes at each
// quadrature mark of nu.
struct PointCoefficients {
  std::vector<double> drift;      // d
  std::vector<double> diffusion;  // a = sigma sigma^T, d x d
  std::vector<double> jumps;      // K x d
  std::vector<double> weights;    // K
  std::vector<double> sigma;      // d x m scratch
  void evaluate(const SdeSystem& sys, double t, std::span<const double> x, const MeasureView& mu);
};

// L_{t,mu} phi(x) for the given system (base or hat).
double apply_generator(const SdeSystem& sys, double t, const MeasureView& mu, const TestFunction& phi,
                       std::span<const double> x);
double apply_generator(const PointCoefficients& c, const TestFunction& phi, std::span<const double> x);

// (1/N) sum over the atoms x_i of `cloud` of L_{t,mu} phi(x_i), for each phi.
// `mu` is the measure argument of the coefficients.
std::vector<double> mean_generator(const SdeSystem& sys, double t, const MeasureView& cloud, const MeasureView& mu,
                                   const std::vector<TestFunction>& phis);

struct LiftedOptions {
  std::size_t quadrature_nodes = 8;  // Gauss-Legendre nodes for the eta integral
};

// (L^(1) + L^(2)) Phi (y, zeta) with the base system in L^(1) and the hat
// system in L^(2). The jump part of L^(1) is the compensated term plus the
// eta-interpolated increment of d_zeta, integrated by Gauss-Legendre.
double apply_lifted_generator(const ModelPair& pair, double t, const CylindricalFunction& phi,
                              std::span<const double> y, const MeasureView& zeta, const LiftedOptions& options = {});
// The L^(1) part only.
double apply_lifted_measure_part(const SdeSystem& base, double t, const CylindricalFunction& phi,
                                 std::span<const double> y, const MeasureView& zeta,
                                 const LiftedOptions& options = {});

struct ToleranceModel {
  double c_mc = 0.0;
  double c_h = 0.0;
  double operator()(std::size_t n, double h) const {
    return c_mc / std::sqrt(static_cast<double>(n)) + c_h * h;
  }
};

struct ResidualRow {
  std::string function_id;
  double t = 0.0;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

struct ResidualTable {
  std::vector<ResidualRow> rows;
  std::vector<std::string> degenerate;  // functions whose atoms never met their support
  double max_abs = 0.0;
  double tolerance = 0.0;
  // Largest empirical integrability functional seen:
  // zeta(|b| + |sigma|^2 + int |f|^2 dnu) over the checked times.
  double integrability = 0.0;
  bool pass() const;
};

// Weak-form residual R(phi, t) = mu_t(phi) - mu_s(phi) - int_s^t mu_r(L_{r,mu_r} phi) dr
// with s the first flow time, the integral by the trapezoid rule on the
// flow grid. Raw jump mode is assumed. `times` must be flow times.
ResidualTable fpe_residual(const SdeSystem& model, const MeasureFlow& flow, const std::vector<TestFunction>& phis,
                           const std::vector<double>& times, const ToleranceModel& tol);

// Same for the hat system frozen against `base`: the coefficients read the
// base measure at each time of the hat grid.
ResidualTable frozen_fpe_residual(const SdeSystem& hat, const MeasureFlow& hat_flow, const MeasureFlow& base,
                                  const std::vector<TestFunction>& phis, const std::vector<double>& times,
                                  const ToleranceModel& tol);

// Residual of the lifted equation for Lambda_t = law(X-hat_t) x delta_{mu_t}:
// Lambda_t(Phi) = (mean of phi0 over hat particles) * g(mu_t(phi_1), ...).
ResidualTable lifted_fpe_residual(const ModelPair& pair, const CoupledFlow& coupled,
                                  const std::vector<CylindricalFunction>& phis, const std::vector<double>& times,
                                  const ToleranceModel& tol);

// Ito check for F(mu_t) = g(mu_t(phi_1), ...): the y-free lifted residual
// with phi0 = 1 and only the measure part of the operator. phi0 of each F is
// ignored.
ResidualTable measure_ito_check(const SdeSystem& model, const MeasureFlow& flow,
                                const std::vector<CylindricalFunction>& fs, const std::vector<double>& times,
                                const ToleranceModel& tol);

// CSV: header "function_id,t,residual,tolerance,pass".
void write_residual_csv(std::ostream& out, const ResidualTable& table);

}  // namespace mvjump
