#include "mvjump/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "mvjump/csv.hpp"
#include "mvjump/error.hpp"

namespace mvjump {

namespace {

// Fixed-capacity scratch for small dimensions, heap beyond.
class Scratch {
 public:
  explicit Scratch(std::size_t n) : heap_(n > kInline ? n : 0) { size_ = n; }
  std::span<double> span() { return {heap_.empty() ? inline_ : heap_.data(), size_}; }

 private:
  static constexpr std::size_t kInline = 64;
  double inline_[kInline];
  std::vector<double> heap_;
  std::size_t size_;
};

std::vector<double> unit_center(std::size_t dim, double c) {
  std::vector<double> v(dim, 0.0);
  v[0] = c;
  return v;
}

double quintic(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }
double quintic_d1(double u) { return 30.0 * u * u * (1.0 - u) * (1.0 - u); }
double quintic_d2(double u) { return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u); }

}  // namespace

TestFunction::TestFunction(std::string id, std::size_t dim, TestFactor factor, Cutoff cutoff)
    : id_(std::move(id)), dim_(dim), factor_(factor), cutoff_(std::move(cutoff)) {
  if (dim_ == 0) throw InvalidArgument("test function: dimension must be positive");
  const auto check_coord = [&](std::size_t j) {
    if (j >= dim_) throw InvalidArgument("test function " + id_ + ": coordinate out of range");
  };
  check_coord(factor_.coord);
  if (factor_.kind == TestFactor::Kind::Product) check_coord(factor_.coord2);
  if (factor_.kind == TestFactor::Kind::Power && factor_.power < 0)
    throw InvalidArgument("test function " + id_ + ": negative power");
  if (cutoff_.kind != Cutoff::Kind::None) {
    if (cutoff_.center.empty()) cutoff_.center.assign(dim_, 0.0);
    if (cutoff_.center.size() != dim_) throw InvalidArgument("test function " + id_ + ": center dimension");
    if (!(cutoff_.radius > 0.0) || !std::isfinite(cutoff_.radius))
      throw InvalidArgument("test function " + id_ + ": radius must be positive and finite");
    if (cutoff_.kind == Cutoff::Kind::Plateau && !(cutoff_.inner >= 0.0 && cutoff_.inner < cutoff_.radius))
      throw InvalidArgument("test function " + id_ + ": need 0 <= inner < radius");
  }
}

TestFunction TestFunction::one(std::size_t dim) { return TestFunction("one", dim, {}, {}); }

TestFunction TestFunction::bump(std::size_t dim, std::vector<double> center, double radius) {
  Cutoff c{Cutoff::Kind::Bump, std::move(center), 0.0, radius};
  std::string id = "bump";
  return TestFunction(id, dim, {}, std::move(c));
}

TestFunction TestFunction::plateau(std::size_t dim, TestFactor factor, std::vector<double> center, double inner,
                                   double radius) {
  return TestFunction("plateau", dim, factor, Cutoff{Cutoff::Kind::Plateau, std::move(center), inner, radius});
}

double TestFunction::support_radius() const {
  if (cutoff_.kind == Cutoff::Kind::None) return std::numeric_limits<double>::infinity();
  double c2 = 0.0;
  for (double c : cutoff_.center) c2 += c * c;
  return std::sqrt(c2) + cutoff_.radius;
}

bool TestFunction::outside_support(std::span<const double> x) const {
  if (cutoff_.kind == Cutoff::Kind::None) return false;
  double s2 = 0.0;
  for (std::size_t j = 0; j < dim_; ++j) {
    const double z = x[j] - cutoff_.center[j];
    s2 += z * z;
  }
  return s2 >= cutoff_.radius * cutoff_.radius;
}

double TestFunction::eval(std::span<const double> x, std::span<double> grad, std::span<double> hess) const {
  const std::size_t d = dim_;
  const bool want_g = !grad.empty(), want_h = !hess.empty();
  if (want_g) std::fill(grad.begin(), grad.end(), 0.0);
  if (want_h) std::fill(hess.begin(), hess.end(), 0.0);

  // Cutoff: chi, its radial derivatives and the unit direction.
  double chi = 1.0, chi_s = 0.0, chi_ss = 0.0, s = 0.0;
  bool flat = true;  // chi locally constant
  Scratch dir_buf(d);
  auto dir = dir_buf.span();
  if (cutoff_.kind != Cutoff::Kind::None) {
    double s2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dir[j] = x[j] - cutoff_.center[j];
      s2 += dir[j] * dir[j];
    }
    const double r = cutoff_.radius;
    if (s2 >= r * r) return 0.0;
    s = std::sqrt(s2);
    if (cutoff_.kind == Cutoff::Kind::Plateau) {
      if (s > cutoff_.inner) {
        const double len = r - cutoff_.inner;
        const double u = (s - cutoff_.inner) / len;
        chi = 1.0 - quintic(u);
        chi_s = -quintic_d1(u) / len;
        chi_ss = -quintic_d2(u) / (len * len);
        flat = false;
      }
    } else {
      // Bump in q = s^2 / r^2; convert to radial derivatives.
      const double q = s2 / (r * r);
      const double w = 1.0 / (1.0 - q);
      chi = std::exp(1.0 - w);
      if (chi == 0.0) return 0.0;
      const double psi_q = -chi * w * w;
      const double psi_qq = chi * (w * w * w * w - 2.0 * w * w * w);
      // q' = 2s/r^2, q'' = 2/r^2
      chi_s = psi_q * 2.0 * s / (r * r);
      chi_ss = psi_qq * 4.0 * s2 / (r * r * r * r) + psi_q * 2.0 / (r * r);
      flat = false;
    }
    if (!flat) {
      if (s > 0.0) {
        for (std::size_t j = 0; j < d; ++j) dir[j] /= s;
      } else {
        // Bump at its center: gradient 0, Hessian chi'' I (radially symmetric).
        std::fill(dir.begin(), dir.end(), 0.0);
      }
    }
  }

  // Factor P, its gradient and Hessian (sparse: at most two coordinates).
  double p = 1.0;
  const std::size_t j0 = factor_.coord, j1 = factor_.coord2;
  double pj0 = 0.0, pj1 = 0.0;            // dP/dx_j0, dP/dx_j1
  double p00 = 0.0, p01 = 0.0, p11 = 0.0;  // Hessian entries
  switch (factor_.kind) {
    case TestFactor::Kind::One:
      break;
    case TestFactor::Kind::Power: {
      const int k = factor_.power;
      const double v = x[j0];
      p = std::pow(v, k);
      pj0 = k >= 1 ? k * std::pow(v, k - 1) : 0.0;
      p00 = k >= 2 ? k * (k - 1) * std::pow(v, k - 2) : 0.0;
      break;
    }
    case TestFactor::Kind::Cos: {
      const double arg = factor_.freq * x[j0] + factor_.phase;
      p = std::cos(arg);
      pj0 = -factor_.freq * std::sin(arg);
      p00 = -factor_.freq * factor_.freq * p;
      break;
    }
    case TestFactor::Kind::Product:
      p = x[j0] * x[j1];
      if (j0 == j1) {
        pj0 = 2.0 * x[j0];
        p00 = 2.0;
      } else {
        pj0 = x[j1];
        pj1 = x[j0];
        p01 = 1.0;
      }
      break;
  }
  const bool two = factor_.kind == TestFactor::Kind::Product && j0 != j1;

  const double value = p * chi;
  if (!want_g && !want_h) return value;

  if (want_g) {
    grad[j0] += pj0 * chi;
    if (two) grad[j1] += pj1 * chi;
    if (!flat)
      for (std::size_t j = 0; j < d; ++j) grad[j] += p * chi_s * dir[j];
  }
  if (want_h) {
    hess[j0 * d + j0] += p00 * chi;
    if (two) {
      hess[j0 * d + j1] += p01 * chi;
      hess[j1 * d + j0] += p01 * chi;
      hess[j1 * d + j1] += p11 * chi;
    }
    if (!flat) {
      // grad P grad chi^T + grad chi grad P^T
      for (std::size_t j = 0; j < d; ++j) {
        const double gc = chi_s * dir[j];
        hess[j0 * d + j] += pj0 * gc;
        hess[j * d + j0] += pj0 * gc;
        if (two) {
          hess[j1 * d + j] += pj1 * gc;
          hess[j * d + j1] += pj1 * gc;
        }
      }
      // P * Hess chi = P (chi'' r r^T + chi'/s (I - r r^T)); at s = 0 only the bump reaches here.
      const double tang = s > 0.0 ? chi_s / s : chi_ss;
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
          const double rr = dir[a] * dir[b];
          hess[a * d + b] += p * (chi_ss * rr + tang * ((a == b ? 1.0 : 0.0) - rr));
        }
    }
  }
  return value;
}

double TestFunction::value(std::span<const double> x) const { return eval(x, {}, {}); }

std::vector<double> TestFunction::gradient(std::span<const double> x) const {
  std::vector<double> g(dim_);
  eval(x, g, {});
  return g;
}

std::vector<double> TestFunction::hessian(std::span<const double> x) const {
  std::vector<double> h(dim_ * dim_);
  eval(x, {}, h);
  return h;
}

std::vector<TestFunction> default_battery(std::size_t dim) {
  using K = TestFactor::Kind;
  std::vector<TestFunction> out;
  out.emplace_back("bump-0", dim, TestFactor{}, Cutoff{Cutoff::Kind::Bump, unit_center(dim, 0.0), 0.0, 3.0});
  out.emplace_back("bump-1", dim, TestFactor{}, Cutoff{Cutoff::Kind::Bump, unit_center(dim, 1.0), 0.0, 1.5});
  out.emplace_back("bump-m05", dim, TestFactor{}, Cutoff{Cutoff::Kind::Bump, unit_center(dim, -0.5), 0.0, 2.0});
  out.emplace_back("x-plateau", dim, TestFactor{K::Power, 0, 0, 1},
                   Cutoff{Cutoff::Kind::Plateau, unit_center(dim, 0.0), 2.0, 4.0});
  out.emplace_back("x2-plateau", dim, TestFactor{K::Power, 0, 0, 2},
                   Cutoff{Cutoff::Kind::Plateau, unit_center(dim, 0.0), 2.0, 4.0});
  out.emplace_back("x3-plateau", dim, TestFactor{K::Power, 0, 0, 3},
                   Cutoff{Cutoff::Kind::Plateau, unit_center(dim, 0.0), 1.5, 3.0});
  out.emplace_back("cos-bump", dim, TestFactor{K::Cos, 0, 0, 1, 2.0, 0.0},
                   Cutoff{Cutoff::Kind::Bump, unit_center(dim, 0.0), 0.0, 3.0});
  if (dim >= 2)
    out.emplace_back("xy-plateau", dim, TestFactor{K::Product, 0, 1},
                     Cutoff{Cutoff::Kind::Plateau, unit_center(dim, 0.0), 1.5, 3.0});
  else
    out.emplace_back("cos-plateau", dim, TestFactor{K::Cos, 0, 0, 1, 1.5, 0.3},
                     Cutoff{Cutoff::Kind::Plateau, unit_center(dim, 0.0), 1.0, 3.0});
  return out;
}

OuterFunction OuterFunction::constant(std::size_t arity, double c) {
  OuterFunction g;
  g.kind_ = Kind::Constant;
  g.arity_ = arity;
  g.c_ = c;
  return g;
}

OuterFunction OuterFunction::linear(std::vector<double> w, double c) {
  OuterFunction g;
  g.kind_ = Kind::Linear;
  g.arity_ = w.size();
  g.w_ = std::move(w);
  g.c_ = c;
  return g;
}

OuterFunction OuterFunction::quadratic(std::vector<double> w, std::vector<double> q, double c) {
  if (q.size() != w.size() * w.size()) throw InvalidArgument("outer function: quadratic form must be n x n");
  OuterFunction g;
  g.kind_ = Kind::Quadratic;
  g.arity_ = w.size();
  g.w_ = std::move(w);
  g.q_ = std::move(q);
  g.c_ = c;
  return g;
}

OuterFunction OuterFunction::exp(std::vector<double> w) {
  OuterFunction g;
  g.kind_ = Kind::Exp;
  g.arity_ = w.size();
  g.w_ = std::move(w);
  g.c_ = 0.0;
  return g;
}

double OuterFunction::value(std::span<const double> r) const {
  if (kind_ == Kind::Constant) return c_;
  double lin = 0.0;
  for (std::size_t i = 0; i < arity_; ++i) lin += w_[i] * r[i];
  switch (kind_) {
    case Kind::Linear:
      return c_ + lin;
    case Kind::Quadratic: {
      double quad = 0.0;
      for (std::size_t i = 0; i < arity_; ++i)
        for (std::size_t j = 0; j < arity_; ++j) quad += q_[i * arity_ + j] * r[i] * r[j];
      return c_ + lin + 0.5 * quad;
    }
    default:
      return std::exp(lin);
  }
}

std::vector<double> OuterFunction::gradient(std::span<const double> r) const {
  std::vector<double> g(arity_, 0.0);
  switch (kind_) {
    case Kind::Constant:
      break;
    case Kind::Linear:
      g = w_;
      break;
    case Kind::Quadratic:
      for (std::size_t i = 0; i < arity_; ++i) {
        double acc = w_[i];
        for (std::size_t j = 0; j < arity_; ++j) acc += 0.5 * (q_[i * arity_ + j] + q_[j * arity_ + i]) * r[j];
        g[i] = acc;
      }
      break;
    case Kind::Exp: {
      const double e = value(r);
      for (std::size_t i = 0; i < arity_; ++i) g[i] = w_[i] * e;
      break;
    }
  }
  return g;
}

std::vector<double> OuterFunction::hessian(std::span<const double> r) const {
  std::vector<double> h(arity_ * arity_, 0.0);
  if (kind_ == Kind::Quadratic) {
    for (std::size_t i = 0; i < arity_; ++i)
      for (std::size_t j = 0; j < arity_; ++j) h[i * arity_ + j] = 0.5 * (q_[i * arity_ + j] + q_[j * arity_ + i]);
  } else if (kind_ == Kind::Exp) {
    const double e = value(r);
    for (std::size_t i = 0; i < arity_; ++i)
      for (std::size_t j = 0; j < arity_; ++j) h[i * arity_ + j] = w_[i] * w_[j] * e;
  }
  return h;
}

void CylindricalFunction::validate() const {
  if (g.arity() != inner.size())
    throw InvalidArgument("cylindrical function " + id + ": outer arity " + std::to_string(g.arity()) +
                          " but " + std::to_string(inner.size()) + " inner functions");
  for (const auto& f : inner)
    if (f.dim() != phi0.dim()) throw InvalidArgument("cylindrical function " + id + ": dimension mismatch");
}

std::vector<double> CylindricalFunction::inner_integrals(const MeasureView& zeta) const {
  std::vector<double> r(inner.size());
  for (std::size_t i = 0; i < inner.size(); ++i)
    r[i] = integrate(zeta, [&](std::span<const double> z) { return inner[i].value(z); });
  return r;
}

double CylindricalFunction::value(std::span<const double> y, const MeasureView& zeta) const {
  return phi0.value(y) * g.value(inner_integrals(zeta));
}

std::vector<CylindricalFunction> default_cylindrical_battery(std::size_t dim) {
  const auto b = default_battery(dim);
  // b: 0 bump-0, 1 bump-1, 3 x-plateau, 4 x2-plateau, 6 cos-bump
  const TestFunction bump_half("bump-05", dim, TestFactor{},
                               Cutoff{Cutoff::Kind::Bump, unit_center(dim, 0.5), 0.0, 2.5});
  std::vector<CylindricalFunction> out;
  out.push_back({"phi0", b[0], OuterFunction::constant(0, 1.0), {}});
  out.push_back({"zeta-phi", TestFunction::one(dim), OuterFunction::linear({1.0}), {b[3]}});
  out.push_back({"phi0-zeta-phi", bump_half, OuterFunction::linear({1.0}), {b[3]}});
  out.push_back({"phi0-zeta-phi-sq", b[0], OuterFunction::quadratic({0.0}, {2.0}), {b[4]}});
  out.push_back({"phi0-zeta-product", b[6], OuterFunction::quadratic({0.0, 0.0}, {0.0, 1.0, 1.0, 0.0}), {b[1], b[3]}});
  out.push_back({"phi0-exp", b[3], OuterFunction::exp({1.0}), {b[0]}});
  return out;
}

LDerivatives::LDerivatives(const CylindricalFunction& phi, std::span<const double> y, const MeasureView& zeta)
    : inner_(phi.inner), dim_(phi.dim()) {
  phi.validate();
  const auto r = phi.inner_integrals(zeta);
  d_y_.assign(dim_, 0.0);
  d2_y_.assign(dim_ * dim_, 0.0);
  const double p0 = phi.phi0.eval(y, d_y_, d2_y_);
  const double gv = phi.g.value(r);
  for (double& v : d_y_) v *= gv;
  for (double& v : d2_y_) v *= gv;
  weights_ = phi.g.gradient(r);
  for (double& w : weights_) w *= p0;
  second_ = phi.g.hessian(r);
  for (double& w : second_) w *= p0;
}

std::vector<double> LDerivatives::d_zeta(std::span<const double> z) const {
  std::vector<double> out(dim_, 0.0), g(dim_);
  for (std::size_t i = 0; i < inner_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    inner_[i].eval(z, g, {});
    for (std::size_t j = 0; j < dim_; ++j) out[j] += weights_[i] * g[j];
  }
  return out;
}

std::vector<double> LDerivatives::dz_d_zeta(std::span<const double> z) const {
  std::vector<double> out(dim_ * dim_, 0.0), h(dim_ * dim_);
  for (std::size_t i = 0; i < inner_.size(); ++i) {
    if (weights_[i] == 0.0) continue;
    inner_[i].eval(z, {}, h);
    for (std::size_t j = 0; j < h.size(); ++j) out[j] += weights_[i] * h[j];
  }
  return out;
}

std::vector<double> LDerivatives::d2_zeta(std::span<const double> z1, std::span<const double> z2) const {
  const std::size_t n = inner_.size();
  std::vector<std::vector<double>> g1(n, std::vector<double>(dim_)), g2 = g1;
  for (std::size_t i = 0; i < n; ++i) {
    inner_[i].eval(z1, g1[i], {});
    inner_[i].eval(z2, g2[i], {});
  }
  std::vector<double> out(dim_ * dim_, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double w = second_[i * n + k];
      if (w == 0.0) continue;
      for (std::size_t a = 0; a < dim_; ++a)
        for (std::size_t b = 0; b < dim_; ++b) out[a * dim_ + b] += w * g1[i][a] * g2[k][b];
    }
  return out;
}

LDerivatives l_derivatives(const CylindricalFunction& phi, std::span<const double> y, const MeasureView& zeta) {
  return LDerivatives(phi, y, zeta);
}

void PointCoefficients::evaluate(const SdeSystem& sys, double t, std::span<const double> x, const MeasureView& mu) {
  const auto& c = sys.coefficients;
  const std::size_t d = c.dim_state, m = c.dim_noise;
  drift.resize(d);
  c.drift(t, x, mu, drift);
  sigma.resize(d * m);
  c.diffusion(t, x, mu, sigma);
  diffusion.assign(d * d, 0.0);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < m; ++k) acc += sigma[a * m + k] * sigma[b * m + k];
      diffusion[a * d + b] = acc;
    }
  static const std::vector<MarkAtom> kNoMarks;
  const auto& quad = sys.nu.total_mass() > 0.0 ? sys.nu.quadrature() : kNoMarks;
  jumps.resize(quad.size() * d);
  weights.resize(quad.size());
  for (std::size_t k = 0; k < quad.size(); ++k) {
    weights[k] = quad[k].weight;
    c.jump(t, x, mu, quad[k].mark, std::span<double>(jumps).subspan(k * d, d));
  }
}

double apply_generator(const PointCoefficients& c, const TestFunction& phi, std::span<const double> x) {
  const std::size_t d = phi.dim();
  Scratch gbuf(d), hbuf(d * d), ybuf(d);
  auto g = gbuf.span(), h = hbuf.span(), y = ybuf.span();
  const double v = phi.eval(x, g, h);
  double drift = 0.0;
  for (std::size_t j = 0; j < d; ++j) drift += c.drift[j] * g[j];
  double diff = 0.0;
  for (std::size_t j = 0; j < d * d; ++j) diff += c.diffusion[j] * h[j];
  double jump = 0.0;
  for (std::size_t k = 0; k < c.weights.size(); ++k) {
    for (std::size_t j = 0; j < d; ++j) y[j] = x[j] + c.jumps[k * d + j];
    jump += c.weights[k] * (phi.value(y) - v);
  }
  return drift + 0.5 * diff + jump;
}

double apply_generator(const SdeSystem& sys, double t, const MeasureView& mu, const TestFunction& phi,
                       std::span<const double> x) {
  if (phi.dim() != sys.dim() || x.size() != sys.dim()) throw InvalidArgument("apply_generator: dimension mismatch");
  PointCoefficients c;
  c.evaluate(sys, t, x, mu);
  return apply_generator(c, phi, x);
}

namespace {

// Mean generator values plus the empirical integrability functional.
std::vector<double> mean_generator_impl(const SdeSystem& sys, double t, const MeasureView& cloud,
                                        const MeasureView& mu, const std::vector<TestFunction>& phis,
                                        double* integrability) {
  std::vector<double> acc(phis.size(), 0.0);
  PointCoefficients c;
  const std::size_t d = cloud.dim();
  double integ = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto x = cloud.point(i);
    c.evaluate(sys, t, x, mu);
    for (std::size_t p = 0; p < phis.size(); ++p) acc[p] += apply_generator(c, phis[p], x);
    if (integrability) {
      double b2 = 0.0, tr = 0.0, f2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        b2 += c.drift[j] * c.drift[j];
        tr += c.diffusion[j * d + j];
      }
      for (std::size_t k = 0; k < c.weights.size(); ++k)
        for (std::size_t j = 0; j < d; ++j) f2 += c.weights[k] * c.jumps[k * d + j] * c.jumps[k * d + j];
      integ += std::sqrt(b2) + tr + f2;
    }
  }
  const double n = static_cast<double>(cloud.size());
  for (double& a : acc) a /= n;
  if (integrability) *integrability = integ / n;
  return acc;
}

std::vector<double> mean_values(const MeasureView& cloud, const std::vector<TestFunction>& phis) {
  std::vector<double> out(phis.size());
  for (std::size_t p = 0; p < phis.size(); ++p)
    out[p] = integrate(cloud, [&](std::span<const double> x) { return phis[p].value(x); });
  return out;
}

}  // namespace

std::vector<double> mean_generator(const SdeSystem& sys, double t, const MeasureView& cloud, const MeasureView& mu,
                                   const std::vector<TestFunction>& phis) {
  return mean_generator_impl(sys, t, cloud, mu, phis, nullptr);
}

double apply_lifted_measure_part(const SdeSystem& base, double t, const CylindricalFunction& phi,
                                 std::span<const double> y, const MeasureView& zeta, const LiftedOptions& options) {
  const LDerivatives ld(phi, y, zeta);
  const auto& w = ld.inner_weights();
  if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) return 0.0;
  const std::size_t d = phi.dim();
  const GaussLegendre gl = gauss_legendre_unit(options.quadrature_nodes);
  PointCoefficients c;
  std::vector<double> g(d), h(d * d), gz(d), z2(d);
  std::vector<double> acc(phi.inner.size(), 0.0);
  for (std::size_t a = 0; a < zeta.size(); ++a) {
    const auto z = zeta.point(a);
    c.evaluate(base, t, z, zeta);
    for (std::size_t i = 0; i < phi.inner.size(); ++i) {
      const TestFunction& f = phi.inner[i];
      f.eval(z, g, h);
      double drift = 0.0, comp = 0.0, diff = 0.0, interp = 0.0;
      for (std::size_t j = 0; j < d; ++j) drift += c.drift[j] * g[j];
      for (std::size_t j = 0; j < d * d; ++j) diff += c.diffusion[j] * h[j];
      for (std::size_t k = 0; k < c.weights.size(); ++k) {
        const auto fk = std::span<const double>(c.jumps).subspan(k * d, d);
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += fk[j] * g[j];
        comp += c.weights[k] * dot;
        double eta_int = 0.0;
        for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
          for (std::size_t j = 0; j < d; ++j) z2[j] = z[j] + gl.nodes[q] * fk[j];
          f.eval(z2, gz, {});
          double e = 0.0;
          for (std::size_t j = 0; j < d; ++j) e += (gz[j] - g[j]) * fk[j];
          eta_int += gl.weights[q] * e;
        }
        interp += c.weights[k] * eta_int;
      }
      acc[i] += drift + comp + 0.5 * diff + interp;
    }
  }
  double out = 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i) out += w[i] * acc[i];
  return out / static_cast<double>(zeta.size());
}

double apply_lifted_generator(const ModelPair& pair, double t, const CylindricalFunction& phi,
                              std::span<const double> y, const MeasureView& zeta, const LiftedOptions& options) {
  phi.validate();
  if (phi.dim() != pair.base.dim() || y.size() != phi.dim() || zeta.dim() != phi.dim())
    throw InvalidArgument("apply_lifted_generator: dimension mismatch");
  const double l1 = apply_lifted_measure_part(pair.base, t, phi, y, zeta, options);
  const double gv = phi.g.value(phi.inner_integrals(zeta));
  return l1 + gv * apply_generator(pair.hat, t, zeta, phi.phi0, y);
}

bool ResidualTable::pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const ResidualRow& r) { return r.pass; });
}

namespace {

std::vector<std::size_t> checkpoint_indices(const TimeGrid& grid, const std::vector<double>& times) {
  std::vector<std::size_t> out;
  for (double t : times) {
    const auto k = grid.index_of(t);
    if (!k) throw InvalidArgument("residual: time " + csv::num(t) + " is not on the flow grid");
    out.push_back(*k);
  }
  return out;
}

// values[k][p], integrand[k][p] on grid indices 0..K -> rows at the checkpoints.
ResidualTable assemble(const TimeGrid& grid, const std::vector<std::string>& ids,
                       const std::vector<std::vector<double>>& values,
                       const std::vector<std::vector<double>>& integrand, const std::vector<std::size_t>& at,
                       double tolerance) {
  ResidualTable table;
  table.tolerance = tolerance;
  const std::size_t nf = ids.size();
  std::vector<std::vector<double>> residual(values.size(), std::vector<double>(nf, 0.0));
  std::vector<double> integral(nf, 0.0);
  for (std::size_t k = 1; k < values.size(); ++k) {
    const double dt = grid.time(k) - grid.time(k - 1);
    for (std::size_t p = 0; p < nf; ++p) {
      integral[p] += 0.5 * dt * (integrand[k - 1][p] + integrand[k][p]);
      residual[k][p] = (values[k][p] - values[0][p]) - integral[p];
    }
  }
  for (std::size_t p = 0; p < nf; ++p)
    for (std::size_t k : at) {
      const double r = residual[k][p];
      const bool ok = std::abs(r) <= tolerance;
      table.rows.push_back({ids[p], grid.time(k), r, tolerance, ok});
      table.max_abs = std::max(table.max_abs, std::abs(r));
    }
  return table;
}

std::size_t last_index(const std::vector<std::size_t>& at) {
  return at.empty() ? 0 : *std::max_element(at.begin(), at.end());
}

std::vector<std::string> ids_of(const std::vector<TestFunction>& phis) {
  std::vector<std::string> ids;
  for (const auto& p : phis) ids.push_back(p.id());
  return ids;
}

ResidualTable test_function_residual(const SdeSystem& sys, const MeasureFlow& flow, const MeasureSource& coef_measure,
                                     const std::vector<TestFunction>& phis, const std::vector<double>& times,
                                     const ToleranceModel& tol) {
  for (const auto& p : phis)
    if (p.dim() != sys.dim()) throw InvalidArgument("residual: test function " + p.id() + " has wrong dimension");
  const TimeGrid& grid = flow.grid();
  const auto at = checkpoint_indices(grid, times);
  const std::size_t K = last_index(at);
  std::vector<std::vector<double>> values(K + 1), integrand(K + 1);
  std::vector<double> integ(K + 1, 0.0);
  std::vector<std::vector<char>> met(K + 1, std::vector<char>(phis.size(), 0));
  std::vector<MeasureView> measures;
  for (std::size_t k = 0; k <= K; ++k) measures.push_back(coef_measure(k, grid.time(k)));
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k <= K; ++k) {
    const MeasureView cloud = flow.view(k);
    values[k] = mean_values(cloud, phis);
    integrand[k] = mean_generator_impl(sys, grid.time(k), cloud, measures[k], phis, &integ[k]);
    for (std::size_t p = 0; p < phis.size(); ++p)
      for (std::size_t i = 0; i < cloud.size() && !met[k][p]; ++i)
        met[k][p] = !phis[p].outside_support(cloud.point(i));
  }
  ResidualTable table =
      assemble(grid, ids_of(phis), values, integrand, at, tol(flow.particles(), grid.dt()));
  for (std::size_t p = 0; p < phis.size(); ++p) {
    bool any = false;
    for (std::size_t k = 0; k <= K; ++k) any = any || met[k][p];
    if (!any) table.degenerate.push_back(phis[p].id());
  }
  table.integrability = *std::max_element(integ.begin(), integ.end());
  return table;
}

}  // namespace

ResidualTable fpe_residual(const SdeSystem& model, const MeasureFlow& flow, const std::vector<TestFunction>& phis,
                           const std::vector<double>& times, const ToleranceModel& tol) {
  return test_function_residual(model, flow, [&](std::size_t k, double) { return flow.view(k); }, phis, times, tol);
}

ResidualTable frozen_fpe_residual(const SdeSystem& hat, const MeasureFlow& hat_flow, const MeasureFlow& base,
                                  const std::vector<TestFunction>& phis, const std::vector<double>& times,
                                  const ToleranceModel& tol) {
  return test_function_residual(hat, hat_flow, flow_source(base, hat_flow.grid()), phis, times, tol);
}

namespace {

// Shared core of the lifted residual and the measure Ito check. With
// `hat_flow` null, phi0 is taken as 1 and the hat part is dropped.
ResidualTable cylindrical_residual(const SdeSystem& base, const SdeSystem* hat, const MeasureFlow& base_flow,
                                   const MeasureFlow* hat_flow, const std::vector<CylindricalFunction>& phis,
                                   const std::vector<double>& times, const ToleranceModel& tol) {
  std::vector<TestFunction> inner, outer;
  std::vector<std::size_t> offset;
  std::vector<std::string> ids;
  for (const auto& f : phis) {
    f.validate();
    if (f.dim() != base.dim()) throw InvalidArgument("residual: " + f.id + " has wrong dimension");
    offset.push_back(inner.size());
    inner.insert(inner.end(), f.inner.begin(), f.inner.end());
    outer.push_back(f.phi0);
    ids.push_back(f.id);
  }
  const TimeGrid& grid = hat_flow ? hat_flow->grid() : base_flow.grid();
  const MeasureSource mu_at =
      hat_flow ? flow_source(base_flow, grid) : MeasureSource([&](std::size_t k, double) { return base_flow.view(k); });
  const auto at = checkpoint_indices(grid, times);
  const std::size_t K = last_index(at);
  std::vector<MeasureView> measures;
  for (std::size_t k = 0; k <= K; ++k) measures.push_back(mu_at(k, grid.time(k)));
  std::vector<std::vector<double>> values(K + 1), integrand(K + 1);
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k <= K; ++k) {
    const double t = grid.time(k);
    const MeasureView& mu = measures[k];
    const auto r_all = mean_values(mu, inner);
    const auto a_all = mean_generator_impl(base, t, mu, mu, inner, nullptr);
    std::vector<double> m0(phis.size(), 1.0), l2(phis.size(), 0.0);
    if (hat_flow) {
      const MeasureView cloud = hat_flow->view(k);
      m0 = mean_values(cloud, outer);
      l2 = mean_generator_impl(*hat, t, cloud, mu, outer, nullptr);
    }
    values[k].resize(phis.size());
    integrand[k].resize(phis.size());
    for (std::size_t p = 0; p < phis.size(); ++p) {
      const auto& f = phis[p];
      const std::span<const double> r(r_all.data() + offset[p], f.inner.size());
      const double gv = f.g.value(r);
      const auto dg = f.g.gradient(r);
      double s = 0.0;
      for (std::size_t i = 0; i < dg.size(); ++i) s += dg[i] * a_all[offset[p] + i];
      if (hat_flow) {
        values[k][p] = m0[p] * gv;
        integrand[k][p] = m0[p] * s + gv * l2[p];
      } else {
        values[k][p] = gv;
        integrand[k][p] = s;
      }
    }
  }
  const std::size_t n = hat_flow ? std::min(hat_flow->particles(), base_flow.particles()) : base_flow.particles();
  return assemble(grid, ids, values, integrand, at, tol(n, grid.dt()));
}

}  // namespace

ResidualTable lifted_fpe_residual(const ModelPair& pair, const CoupledFlow& coupled,
                                  const std::vector<CylindricalFunction>& phis, const std::vector<double>& times,
                                  const ToleranceModel& tol) {
  return cylindrical_residual(pair.base, &pair.hat, coupled.base, &coupled.hat.flow, phis, times, tol);
}

ResidualTable measure_ito_check(const SdeSystem& model, const MeasureFlow& flow,
                                const std::vector<CylindricalFunction>& fs, const std::vector<double>& times,
                                const ToleranceModel& tol) {
  return cylindrical_residual(model, nullptr, flow, nullptr, fs, times, tol);
}

void write_residual_csv(std::ostream& out, const ResidualTable& table) {
  out << "function_id,t,residual,tolerance,pass\n";
  for (const auto& r : table.rows)
    out << r.function_id << ',' << csv::num(r.t) << ',' << csv::num(r.residual) << ',' << csv::num(r.tolerance)
        << ',' << (r.pass ? 1 : 0) << '\n';
}

}  // namespace mvjump
