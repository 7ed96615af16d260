#include "mvjump/jump_measure.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mvjump/error.hpp"

namespace mvjump {

GaussLegendre gauss_legendre_unit(std::size_t q) {
  if (q == 0) throw InvalidArgument("gauss_legendre_unit: q must be positive");
  GaussLegendre rule;
  rule.nodes.resize(q);
  rule.weights.resize(q);
  if (q == 1) {
    rule.nodes[0] = 0.5;
    rule.weights[0] = 1.0;
    return rule;
  }
  const auto n = static_cast<double>(q);
  for (std::size_t i = 0; i < (q + 1) / 2; ++i) {
    // Newton on P_q from the usual cosine guess; x runs from 1 downwards.
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= q; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 1.0 / ((1.0 - x * x) * dp * dp);  // half of the [-1,1] weight
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.nodes[q - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[i] = w;
    rule.weights[q - 1 - i] = w;
  }
  return rule;
}

JumpMeasure::JumpMeasure(DiscreteMarks marks) : marks_(std::move(marks)) {
  const auto& atoms = std::get<DiscreteMarks>(marks_).atoms;
  double mass = 0.0;
  for (const auto& a : atoms) {
    if (!(a.weight >= 0.0) || !std::isfinite(a.weight) || !std::isfinite(a.mark))
      throw InvalidArgument("JumpMeasure: atom weights must be finite and non-negative");
    mass += a.weight;
    cumulative_.push_back(mass);
  }
  total_mass_ = mass;
  for (const auto& a : atoms)
    if (a.weight > 0.0) quadrature_.push_back(a);
}

JumpMeasure::JumpMeasure(IntervalMarks marks) : marks_(std::move(marks)) {
  const auto& iv = std::get<IntervalMarks>(marks_);
  if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || !(iv.hi > iv.lo))
    throw InvalidArgument("JumpMeasure: interval marks need finite lo < hi");
  if (!iv.density) throw InvalidArgument("JumpMeasure: interval marks need a density");
  const GaussLegendre rule = gauss_legendre_unit(iv.quadrature_nodes);
  const double width = iv.hi - iv.lo;
  double mass = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double u = iv.lo + width * rule.nodes[i];
    const double w = width * rule.weights[i] * iv.density(u);
    if (!(w >= 0.0) || !std::isfinite(w))
      throw InvalidArgument("JumpMeasure: density must be finite and non-negative");
    quadrature_.push_back({u, w});
    mass += w;
  }
  total_mass_ = mass;
}

JumpMeasure JumpMeasure::symmetric_pair(double mass) {
  return JumpMeasure(DiscreteMarks{{{-1.0, 0.5 * mass}, {1.0, 0.5 * mass}}});
}

const std::vector<MarkAtom>& JumpMeasure::quadrature() const {
  if (const auto* iv = std::get_if<IntervalMarks>(&marks_)) {
    if (!std::isfinite(iv->density_bound))
      throw InvalidArgument("JumpMeasure: quadrature requested with unbounded mark density");
  }
  return quadrature_;
}

JumpMark JumpMeasure::sample(double u1, double u2, const std::function<double()>& more) const {
  if (const auto* d = std::get_if<DiscreteMarks>(&marks_)) {
    if (d->atoms.empty() || total_mass_ <= 0.0)
      throw InvalidArgument("JumpMeasure: cannot sample from the zero measure");
    const double target = u1 * total_mass_;
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                           d->atoms.size() - 1);
    return d->atoms[idx].mark;
  }
  const auto& iv = std::get<IntervalMarks>(marks_);
  if (!std::isfinite(iv.density_bound) || iv.density_bound <= 0.0)
    throw InvalidArgument("JumpMeasure: rejection sampling needs a finite density bound");
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double u = iv.lo + (iv.hi - iv.lo) * u1;
    if (u2 * iv.density_bound <= iv.density(u)) return u;
    u1 = more();
    u2 = more();
  }
  throw NumericalError("JumpMeasure: rejection sampler failed to accept");
}

}  // namespace mvjump
