#pragma once

// Finite-activity jump-mark measures nu on a mark set U in R.
//
// Two shapes are supported: a finite list of (mark, weight) atoms, and an
// interval [lo, hi] carrying a bounded density. Integrals against nu go
// through quadrature(), which is exact for atoms and fixed-node
// Gauss-Legendre for densities.

#include <cstddef>
#include <functional>
#include <limits>
#include <variant>
#include <vector>

namespace mvjump {

using JumpMark = double;

struct MarkAtom {
  JumpMark mark;
  double weight;

  bool operator==(const MarkAtom&) const = default;
};

struct DiscreteMarks {
  std::vector<MarkAtom> atoms;
};

struct IntervalMarks {
  double lo = 0.0;
  double hi = 1.0;
  std::function<double(double)> density;
  // Upper bound on the density; used for rejection sampling.
  double density_bound = std::numeric_limits<double>::infinity();
  std::size_t quadrature_nodes = 16;
};

class JumpMeasure {
 public:
  JumpMeasure() = default;  // the zero measure
  explicit JumpMeasure(DiscreteMarks marks);
  explicit JumpMeasure(IntervalMarks marks);

  static JumpMeasure none() { return {}; }
  static JumpMeasure symmetric_pair(double mass);  // {-1, +1}, mass/2 each

  double total_mass() const { return total_mass_; }
  bool is_discrete() const { return std::holds_alternative<DiscreteMarks>(marks_); }
  const std::variant<DiscreteMarks, IntervalMarks>& marks() const { return marks_; }

  // Atoms whose weighted sum integrates against nu. Throws InvalidArgument
  // for an interval with an unbounded or infinite-range density.
  const std::vector<MarkAtom>& quadrature() const;

  // Draw u ~ nu / nu(U) from two independent uniforms. The interval form
  // rejects with fresh uniforms from `more` until acceptance.
  JumpMark sample(double u1, double u2, const std::function<double()>& more) const;

 private:
  std::variant<DiscreteMarks, IntervalMarks> marks_{DiscreteMarks{}};
  double total_mass_ = 0.0;
  std::vector<MarkAtom> quadrature_;
  std::vector<double> cumulative_;  // discrete only
};

// Gauss-Legendre nodes and weights on [0, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussLegendre gauss_legendre_unit(std::size_t q);

}  // namespace mvjump
