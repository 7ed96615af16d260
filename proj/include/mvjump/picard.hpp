#pragma once

// Fixed-point iteration on measure flows: freeze the flow, solve the
// particle equation against it, replace the flow by the solution's
// empirical flow, repeat. All iterates reuse the same initial cloud and
// noise keys, so successive iterates differ only through the measure.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mvjump/model.hpp"
#include "mvjump/particle.hpp"

namespace mvjump {

struct PicardOptions {
  JumpMode jump_mode = JumpMode::Raw;
  // When false only the last two iterates are retained.
  bool keep_iterates = true;
};

struct IterationTrace {
  double window = 0.0;
  std::size_t iterations = 0;          // frozen solves performed
  std::vector<PathEnsemble> iterates;  // iterate 0 is the constant initial cloud
  std::size_t first_kept = 0;          // index of iterates.front()
  // diffs[k] = (1/n) sum_i max over grid |X^{k+1}_i(t) - X^k_i(t)|^2
  std::vector<double> diffs;
  // ratios[k] = diffs[k+1] / diffs[k] (0/0 taken as 0) and its delta-method
  // standard error over particles.
  std::vector<double> ratios;
  std::vector<double> ratio_se;
  bool diverged = false;  // diffs increased three times in a row
  double envelope_rate = 0.0;  // max ratio over k >= 1

  const PathEnsemble& last() const { return iterates.back(); }
};

IterationTrace picard_iterate(const SdeSystem& model, const InitialLaw& xi, std::size_t n_particles,
                              double window_t0, double h, std::size_t n_iters, std::uint64_t seed,
                              const PicardOptions& options = {});

struct WindowProbe {
  double t0 = 0.0;
  std::vector<double> ratios;  // diffs[2] / diffs[1], one per seed
  bool pass = false;
};

struct WindowSearchOptions {
  std::size_t particles = 1024;
  std::size_t seeds = 3;
  double threshold = 0.45;
  double max_window = 10.0;
  std::size_t refinements = 6;
  JumpMode jump_mode = JumpMode::Raw;
};

struct WindowSearch {
  double t0 = 0.0;
  std::vector<WindowProbe> probes;  // in the order tested
};

// Largest tested window whose second-to-first diff ratio stays under the
// threshold on every seed: tries max_window, halves until a window passes,
// then bisects between the passing and failing windows. Windows are
// multiples of h. Throws NumericalError listing the probes when no window
// above h passes.
WindowSearch contraction_window(const SdeSystem& model, const InitialLaw& xi, double h, std::uint64_t seed,
                                const WindowSearchOptions& options = {});

struct PicardDirectReport {
  IterationTrace trace;
  double gap = 0.0;        // max over grid of W2^2(final iterate, direct particle flow)
  bool gap_exact = true;   // false when the identity coupling bounded the gap
  double last_diff = 0.0;
  bool within_tail = false;  // gap <= 2 * last_diff
};

// Runs the iteration and the self-consistent particle system with the same
// seed and compares the two flows.
PicardDirectReport picard_vs_direct(const SdeSystem& model, const InitialLaw& xi, std::size_t n_particles,
                                    double window_t0, double h, std::size_t n_iters, std::uint64_t seed,
                                    const PicardOptions& options = {});

// CSV: header "iteration,diff,ratio"; ratio is empty on the first row.
void write_trace_csv(std::ostream& out, const IterationTrace& trace);

}  // namespace mvjump
