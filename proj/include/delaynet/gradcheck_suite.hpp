#pragma once

#include <iosfwd>

namespace delaynet {

struct GradcheckReport {
  double worst = 0.0;        // worst relative error over smooth-family checks
  double worst_gabor = 0.0;  // worst over checks involving gabor kernels
  double seconds = 0.0;
  bool pass = false;  // worst < 1e-4 and worst_gabor < 1e-3
};

// Finite-difference sweep over every kernel family in both bank modes, the
// batch-norm / aggregator / temporal layers, and the assembled network at 20
// seeded input points. Prints one line per check to out.
GradcheckReport run_gradcheck_suite(std::ostream& out);

}  // namespace delaynet
