#pragma once

// Finite-difference verification of every analytic gradient in the network.

#include <cstdint>
#include <string>
#include <vector>

#include "spdot/linalg.hpp"

namespace spdot {

struct GradcheckOptions {
  int seeds = 50;
  int min_dim = 3;
  int max_dim = 8;
  double h = 1e-5;  // central difference step
  double tolerance = 1e-5;
  // Smallest eigenvalue gap planted in the test spectra.
  double min_gap = 1e-7;
};

struct GradcheckEntry {
  std::string check;
  std::uint64_t seed = 0;
  int dim = 0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_error = 0.0;
  std::string worst_check;
  bool passed = false;
};

/// ||a - f|| / max(||a||, ||f||, 1e-12)
double gradient_rel_error(const Vector& analytic, const Vector& numeric);

/// Per seed: Bi-Map (weight and input), ReEig and LogEig input gradients
/// on spectra with planted near-degenerate pairs, the chart gradient of
/// 1/2 d_LEM^2, and full-model gradients of the combined CE + MDA^2 + CDA^2
/// objective and of the DeepJDOT objective.
GradcheckReport run_gradcheck(const GradcheckOptions& opts = {});

}  // namespace spdot
