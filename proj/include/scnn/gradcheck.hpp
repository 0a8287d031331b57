#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace scnn {

/// Central finite-difference verification of every hand-written backward
/// pass, on random small instances.
struct GradcheckConfig {
  /// Hidden-layer kernels of the composed networks.
  std::vector<int> kernel_sizes{11, 7, 5, 3, 3};
  int channels = 4;
  int size = 12;
  int trials = 20;
  double tolerance = 1e-5;
  double step = 1e-6;
  /// Errors are relative to max(|analytic|, |numeric|, floor).
  double floor = 1e-3;
  double density = 0.3;
  /// Coordinates sampled per parameter tensor of the composed networks.
  int max_coords = 48;
  std::uint64_t seed = 0;
  /// Networks with all parameters zero.
  bool zero_weights = false;
  /// Test hook: perturbs analytic network gradients by a factor 1 + 1e-3.
  bool corrupt = false;
};

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  Eigen::Index checked = 0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;

  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
};

double relative_error(double analytic, double numeric, double floor);

GradcheckReport run_gradcheck(const GradcheckConfig& cfg);

}  // namespace scnn
