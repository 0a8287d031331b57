#pragma once

#include "scnn/data.hpp"

namespace scnn {

/// Gaussian kernel regression over observed pixels.
struct NWConfig {
  double bandwidth = 2.0;
  /// Support radius in pixels; 0 selects 3 * bandwidth.
  double radius = 0.0;

  double effective_radius() const { return radius > 0.0 ? radius : 3.0 * bandwidth; }
  void validate() const;
};

struct PoolConfig {
  int radius = 2;

  void validate() const;
};

/// out(u) = sum_i K(u - p_i) d_i / sum_i K(u - p_i) over observed p_i with
/// |u - p_i| <= r, K(v) = exp(-|v|^2 / (2 h^2)). Pixels with no observation
/// inside the support stay unobserved.
DepthMap nadaraya_watson(const DepthMap& d, const NWConfig& cfg);

/// Fills every unobserved pixel with the nearest-to-sensor (smallest) depth
/// observed in its (2r+1)^2 window; observed pixels pass through unchanged.
DepthMap closest_depth_pool(const DepthMap& d, const PoolConfig& cfg);

}  // namespace scnn
