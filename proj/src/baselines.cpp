#include "scnn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace scnn {

void NWConfig::validate() const {
  if (!(bandwidth > 0.0)) throw ConfigError("Nadaraya-Watson bandwidth must be > 0");
  if (!(effective_radius() >= 1.0)) throw ConfigError("Nadaraya-Watson radius must be >= 1");
}

void PoolConfig::validate() const {
  if (radius < 1) throw ConfigError("pooling radius must be >= 1");
}

DepthMap nadaraya_watson(const DepthMap& d, const NWConfig& cfg) {
  cfg.validate();
  if (d.observed_count() == 0) throw DegenerateError("Nadaraya-Watson needs at least one observation");

  struct Tap {
    Eigen::Index dy, dx;
    double weight;
  };
  const double r = cfg.effective_radius();
  const auto reach = static_cast<Eigen::Index>(std::floor(r));
  const double inv2h2 = 1.0 / (2.0 * cfg.bandwidth * cfg.bandwidth);
  std::vector<Tap> taps;
  for (Eigen::Index dy = -reach; dy <= reach; ++dy)
    for (Eigen::Index dx = -reach; dx <= reach; ++dx) {
      const double dist2 = static_cast<double>(dy * dy + dx * dx);
      if (dist2 <= r * r) taps.push_back({dy, dx, std::exp(-dist2 * inv2h2)});
    }

  const Eigen::Index H = d.height(), W = d.width();
  DepthArray out = DepthArray::Zero(H, W);
  for (Eigen::Index y = 0; y < H; ++y)
    for (Eigen::Index x = 0; x < W; ++x) {
      double num = 0.0, den = 0.0;
      for (const Tap& t : taps) {
        const Eigen::Index yy = y + t.dy, xx = x + t.dx;
        if (yy < 0 || yy >= H || xx < 0 || xx >= W || !d.observed(yy, xx)) continue;
        num += t.weight * d(yy, xx);
        den += t.weight;
      }
      if (den > 0.0) out(y, x) = num / den;
    }
  return DepthMap(std::move(out));
}

DepthMap closest_depth_pool(const DepthMap& d, const PoolConfig& cfg) {
  cfg.validate();
  const Eigen::Index H = d.height(), W = d.width(), r = cfg.radius;
  DepthArray out = d.depth();
  for (Eigen::Index y = 0; y < H; ++y)
    for (Eigen::Index x = 0; x < W; ++x) {
      if (d.observed(y, x)) continue;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index yy = std::max<Eigen::Index>(0, y - r); yy <= std::min(H - 1, y + r); ++yy)
        for (Eigen::Index xx = std::max<Eigen::Index>(0, x - r); xx <= std::min(W - 1, x + r); ++xx)
          if (d.observed(yy, xx)) best = std::min(best, d(yy, xx));
      if (std::isfinite(best)) out(y, x) = best;
    }
  return DepthMap(std::move(out));
}

}  // namespace scnn
