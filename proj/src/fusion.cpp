#include "scnn/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace scnn {

void FusionConfig::validate() const {
  if (n_scans < 1) throw ConfigError("n_scans must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
}

DepthMap accumulate(std::span<const DepthMap> scans) {
  if (scans.empty()) throw DegenerateError("accumulate needs at least one scan");
  const Eigen::Index H = scans.front().height(), W = scans.front().width();
  DepthArray out = DepthArray::Zero(H, W);
  for (std::size_t s = 0; s < scans.size(); ++s) {
    if (scans[s].height() != H || scans[s].width() != W) {
      throw ShapeError("accumulate: scan " + std::to_string(s) + " has a different size");
    }
    const DepthArray& d = scans[s].depth();
    out = (d > 0.0 && (out == 0.0 || d < out)).select(d, out);
  }
  return DepthMap(std::move(out));
}

DepthMap clean(const DepthMap& accumulated, const DepthMap& reference, const FusionConfig& cfg) {
  cfg.validate();
  if (accumulated.height() != reference.height() || accumulated.width() != reference.width()) {
    throw ShapeError("clean: accumulated and reference maps differ in size");
  }
  const DepthArray& acc = accumulated.depth();
  const DepthArray& ref = reference.depth();
  // DepthMap already rejects negative depths, so an observed reference is > 0.
  const auto consistent = (acc - ref).abs() < cfg.tau * ref;
  DepthArray out = (acc > 0.0 && (ref == 0.0 || consistent)).select(acc, 0.0);
  return DepthMap(std::move(out));
}

FusionResult fuse_pipeline(std::span<const DepthMap> scans, const DepthMap& reference,
                           const DepthMap& truth, const FusionConfig& cfg,
                           std::optional<double> focal_baseline) {
  DepthMap acc = accumulate(scans);
  DepthMap cleaned = clean(acc, reference, cfg);

  const Unit unit = focal_baseline ? Unit::DisparityPx : Unit::Meters;
  const auto to_unit = [&](const DepthMap& d) {
    return focal_baseline ? depth_to_disparity(d, *focal_baseline) : d;
  };
  // Each map is scored on its own points only.
  const auto score = [&](const DepthMap& m) {
    const Mask mask = m.mask();
    const DepthMap gt((m.depth() > 0.0).select(truth.depth(), 0.0));
    return evaluate(to_unit(m), to_unit(gt), unit, &mask);
  };
  MetricsReport raw = score(scans.front());
  MetricsReport acc_report = score(acc);
  MetricsReport cleaned_report = score(cleaned);
  return {std::move(acc), std::move(cleaned), raw, acc_report, cleaned_report};
}

FusionScenario make_fusion_scenario(const FusionScenarioConfig& cfg) {
  if (cfg.n_scans < 1) throw ConfigError("n_scans must be >= 1");
  if (!(cfg.scan_keep > 0.0 && cfg.scan_keep <= 1.0)) throw ConfigError("scan_keep must lie in (0, 1]");
  SceneConfig scene = cfg.scene;
  scene.seed = derive_seed(cfg.seed, 0);
  FusionScenario out;
  out.truth = generate_scene(scene);
  const DepthArray& truth = out.truth.depth();
  const Eigen::Index H = truth.rows(), W = truth.cols();

  std::mt19937_64 rng(derive_seed(cfg.seed, 1));
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto uniform_int = [&](Eigen::Index lo, Eigen::Index hi) {
    return std::uniform_int_distribution<Eigen::Index>(lo, std::max(lo, hi))(rng);
  };
  const double min_error = 2.0 * cfg.tau;

  for (int s = 0; s < cfg.n_scans; ++s) {
    DepthArray scan = DepthArray::Zero(H, W);
    for (Eigen::Index y = 0; y < H; ++y)
      for (Eigen::Index x = 0; x < W; ++x)
        if (uniform(0.0, 1.0) < cfg.scan_keep) {
          scan(y, x) = truth(y, x) * (1.0 + uniform(-cfg.inlier_noise, cfg.inlier_noise));
        }

    // Later scans see objects that have since moved: a displaced copy of a
    // truth region overwrites the readings it covers.
    if (s >= cfg.n_scans / 2) {
      for (int g = 0; g < cfg.ghosts; ++g) {
        const Eigen::Index bw = uniform_int(std::max<Eigen::Index>(1, W / 6), std::max<Eigen::Index>(1, W / 4));
        const Eigen::Index bh = uniform_int(std::max<Eigen::Index>(1, H / 6), std::max<Eigen::Index>(1, H / 4));
        const Eigen::Index sx = uniform_int(0, W - bw), sy = uniform_int(H / 3, H - bh);
        const Eigen::Index dx = uniform_int(4, 10) * (uniform(0.0, 1.0) < 0.5 ? -1 : 1);
        for (Eigen::Index y = sy; y < sy + bh; ++y)
          for (Eigen::Index x = sx; x < sx + bw; ++x) {
            const Eigen::Index tx = x + dx;
            if (tx < 0 || tx >= W || scan(y, tx) == 0.0) continue;
            const double ghost = truth(y, x);
            if (std::abs(ghost - truth(y, tx)) >= min_error * truth(y, tx)) scan(y, tx) = ghost;
          }
      }
    }

    for (int o = 0; o < cfg.point_outliers; ++o) {
      const Eigen::Index y = uniform_int(0, H - 1), x = uniform_int(0, W - 1);
      const double factor = uniform(0.0, 1.0) < 0.5 ? 0.5 : 2.0;
      scan(y, x) = truth(y, x) * factor;
    }
    out.scans.emplace_back(std::move(scan));
  }

  DepthArray ref = truth;
  for (Eigen::Index y = 0; y < H; ++y)
    for (Eigen::Index x = 0; x < W; ++x)
      ref(y, x) *= 1.0 + uniform(-cfg.reference_noise, cfg.reference_noise);
  out.reference = DepthMap(std::move(ref));
  return out;
}

}  // namespace scnn
