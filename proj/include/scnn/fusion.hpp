#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "scnn/data.hpp"
#include "scnn/metrics.hpp"

namespace scnn {

struct FusionConfig {
  int n_scans = 11;
  /// Maximum relative deviation |acc - ref| / ref a point may show and survive.
  double tau = 0.05;

  void validate() const;
};

/// Per pixel, the nearest observed depth over all scans.
DepthMap accumulate(std::span<const DepthMap> scans);

/// Keeps an accumulated point if the reference has no value there or if
/// |acc - ref| / ref < tau; everything else becomes unobserved.
DepthMap clean(const DepthMap& accumulated, const DepthMap& reference, const FusionConfig& cfg);

struct FusionResult {
  DepthMap accumulated;
  DepthMap cleaned;
  MetricsReport raw;
  MetricsReport accumulated_metrics;
  MetricsReport cleaned_metrics;
};

/// accumulate -> clean, scoring the first scan, the accumulation and the
/// cleaned map against `truth` on the pixels each of them observes. With a
/// focal_baseline the scores are computed on disparities.
FusionResult fuse_pipeline(std::span<const DepthMap> scans, const DepthMap& reference,
                           const DepthMap& truth, const FusionConfig& cfg,
                           std::optional<double> focal_baseline = std::nullopt);

/// Synthetic acquisition: sparse noisy scans of a scene, some corrupted by
/// ghosts of displaced objects and by isolated gross outliers, plus a dense
/// noisy reference depth.
struct FusionScenarioConfig {
  SceneConfig scene;
  int n_scans = 11;
  double scan_keep = 0.05;
  /// Inlier readings are truth * (1 + u), |u| <= inlier_noise.
  double inlier_noise = 0.02;
  double reference_noise = 0.01;
  int ghosts = 2;
  int point_outliers = 10;
  /// Injected errors are at least 2 * tau relative to the truth.
  double tau = 0.05;
  std::uint64_t seed = 0;
};

struct FusionScenario {
  DepthMap truth;
  std::vector<DepthMap> scans;
  DepthMap reference;
};

FusionScenario make_fusion_scenario(const FusionScenarioConfig& cfg);

}  // namespace scnn
