#include <gtest/gtest.h>

#include <vector>

#include "scnn/fusion.hpp"
#include "test_util.hpp"

namespace scnn {
namespace {

using test::random_sparse_map;
using test::Rng;

TEST(Accumulate, IdentityMinAndDensity) {
  Rng rng(1);
  const DepthMap s = random_sparse_map(10, 10, 0.3, rng);
  EXPECT_EQ(accumulate(std::vector<DepthMap>{s}), s);

  DepthMap a(1, 1), b(1, 1);
  a.set(0, 0, 10.0);
  b.set(0, 0, 12.0);
  EXPECT_EQ(accumulate(std::vector<DepthMap>{b, a})(0, 0), 10.0);

  for (int trial = 0; trial < 10; ++trial) {
    std::vector<DepthMap> scans;
    for (int i = 0; i < 5; ++i) scans.push_back(random_sparse_map(16, 16, 0.1 * (i + 1), rng));
    const DepthMap acc = accumulate(scans);
    for (const auto& sc : scans) EXPECT_GE(acc.density(), sc.density());
  }
  EXPECT_THROW(accumulate(std::vector<DepthMap>{}), DegenerateError);
  EXPECT_THROW(accumulate(std::vector<DepthMap>{DepthMap(2, 2), DepthMap(2, 3)}), ShapeError);
}

TEST(Clean, HandCases) {
  Rng rng(2);
  const DepthMap s = random_sparse_map(8, 8, 0.5, rng);
  EXPECT_EQ(clean(s, s, FusionConfig{}), s);

  DepthMap acc(1, 3), ref(1, 3);
  acc.set(0, 0, 20.0);
  ref.set(0, 0, 10.0);
  acc.set(0, 1, 10.4);
  ref.set(0, 1, 10.0);
  acc.set(0, 2, 50.0);  // reference unobserved
  const DepthMap out = clean(acc, ref, FusionConfig{});
  EXPECT_FALSE(out.observed(0, 0));
  EXPECT_EQ(out(0, 1), 10.4);
  EXPECT_EQ(out(0, 2), 50.0);
  EXPECT_THROW(clean(acc, DepthMap(2, 2), FusionConfig{}), ShapeError);
  EXPECT_THROW(clean(acc, ref, FusionConfig{11, 0.0}), ConfigError);
}

TEST(Clean, SubsetAndMonotoneInTau) {
  Rng rng(3);
  const DepthMap acc = random_sparse_map(20, 20, 0.6, rng, 5.0, 10.0);
  const DepthMap ref = random_sparse_map(20, 20, 0.8, rng, 5.0, 10.0);
  DepthMap previous(20, 20);
  for (double tau : {0.01, 0.05, 0.1, 0.3, 1.0}) {
    const DepthMap out = clean(acc, ref, FusionConfig{11, tau});
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      const double v = out.depth().data()[i];
      if (v > 0.0) {
        EXPECT_EQ(v, acc.depth().data()[i]);
      }
      if (previous.depth().data()[i] > 0.0) {
        EXPECT_GT(v, 0.0);
      }
    }
    previous = out;
  }
}

TEST(Fusion, ScenarioOutliersRemovedInliersKept) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    FusionScenarioConfig cfg;
    cfg.seed = seed;
    const FusionScenario s = make_fusion_scenario(cfg);
    const DepthMap acc = accumulate(s.scans);
    const DepthMap cleaned = clean(acc, s.reference, FusionConfig{cfg.n_scans, cfg.tau});
    Eigen::Index outliers = 0;
    for (Eigen::Index y = 0; y < acc.height(); ++y)
      for (Eigen::Index x = 0; x < acc.width(); ++x) {
        if (!acc.observed(y, x)) continue;
        const double rel = std::abs(acc(y, x) - s.truth(y, x)) / s.truth(y, x);
        if (rel >= 2.0 * cfg.tau) {
          ++outliers;
          EXPECT_FALSE(cleaned.observed(y, x));
        } else if (rel < cfg.tau / 2.0) {
          EXPECT_TRUE(cleaned.observed(y, x));
        }
      }
    EXPECT_GT(outliers, 0);
  }
}

TEST(Fusion, PipelineRows) {
  FusionScenarioConfig cfg;
  cfg.seed = 11;
  const FusionScenario s = make_fusion_scenario(cfg);
  const FusionResult r = fuse_pipeline(s.scans, s.reference, s.truth, FusionConfig{});
  EXPECT_FALSE(r.raw.kitti_outlier_rate.has_value());
  ASSERT_TRUE(r.raw.density && r.accumulated_metrics.density && r.cleaned_metrics.density);
  EXPECT_GE(*r.cleaned_metrics.density, *r.raw.density);
  EXPECT_LE(*r.cleaned_metrics.density, *r.accumulated_metrics.density);
  EXPECT_LT(r.cleaned_metrics.mae, r.accumulated_metrics.mae);

  const FusionResult disp = fuse_pipeline(s.scans, s.reference, s.truth, FusionConfig{}, kKittiFocalBaseline);
  ASSERT_TRUE(disp.cleaned_metrics.kitti_outlier_rate && disp.accumulated_metrics.kitti_outlier_rate);
  EXPECT_LT(*disp.cleaned_metrics.kitti_outlier_rate, *disp.accumulated_metrics.kitti_outlier_rate);

  // Perfect single scan and reference pass through unchanged.
  const FusionResult perfect =
      fuse_pipeline(std::vector<DepthMap>{s.truth}, s.truth, s.truth, FusionConfig{});
  EXPECT_EQ(perfect.cleaned, s.truth);
  EXPECT_EQ(perfect.cleaned_metrics.mae, 0.0);
}

TEST(Fusion, ScenarioIsDeterministic) {
  FusionScenarioConfig cfg;
  cfg.seed = 4;
  const FusionScenario a = make_fusion_scenario(cfg), b = make_fusion_scenario(cfg);
  EXPECT_EQ(a.reference, b.reference);
  ASSERT_EQ(a.scans.size(), 11u);
  for (std::size_t i = 0; i < a.scans.size(); ++i) EXPECT_EQ(a.scans[i], b.scans[i]);
}

}  // namespace
}  // namespace scnn
