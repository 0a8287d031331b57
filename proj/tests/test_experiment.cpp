#include <gtest/gtest.h>

#include <filesystem>

#include "scnn/experiment.hpp"

namespace scnn {
namespace {

TEST(Experiment, DensitySweepParsing) {
  const auto d = parse_density_sweep("5,10,20,50,100");
  ASSERT_EQ(d.size(), 5u);
  EXPECT_DOUBLE_EQ(d[0], 0.05);
  EXPECT_DOUBLE_EQ(d[4], 1.0);
  EXPECT_THROW(parse_density_sweep("5,abc"), ConfigError);
  EXPECT_THROW(parse_density_sweep("0"), ConfigError);
  EXPECT_THROW(parse_density_sweep("101"), ConfigError);
  EXPECT_THROW(parse_density_sweep(""), ConfigError);
}

TEST(Experiment, DatasetLayout) {
  EXPECT_EQ(sparse_path("d", 7).string(), "d/000007_sparse.pgm");
  EXPECT_EQ(dense_path("d", 12).string(), "d/000012_dense.pgm");
  const auto dir = std::filesystem::temp_directory_path() / "scnn_experiment_layout";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  SceneConfig base;
  base.height = base.width = 8;
  const auto scenes = make_scenes(base, 3, 1);
  for (int i = 2; i >= 0; --i) write_depth_pgm(scenes[i], dense_path(dir, i));
  const auto loaded = load_dense_maps(dir);
  ASSERT_EQ(loaded.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_LE((loaded[i].depth() - scenes[i].depth()).abs().maxCoeff(), 1.0 / 512);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_dense_maps(dir), IoError);
}

TEST(Experiment, EvaluateModelIsBatchIndependent) {
  SceneConfig base;
  base.height = base.width = 16;
  const auto scenes = make_scenes(base, 5, 2);
  NetworkSpec spec;
  spec.kernel_sizes = {3, 3};
  spec.channels = 4;
  const ModelState m = build(spec, 1);
  const MetricsReport a = evaluate_model(m, scenes, 0.2, 7, 2);
  const MetricsReport b = evaluate_model(m, scenes, 0.2, 7, 5);
  EXPECT_EQ(a.n_valid, 5 * 256);
  EXPECT_NEAR(a.mae, b.mae, 1e-12 * a.mae);
  ASSERT_TRUE(a.density.has_value());
  EXPECT_NEAR(*a.density, 0.2, 0.06);
}

}  // namespace
}  // namespace scnn
