#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "scnn/tensor.hpp"

namespace scnn {

using DepthArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-channel depth image in meters; 0 marks a pixel without measurement.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(Eigen::Index height, Eigen::Index width) : depth_(DepthArray::Zero(height, width)) {}
  /// Throws ConfigError on negative or non-finite depths.
  explicit DepthMap(DepthArray depth);

  Eigen::Index height() const { return depth_.rows(); }
  Eigen::Index width() const { return depth_.cols(); }
  Eigen::Index size() const { return depth_.size(); }

  const DepthArray& depth() const { return depth_; }
  double operator()(Eigen::Index y, Eigen::Index x) const { return depth_(y, x); }
  bool observed(Eigen::Index y, Eigen::Index x) const { return depth_(y, x) > 0.0; }
  /// Setting 0 clears the observation.
  void set(Eigen::Index y, Eigen::Index x, double depth);

  Eigen::Index observed_count() const { return (depth_ > 0.0).count(); }
  double density() const {
    return size() == 0 ? 0.0 : static_cast<double>(observed_count()) / static_cast<double>(size());
  }

  /// (1,1,h,w) tensor of depths.
  Tensor4 to_tensor() const;
  Mask mask() const;
  /// Reads channel 0 of batch item `n`; negative values are rejected.
  static DepthMap from_tensor(const Tensor4& t, Eigen::Index n = 0);

  friend bool operator==(const DepthMap& a, const DepthMap& b) {
    return a.depth_.rows() == b.depth_.rows() && a.depth_.cols() == b.depth_.cols() &&
           (a.depth_ == b.depth_).all();
  }

 private:
  DepthArray depth_;
};

/// Stacks equally sized maps into an (n,1,h,w) tensor.
Tensor4 stack_depths(std::span<const DepthMap> maps);
/// Observation masks of `maps` stacked as (n,1,h,w).
Mask stack_masks(std::span<const DepthMap> maps);

/// SplitMix64 finalizer over a combined key; used to derive independent
/// per-item seeds from one user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

struct SceneConfig {
  Eigen::Index height = 64;
  Eigen::Index width = 64;
  double min_depth = 2.0;
  double max_depth = 80.0;
  int boxes = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Dense synthetic scene: a ground plane receding towards a far backdrop,
/// occluded by axis-aligned boxes at constant or horizontally slanted depth.
/// Occlusion keeps the nearest surface.
DepthMap generate_scene(const SceneConfig& cfg);

/// Keeps each observed pixel independently with probability `keep_prob`.
DepthMap sparsify(const DepthMap& d, double keep_prob, std::uint64_t seed);

// 16-bit binary PGM ("P5", maxval 65535, big endian); sample = round(depth * 256).
inline constexpr double kPgmScale = 256.0;

void write_depth_pgm(const DepthMap& d, std::ostream& os);
DepthMap read_depth_pgm(std::istream& is);
void write_depth_pgm(const DepthMap& d, const std::filesystem::path& path);
DepthMap read_depth_pgm(const std::filesystem::path& path);

}  // namespace scnn
