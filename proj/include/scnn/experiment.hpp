#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "scnn/data.hpp"
#include "scnn/metrics.hpp"
#include "scnn/network.hpp"

namespace scnn {

/// "5,10,20" -> {0.05, 0.10, 0.20}; each entry must be a percentage in (0, 100].
std::vector<double> parse_density_sweep(std::string_view text);

/// `count` scenes from `base` with per-scene seeds derived from `seed`.
std::vector<DepthMap> make_scenes(const SceneConfig& base, int count, std::uint64_t seed);

/// Sparsifies every dense map at `keep_prob` (seeded per map index), runs the
/// model and pools the metrics over all maps against the dense truth.
MetricsReport evaluate_model(const ModelState& model, std::span<const DepthMap> dense,
                             double keep_prob, std::uint64_t seed, int batch_size = 8);

// Dataset directories hold `<index>_sparse.pgm` / `<index>_dense.pgm` pairs.
std::filesystem::path sparse_path(const std::filesystem::path& dir, int index);
std::filesystem::path dense_path(const std::filesystem::path& dir, int index);
/// All `*_dense.pgm` files of `dir` in index order.
std::vector<DepthMap> load_dense_maps(const std::filesystem::path& dir);

}  // namespace scnn
