#include "scnn/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <string>

namespace scnn {

namespace {

constexpr std::uint64_t kEvalDropoutStream = 0x4556414cULL;

}  // namespace

std::vector<double> parse_density_sweep(std::string_view text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    std::string item(text.substr(pos, comma - pos));
    item.erase(std::remove_if(item.begin(), item.end(), [](char c) { return c == ' ' || c == '%'; }),
               item.end());
    double pct = 0.0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), pct);
    if (item.empty() || ec != std::errc() || end != item.data() + item.size() || !(pct > 0.0) ||
        pct > 100.0) {
      throw ConfigError("bad density '" + item + "' in sweep (expected percentages in (0,100])");
    }
    out.push_back(pct / 100.0);
    pos = comma + 1;
  }
  return out;
}

std::vector<DepthMap> make_scenes(const SceneConfig& base, int count, std::uint64_t seed) {
  std::vector<DepthMap> scenes;
  for (int i = 0; i < count; ++i) {
    SceneConfig cfg = base;
    cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    scenes.push_back(generate_scene(cfg));
  }
  return scenes;
}

MetricsReport evaluate_model(const ModelState& model, std::span<const DepthMap> dense,
                             double keep_prob, std::uint64_t seed, int batch_size) {
  if (dense.empty()) throw DegenerateError("evaluate_model: no evaluation maps");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  MetricsAccumulator acc(Unit::Meters);
  for (std::size_t start = 0; start < dense.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(dense.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<DepthMap> sparse;
    for (std::size_t i = start; i < end; ++i) {
      sparse.push_back(sparsify(dense[i], keep_prob, derive_seed(seed, kEvalDropoutStream, i)));
    }
    const Tensor4 depth = stack_depths(sparse);
    const Mask mask = Mask::observed(depth);
    const MaskedTensor pred = predict(model, depth, mask);
    for (std::size_t i = start; i < end; ++i) {
      const auto n = static_cast<Eigen::Index>(i - start);
      Tensor4 one(Shape4{1, 1, depth.height(), depth.width()});
      one.plane(0, 0) = pred.values.plane(n, 0);
      const Mask input_mask = sparse[i - start].mask();
      acc.add(one, dense[i], &input_mask);
    }
  }
  return acc.report();
}

std::filesystem::path sparse_path(const std::filesystem::path& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof name, "%06d_sparse.pgm", index);
  return dir / name;
}

std::filesystem::path dense_path(const std::filesystem::path& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof name, "%06d_dense.pgm", index);
  return dir / name;
}

std::vector<DepthMap> load_dense_maps(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a dataset directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 10 && name.ends_with("_dense.pgm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no *_dense.pgm files in " + dir.string());
  std::vector<DepthMap> maps;
  for (const auto& f : files) maps.push_back(read_depth_pgm(f));
  return maps;
}

}  // namespace scnn
