#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "scnn/layers.hpp"

namespace scnn {

/// The three fully convolutional variants compared in the experiments:
/// sparse convolutions on (depth, mask), plain convolutions on depth alone,
/// and plain convolutions on depth with the mask concatenated as a channel.
enum class Variant : std::uint8_t { SparseConvNet = 0, ConvNet = 1, ConvNetPlusMask = 2 };

std::string_view to_string(Variant v);
/// Accepts the enum spelling or the short CLI names `sparse`, `conv`, `conv_mask`.
Variant parse_variant(std::string_view name);

struct NetworkSpec {
  Variant variant = Variant::SparseConvNet;
  std::vector<int> kernel_sizes{11, 7, 5, 3, 3};
  int channels = 16;
  int out_channels = 1;
  double epsilon = kDefaultEpsilon;

  void validate() const;
  /// Channels fed to the first layer: 2 for ConvNetPlusMask, else 1.
  int input_channels() const;
};

struct ModelState {
  Variant variant = Variant::SparseConvNet;
  double epsilon = kDefaultEpsilon;
  std::uint64_t seed = 0;
  /// Hidden layers in order followed by the 1x1 head.
  std::vector<ConvParams> layers;

  Eigen::Index parameter_count() const;
  /// Throws ShapeError if the layer chain is broken.
  void validate() const;
};

/// Parameter gradients of one layer.
struct ParamGrads {
  Tensor4 d_weights;
  Eigen::VectorXd d_bias;
};
using ModelGrads = std::vector<ParamGrads>;

struct LayerCache {
  Tensor4 input;
  Mask mask;
  Tensor4 pre_activation;
};

struct ForwardCache {
  Shape4 input_shape;
  std::vector<LayerCache> layers;
};

struct ForwardResult {
  Tensor4 prediction;
  Mask out_mask;
  ForwardCache cache;
};

/// Fan-in scaled uniform init (bound sqrt(6/fan_in)), zero biases. Every
/// variant ends with a linear 1x1 head to `out_channels`.
ModelState build(const NetworkSpec& spec, std::uint64_t seed);

/// `depth` is (n,1,h,w); `mask` marks observed pixels. Dense variants report
/// an all-ones output mask.
ForwardResult forward(const ModelState& model, const Tensor4& depth, const Mask& mask);

/// Same as forward() without retaining activations.
MaskedTensor predict(const ModelState& model, const Tensor4& depth, const Mask& mask);

ModelGrads backward(const ModelState& model, const ForwardCache& cache,
                    const Tensor4& d_prediction);

/// Throws ShapeError when `model` cannot have been built from `spec`.
void require_compatible(const ModelState& model, const NetworkSpec& spec);

// Checkpoint format, little endian:
//   "SCNN" u8(version=1) u8(variant) u32(layers)
//   layers x { u32 k, u32 in_channels, u32 out_channels }
//   layers x { f64 weights[out*in*(2k+1)^2], f64 bias[out] }
void write_checkpoint(const ModelState& model, std::ostream& os);
ModelState read_checkpoint(std::istream& is);
void save(const ModelState& model, const std::filesystem::path& path);
ModelState load(const std::filesystem::path& path);

}  // namespace scnn
