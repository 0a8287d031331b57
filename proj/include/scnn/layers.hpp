#pragma once

#include <Eigen/Core>

#include <span>
#include <utility>
#include <vector>

#include "scnn/tensor.hpp"

namespace scnn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kDefaultEpsilon = 1e-8;

/// Weights (out, in, 2k+1, 2k+1), one bias per output channel, half-width k.
struct ConvParams {
  Tensor4 weights;
  Eigen::VectorXd bias;
  int k = 0;

  static ConvParams zeros(Eigen::Index out_channels, Eigen::Index in_channels, int k);

  Eigen::Index out_channels() const { return weights.shape().n; }
  Eigen::Index in_channels() const { return weights.shape().c; }
  int kernel_size() const { return 2 * k + 1; }
  Eigen::Index parameter_count() const { return weights.size() + bias.size(); }

  /// Throws ShapeError / ConfigError when the invariants do not hold.
  void validate() const;

  /// Weights viewed as an out x (in*K*K) matrix.
  Eigen::Map<const RowMatrix> weight_matrix() const {
    return {weights.data(), out_channels(), in_channels() * kernel_size() * kernel_size()};
  }
};

struct SparseConvConfig {
  ConvParams params;
  double epsilon = kDefaultEpsilon;
};

/// Gradients of a convolution w.r.t. its parameters and its input.
struct LayerGrads {
  Tensor4 d_weights;
  Eigen::VectorXd d_bias;
  Tensor4 d_input;
};

/// Feature tensor paired with its observation mask.
struct MaskedTensor {
  Tensor4 values;
  Mask mask;
};

// Standard "same" convolution, stride 1, zero padded.
Tensor4 conv2d_forward(const Tensor4& x, const ConvParams& p);
LayerGrads conv2d_backward(const Tensor4& x, const ConvParams& p, const Tensor4& upstream);

/// Normalized convolution over observed pixels only:
///
///   f(u,v) = sum_ij o(u+i,v+j) x(u+i,v+j) w(i,j) / (sum_ij o(u+i,v+j) + eps) + b
///
/// together with the propagated mask (window max of o). The border counts as
/// unobserved. A window with no observation yields exactly b and mask 0.
MaskedTensor sparse_conv2d_forward(const Tensor4& x, const Mask& o, const ConvParams& p,
                                   double epsilon = kDefaultEpsilon);
MaskedTensor sparse_conv2d_forward(const Tensor4& x, const Mask& o, const SparseConvConfig& cfg);

/// The mask is data, so nothing flows into `o` or through the denominator.
LayerGrads sparse_conv2d_backward(const Tensor4& x, const Mask& o, const ConvParams& p,
                                  double epsilon, const Tensor4& upstream);
LayerGrads sparse_conv2d_backward(const Tensor4& x, const Mask& o, const SparseConvConfig& cfg,
                                  const Tensor4& upstream);

/// Number of observed pixels in every (2k+1)^2 window, as an (n,1,h,w) tensor.
Tensor4 window_count(const Mask& o, int k);

/// Dilation of `o` by a (2k+1)^2 square.
Mask mask_maxpool(const Mask& o, int k);

Tensor4 relu_forward(const Tensor4& x);
Tensor4 relu_backward(const Tensor4& x, const Tensor4& upstream);

/// Stacks `b`'s channels after `a`'s.
Tensor4 concat_channels(const Tensor4& a, const Tensor4& b);
/// Splits off the first `first_channels` channels; inverse of concat_channels.
std::pair<Tensor4, Tensor4> split_channels(const Tensor4& t, Eigen::Index first_channels);

/// Mask-weighted mean of several streams. Pixels observed by no stream get
/// value 0 and mask 0.
MaskedTensor normalized_skip_sum(std::span<const MaskedTensor> inputs);
/// Gradient of normalized_skip_sum w.r.t. each input's values.
std::vector<Tensor4> normalized_skip_sum_backward(std::span<const MaskedTensor> inputs,
                                                  const Tensor4& upstream);

}  // namespace scnn
