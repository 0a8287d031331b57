#include "scnn/layers.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace scnn {

namespace {

using Index = Eigen::Index;

void require_channels(const Tensor4& x, const ConvParams& p, const char* op) {
  if (x.channels() != p.in_channels()) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.channels()) +
                     " channels, weights expect " + std::to_string(p.in_channels()) +
                     " (input " + to_string(x.shape()) + ", weights " +
                     to_string(p.weights.shape()) + ")");
  }
}

void require_upstream(const Tensor4& x, const ConvParams& p, const Tensor4& g, const char* op) {
  const Shape4 expect{x.batch(), p.out_channels(), x.height(), x.width()};
  if (!(g.shape() == expect)) {
    throw ShapeError(std::string(op) + ": upstream gradient " + to_string(g.shape()) +
                     " does not match forward output " + to_string(expect));
  }
}

void require_epsilon(double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("sparse convolution epsilon must be > 0");
}

// Convolution as a sum of (2k+1)^2 small GEMMs over a zero-padded image
// flattened to (C, Hp*Wp). On the flattened padded grid a spatial shift
// (dy,dx) is a constant column offset dy*Wp+dx, so every tap is one product
// of an (out x in) weight slice with a contiguous column block. Columns that
// wrap across rows only land in the padding border and are discarded.
class ShiftedConv {
 public:
  ShiftedConv(const ConvParams& p, Index H, Index W)
      : k_(p.k), K_(p.kernel_size()), H_(H), W_(W), Hp_(H + 2 * p.k), Wp_(W + 2 * p.k),
        first_(p.k * Wp_ + p.k), span_(Hp_ * Wp_ - 2 * first_), cin_(p.in_channels()),
        cout_(p.out_channels()) {
    taps_.reserve(K_ * K_);
    for (Index i = 0; i < K_; ++i)
      for (Index j = 0; j < K_; ++j) {
        RowMatrix t(cout_, cin_);
        for (Index o = 0; o < cout_; ++o)
          for (Index c = 0; c < cin_; ++c) t(o, c) = p.weights(o, c, i, j);
        taps_.push_back(std::move(t));
      }
  }

  /// y (Cout,H,W) = sum over taps of w * x, no bias.
  void forward(const double* x, double* y) {
    pad(x, cin_, xpad_);
    ypad_.setZero(cout_, Hp_ * Wp_);
    for (Index t = 0; t < K_ * K_; ++t) {
      ypad_.middleCols(first_, span_).noalias() += taps_[t] * xpad_.middleCols(first_ + shift(t), span_);
    }
    unpad(ypad_, cout_, y);
  }

  /// Accumulates weight gradients into dW (out,in,K,K) and writes dx (C,H,W)
  /// for an upstream gradient g (Cout,H,W).
  void backward(const double* x, const double* g, Tensor4& dW, double* dx) {
    pad(x, cin_, xpad_);
    pad(g, cout_, gpad_);
    dxpad_.setZero(cin_, Hp_ * Wp_);
    const auto G = gpad_.middleCols(first_, span_);
    for (Index t = 0; t < K_ * K_; ++t) {
      dtap_.noalias() = G * xpad_.middleCols(first_ + shift(t), span_).transpose();
      const Index i = t / K_, j = t % K_;
      for (Index o = 0; o < cout_; ++o)
        for (Index c = 0; c < cin_; ++c) dW(o, c, i, j) += dtap_(o, c);
      dxpad_.middleCols(first_ + shift(t), span_).noalias() += taps_[t].transpose() * G;
    }
    unpad(dxpad_, cin_, dx);
  }

 private:
  Index shift(Index t) const { return (t / K_ - k_) * Wp_ + (t % K_ - k_); }

  void pad(const double* src, Index channels, RowMatrix& dst) const {
    dst.setZero(channels, Hp_ * Wp_);
    for (Index c = 0; c < channels; ++c)
      for (Index y = 0; y < H_; ++y) {
        const double* row = src + (c * H_ + y) * W_;
        std::copy(row, row + W_, dst.data() + c * Hp_ * Wp_ + (y + k_) * Wp_ + k_);
      }
  }

  void unpad(const RowMatrix& src, Index channels, double* dst) const {
    for (Index c = 0; c < channels; ++c)
      for (Index y = 0; y < H_; ++y) {
        const double* row = src.data() + c * Hp_ * Wp_ + (y + k_) * Wp_ + k_;
        std::copy(row, row + W_, dst + (c * H_ + y) * W_);
      }
  }

  Index k_, K_, H_, W_, Hp_, Wp_, first_, span_, cin_, cout_;
  std::vector<RowMatrix> taps_;
  RowMatrix xpad_, ypad_, gpad_, dxpad_, dtap_;
};

// x where o = 1, +0.0 elsewhere, with the single-channel mask broadcast over
// channels. Selecting instead of multiplying keeps the result independent of
// the unobserved values down to the sign of zero.
Tensor4 apply_mask(const Tensor4& x, const Mask& o) {
  Tensor4 out = x;
  for (Index n = 0; n < x.batch(); ++n) {
    const auto m = o.tensor().plane(n, 0).array();
    for (Index c = 0; c < x.channels(); ++c) {
      auto v = out.plane(n, c).array();
      v = (m != 0.0).select(v, 0.0);
    }
  }
  return out;
}

}  // namespace

ConvParams ConvParams::zeros(Index out_channels, Index in_channels, int k) {
  if (k < 0) throw ConfigError("kernel half-width must be non-negative");
  ConvParams p;
  p.k = k;
  p.weights = Tensor4::zeros(Shape4{out_channels, in_channels, 2 * k + 1, 2 * k + 1});
  p.bias = Eigen::VectorXd::Zero(out_channels);
  return p;
}

void ConvParams::validate() const {
  if (k < 0) throw ConfigError("kernel half-width must be non-negative");
  const Shape4& s = weights.shape();
  if (s.h != kernel_size() || s.w != kernel_size()) {
    throw ShapeError("kernel dims " + to_string(s) + " inconsistent with k=" + std::to_string(k));
  }
  if (bias.size() != s.n) {
    throw ShapeError("bias length " + std::to_string(bias.size()) + " != out channels " +
                     std::to_string(s.n));
  }
  if (!weights.all_finite() || !bias.allFinite()) throw ConfigError("non-finite parameters");
}

Tensor4 conv2d_forward(const Tensor4& x, const ConvParams& p) {
  require_channels(x, p, "conv2d_forward");
  const Index H = x.height(), W = x.width(), Cout = p.out_channels();
  Tensor4 out(Shape4{x.batch(), Cout, H, W});
  ShiftedConv conv(p, H, W);
  for (Index n = 0; n < x.batch(); ++n) {
    conv.forward(x.item(n), out.item(n));
    Eigen::Map<RowMatrix> y(out.item(n), Cout, H * W);
    y.colwise() += p.bias;
  }
  return out;
}

LayerGrads conv2d_backward(const Tensor4& x, const ConvParams& p, const Tensor4& upstream) {
  require_channels(x, p, "conv2d_backward");
  require_upstream(x, p, upstream, "conv2d_backward");
  const Index H = x.height(), W = x.width(), Cout = p.out_channels();
  LayerGrads g{Tensor4::zeros(p.weights.shape()), Eigen::VectorXd::Zero(Cout),
               Tensor4::zeros(x.shape())};
  ShiftedConv conv(p, H, W);
  for (Index n = 0; n < x.batch(); ++n) {
    Eigen::Map<const RowMatrix> G(upstream.item(n), Cout, H * W);
    g.d_bias += G.rowwise().sum();
    conv.backward(x.item(n), upstream.item(n), g.d_weights, g.d_input.item(n));
  }
  return g;
}

Tensor4 window_count(const Mask& o, int k) {
  if (k < 0) throw ConfigError("window half-width must be non-negative");
  const Shape4& s = o.shape();
  Tensor4 out(s);
  RowMatrix rows(s.h, s.w);
  for (Index n = 0; n < s.n; ++n) {
    const auto m = o.tensor().plane(n, 0);
    for (Index y = 0; y < s.h; ++y)
      for (Index x = 0; x < s.w; ++x) {
        double acc = 0.0;
        for (Index dx = std::max<Index>(0, x - k); dx <= std::min<Index>(s.w - 1, x + k); ++dx)
          acc += m(y, dx);
        rows(y, x) = acc;
      }
    auto dst = out.plane(n, 0);
    for (Index y = 0; y < s.h; ++y)
      for (Index x = 0; x < s.w; ++x) {
        double acc = 0.0;
        for (Index dy = std::max<Index>(0, y - k); dy <= std::min<Index>(s.h - 1, y + k); ++dy)
          acc += rows(dy, x);
        dst(y, x) = acc;
      }
  }
  return out;
}

Mask mask_maxpool(const Mask& o, int k) {
  const Tensor4 counts = window_count(o, k);
  return Mask(Tensor4(counts.shape(), (counts.array() > 0.0).cast<double>()));
}

MaskedTensor sparse_conv2d_forward(const Tensor4& x, const Mask& o, const ConvParams& p,
                                   double epsilon) {
  require_channels(x, p, "sparse_conv2d_forward");
  o.require_aligned(x, "sparse_conv2d_forward");
  require_epsilon(epsilon);
  const Index H = x.height(), W = x.width(), Cout = p.out_channels();
  const Tensor4 counts = window_count(o, p.k);
  const Tensor4 masked = apply_mask(x, o);
  Tensor4 out(Shape4{x.batch(), Cout, H, W});
  ShiftedConv conv(p, H, W);
  for (Index n = 0; n < x.batch(); ++n) {
    conv.forward(masked.item(n), out.item(n));
    Eigen::Map<RowMatrix> y(out.item(n), Cout, H * W);
    Eigen::Map<const Eigen::RowVectorXd> cnt(counts.item(n), H * W);
    y.array().rowwise() /= (cnt.array() + epsilon);
    y.colwise() += p.bias;
  }
  return {std::move(out), Mask(Tensor4(counts.shape(), (counts.array() > 0.0).cast<double>()))};
}

MaskedTensor sparse_conv2d_forward(const Tensor4& x, const Mask& o, const SparseConvConfig& cfg) {
  return sparse_conv2d_forward(x, o, cfg.params, cfg.epsilon);
}

LayerGrads sparse_conv2d_backward(const Tensor4& x, const Mask& o, const ConvParams& p,
                                  double epsilon, const Tensor4& upstream) {
  require_channels(x, p, "sparse_conv2d_backward");
  o.require_aligned(x, "sparse_conv2d_backward");
  require_upstream(x, p, upstream, "sparse_conv2d_backward");
  require_epsilon(epsilon);
  const Index H = x.height(), W = x.width(), Cout = p.out_channels();
  const Tensor4 counts = window_count(o, p.k);
  const Tensor4 masked = apply_mask(x, o);
  LayerGrads g{Tensor4::zeros(p.weights.shape()), Eigen::VectorXd::Zero(Cout),
               Tensor4::zeros(x.shape())};
  ShiftedConv conv(p, H, W);
  RowMatrix scaled;
  for (Index n = 0; n < x.batch(); ++n) {
    Eigen::Map<const RowMatrix> G(upstream.item(n), Cout, H * W);
    Eigen::Map<const Eigen::RowVectorXd> cnt(counts.item(n), H * W);
    g.d_bias += G.rowwise().sum();
    scaled = G;
    scaled.array().rowwise() /= (cnt.array() + epsilon);
    conv.backward(masked.item(n), scaled.data(), g.d_weights, g.d_input.item(n));
  }
  g.d_input = apply_mask(g.d_input, o);
  return g;
}

LayerGrads sparse_conv2d_backward(const Tensor4& x, const Mask& o, const SparseConvConfig& cfg,
                                  const Tensor4& upstream) {
  return sparse_conv2d_backward(x, o, cfg.params, cfg.epsilon, upstream);
}

Tensor4 relu_forward(const Tensor4& x) { return Tensor4(x.shape(), x.array().max(0.0)); }

Tensor4 relu_backward(const Tensor4& x, const Tensor4& upstream) {
  x.require_same_shape(upstream, "relu_backward");
  return Tensor4(x.shape(), (x.array() > 0.0).select(upstream.array(), 0.0));
}

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
  const Shape4 &sa = a.shape(), &sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: shape mismatch " + to_string(sa) + " vs " + to_string(sb));
  }
  Tensor4 out(Shape4{sa.n, sa.c + sb.c, sa.h, sa.w});
  const Index pa = sa.c * sa.h * sa.w, pb = sb.c * sb.h * sb.w;
  for (Index n = 0; n < sa.n; ++n) {
    std::copy(a.item(n), a.item(n) + pa, out.item(n));
    std::copy(b.item(n), b.item(n) + pb, out.item(n) + pa);
  }
  return out;
}

std::pair<Tensor4, Tensor4> split_channels(const Tensor4& t, Index first_channels) {
  const Shape4& s = t.shape();
  if (first_channels < 0 || first_channels > s.c) {
    throw ShapeError("split_channels: cannot split " + std::to_string(first_channels) +
                     " channels off " + to_string(s));
  }
  Tensor4 a(Shape4{s.n, first_channels, s.h, s.w});
  Tensor4 b(Shape4{s.n, s.c - first_channels, s.h, s.w});
  const Index pa = a.shape().c * s.h * s.w, pb = b.shape().c * s.h * s.w;
  for (Index n = 0; n < s.n; ++n) {
    std::copy(t.item(n), t.item(n) + pa, a.item(n));
    std::copy(t.item(n) + pa, t.item(n) + pa + pb, b.item(n));
  }
  return {std::move(a), std::move(b)};
}

namespace {

Tensor4 observed_count(std::span<const MaskedTensor> inputs, const char* op) {
  if (inputs.empty()) throw ShapeError(std::string(op) + ": empty input list");
  const Shape4& s = inputs.front().values.shape();
  Tensor4 count = Tensor4::zeros(Shape4{s.n, 1, s.h, s.w});
  for (const auto& in : inputs) {
    inputs.front().values.require_same_shape(in.values, op);
    in.mask.require_aligned(in.values, op);
    count += in.mask.tensor();
  }
  return count;
}

}  // namespace

MaskedTensor normalized_skip_sum(std::span<const MaskedTensor> inputs) {
  const Tensor4 count = observed_count(inputs, "normalized_skip_sum");
  const Shape4& s = inputs.front().values.shape();
  Tensor4 out = Tensor4::zeros(s);
  for (const auto& in : inputs) out += apply_mask(in.values, in.mask);
  for (Index n = 0; n < s.n; ++n) {
    const auto cnt = count.plane(n, 0).array();
    for (Index c = 0; c < s.c; ++c) {
      auto v = out.plane(n, c).array();
      v = (cnt > 0.0).select(v / cnt, 0.0);
    }
  }
  return {std::move(out), Mask(Tensor4(count.shape(), (count.array() > 0.0).cast<double>()))};
}

std::vector<Tensor4> normalized_skip_sum_backward(std::span<const MaskedTensor> inputs,
                                                  const Tensor4& upstream) {
  const Tensor4 count = observed_count(inputs, "normalized_skip_sum_backward");
  inputs.front().values.require_same_shape(upstream, "normalized_skip_sum_backward");
  const Shape4& s = upstream.shape();
  Tensor4 inv(count.shape(), (count.array() > 0.0).select(count.array().inverse(), 0.0));
  std::vector<Tensor4> grads;
  grads.reserve(inputs.size());
  for (const auto& in : inputs) {
    Tensor4 g = apply_mask(upstream, in.mask);
    for (Index n = 0; n < s.n; ++n)
      for (Index c = 0; c < s.c; ++c) g.plane(n, c).array() *= inv.plane(n, 0).array();
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace scnn
