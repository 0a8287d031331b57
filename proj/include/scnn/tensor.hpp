#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <initializer_list>
#include <ostream>
#include <sstream>
#include <string>

#include "scnn/errors.hpp"

namespace scnn {

/// Extent of a 4-D tensor in (batch, channels, height, width) order.
struct Shape4 {
  Eigen::Index n = 1;
  Eigen::Index c = 1;
  Eigen::Index h = 1;
  Eigen::Index w = 1;

  Eigen::Index size() const { return n * c * h * w; }
  Eigen::Index plane() const { return h * w; }
  Eigen::Index operator[](int axis) const { return std::array{n, c, h, w}[axis]; }

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

inline std::string to_string(const Shape4& s) {
  std::ostringstream os;
  os << "(" << s.n << "," << s.c << "," << s.h << "," << s.w << ")";
  return os.str();
}

inline std::ostream& operator<<(std::ostream& os, const Shape4& s) { return os << to_string(s); }

enum Axis : int { kBatch = 0, kChannel = 1, kHeight = 2, kWidth = 3 };

/// Dense row-major (n,c,h,w) array. Storage is an Eigen column vector so
/// that whole-tensor arithmetic goes through Eigen expressions, and every
/// (n,c) plane can be viewed as a row-major h x w matrix without copying.
template <typename Scalar>
class BasicTensor4 {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlaneMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  BasicTensor4() : BasicTensor4(Shape4{}) {}

  explicit BasicTensor4(const Shape4& shape, Scalar fill = Scalar(0)) : shape_(shape) {
    check_extent(shape);
    data_ = Array::Constant(shape.size(), fill);
  }

  BasicTensor4(const Shape4& shape, Array data) : shape_(shape), data_(std::move(data)) {
    check_extent(shape);
    if (data_.size() != shape.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape));
    }
  }

  static BasicTensor4 zeros(const Shape4& shape) { return BasicTensor4(shape, Scalar(0)); }
  static BasicTensor4 ones(const Shape4& shape) { return BasicTensor4(shape, Scalar(1)); }

  const Shape4& shape() const { return shape_; }
  Eigen::Index size() const { return data_.size(); }
  Eigen::Index batch() const { return shape_.n; }
  Eigen::Index channels() const { return shape_.c; }
  Eigen::Index height() const { return shape_.h; }
  Eigen::Index width() const { return shape_.w; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Eigen::Index offset(Eigen::Index n, Eigen::Index c, Eigen::Index y, Eigen::Index x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  Scalar& operator()(Eigen::Index n, Eigen::Index c, Eigen::Index y, Eigen::Index x) {
    return data_[offset(n, c, y, x)];
  }
  Scalar operator()(Eigen::Index n, Eigen::Index c, Eigen::Index y, Eigen::Index x) const {
    return data_[offset(n, c, y, x)];
  }

  PlaneMap plane(Eigen::Index n, Eigen::Index c) {
    return PlaneMap(data_.data() + offset(n, c, 0, 0), shape_.h, shape_.w);
  }
  ConstPlaneMap plane(Eigen::Index n, Eigen::Index c) const {
    return ConstPlaneMap(data_.data() + offset(n, c, 0, 0), shape_.h, shape_.w);
  }

  /// Pointer to the first element of batch item `n`; items are contiguous.
  Scalar* item(Eigen::Index n) { return data_.data() + offset(n, 0, 0, 0); }
  const Scalar* item(Eigen::Index n) const { return data_.data() + offset(n, 0, 0, 0); }

  bool all_finite() const { return data_.isFinite().all(); }

  BasicTensor4& operator+=(const BasicTensor4& o) {
    require_same_shape(o, "add");
    data_ += o.data_;
    return *this;
  }
  BasicTensor4& operator-=(const BasicTensor4& o) {
    require_same_shape(o, "sub");
    data_ -= o.data_;
    return *this;
  }
  BasicTensor4& operator*=(Scalar s) {
    data_ *= s;
    return *this;
  }

  void require_same_shape(const BasicTensor4& o, const char* op) const {
    if (!(shape_ == o.shape_)) {
      throw ShapeError(std::string(op) + ": shape mismatch " + to_string(shape_) + " vs " +
                       to_string(o.shape_));
    }
  }

 private:
  static void check_extent(const Shape4& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw ShapeError("negative tensor extent " + to_string(s));
    }
  }

  Shape4 shape_;
  Array data_;
};

using Tensor4 = BasicTensor4<double>;

template <typename Scalar>
BasicTensor4<Scalar> operator+(BasicTensor4<Scalar> a, const BasicTensor4<Scalar>& b) {
  a += b;
  return a;
}

template <typename Scalar>
BasicTensor4<Scalar> operator-(BasicTensor4<Scalar> a, const BasicTensor4<Scalar>& b) {
  a -= b;
  return a;
}

/// Elementwise (Hadamard) product.
template <typename Scalar>
BasicTensor4<Scalar> mul(const BasicTensor4<Scalar>& a, const BasicTensor4<Scalar>& b) {
  a.require_same_shape(b, "mul");
  return BasicTensor4<Scalar>(a.shape(), a.array() * b.array());
}

template <typename Scalar>
BasicTensor4<Scalar> scale(BasicTensor4<Scalar> a, Scalar s) {
  a *= s;
  return a;
}

/// Sums over the listed axes; reduced axes are kept with extent 1.
template <typename Scalar>
BasicTensor4<Scalar> reduce_sum(const BasicTensor4<Scalar>& t, std::initializer_list<Axis> axes) {
  std::array<bool, 4> reduce{};
  for (Axis a : axes) reduce[a] = true;
  const Shape4& in = t.shape();
  Shape4 out{reduce[0] ? 1 : in.n, reduce[1] ? 1 : in.c, reduce[2] ? 1 : in.h,
             reduce[3] ? 1 : in.w};
  BasicTensor4<Scalar> result(out);
  for (Eigen::Index n = 0; n < in.n; ++n)
    for (Eigen::Index c = 0; c < in.c; ++c)
      for (Eigen::Index y = 0; y < in.h; ++y)
        for (Eigen::Index x = 0; x < in.w; ++x)
          result(reduce[0] ? 0 : n, reduce[1] ? 0 : c, reduce[2] ? 0 : y, reduce[3] ? 0 : x) +=
              t(n, c, y, x);
  return result;
}

/// Adds a border of width `k` on both spatial sides, filled with `fill`.
template <typename Scalar>
BasicTensor4<Scalar> pad_spatial(const BasicTensor4<Scalar>& t, Eigen::Index k, Scalar fill) {
  if (k < 0) throw ConfigError("pad_spatial: negative padding " + std::to_string(k));
  const Shape4& s = t.shape();
  BasicTensor4<Scalar> out(Shape4{s.n, s.c, s.h + 2 * k, s.w + 2 * k}, fill);
  for (Eigen::Index n = 0; n < s.n; ++n)
    for (Eigen::Index c = 0; c < s.c; ++c) out.plane(n, c).block(k, k, s.h, s.w) = t.plane(n, c);
  return out;
}

/// Inverse of pad_spatial: drops `k` pixels from every spatial border.
template <typename Scalar>
BasicTensor4<Scalar> crop_spatial(const BasicTensor4<Scalar>& t, Eigen::Index k) {
  const Shape4& s = t.shape();
  if (k < 0 || 2 * k > s.h || 2 * k > s.w) {
    throw ShapeError("crop_spatial: cannot crop " + std::to_string(k) + " from " + to_string(s));
  }
  BasicTensor4<Scalar> out(Shape4{s.n, s.c, s.h - 2 * k, s.w - 2 * k});
  for (Eigen::Index n = 0; n < s.n; ++n)
    for (Eigen::Index c = 0; c < s.c; ++c) out.plane(n, c) = t.plane(n, c).block(k, k, s.h - 2 * k, s.w - 2 * k);
  return out;
}

/// Binary observation indicator, one channel per batch item. Values are kept
/// as reals in {0, 1} so they combine directly with Tensor4 arithmetic.
class Mask {
 public:
  Mask() : Mask(Shape4{}) {}

  explicit Mask(const Shape4& shape, double fill = 0.0) : t_(checked_shape(shape), fill) {
    check_values();
  }

  explicit Mask(Tensor4 t) : t_(std::move(t)) {
    checked_shape(t_.shape());
    check_values();
  }

  static Mask zeros(const Shape4& s) { return Mask(s, 0.0); }
  static Mask ones(const Shape4& s) { return Mask(s, 1.0); }

  /// 1 where `t` (single channel) is nonzero.
  static Mask observed(const Tensor4& t) {
    Tensor4 m(t.shape(), (t.array() != 0.0).template cast<double>());
    return Mask(std::move(m));
  }

  const Tensor4& tensor() const { return t_; }
  const Shape4& shape() const { return t_.shape(); }
  double operator()(Eigen::Index n, Eigen::Index y, Eigen::Index x) const { return t_(n, 0, y, x); }
  bool at(Eigen::Index n, Eigen::Index y, Eigen::Index x) const { return t_(n, 0, y, x) != 0.0; }
  void set(Eigen::Index n, Eigen::Index y, Eigen::Index x, bool v) { t_(n, 0, y, x) = v ? 1.0 : 0.0; }

  Eigen::Index count() const { return static_cast<Eigen::Index>(t_.array().sum()); }

  /// Spatial extent must match `t`, batch must match, channel count is free.
  void require_aligned(const Tensor4& t, const char* op) const {
    const Shape4& s = t.shape();
    if (s.n != shape().n || s.h != shape().h || s.w != shape().w) {
      throw ShapeError(std::string(op) + ": mask " + to_string(shape()) +
                       " not aligned with tensor " + to_string(s));
    }
  }

  friend bool operator==(const Mask& a, const Mask& b) {
    return a.shape() == b.shape() && (a.t_.array() == b.t_.array()).all();
  }

 private:
  static const Shape4& checked_shape(const Shape4& s) {
    if (s.c != 1) throw ShapeError("mask must have exactly one channel, got " + to_string(s));
    return s;
  }
  void check_values() const {
    if (!((t_.array() == 0.0) || (t_.array() == 1.0)).all()) {
      throw ConfigError("mask values must be exactly 0 or 1");
    }
  }

  Tensor4 t_;
};

}  // namespace scnn
