#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "scnn/data.hpp"
#include "scnn/layers.hpp"

namespace scnn::test {

using Rng = std::mt19937_64;

inline Tensor4 random_tensor(const Shape4& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor4 t(s);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = d(rng);
  return t;
}

inline Mask random_mask(const Shape4& s, Rng& rng, double density) {
  std::bernoulli_distribution coin(density);
  Mask m = Mask::zeros(s);
  for (Eigen::Index n = 0; n < s.n; ++n)
    for (Eigen::Index y = 0; y < s.h; ++y)
      for (Eigen::Index x = 0; x < s.w; ++x) m.set(n, y, x, coin(rng));
  return m;
}

inline ConvParams random_params(Eigen::Index out, Eigen::Index in, int k, Rng& rng) {
  ConvParams p = ConvParams::zeros(out, in, k);
  p.weights = random_tensor(p.weights.shape(), rng);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias[i] = d(rng);
  return p;
}

inline DepthMap random_sparse_map(Eigen::Index h, Eigen::Index w, double density, Rng& rng,
                                  double lo = 2.0, double hi = 80.0) {
  std::bernoulli_distribution coin(density);
  std::uniform_real_distribution<double> d(lo, hi);
  DepthMap m(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const double v = d(rng);
      if (coin(rng)) m.set(y, x, v);
    }
  return m;
}

inline double dot(const Tensor4& a, const Tensor4& b) { return (a.array() * b.array()).sum(); }

inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest relative error between analytic[i] and a central difference of
/// loss() in values[i] over every coordinate.
inline double max_fd_error(double* values, const double* analytic, Eigen::Index n,
                           const std::function<double()>& loss, double step = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = loss();
    values[i] = saved - step;
    const double down = loss();
    values[i] = saved;
    worst = std::max(worst, rel_err(analytic[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

}  // namespace scnn::test
