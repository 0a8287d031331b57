#include "scnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>

#include "scnn/layers.hpp"
#include "scnn/network.hpp"

namespace scnn {

double GradcheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

using Rng = std::mt19937_64;

class Checker {
 public:
  Checker(const GradcheckConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng) {}

  /// Compares `analytic[i]` with a central difference of `loss` in
  /// `values[i]` for the selected coordinates.
  void compare(const std::string& name, double* values, const double* analytic, Eigen::Index n,
               const std::function<double()>& loss, Eigen::Index limit = -1) {
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (limit >= 0 && n > limit) {
      std::shuffle(coords.begin(), coords.end(), rng_);
      coords.resize(static_cast<std::size_t>(limit));
    }
    auto& entry = find(name);
    for (Eigen::Index i : coords) {
      const double saved = values[i];
      values[i] = saved + cfg_.step;
      const double up = loss();
      values[i] = saved - cfg_.step;
      const double down = loss();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * cfg_.step);
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic[i], numeric, cfg_.floor));
      ++entry.checked;
    }
  }

  GradcheckReport report() const {
    GradcheckReport r;
    for (const auto& [name, e] : entries_) r.entries.push_back(e);
    return r;
  }

 private:
  GradcheckEntry& find(const std::string& name) {
    auto [it, inserted] = entries_.try_emplace(name);
    if (inserted) it->second.name = name;
    return it->second;
  }

  const GradcheckConfig& cfg_;
  Rng& rng_;
  std::map<std::string, GradcheckEntry> entries_;
};

void fill_uniform(Eigen::Ref<Eigen::ArrayXd> a, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = d(rng);
}

Tensor4 random_tensor(const Shape4& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor4 t(s);
  fill_uniform(t.array(), rng, lo, hi);
  return t;
}

Mask random_mask(const Shape4& s, Rng& rng, double density) {
  Mask m = Mask::zeros(s);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (Eigen::Index n = 0; n < s.n; ++n)
    for (Eigen::Index y = 0; y < s.h; ++y)
      for (Eigen::Index x = 0; x < s.w; ++x) m.set(n, y, x, coin(rng) < density);
  return m;
}

ConvParams random_params(Eigen::Index out, Eigen::Index in, int k, Rng& rng) {
  ConvParams p = ConvParams::zeros(out, in, k);
  fill_uniform(p.weights.array(), rng, -1.0, 1.0);
  fill_uniform(p.bias.array(), rng, -0.5, 0.5);
  return p;
}

double dot(const Tensor4& a, const Tensor4& b) { return (a.array() * b.array()).sum(); }

void check_conv(Checker& chk, Rng& rng, int k, const GradcheckConfig& cfg) {
  Tensor4 x = random_tensor({1, 2, 6, 6}, rng);
  ConvParams p = random_params(3, 2, k, rng);
  const Tensor4 g = random_tensor({1, 3, 6, 6}, rng);
  const LayerGrads grads = conv2d_backward(x, p, g);
  auto loss = [&] { return dot(conv2d_forward(x, p), g); };
  const std::string tag = "conv2d(k=" + std::to_string(k) + ")";
  chk.compare(tag + ".weights", p.weights.data(), grads.d_weights.data(), p.weights.size(), loss);
  chk.compare(tag + ".bias", p.bias.data(), grads.d_bias.data(), p.bias.size(), loss);
  chk.compare(tag + ".input", x.data(), grads.d_input.data(), x.size(), loss);
  (void)cfg;
}

void check_sparse_conv(Checker& chk, Rng& rng, int k, const GradcheckConfig& cfg) {
  Tensor4 x = random_tensor({1, 2, 6, 6}, rng);
  const Mask o = random_mask({1, 1, 6, 6}, rng, 0.4);
  ConvParams p = random_params(3, 2, k, rng);
  const Tensor4 g = random_tensor({1, 3, 6, 6}, rng);
  const LayerGrads grads = sparse_conv2d_backward(x, o, p, kDefaultEpsilon, g);
  auto loss = [&] { return dot(sparse_conv2d_forward(x, o, p).values, g); };
  const std::string tag = "sparse_conv2d(k=" + std::to_string(k) + ")";
  chk.compare(tag + ".weights", p.weights.data(), grads.d_weights.data(), p.weights.size(), loss);
  chk.compare(tag + ".bias", p.bias.data(), grads.d_bias.data(), p.bias.size(), loss);
  chk.compare(tag + ".input", x.data(), grads.d_input.data(), x.size(), loss);
  (void)cfg;
}

void check_relu(Checker& chk, Rng& rng) {
  Tensor4 x = random_tensor({1, 2, 5, 5}, rng);
  // Keep every input at least 0.1 away from the kink.
  x.array() = x.array().sign() * (x.array().abs() + 0.1);
  const Tensor4 g = random_tensor(x.shape(), rng);
  const Tensor4 dx = relu_backward(x, g);
  chk.compare("relu.input", x.data(), dx.data(), x.size(), [&] { return dot(relu_forward(x), g); });
}

void check_concat(Checker& chk, Rng& rng) {
  Tensor4 a = random_tensor({2, 1, 4, 4}, rng);
  Tensor4 b = random_tensor({2, 3, 4, 4}, rng);
  const Tensor4 g = random_tensor({2, 4, 4, 4}, rng);
  const auto [da, db] = split_channels(g, 1);
  auto loss = [&] { return dot(concat_channels(a, b), g); };
  chk.compare("concat_channels.a", a.data(), da.data(), a.size(), loss);
  chk.compare("concat_channels.b", b.data(), db.data(), b.size(), loss);
}

void check_skip_sum(Checker& chk, Rng& rng) {
  std::vector<MaskedTensor> inputs;
  for (int l = 0; l < 3; ++l) {
    inputs.push_back({random_tensor({1, 2, 5, 5}, rng), random_mask({1, 1, 5, 5}, rng, 0.5)});
  }
  const Tensor4 g = random_tensor({1, 2, 5, 5}, rng);
  const auto grads = normalized_skip_sum_backward(inputs, g);
  auto loss = [&] { return dot(normalized_skip_sum(inputs).values, g); };
  for (std::size_t l = 0; l < inputs.size(); ++l) {
    chk.compare("normalized_skip_sum.input", inputs[l].values.data(), grads[l].data(),
                inputs[l].values.size(), loss);
  }
}

void check_network(Checker& chk, Rng& rng, Variant variant, const GradcheckConfig& cfg) {
  NetworkSpec spec;
  spec.variant = variant;
  spec.kernel_sizes = cfg.kernel_sizes;
  spec.channels = cfg.channels;
  ModelState model = build(spec, rng());
  for (auto& p : model.layers) {
    if (cfg.zero_weights) {
      p.weights.array().setZero();
      p.bias.setZero();
    } else {
      fill_uniform(p.bias.array(), rng, -0.5, 0.5);
    }
  }
  const Shape4 shape{2, 1, cfg.size, cfg.size};
  const Mask mask = random_mask(shape, rng, cfg.density);
  Tensor4 depth = random_tensor(shape, rng, 1.0, 3.0);
  depth.array() *= mask.tensor().array();
  const Tensor4 g = random_tensor({2, spec.out_channels, cfg.size, cfg.size}, rng);

  const ForwardResult fwd = forward(model, depth, mask);
  ModelGrads grads = backward(model, fwd.cache, g);
  if (cfg.corrupt) {
    for (auto& pg : grads) {
      pg.d_weights *= 1.0 + 1e-3;
      pg.d_bias *= 1.0 + 1e-3;
    }
  }
  auto loss = [&] { return dot(predict(model, depth, mask).values, g); };
  const std::string tag = "network(" + std::string(to_string(variant)) + ")";
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& p = model.layers[l];
    const std::string name = tag + ".layer" + std::to_string(l);
    chk.compare(name + ".weights", p.weights.data(), grads[l].d_weights.data(), p.weights.size(),
                loss, cfg.max_coords);
    chk.compare(name + ".bias", p.bias.data(), grads[l].d_bias.data(), p.bias.size(), loss,
                cfg.max_coords);
  }
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  if (cfg.trials < 1) throw ConfigError("gradcheck needs at least one trial");
  if (!(cfg.step > 0.0) || !(cfg.floor > 0.0)) throw ConfigError("gradcheck step and floor must be > 0");
  Rng rng(cfg.seed);
  Checker chk(cfg, rng);
  for (int t = 0; t < cfg.trials; ++t) {
    check_conv(chk, rng, 1 + t % 2, cfg);
    check_sparse_conv(chk, rng, 1 + t % 2, cfg);
    check_relu(chk, rng);
    check_concat(chk, rng);
    check_skip_sum(chk, rng);
    for (Variant v : {Variant::SparseConvNet, Variant::ConvNet, Variant::ConvNetPlusMask}) {
      check_network(chk, rng, v, cfg);
    }
  }
  return chk.report();
}

}  // namespace scnn
