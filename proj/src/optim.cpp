#include "scnn/optim.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace scnn {

std::string_view to_string(LossKind k) { return k == LossKind::L2 ? "l2" : "l1"; }

LossKind parse_loss(std::string_view name) {
  if (name == "l2" || name == "L2") return LossKind::L2;
  if (name == "l1" || name == "L1") return LossKind::L1;
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

LossResult masked_loss(const Tensor4& pred, const Tensor4& target, const Mask& valid, LossKind kind) {
  pred.require_same_shape(target, "masked_loss");
  if (pred.channels() != 1) throw ShapeError("masked_loss expects single-channel predictions");
  valid.require_aligned(pred, "masked_loss");
  const Eigen::Index count = valid.count();
  if (count == 0) throw DegenerateError("masked_loss: no valid target pixels");

  const auto v = valid.tensor().array();
  const Tensor4::Array err = (v != 0.0).select(pred.array() - target.array(), 0.0);
  const double n = static_cast<double>(count);
  LossResult r;
  if (kind == LossKind::L2) {
    r.value = err.square().sum() / n;
    r.grad = Tensor4(pred.shape(), err * (2.0 / n));
  } else {
    r.value = err.abs().sum() / n;
    r.grad = Tensor4(pred.shape(), err.sign() / n);
  }
  return r;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
}

AdamState AdamState::zeros_like(const ModelState& model) {
  AdamState s;
  for (const auto& p : model.layers) {
    s.first_moment.push_back({Tensor4::zeros(p.weights.shape()), Eigen::VectorXd::Zero(p.bias.size())});
    s.second_moment.push_back({Tensor4::zeros(p.weights.shape()), Eigen::VectorXd::Zero(p.bias.size())});
  }
  return s;
}

void adam_step(ModelState& model, const ModelGrads& grads, AdamState& state, const TrainConfig& cfg) {
  if (grads.size() != model.layers.size() || state.first_moment.size() != model.layers.size()) {
    throw ShapeError("adam_step: gradient/state layer count does not match the model");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);

  auto update = [&](auto&& param, const auto& g, auto&& m, auto&& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
    param -= cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.adam_eps);
  };

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    ConvParams& p = model.layers[l];
    p.weights.require_same_shape(grads[l].d_weights, "adam_step");
    if (grads[l].d_bias.size() != p.bias.size()) throw ShapeError("adam_step: bias gradient size");
    update(p.weights.array(), grads[l].d_weights.array(), state.first_moment[l].d_weights.array(),
           state.second_moment[l].d_weights.array());
    update(p.bias.array(), grads[l].d_bias.array(), state.first_moment[l].d_bias.array(),
           state.second_moment[l].d_bias.array());
  }
}

Batch make_batch(std::span<const DepthMap> sparse, std::span<const DepthMap> dense) {
  if (sparse.size() != dense.size()) throw ShapeError("make_batch: sparse/dense count mismatch");
  Tensor4 depth = stack_depths(sparse);
  Tensor4 target = stack_depths(dense);
  depth.require_same_shape(target, "make_batch");
  Mask mask = Mask::observed(depth);
  Mask valid = Mask::observed(target);
  return {std::move(depth), std::move(mask), std::move(target), std::move(valid)};
}

namespace {

constexpr std::uint64_t kSceneStream = 0x5343454e45ULL;
constexpr std::uint64_t kDropoutStream = 0x44524f50ULL;
constexpr std::uint64_t kPickStream = 0x5049434bULL;

}  // namespace

SyntheticSource::SyntheticSource(SceneConfig scene, double keep_prob, int batch_size,
                                 std::uint64_t seed)
    : scene_(scene), keep_prob_(keep_prob), batch_size_(batch_size), seed_(seed) {
  scene_.validate();
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("keep probability must lie in (0, 1]");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

Batch SyntheticSource::batch(std::int64_t iteration) const {
  std::vector<DepthMap> sparse, dense;
  for (int j = 0; j < batch_size_; ++j) {
    SceneConfig cfg = scene_;
    const auto it = static_cast<std::uint64_t>(iteration);
    cfg.seed = derive_seed(derive_seed(seed_, kSceneStream), it, j);
    dense.push_back(generate_scene(cfg));
    sparse.push_back(sparsify(dense.back(), keep_prob_, derive_seed(derive_seed(seed_, kDropoutStream), it, j)));
  }
  return make_batch(sparse, dense);
}

DatasetSource::DatasetSource(std::vector<DepthMap> dense, double keep_prob, int batch_size,
                             std::uint64_t seed)
    : dense_(std::move(dense)), keep_prob_(keep_prob), batch_size_(batch_size), seed_(seed) {
  if (dense_.empty()) throw ConfigError("dataset source needs at least one depth map");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("keep probability must lie in (0, 1]");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

Batch DatasetSource::batch(std::int64_t iteration) const {
  std::vector<DepthMap> sparse, dense;
  for (int j = 0; j < batch_size_; ++j) {
    const auto it = static_cast<std::uint64_t>(iteration);
    const std::size_t pick = derive_seed(derive_seed(seed_, kPickStream), it, j) % dense_.size();
    dense.push_back(dense_[pick]);
    sparse.push_back(sparsify(dense.back(), keep_prob_, derive_seed(derive_seed(seed_, kDropoutStream), it, j)));
  }
  return make_batch(sparse, dense);
}

TrainResult train(const NetworkSpec& spec, const DataSource& source, const TrainConfig& cfg,
                  const Evaluator& evaluator) {
  cfg.validate();
  TrainResult result{build(spec, cfg.seed), {}};
  AdamState adam = AdamState::zeros_like(result.model);
  for (int it = 0; it < cfg.iterations; ++it) {
    const Batch b = source.batch(it);
    ForwardResult fwd = forward(result.model, b.depth, b.mask);
    LossResult loss;
    try {
      loss = masked_loss(fwd.prediction, b.target, b.valid, cfg.loss);
    } catch (const DegenerateError& e) {
      throw DegenerateError("batch " + std::to_string(it) + ": " + e.what());
    }
    const ModelGrads grads = backward(result.model, fwd.cache, loss.grad);
    adam_step(result.model, grads, adam, cfg);

    TrainLogEntry entry{it + 1, loss.value, std::nullopt};
    if (evaluator && cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0) {
      entry.eval_mae = evaluator(result.model);
    }
    result.log.push_back(entry);
  }
  return result;
}

void write_log_csv(std::span<const TrainLogEntry> log, std::ostream& os) {
  os << "iter,loss,eval_mae\n";
  char buf[64];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%.17g", e.loss);
    os << e.iteration << "," << buf << ",";
    if (e.eval_mae) {
      std::snprintf(buf, sizeof buf, "%.17g", *e.eval_mae);
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace scnn
