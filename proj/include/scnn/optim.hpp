#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "scnn/data.hpp"
#include "scnn/network.hpp"

namespace scnn {

enum class LossKind { L2, L1 };

std::string_view to_string(LossKind k);
LossKind parse_loss(std::string_view name);

struct LossResult {
  double value = 0.0;
  Tensor4 grad;
};

/// Mean squared (L2) or absolute (L1) error over pixels with valid = 1.
/// The gradient is zero on invalid pixels, and the L1 subgradient is 0 where
/// pred == target.
LossResult masked_loss(const Tensor4& pred, const Tensor4& target, const Mask& valid, LossKind kind);

struct TrainConfig {
  LossKind loss = LossKind::L2;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int iterations = 0;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int eval_every = 0;

  void validate() const;
};

struct AdamState {
  ModelGrads first_moment;
  ModelGrads second_moment;
  std::int64_t step = 0;

  static AdamState zeros_like(const ModelState& model);
};

/// One bias-corrected Adam update, in place.
void adam_step(ModelState& model, const ModelGrads& grads, AdamState& state, const TrainConfig& cfg);

/// One training batch: sparse input with its mask, dense target with its
/// validity.
struct Batch {
  Tensor4 depth;
  Mask mask;
  Tensor4 target;
  Mask valid;
};

/// Deterministic batch stream: batch(i) depends only on the source's
/// construction arguments and `i`.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual Batch batch(std::int64_t iteration) const = 0;
};

Batch make_batch(std::span<const DepthMap> sparse, std::span<const DepthMap> dense);

/// Fresh procedural scenes every iteration, sparsified at `keep_prob`.
class SyntheticSource : public DataSource {
 public:
  SyntheticSource(SceneConfig scene, double keep_prob, int batch_size, std::uint64_t seed);
  Batch batch(std::int64_t iteration) const override;

 private:
  SceneConfig scene_;
  double keep_prob_;
  int batch_size_;
  std::uint64_t seed_;
};

/// Samples from a fixed set of dense maps, re-sparsifying every draw.
class DatasetSource : public DataSource {
 public:
  DatasetSource(std::vector<DepthMap> dense, double keep_prob, int batch_size, std::uint64_t seed);
  Batch batch(std::int64_t iteration) const override;

 private:
  std::vector<DepthMap> dense_;
  double keep_prob_;
  int batch_size_;
  std::uint64_t seed_;
};

struct TrainLogEntry {
  std::int64_t iteration;
  double loss;
  std::optional<double> eval_mae;
};

struct TrainResult {
  ModelState model;
  std::vector<TrainLogEntry> log;
};

/// Returns an evaluation MAE for the current model.
using Evaluator = std::function<double(const ModelState&)>;

/// Runs `cfg.iterations` steps of forward, loss, backward and Adam. The
/// model is built from (spec, cfg.seed); entry i of the log holds the loss
/// of the batch consumed by step i+1. When `evaluator` is set it runs after
/// every `eval_every`-th step.
TrainResult train(const NetworkSpec& spec, const DataSource& source, const TrainConfig& cfg,
                  const Evaluator& evaluator = {});

/// `iter,loss,eval_mae` with eval_mae empty when not evaluated.
void write_log_csv(std::span<const TrainLogEntry> log, std::ostream& os);

}  // namespace scnn
