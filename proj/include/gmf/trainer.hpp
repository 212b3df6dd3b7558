#pragma once

// Tuple mining with hard negatives and the SGD training loop.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gmf/losses.hpp"
#include "gmf/model.hpp"
#include "gmf/scene.hpp"

namespace gmf {

struct TrainConfig {
  double r1 = 1.0;  // meters
  double r2 = 4.0;  // meters
  std::optional<double> max_heading;  // radians; off when empty
  std::size_t positives_per_anchor = 6;
  std::size_t negatives_per_anchor = 6;
  double hard_fraction = 0.5;
  std::size_t cache_refresh_iters = 400;  // anchors between cache refreshes
  double learning_rate = 0.003;
  double momentum = 0.0;
  double max_grad_norm = 10.0;  // per-update gradient norm clip; 0 disables
  std::size_t epochs = 30;
  std::size_t batch_anchors = 2;
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t feature_dim = 16;
  Activation activation = Activation::kTanh;
  bool normalize = false;
  bool calibrate_lambda = true;  // otherwise loss.lambda is used as given
  LossConfig loss;

  void validate() const;
};

struct TrainingTuple {
  std::size_t anchor = 0;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;

  /// anchor, positives, negatives in stacking order.
  std::vector<std::size_t> members() const;
};

/// Draws positives uniformly from the anchor's positive set; the
/// ceil(hard_fraction * N) negatives closest to the anchor in `feature_cache`
/// come first, the rest are drawn uniformly from the remaining negatives.
/// Returns nothing when the anchor has too few positives or negatives.
std::optional<TrainingTuple> mine_tuple(std::size_t anchor,
                                        std::span<const Location> locations,
                                        std::span<const double> headings,
                                        const Matrix& feature_cache,
                                        const TrainConfig& config,
                                        std::mt19937_64& rng);

/// r1^2 over the largest squared feature distance among positive pairs.
double calibrate_lambda(const EmbeddingModel& model, const Scene& scene,
                        const TrainConfig& config);

struct TupleEvaluation {
  CombinedLoss loss;
  std::vector<double> param_grads;
};

/// Loss of one tuple (negative visual loss plus gamma times the
/// visual-geometric loss over every positive pair among the tuple members)
/// and its gradient with respect to the model parameters.
TupleEvaluation evaluate_tuple(const EmbeddingModel& model, const Matrix& observations,
                               std::span<const Location> locations,
                               std::span<const double> headings,
                               const TrainingTuple& tuple, const TrainConfig& config);

/// Gradient steps on a single frozen tuple. A step that would increase the
/// loss is retried with the rate halved, at most 10 times, and skipped if it
/// still does. Returns the loss before each step and after the last one.
std::vector<double> descend_on_tuple(EmbeddingModel& model, const Matrix& observations,
                                     std::span<const Location> locations,
                                     std::span<const double> headings,
                                     const TrainingTuple& tuple,
                                     const TrainConfig& config, std::size_t steps);

struct LossLogEntry {
  std::size_t iteration = 0;
  double loss = 0.0;
  double nv = 0.0;
  double vg = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossLogEntry> log;
  std::size_t anchor_visits = 0;
  std::size_t skipped_anchors = 0;
  std::size_t cache_refreshes = 0;
};

TrainResult train(const Scene& scene, const TrainConfig& config);

}  // namespace gmf
