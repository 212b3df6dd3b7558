#include "gmf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gmf/error.hpp"

namespace gmf {

namespace {

bool is_positive(std::span<const Location> loc, std::span<const double> heading,
                 std::size_t i, std::size_t j, const TrainConfig& c) {
  if (sq_distance(loc[i], loc[j]) > c.r1 * c.r1) return false;
  if (c.max_heading && !heading.empty() &&
      wrapped_angle_difference(heading[i], heading[j]) > *c.max_heading) {
    return false;
  }
  return true;
}

// k distinct draws from `pool`, partial Fisher-Yates.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                    std::size_t k,
                                                    std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

void TrainConfig::validate() const {
  require(r1 > 0.0 && r1 < r2, "train: need 0 < r1 < r2");
  require(positives_per_anchor >= 1, "train.positives_per_anchor must be >= 1");
  require(negatives_per_anchor >= 1, "train.negatives_per_anchor must be >= 1");
  require(hard_fraction >= 0.0 && hard_fraction <= 1.0,
          "train.hard_fraction must lie in [0, 1]");
  require(cache_refresh_iters >= 1, "train.cache_refresh_iters must be >= 1");
  require(learning_rate > 0.0, "train.learning_rate must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, "train.momentum must lie in [0, 1)");
  require(max_grad_norm >= 0.0, "train.max_grad_norm must be >= 0");
  require(epochs >= 1, "train.epochs must be >= 1");
  require(batch_anchors >= 1, "train.batch_anchors must be >= 1");
  require(feature_dim >= 1, "train.feature_dim must be >= 1");
  if (max_heading) require(*max_heading >= 0.0, "train.max_heading must be >= 0");
  if (is_quadruplet(loss.nv_variant)) {
    require(negatives_per_anchor >= 2,
            "quadruplet losses need negatives_per_anchor >= 2");
  }
  LossConfig probe = loss;
  if (calibrate_lambda) probe.lambda = 1.0;
  probe.validate();
}

std::vector<std::size_t> TrainingTuple::members() const {
  std::vector<std::size_t> out{anchor};
  out.insert(out.end(), positives.begin(), positives.end());
  out.insert(out.end(), negatives.begin(), negatives.end());
  return out;
}

std::optional<TrainingTuple> mine_tuple(std::size_t anchor,
                                        std::span<const Location> locations,
                                        std::span<const double> headings,
                                        const Matrix& feature_cache,
                                        const TrainConfig& config,
                                        std::mt19937_64& rng) {
  require(anchor < locations.size(), "mine_tuple: anchor out of range");
  require(static_cast<std::size_t>(feature_cache.rows()) == locations.size(),
          "mine_tuple: feature cache does not cover the training set");
  const double r2_sq = config.r2 * config.r2;
  std::vector<std::size_t> pos, neg;
  for (std::size_t j = 0; j < locations.size(); ++j) {
    if (j == anchor) continue;
    if (is_positive(locations, headings, anchor, j, config)) {
      pos.push_back(j);
    } else if (sq_distance(locations[anchor], locations[j]) >= r2_sq) {
      neg.push_back(j);
    }
  }
  if (pos.size() < config.positives_per_anchor ||
      neg.size() < config.negatives_per_anchor) {
    return std::nullopt;
  }

  TrainingTuple t;
  t.anchor = anchor;
  t.positives = sample_without_replacement(std::move(pos), config.positives_per_anchor, rng);

  const auto n_hard = std::min<std::size_t>(
      config.negatives_per_anchor,
      static_cast<std::size_t>(std::ceil(config.hard_fraction *
                                         static_cast<double>(config.negatives_per_anchor))));
  if (n_hard > 0) {
    const auto f = feature_cache.row(anchor);
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(neg.size());
    for (std::size_t j : neg) ranked.emplace_back((feature_cache.row(j) - f).squaredNorm(), j);
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n_hard),
                      ranked.end());
    std::vector<std::size_t> rest;
    rest.reserve(neg.size() - n_hard);
    for (std::size_t k = 0; k < ranked.size(); ++k) {
      if (k < n_hard) {
        t.negatives.push_back(ranked[k].second);
      } else {
        rest.push_back(ranked[k].second);
      }
    }
    // restore index order so the uniform draw does not depend on the ranking
    std::sort(rest.begin(), rest.end());
    neg = std::move(rest);
  }
  auto random_negs =
      sample_without_replacement(std::move(neg), config.negatives_per_anchor - n_hard, rng);
  t.negatives.insert(t.negatives.end(), random_negs.begin(), random_negs.end());
  return t;
}

double calibrate_lambda(const EmbeddingModel& model, const Scene& scene,
                        const TrainConfig& config) {
  const Matrix features = embed(model, scene.observations());
  const auto loc = scene.locations();
  const auto head = scene.headings();
  double max_d = 0.0;
  for (std::size_t i = 0; i < loc.size(); ++i) {
    for (std::size_t j = i + 1; j < loc.size(); ++j) {
      if (!is_positive(loc, head, i, j, config)) continue;
      max_d = std::max(max_d, (features.row(i) - features.row(j)).squaredNorm());
    }
  }
  if (!(max_d > 0.0)) {
    fail(ErrorCode::kDegenerate,
         "cannot calibrate lambda: all positive pairs have identical features");
  }
  return config.r1 * config.r1 / max_d;
}

TupleEvaluation evaluate_tuple(const EmbeddingModel& model, const Matrix& observations,
                               std::span<const Location> locations,
                               std::span<const double> headings,
                               const TrainingTuple& tuple, const TrainConfig& config) {
  const auto members = tuple.members();
  Matrix batch(static_cast<Eigen::Index>(members.size()), observations.cols());
  std::vector<Location> member_loc;
  member_loc.reserve(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) {
    batch.row(static_cast<Eigen::Index>(k)) = observations.row(members[k]);
    member_loc.push_back(locations[members[k]]);
  }
  std::vector<IndexPair> vg_pairs;
  if (config.loss.gamma != 0.0) {
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        if (members[a] != members[b] &&
            is_positive(locations, headings, members[a], members[b], config)) {
          vg_pairs.emplace_back(a, b);
        }
      }
    }
  }
  const ForwardCache cache = model.forward_cached(batch);
  TupleEvaluation out;
  out.loss = combined_loss(cache.features, tuple.positives.size(), tuple.negatives.size(),
                           member_loc, vg_pairs, config.loss);
  out.param_grads = model.backward(cache, out.loss.grads);
  return out;
}

std::vector<double> descend_on_tuple(EmbeddingModel& model, const Matrix& observations,
                                     std::span<const Location> locations,
                                     std::span<const double> headings,
                                     const TrainingTuple& tuple,
                                     const TrainConfig& config, std::size_t steps) {
  std::vector<double> trace;
  TupleEvaluation eval = evaluate_tuple(model, observations, locations, headings, tuple, config);
  trace.push_back(eval.loss.value);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::vector<double> start(model.parameters().begin(), model.parameters().end());
    double lr = config.learning_rate;
    bool accepted = false;
    for (int attempt = 0; attempt <= 10 && !accepted; ++attempt, lr *= 0.5) {
      auto p = model.parameters();
      for (std::size_t k = 0; k < p.size(); ++k) p[k] = start[k] - lr * eval.param_grads[k];
      TupleEvaluation next =
          evaluate_tuple(model, observations, locations, headings, tuple, config);
      if (next.loss.value <= trace.back()) {
        eval = std::move(next);
        accepted = true;
      }
    }
    if (!accepted) std::copy(start.begin(), start.end(), model.parameters().begin());
    trace.push_back(eval.loss.value);
  }
  return trace;
}

TrainResult train(const Scene& scene, const TrainConfig& config) {
  config.validate();
  scene.validate();

  std::vector<std::size_t> sizes{scene.obs_dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(config.feature_dim);

  TrainResult result{
      {EmbeddingModel::initialized(sizes, config.activation, config.normalize, config.seed),
       config.loss.lambda},
      {}, 0, 0, 0};
  EmbeddingModel& model = result.checkpoint.model;

  TrainConfig cfg = config;
  if (cfg.calibrate_lambda) {
    cfg.loss.lambda = calibrate_lambda(model, scene, cfg);
    result.checkpoint.lambda = cfg.loss.lambda;
  }

  const Matrix obs = scene.observations();
  const auto loc = scene.locations();
  const auto head = scene.headings();
  const std::size_t n = scene.images.size();

  // Mining and parameter initialization use separate streams.
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Matrix cache = embed(model, obs);

  std::vector<double> grad_sum(model.parameters().size(), 0.0);
  std::vector<double> velocity(model.parameters().size(), 0.0);
  std::size_t in_batch = 0;
  LossLogEntry pending;
  bool any_tuple = false;

  auto apply_update = [&]() {
    auto p = model.parameters();
    if (cfg.max_grad_norm > 0.0) {
      double sq = 0.0;
      for (double g : grad_sum) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > cfg.max_grad_norm) {
        for (double& g : grad_sum) g *= cfg.max_grad_norm / norm;
      }
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      velocity[k] = cfg.momentum * velocity[k] + grad_sum[k];
      p[k] -= cfg.learning_rate * velocity[k];
    }
    std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
    pending.iteration = result.log.size();
    result.log.push_back(pending);
    pending = {};
    in_batch = 0;
  };

  std::vector<std::size_t> order(n);
  std::size_t iterated = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t anchor : order) {
      auto tuple = mine_tuple(anchor, loc, head, cache, cfg, rng);
      if (tuple) {
        any_tuple = true;
        ++result.anchor_visits;
        const TupleEvaluation eval = evaluate_tuple(model, obs, loc, head, *tuple, cfg);
        if (!std::isfinite(eval.loss.value)) {
          fail(ErrorCode::kDegenerate, "training diverged after " +
                                           std::to_string(result.log.size()) +
                                           " updates; lower learning_rate or max_grad_norm");
        }
        for (std::size_t k = 0; k < grad_sum.size(); ++k) grad_sum[k] += eval.param_grads[k];
        pending.loss += eval.loss.value;
        pending.nv += eval.loss.nv;
        pending.vg += eval.loss.vg;
        if (++in_batch == cfg.batch_anchors) apply_update();
      } else {
        ++result.skipped_anchors;
      }
      if (++iterated % cfg.cache_refresh_iters == 0) {
        cache = embed(model, obs);
        ++result.cache_refreshes;
      }
    }
    if (epoch == 0 && !any_tuple) {
      fail(ErrorCode::kNoTuples,
           "no anchor has enough positives and negatives for the configured radii and counts");
    }
  }
  if (in_batch > 0) apply_update();
  return result;
}

}  // namespace gmf
