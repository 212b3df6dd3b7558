#include "gmf/gmf.h"

#include <exception>
#include <new>
#include <string>

#include "gmf/error.hpp"
#include "gmf/landmarks.hpp"
#include "gmf/recovery.hpp"
#include "gmf/retrieval.hpp"
#include "gmf/scene.hpp"
#include "gmf/trainer.hpp"

#ifndef GMF_VERSION_STRING
#define GMF_VERSION_STRING "0.0.0"
#endif

struct gmf_scene {
  gmf::Scene scene;
};

struct gmf_model {
  gmf::Checkpoint checkpoint;
};

struct gmf_loss_log {
  std::vector<gmf::LossLogEntry> entries;
};

struct gmf_recovery {
  gmf::RecoveryResult result;
};

namespace {

thread_local std::string g_last_error;

gmf_status set_error(gmf_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

gmf_status to_status(gmf::ErrorCode code) {
  switch (code) {
    case gmf::ErrorCode::kInvalidArgument: return GMF_ERR_INVALID_ARGUMENT;
    case gmf::ErrorCode::kIo: return GMF_ERR_IO;
    case gmf::ErrorCode::kParse: return GMF_ERR_PARSE;
    case gmf::ErrorCode::kDegenerate: return GMF_ERR_DEGENERATE;
    case gmf::ErrorCode::kDisconnected: return GMF_ERR_DISCONNECTED;
    case gmf::ErrorCode::kNoTuples: return GMF_ERR_NO_TUPLES;
  }
  return GMF_ERR_INTERNAL;
}

// Runs `fn`, translating exceptions into status codes.
template <typename Fn>
gmf_status guarded(Fn&& fn) noexcept {
  try {
    fn();
    return GMF_OK;
  } catch (const gmf::Error& e) {
    return set_error(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(GMF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(GMF_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(GMF_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what) {
  if (!p) gmf::fail(gmf::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

gmf::Matrix rows_of(const double* data, size_t n, size_t dim) {
  gmf::Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (size_t i = 0; i < n; ++i) {
    for (size_t k = 0; k < dim; ++k) m(i, k) = data[i * dim + k];
  }
  return m;
}

void copy_out(const gmf::Matrix& m, double* out) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) out[i * m.cols() + k] = m(i, k);
  }
}

std::vector<gmf::Location> locations_of(const double* xy, size_t n) {
  std::vector<gmf::Location> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = {xy[2 * i], xy[2 * i + 1]};
  return out;
}

gmf::SceneConfig from_c(const gmf_scene_config& c) {
  gmf::SceneConfig s;
  switch (c.trajectory) {
    case GMF_TRAJECTORY_LOOP: s.trajectory = gmf::Trajectory::kLoop; break;
    case GMF_TRAJECTORY_FIGURE_EIGHT: s.trajectory = gmf::Trajectory::kFigureEight; break;
    case GMF_TRAJECTORY_RANDOM_WALK: s.trajectory = gmf::Trajectory::kRandomWalk; break;
    default: gmf::fail(gmf::ErrorCode::kInvalidArgument, "unknown trajectory");
  }
  s.n_poses = c.n_poses;
  s.conditions = c.conditions;
  s.obs_dim = c.obs_dim;
  s.condition_offset_scale = c.condition_offset_scale;
  s.noise_sigma = c.noise_sigma;
  s.extent = c.extent;
  s.length_scale = c.length_scale;
  s.heading_weight = c.heading_weight;
  s.warp = c.warp;
  s.seed = c.seed;
  s.traversal = c.traversal;
  return s;
}

gmf::LossConfig from_c(const gmf_loss_config& c) {
  gmf::LossConfig l;
  l.lambda = c.lambda;
  l.alpha = c.alpha;
  l.gamma = c.gamma;
  l.huber_delta = c.huber_delta;
  l.beta = c.beta;
  switch (c.vg_variant) {
    case GMF_VG_SQUARED: l.vg_variant = gmf::VgVariant::kSquared; break;
    case GMF_VG_HUBER: l.vg_variant = gmf::VgVariant::kHuber; break;
    default: gmf::fail(gmf::ErrorCode::kInvalidArgument, "unknown vg_variant");
  }
  switch (c.nv_variant) {
    case GMF_NV_TRIPLET: l.nv_variant = gmf::NvVariant::kTriplet; break;
    case GMF_NV_LAZY_TRIPLET: l.nv_variant = gmf::NvVariant::kLazyTriplet; break;
    case GMF_NV_QUADRUPLET: l.nv_variant = gmf::NvVariant::kQuadruplet; break;
    case GMF_NV_LAZY_QUADRUPLET: l.nv_variant = gmf::NvVariant::kLazyQuadruplet; break;
    default: gmf::fail(gmf::ErrorCode::kInvalidArgument, "unknown nv_variant");
  }
  return l;
}

gmf::TrainConfig from_c(const gmf_train_config& c) {
  gmf::TrainConfig t;
  t.r1 = c.r1;
  t.r2 = c.r2;
  if (c.max_heading >= 0.0) t.max_heading = c.max_heading;
  t.positives_per_anchor = c.positives_per_anchor;
  t.negatives_per_anchor = c.negatives_per_anchor;
  t.hard_fraction = c.hard_fraction;
  t.cache_refresh_iters = c.cache_refresh_iters;
  t.learning_rate = c.learning_rate;
  t.momentum = c.momentum;
  t.max_grad_norm = c.max_grad_norm;
  t.epochs = c.epochs;
  t.batch_anchors = c.batch_anchors;
  t.seed = c.seed;
  gmf::require(c.n_hidden <= GMF_MAX_HIDDEN_LAYERS, "too many hidden layers");
  t.hidden.assign(c.hidden, c.hidden + c.n_hidden);
  t.feature_dim = c.feature_dim;
  switch (c.activation) {
    case GMF_ACTIVATION_TANH: t.activation = gmf::Activation::kTanh; break;
    case GMF_ACTIVATION_RELU: t.activation = gmf::Activation::kRelu; break;
    case GMF_ACTIVATION_IDENTITY: t.activation = gmf::Activation::kIdentity; break;
    default: gmf::fail(gmf::ErrorCode::kInvalidArgument, "unknown activation");
  }
  t.normalize = c.normalize != 0;
  t.calibrate_lambda = c.calibrate_lambda != 0;
  t.loss = from_c(c.loss);
  return t;
}

gmf::RecoveryConfig from_c(const gmf_recover_config& c) {
  gmf::RecoveryConfig r;
  r.r1 = c.r1;
  r.completion_max_iters = c.completion_max_iters;
  r.completion_tol = c.completion_tol;
  r.smacof_max_iters = c.smacof_max_iters;
  r.smacof_tol = c.smacof_tol;
  return r;
}

}  // namespace

extern "C" {

const char* gmf_version(void) { return GMF_VERSION_STRING; }

const char* gmf_status_string(gmf_status status) {
  switch (status) {
    case GMF_OK: return "ok";
    case GMF_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case GMF_ERR_IO: return "io";
    case GMF_ERR_PARSE: return "parse";
    case GMF_ERR_DEGENERATE: return "degenerate";
    case GMF_ERR_DISCONNECTED: return "disconnected";
    case GMF_ERR_NO_TUPLES: return "no_tuples";
    case GMF_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* gmf_last_error(void) { return g_last_error.c_str(); }

void gmf_scene_config_default(gmf_scene_config* config) {
  if (!config) return;
  const gmf::SceneConfig d;
  *config = {GMF_TRAJECTORY_LOOP, d.n_poses, d.conditions, d.obs_dim,
             d.condition_offset_scale, d.noise_sigma, d.extent, d.length_scale,
             d.heading_weight, d.warp, d.seed, d.traversal};
}

gmf_status gmf_scene_config_validate(const gmf_scene_config* config) {
  return guarded([&] {
    need(config, "config");
    from_c(*config).validate();
  });
}

gmf_status gmf_scene_generate(const gmf_scene_config* config, gmf_scene** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = new gmf_scene{gmf::generate_scene(from_c(*config))};
  });
}

gmf_status gmf_scene_load(const char* path, gmf_scene** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new gmf_scene{gmf::load_scene(path)};
  });
}

gmf_status gmf_scene_save(const gmf_scene* scene, const char* path) {
  return guarded([&] {
    need(scene, "scene");
    need(path, "path");
    gmf::save_scene(scene->scene, path);
  });
}

gmf_status gmf_scene_select_condition(const gmf_scene* scene, const char* tag, gmf_scene** out) {
  return guarded([&] {
    need(scene, "scene");
    need(tag, "tag");
    need(out, "out");
    gmf::Scene sub = scene->scene.with_condition(tag);
    if (sub.images.size() < 2) {
      gmf::fail(gmf::ErrorCode::kInvalidArgument,
                std::string("condition '") + tag + "' selects fewer than 2 images");
    }
    *out = new gmf_scene{std::move(sub)};
  });
}

void gmf_scene_free(gmf_scene* scene) { delete scene; }

size_t gmf_scene_size(const gmf_scene* scene) { return scene ? scene->scene.images.size() : 0; }

size_t gmf_scene_obs_dim(const gmf_scene* scene) { return scene ? scene->scene.obs_dim : 0; }

size_t gmf_scene_condition_count(const gmf_scene* scene) {
  return scene ? scene->scene.conditions.size() : 0;
}

const char* gmf_scene_condition(const gmf_scene* scene, size_t index) {
  if (!scene || index >= scene->scene.conditions.size()) return nullptr;
  return scene->scene.conditions[index].c_str();
}

gmf_status gmf_scene_image(const gmf_scene* scene, size_t index, gmf_image_view* out) {
  return guarded([&] {
    need(scene, "scene");
    need(out, "out");
    gmf::require(index < scene->scene.images.size(), "image index out of range");
    const gmf::Image& img = scene->scene.images[index];
    *out = {img.id, img.location.x, img.location.y, img.heading, img.condition.c_str(),
            img.observation.data()};
  });
}

gmf_status gmf_scene_locations(const gmf_scene* scene, double* xy) {
  return guarded([&] {
    need(scene, "scene");
    need(xy, "xy");
    const auto& imgs = scene->scene.images;
    for (size_t i = 0; i < imgs.size(); ++i) {
      xy[2 * i] = imgs[i].location.x;
      xy[2 * i + 1] = imgs[i].location.y;
    }
  });
}

void gmf_loss_config_default(gmf_loss_config* config) {
  if (!config) return;
  const gmf::LossConfig d;
  *config = {d.lambda, d.alpha, d.gamma, d.huber_delta, d.beta,
             static_cast<gmf_vg_variant>(d.vg_variant),
             static_cast<gmf_nv_variant>(d.nv_variant)};
}

void gmf_train_config_default(gmf_train_config* config) {
  if (!config) return;
  const gmf::TrainConfig d;
  gmf_train_config c{};
  c.r1 = d.r1;
  c.r2 = d.r2;
  c.max_heading = -1.0;
  c.positives_per_anchor = d.positives_per_anchor;
  c.negatives_per_anchor = d.negatives_per_anchor;
  c.hard_fraction = d.hard_fraction;
  c.cache_refresh_iters = d.cache_refresh_iters;
  c.learning_rate = d.learning_rate;
  c.momentum = d.momentum;
  c.max_grad_norm = d.max_grad_norm;
  c.epochs = d.epochs;
  c.batch_anchors = d.batch_anchors;
  c.seed = d.seed;
  c.n_hidden = d.hidden.size();
  for (size_t k = 0; k < d.hidden.size(); ++k) c.hidden[k] = d.hidden[k];
  c.feature_dim = d.feature_dim;
  c.activation = static_cast<gmf_activation>(d.activation);
  c.normalize = d.normalize ? 1 : 0;
  c.calibrate_lambda = d.calibrate_lambda ? 1 : 0;
  gmf_loss_config_default(&c.loss);
  *config = c;
}

gmf_status gmf_train_config_validate(const gmf_train_config* config) {
  return guarded([&] {
    need(config, "config");
    from_c(*config).validate();
  });
}

gmf_status gmf_train(const gmf_scene* scene, const gmf_train_config* config, gmf_model** model,
                     gmf_loss_log** log, gmf_train_report* report) {
  return guarded([&] {
    need(scene, "scene");
    need(config, "config");
    need(model, "model");
    gmf::TrainResult r = gmf::train(scene->scene, from_c(*config));
    if (report) {
      *report = {r.checkpoint.lambda, r.anchor_visits, r.skipped_anchors, r.cache_refreshes,
                 r.log.size()};
    }
    if (log) *log = new gmf_loss_log{std::move(r.log)};
    *model = new gmf_model{std::move(r.checkpoint)};
  });
}

size_t gmf_loss_log_size(const gmf_loss_log* log) { return log ? log->entries.size() : 0; }

gmf_status gmf_loss_log_entry(const gmf_loss_log* log, size_t index, gmf_loss_entry* out) {
  return guarded([&] {
    need(log, "log");
    need(out, "out");
    gmf::require(index < log->entries.size(), "loss log index out of range");
    const auto& e = log->entries[index];
    *out = {e.iteration, e.loss, e.nv, e.vg};
  });
}

void gmf_loss_log_free(gmf_loss_log* log) { delete log; }

gmf_status gmf_model_load(const char* path, gmf_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new gmf_model{gmf::load_checkpoint(path)};
  });
}

gmf_status gmf_model_save(const gmf_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    gmf::save_checkpoint(model->checkpoint, path);
  });
}

void gmf_model_free(gmf_model* model) { delete model; }

size_t gmf_model_input_dim(const gmf_model* model) {
  return model ? model->checkpoint.model.input_dim() : 0;
}

size_t gmf_model_feature_dim(const gmf_model* model) {
  return model ? model->checkpoint.model.feature_dim() : 0;
}

double gmf_model_lambda(const gmf_model* model) { return model ? model->checkpoint.lambda : 0.0; }

gmf_status gmf_embed(const gmf_model* model, const gmf_scene* scene, double* features) {
  return guarded([&] {
    need(model, "model");
    need(scene, "scene");
    need(features, "features");
    copy_out(gmf::embed(model->checkpoint.model, scene->scene.observations()), features);
  });
}

gmf_status gmf_pairwise_sq_edm(const double* points, size_t n, size_t dim, double* out) {
  return guarded([&] {
    need(points, "points");
    need(out, "out");
    copy_out(gmf::pairwise_sq_edm(rows_of(points, n, dim)), out);
  });
}

gmf_status gmf_landmarks_greedy(const double* xy, size_t n, size_t k, uint64_t seed,
                                int64_t first, size_t* out) {
  return guarded([&] {
    need(xy, "xy");
    need(out, "out");
    std::optional<std::size_t> f;
    if (first >= 0) f = static_cast<std::size_t>(first);
    const auto idx = gmf::greedy_sample(locations_of(xy, n), k, seed, f);
    std::copy(idx.begin(), idx.end(), out);
  });
}

gmf_status gmf_landmarks_threshold(const double* xy, size_t n, double r_lm, size_t* out,
                                   size_t* count) {
  return guarded([&] {
    need(xy, "xy");
    need(out, "out");
    need(count, "count");
    const auto idx = gmf::threshold_sample(locations_of(xy, n), r_lm);
    std::copy(idx.begin(), idx.end(), out);
    *count = idx.size();
  });
}

gmf_status gmf_top1_retrieve(const double* queries, size_t n_queries, const double* landmarks,
                             size_t n_landmarks, size_t dim, int use_kdtree, size_t* out) {
  return guarded([&] {
    need(queries, "queries");
    need(landmarks, "landmarks");
    need(out, "out");
    const gmf::Matrix q = rows_of(queries, n_queries, dim);
    gmf::Matrix l = rows_of(landmarks, n_landmarks, dim);
    std::vector<std::size_t> idx;
    if (use_kdtree) {
      gmf::require(n_landmarks >= 1, "top1_retrieve: no landmarks");
      idx = gmf::KdTree(std::move(l)).nearest(q);
    } else {
      idx = gmf::top1_retrieve(q, l);
    }
    std::copy(idx.begin(), idx.end(), out);
  });
}

gmf_status gmf_accuracy_curve(const size_t* retrieved, const double* query_xy, size_t n_queries,
                              const double* landmark_xy, size_t n_landmarks,
                              const double* tolerances, size_t n_tolerances, double* accuracy,
                              double* upper_bound) {
  return guarded([&] {
    need(retrieved, "retrieved");
    need(query_xy, "query_xy");
    need(landmark_xy, "landmark_xy");
    need(tolerances, "tolerances");
    need(accuracy, "accuracy");
    need(upper_bound, "upper_bound");
    const auto curve = gmf::accuracy_curve(
        std::span<const std::size_t>(retrieved, n_queries), locations_of(query_xy, n_queries),
        locations_of(landmark_xy, n_landmarks),
        std::span<const double>(tolerances, n_tolerances));
    std::copy(curve.accuracy.begin(), curve.accuracy.end(), accuracy);
    std::copy(curve.upper_bound.begin(), curve.upper_bound.end(), upper_bound);
  });
}

gmf_status gmf_pearson(const double* a, const double* b, size_t n, double* out) {
  return guarded([&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    *out = gmf::pearson(std::span<const double>(a, n), std::span<const double>(b, n));
  });
}

gmf_status gmf_distance_correlation(const double* xy, const double* features, size_t n,
                                    size_t dim, double max_geo, double* out,
                                    size_t* pair_count) {
  return guarded([&] {
    need(xy, "xy");
    need(features, "features");
    need(out, "out");
    std::optional<double> limit;
    if (max_geo > 0.0) limit = max_geo;
    const auto s = gmf::distance_scatter(locations_of(xy, n), rows_of(features, n, dim), limit);
    *out = gmf::pearson(s.feat_sq, s.geo_sq);
    if (pair_count) *pair_count = s.geo_sq.size();
  });
}

void gmf_recover_config_default(gmf_recover_config* config) {
  if (!config) return;
  const gmf::RecoveryConfig d;
  *config = {d.r1, d.completion_max_iters, d.completion_tol, d.smacof_max_iters, d.smacof_tol};
}

gmf_status gmf_recover_config_validate(const gmf_recover_config* config) {
  return guarded([&] {
    need(config, "config");
    from_c(*config).validate();
  });
}

gmf_status gmf_recover(const double* features, size_t n, size_t dim, double lambda,
                       const gmf_recover_config* config, gmf_recovery** out) {
  return guarded([&] {
    need(features, "features");
    need(config, "config");
    need(out, "out");
    *out = new gmf_recovery{
        gmf::recover_trajectory(rows_of(features, n, dim), lambda, from_c(*config))};
  });
}

void gmf_recovery_free(gmf_recovery* recovery) { delete recovery; }

gmf_status gmf_recovery_summary_get(const gmf_recovery* recovery, gmf_recovery_summary* out) {
  return guarded([&] {
    need(recovery, "recovery");
    need(out, "out");
    const auto& r = recovery->result;
    const auto n = static_cast<size_t>(r.masked.size());
    const auto observed = static_cast<size_t>(r.masked.mask.cast<int>().sum());
    *out = {n,
            (observed - n) / 2,
            r.completion.objective,
            r.completion.iterations,
            r.completion.converged ? 1 : 0,
            r.refined.iterations,
            r.refined.converged ? 1 : 0};
  });
}

gmf_status gmf_recovery_points(const gmf_recovery* recovery, gmf_recovery_method method,
                               double* xy) {
  return guarded([&] {
    need(recovery, "recovery");
    need(xy, "xy");
    switch (method) {
      case GMF_RECOVERY_CLASSICAL_MDS: copy_out(recovery->result.mds_points, xy); break;
      case GMF_RECOVERY_SMACOF: copy_out(recovery->result.refined.points, xy); break;
      default: gmf::fail(gmf::ErrorCode::kInvalidArgument, "unknown recovery method");
    }
  });
}

gmf_status gmf_recovery_masked_edm(const gmf_recovery* recovery, double* d, double* mask) {
  return guarded([&] {
    need(recovery, "recovery");
    const auto& m = recovery->result.masked;
    if (d) copy_out(m.d, d);
    if (mask) copy_out(m.mask.cast<double>(), mask);
  });
}

gmf_status gmf_recovery_completed_edm(const gmf_recovery* recovery, double* d) {
  return guarded([&] {
    need(recovery, "recovery");
    need(d, "d");
    copy_out(recovery->result.completed_edm, d);
  });
}

size_t gmf_recovery_stress_trace_size(const gmf_recovery* recovery) {
  return recovery ? recovery->result.refined.stress_trace.size() : 0;
}

gmf_status gmf_recovery_stress_trace(const gmf_recovery* recovery, double* out) {
  return guarded([&] {
    need(recovery, "recovery");
    need(out, "out");
    const auto& t = recovery->result.refined.stress_trace;
    std::copy(t.begin(), t.end(), out);
  });
}

gmf_status gmf_procrustes(const double* estimate, const double* truth, size_t n, int with_scale,
                          int allow_reflection, double* aligned, double* rmse) {
  return guarded([&] {
    need(estimate, "estimate");
    need(truth, "truth");
    need(rmse, "rmse");
    const auto a = gmf::procrustes_align(rows_of(estimate, n, 2), rows_of(truth, n, 2),
                                         with_scale != 0, allow_reflection != 0);
    if (aligned) copy_out(a.aligned, aligned);
    *rmse = a.rmse;
  });
}

double gmf_path_length(const double* xy, size_t n) {
  if (!xy || n < 2) return 0.0;
  return gmf::path_length(rows_of(xy, n, 2));
}

}  // extern "C"
