/*
 * C interface to the gmf library: geometrically mappable feature learning,
 * retrieval evaluation and trajectory recovery.
 *
 * Objects are opaque handles created by gmf_*_create/generate/load/train and
 * released with the matching gmf_*_free. Every fallible call returns a
 * gmf_status; on failure gmf_last_error() describes the problem until the
 * next failing call on the same thread. Matrices are row-major doubles.
 */
#ifndef GMF_GMF_H
#define GMF_GMF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(GMF_BUILDING_LIBRARY)
#    define GMF_API __declspec(dllexport)
#  else
#    define GMF_API __declspec(dllimport)
#  endif
#else
#  define GMF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gmf_status {
  GMF_OK = 0,
  GMF_ERR_INVALID_ARGUMENT = 1,
  GMF_ERR_IO = 2,
  GMF_ERR_PARSE = 3,
  GMF_ERR_DEGENERATE = 4,
  GMF_ERR_DISCONNECTED = 5,
  GMF_ERR_NO_TUPLES = 6,
  GMF_ERR_INTERNAL = 7
} gmf_status;

GMF_API const char* gmf_version(void);
GMF_API const char* gmf_status_string(gmf_status status);
GMF_API const char* gmf_last_error(void);

/* ---- scenes ------------------------------------------------------------ */

typedef enum gmf_trajectory {
  GMF_TRAJECTORY_LOOP = 0,
  GMF_TRAJECTORY_FIGURE_EIGHT = 1,
  GMF_TRAJECTORY_RANDOM_WALK = 2
} gmf_trajectory;

typedef struct gmf_scene_config {
  gmf_trajectory trajectory;
  size_t n_poses;
  size_t conditions;
  size_t obs_dim;
  double condition_offset_scale;
  double noise_sigma;
  double extent;
  double length_scale;
  double heading_weight;
  double warp;
  uint64_t seed;
  uint32_t traversal;
} gmf_scene_config;

typedef struct gmf_image_view {
  int64_t id;
  double x;
  double y;
  double heading;
  const char* condition;    /* valid while the scene lives */
  const double* observation; /* obs_dim values, valid while the scene lives */
} gmf_image_view;

typedef struct gmf_scene gmf_scene;

GMF_API void gmf_scene_config_default(gmf_scene_config* config);
GMF_API gmf_status gmf_scene_config_validate(const gmf_scene_config* config);
GMF_API gmf_status gmf_scene_generate(const gmf_scene_config* config, gmf_scene** out);
GMF_API gmf_status gmf_scene_load(const char* path, gmf_scene** out);
GMF_API gmf_status gmf_scene_save(const gmf_scene* scene, const char* path);
/* Images of one condition tag; fails if the tag matches fewer than 2 images. */
GMF_API gmf_status gmf_scene_select_condition(const gmf_scene* scene, const char* tag,
                                              gmf_scene** out);
GMF_API void gmf_scene_free(gmf_scene* scene);
GMF_API size_t gmf_scene_size(const gmf_scene* scene);
GMF_API size_t gmf_scene_obs_dim(const gmf_scene* scene);
GMF_API size_t gmf_scene_condition_count(const gmf_scene* scene);
GMF_API const char* gmf_scene_condition(const gmf_scene* scene, size_t index);
GMF_API gmf_status gmf_scene_image(const gmf_scene* scene, size_t index, gmf_image_view* out);
/* xy receives 2 * size values (x0, y0, x1, y1, ...). */
GMF_API gmf_status gmf_scene_locations(const gmf_scene* scene, double* xy);

/* ---- losses and training ------------------------------------------------ */

typedef enum gmf_vg_variant { GMF_VG_SQUARED = 0, GMF_VG_HUBER = 1 } gmf_vg_variant;

typedef enum gmf_nv_variant {
  GMF_NV_TRIPLET = 0,
  GMF_NV_LAZY_TRIPLET = 1,
  GMF_NV_QUADRUPLET = 2,
  GMF_NV_LAZY_QUADRUPLET = 3
} gmf_nv_variant;

typedef enum gmf_activation {
  GMF_ACTIVATION_TANH = 0,
  GMF_ACTIVATION_RELU = 1,
  GMF_ACTIVATION_IDENTITY = 2
} gmf_activation;

typedef struct gmf_loss_config {
  double lambda; /* used only when the train config disables calibration */
  double alpha;
  double gamma;
  double huber_delta;
  double beta;
  gmf_vg_variant vg_variant;
  gmf_nv_variant nv_variant;
} gmf_loss_config;

#define GMF_MAX_HIDDEN_LAYERS 8

typedef struct gmf_train_config {
  double r1;
  double r2;
  double max_heading; /* radians; negative disables the heading filter */
  size_t positives_per_anchor;
  size_t negatives_per_anchor;
  double hard_fraction;
  size_t cache_refresh_iters;
  double learning_rate;
  double momentum;
  double max_grad_norm; /* 0 disables clipping */
  size_t epochs;
  size_t batch_anchors;
  uint64_t seed;
  size_t n_hidden;
  size_t hidden[GMF_MAX_HIDDEN_LAYERS];
  size_t feature_dim;
  gmf_activation activation;
  int normalize;
  int calibrate_lambda;
  gmf_loss_config loss;
} gmf_train_config;

typedef struct gmf_train_report {
  double lambda;
  size_t anchor_visits;
  size_t skipped_anchors;
  size_t cache_refreshes;
  size_t iterations;
} gmf_train_report;

typedef struct gmf_loss_entry {
  size_t iteration;
  double loss;
  double nv;
  double vg;
} gmf_loss_entry;

typedef struct gmf_model gmf_model;
typedef struct gmf_loss_log gmf_loss_log;

GMF_API void gmf_loss_config_default(gmf_loss_config* config);
GMF_API void gmf_train_config_default(gmf_train_config* config);
GMF_API gmf_status gmf_train_config_validate(const gmf_train_config* config);

/* `log` and `report` may be NULL. */
GMF_API gmf_status gmf_train(const gmf_scene* scene, const gmf_train_config* config,
                             gmf_model** model, gmf_loss_log** log, gmf_train_report* report);

GMF_API size_t gmf_loss_log_size(const gmf_loss_log* log);
GMF_API gmf_status gmf_loss_log_entry(const gmf_loss_log* log, size_t index,
                                      gmf_loss_entry* out);
GMF_API void gmf_loss_log_free(gmf_loss_log* log);

GMF_API gmf_status gmf_model_load(const char* path, gmf_model** out);
GMF_API gmf_status gmf_model_save(const gmf_model* model, const char* path);
GMF_API void gmf_model_free(gmf_model* model);
GMF_API size_t gmf_model_input_dim(const gmf_model* model);
GMF_API size_t gmf_model_feature_dim(const gmf_model* model);
GMF_API double gmf_model_lambda(const gmf_model* model);

/* features receives size(scene) * feature_dim values. */
GMF_API gmf_status gmf_embed(const gmf_model* model, const gmf_scene* scene, double* features);

/* ---- geometry ----------------------------------------------------------- */

/* out receives n * n squared distances between the rows of points (n x dim). */
GMF_API gmf_status gmf_pairwise_sq_edm(const double* points, size_t n, size_t dim, double* out);

/* ---- landmarks ---------------------------------------------------------- */

/* first < 0 draws the first landmark from seed. out receives k indices. */
GMF_API gmf_status gmf_landmarks_greedy(const double* xy, size_t n, size_t k, uint64_t seed,
                                        int64_t first, size_t* out);
/* out must hold n indices; count receives the number selected. */
GMF_API gmf_status gmf_landmarks_threshold(const double* xy, size_t n, double r_lm,
                                           size_t* out, size_t* count);

/* ---- retrieval and evaluation ------------------------------------------- */

GMF_API gmf_status gmf_top1_retrieve(const double* queries, size_t n_queries,
                                     const double* landmarks, size_t n_landmarks, size_t dim,
                                     int use_kdtree, size_t* out);

GMF_API gmf_status gmf_accuracy_curve(const size_t* retrieved, const double* query_xy,
                                      size_t n_queries, const double* landmark_xy,
                                      size_t n_landmarks, const double* tolerances,
                                      size_t n_tolerances, double* accuracy,
                                      double* upper_bound);

GMF_API gmf_status gmf_pearson(const double* a, const double* b, size_t n, double* out);

/* Pearson correlation of squared feature vs squared geometric distances over
 * all pairs; max_geo > 0 restricts to pairs within max_geo meters. */
GMF_API gmf_status gmf_distance_correlation(const double* xy, const double* features, size_t n,
                                            size_t dim, double max_geo, double* out,
                                            size_t* pair_count);

/* ---- trajectory recovery ------------------------------------------------ */

typedef struct gmf_recover_config {
  double r1;
  size_t completion_max_iters;
  double completion_tol;
  size_t smacof_max_iters;
  double smacof_tol;
} gmf_recover_config;

typedef enum gmf_recovery_method {
  GMF_RECOVERY_CLASSICAL_MDS = 0,
  GMF_RECOVERY_SMACOF = 1
} gmf_recovery_method;

typedef struct gmf_recovery_summary {
  size_t n;
  size_t observed_pairs; /* off-diagonal unordered pairs in the mask */
  double completion_objective;
  size_t completion_iterations;
  int completion_converged;
  size_t smacof_iterations;
  int smacof_converged;
} gmf_recovery_summary;

typedef struct gmf_recovery gmf_recovery;

GMF_API void gmf_recover_config_default(gmf_recover_config* config);
GMF_API gmf_status gmf_recover_config_validate(const gmf_recover_config* config);
GMF_API gmf_status gmf_recover(const double* features, size_t n, size_t dim, double lambda,
                               const gmf_recover_config* config, gmf_recovery** out);
GMF_API void gmf_recovery_free(gmf_recovery* recovery);
GMF_API gmf_status gmf_recovery_summary_get(const gmf_recovery* recovery,
                                            gmf_recovery_summary* out);
/* n x 2 points. */
GMF_API gmf_status gmf_recovery_points(const gmf_recovery* recovery, gmf_recovery_method method,
                                       double* xy);
/* n x n matrices: lambda-scaled distances, mask (0/1), completed kappa(G). */
GMF_API gmf_status gmf_recovery_masked_edm(const gmf_recovery* recovery, double* d, double* mask);
GMF_API gmf_status gmf_recovery_completed_edm(const gmf_recovery* recovery, double* d);
GMF_API size_t gmf_recovery_stress_trace_size(const gmf_recovery* recovery);
GMF_API gmf_status gmf_recovery_stress_trace(const gmf_recovery* recovery, double* out);

/* Similarity (with_scale != 0) or rigid alignment of estimate onto truth,
 * both n x 2. aligned may be NULL. */
GMF_API gmf_status gmf_procrustes(const double* estimate, const double* truth, size_t n,
                                  int with_scale, int allow_reflection, double* aligned,
                                  double* rmse);

GMF_API double gmf_path_length(const double* xy, size_t n);

#ifdef __cplusplus
}
#endif

#endif /* GMF_GMF_H */
