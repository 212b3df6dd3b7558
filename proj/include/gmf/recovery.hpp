#pragma once

// Trajectory recovery from a partially observed squared-distance matrix.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gmf/geometry.hpp"

namespace gmf {

using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct MaskedEdm {
  Matrix d;   // squared distances, meters^2
  Mask mask;  // 1 = observed; symmetric with unit diagonal

  Eigen::Index size() const { return d.rows(); }
};

/// D = lambda * (pairwise squared feature distances); an entry is observed
/// iff D_ij <= r1^2. The diagonal is always observed.
MaskedEdm build_masked_edm(const Matrix& features, double lambda, double r1);

/// Connected components of the mask graph (union-find), each sorted, ordered
/// by smallest member.
std::vector<std::vector<std::size_t>> mask_components(const Mask& mask);

/// Fills unobserved entries with squared shortest-path lengths through
/// observed edges (edge length sqrt(D_ij)). Requires a connected mask.
Matrix shortest_path_completion(const MaskedEdm& masked);

/// Double centering: -1/2 J D J with J = I - 11^T / n.
Matrix gram_from_edm(const Matrix& edm);

/// Sum over observed entries of (D_ij - kappa(Y Y^T)_ij)^2.
double masked_objective(const MaskedEdm& masked, const Matrix& points);

struct GramCompletion {
  Matrix gram;    // Y Y^T, rank <= 2, PSD, rows sum to zero
  Matrix points;  // Y, n x 2, centered
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Rank-2 factorized minimization of masked_objective, initialized by
/// classical MDS of the shortest-path completion. Throws kDisconnected when
/// the mask graph has more than one component.
GramCompletion complete_gram(const MaskedEdm& masked, std::size_t max_iters = 5000,
                             double tol = 1e-12);

/// Top-two eigenpairs of G as n x 2 coordinates; negative eigenvalues are
/// clamped to zero. Throws kDegenerate when no eigenvalue is positive.
Matrix classical_mds(const Matrix& gram);

/// sum_{i<j, observed} (sqrt(D_ij) - |x_i - x_j|)^2
double weighted_stress(const MaskedEdm& masked, const Matrix& points);

struct SmacofResult {
  Matrix points;
  std::vector<double> stress_trace;  // stress of the initial and every iterate
  std::size_t iterations = 0;
  bool converged = false;
};

/// Guttman-transform iterations with the mask as weights. Stops when the
/// relative stress decrease drops below `tol` or after `max_iters`.
SmacofResult smacof(const MaskedEdm& masked, const Matrix& init, std::size_t max_iters = 1000,
                    double tol = 1e-9);

struct Alignment {
  Matrix aligned;
  double rmse = 0.0;
  double scale = 1.0;
  bool reflected = false;
};

/// Least-squares similarity (or rigid, with_scale = false) transform of
/// `estimate` onto `ground_truth`; reflection optional.
Alignment procrustes_align(const Matrix& estimate, const Matrix& ground_truth,
                           bool with_scale = true, bool allow_reflection = true);

double path_length(const Matrix& points);

struct RecoveryConfig {
  double r1 = 1.0;
  std::size_t completion_max_iters = 5000;
  double completion_tol = 1e-12;
  std::size_t smacof_max_iters = 1000;
  double smacof_tol = 1e-9;

  void validate() const;
};

struct RecoveryResult {
  MaskedEdm masked;
  GramCompletion completion;
  Matrix completed_edm;  // kappa(G)
  Matrix mds_points;
  SmacofResult refined;
};

/// Masked EDM -> Gram completion -> classical MDS -> SMACOF refinement.
RecoveryResult recover_trajectory(const Matrix& features, double lambda,
                                  const RecoveryConfig& config);

}  // namespace gmf
