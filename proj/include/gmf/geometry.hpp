#pragma once

// Distance-matrix primitives shared by the rest of the library.
//
// Point sets are stored one point per row. All distances are squared
// Euclidean; radii are given in linear units and squared internally.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace gmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Location {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Location&, const Location&) = default;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

struct PairSets {
  std::vector<IndexPair> positives;
  std::vector<IndexPair> negatives;
};

/// n x 2 matrix of the given locations.
Matrix to_matrix(std::span<const Location> locations);

/// Stacks equally sized vectors as rows; throws on dimension mismatch.
Matrix stack_rows(std::span<const std::vector<double>> rows);

double sq_distance(const Location& a, const Location& b);

Matrix pairwise_sq_edm(const Matrix& points);
Matrix pairwise_sq_edm(std::span<const Location> locations);

/// kappa(G) = diag(G) 1^T - 2 G + 1 diag(G)^T, the EDM of a Gram matrix.
Matrix kappa(const Matrix& gram);

/// Smallest absolute difference between two angles, in [0, pi].
double wrapped_angle_difference(double a, double b);

/// Splits all unordered pairs (i < j) into positives (distance <= r1, and
/// heading difference <= max_heading when both are given) and negatives
/// (distance >= r2). Pairs in the open band (r1, r2) are left unlabeled.
PairSets classify_pairs(std::span<const Location> locations,
                        std::optional<std::span<const double>> headings,
                        double r1, double r2,
                        std::optional<double> max_heading = std::nullopt);

/// Row-centers a point set (subtracts the column means).
Matrix center_rows(const Matrix& points);

}  // namespace gmf
