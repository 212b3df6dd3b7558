#pragma once

// Top-1 retrieval localization and its evaluation.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "gmf/geometry.hpp"

namespace gmf {

/// Index of the nearest landmark (rows of `landmarks`) for every row of
/// `queries` by exhaustive scan; ties resolve to the smallest index.
std::vector<std::size_t> top1_retrieve(const Matrix& queries, const Matrix& landmarks);

/// Exact k-d tree over landmark features. Returns the same answers as
/// top1_retrieve, including its tie-breaking.
class KdTree {
 public:
  explicit KdTree(Matrix points, std::size_t leaf_size = 8);
  ~KdTree();
  KdTree(KdTree&&) noexcept;
  KdTree& operator=(KdTree&&) noexcept;

  std::size_t nearest(const Vector& query) const;
  std::vector<std::size_t> nearest(const Matrix& queries) const;

 private:
  struct Node;
  std::unique_ptr<Node> build(std::vector<std::size_t>::iterator begin,
                              std::vector<std::size_t>::iterator end, std::size_t depth);
  void search(const Node* node, const Vector& q, std::size_t& best, double& best_d) const;

  Matrix points_;
  std::size_t leaf_size_;
  std::vector<std::size_t> index_;
  std::unique_ptr<Node> root_;
};

struct AccuracyCurve {
  std::vector<double> tolerances;   // meters
  std::vector<double> accuracy;     // fraction of queries retrieved within tolerance
  std::vector<double> upper_bound;  // fraction whose nearest landmark is within tolerance
};

AccuracyCurve accuracy_curve(std::span<const std::size_t> retrieved,
                             std::span<const Location> query_locations,
                             std::span<const Location> landmark_locations,
                             std::span<const double> tolerances);

/// Sample Pearson correlation. Throws kDegenerate when either input has zero
/// variance.
double pearson(std::span<const double> a, std::span<const double> b);

struct DistanceScatter {
  std::vector<double> geo_sq;   // squared geometric distances
  std::vector<double> feat_sq;  // squared feature distances
};

/// All unordered pairs i < j, optionally restricted to geometric distance
/// <= max_geo (meters).
DistanceScatter distance_scatter(std::span<const Location> locations, const Matrix& features,
                                 std::optional<double> max_geo = std::nullopt);

}  // namespace gmf
