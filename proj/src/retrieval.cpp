#include "gmf/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gmf/error.hpp"

namespace gmf {

std::vector<std::size_t> top1_retrieve(const Matrix& queries, const Matrix& landmarks) {
  require(landmarks.rows() >= 1, "top1_retrieve: no landmarks");
  require(queries.cols() == landmarks.cols(), "top1_retrieve: feature dimension mismatch");
  std::vector<std::size_t> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < landmarks.rows(); ++l) {
      const double d = (queries.row(q) - landmarks.row(l)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::size_t>(l);
      }
    }
    out[static_cast<std::size_t>(q)] = best;
  }
  return out;
}

struct KdTree::Node {
  std::size_t begin = 0, end = 0;  // range in index_ (leaves)
  Eigen::Index axis = -1;          // -1 for leaves
  double split = 0.0;
  std::unique_ptr<Node> left, right;
};

KdTree::KdTree(Matrix points, std::size_t leaf_size)
    : points_(std::move(points)), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  require(points_.rows() >= 1, "KdTree: no points");
  index_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(index_.begin(), index_.end(), std::size_t{0});
  root_ = build(index_.begin(), index_.end(), 0);
}

KdTree::~KdTree() = default;
KdTree::KdTree(KdTree&&) noexcept = default;
KdTree& KdTree::operator=(KdTree&&) noexcept = default;

std::unique_ptr<KdTree::Node> KdTree::build(std::vector<std::size_t>::iterator begin,
                                            std::vector<std::size_t>::iterator end,
                                            std::size_t depth) {
  auto node = std::make_unique<Node>();
  node->begin = static_cast<std::size_t>(begin - index_.begin());
  node->end = static_cast<std::size_t>(end - index_.begin());
  const auto count = static_cast<std::size_t>(end - begin);
  if (count <= leaf_size_) return node;

  // split on the axis of largest spread
  Eigen::Index axis = 0;
  double spread = -1.0;
  for (Eigen::Index a = 0; a < points_.cols(); ++a) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto it = begin; it != end; ++it) {
      lo = std::min(lo, points_(*it, a));
      hi = std::max(hi, points_(*it, a));
    }
    if (hi - lo > spread) {
      spread = hi - lo;
      axis = a;
    }
  }
  if (spread <= 0.0) return node;
  auto mid = begin + static_cast<std::ptrdiff_t>(count / 2);
  std::nth_element(begin, mid, end, [&](std::size_t a, std::size_t b) {
    return points_(a, axis) < points_(b, axis);
  });
  node->axis = axis;
  node->split = points_(*mid, axis);
  node->left = build(begin, mid, depth + 1);
  node->right = build(mid, end, depth + 1);
  return node;
}

void KdTree::search(const Node* node, const Vector& q, std::size_t& best,
                    double& best_d) const {
  if (node->axis < 0) {
    for (std::size_t k = node->begin; k < node->end; ++k) {
      const std::size_t i = index_[k];
      const double d = (points_.row(i).transpose() - q).squaredNorm();
      if (d < best_d || (d == best_d && i < best)) {
        best_d = d;
        best = i;
      }
    }
    return;
  }
  const double diff = q(node->axis) - node->split;
  const Node* near = diff < 0.0 ? node->left.get() : node->right.get();
  const Node* far = diff < 0.0 ? node->right.get() : node->left.get();
  search(near, q, best, best_d);
  // Points equal to the split value can sit on either side, so only a
  // strictly larger plane distance allows pruning.
  if (diff * diff <= best_d) search(far, q, best, best_d);
}

std::size_t KdTree::nearest(const Vector& query) const {
  require(query.size() == points_.cols(), "KdTree: query dimension mismatch");
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_d = std::numeric_limits<double>::infinity();
  search(root_.get(), query, best, best_d);
  return best;
}

std::vector<std::size_t> KdTree::nearest(const Matrix& queries) const {
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index q = 0; q < queries.rows(); ++q) out.push_back(nearest(Vector(queries.row(q).transpose())));
  return out;
}

AccuracyCurve accuracy_curve(std::span<const std::size_t> retrieved,
                             std::span<const Location> query_locations,
                             std::span<const Location> landmark_locations,
                             std::span<const double> tolerances) {
  require(!query_locations.empty(), "accuracy_curve: empty query set");
  require(!landmark_locations.empty(), "accuracy_curve: no landmarks");
  require(retrieved.size() == query_locations.size(),
          "accuracy_curve: retrieved indices and queries differ in length");
  const std::size_t nq = query_locations.size();
  std::vector<double> hit_d(nq), best_d(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    require(retrieved[q] < landmark_locations.size(), "accuracy_curve: landmark index out of range");
    hit_d[q] = sq_distance(query_locations[q], landmark_locations[retrieved[q]]);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& l : landmark_locations) b = std::min(b, sq_distance(query_locations[q], l));
    best_d[q] = b;
  }
  AccuracyCurve curve;
  for (double t : tolerances) {
    require(t >= 0.0, "accuracy_curve: tolerances must be >= 0");
    const double t_sq = t * t;
    const auto within = [&](const std::vector<double>& d) {
      return static_cast<double>(std::count_if(d.begin(), d.end(),
                                               [&](double v) { return v <= t_sq; })) /
             static_cast<double>(nq);
    };
    curve.tolerances.push_back(t);
    curve.accuracy.push_back(within(hit_d));
    curve.upper_bound.push_back(within(best_d));
  }
  return curve;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "pearson: inputs differ in length");
  require(a.size() >= 2, "pearson: need at least two samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) {
    fail(ErrorCode::kDegenerate, "pearson: zero variance, correlation undefined");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

DistanceScatter distance_scatter(std::span<const Location> locations, const Matrix& features,
                                 std::optional<double> max_geo) {
  require(static_cast<std::size_t>(features.rows()) == locations.size(),
          "distance_scatter: features and locations differ in length");
  DistanceScatter s;
  const double limit = max_geo ? *max_geo * *max_geo : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < locations.size(); ++i) {
    for (std::size_t j = i + 1; j < locations.size(); ++j) {
      const double g = sq_distance(locations[i], locations[j]);
      if (g > limit) continue;
      s.geo_sq.push_back(g);
      s.feat_sq.push_back((features.row(i) - features.row(j)).squaredNorm());
    }
  }
  return s;
}

}  // namespace gmf
