#include "gmf/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gmf/error.hpp"

namespace gmf {

Matrix to_matrix(std::span<const Location> locations) {
  Matrix out(static_cast<Eigen::Index>(locations.size()), 2);
  for (std::size_t i = 0; i < locations.size(); ++i) {
    out(i, 0) = locations[i].x;
    out(i, 1) = locations[i].y;
  }
  return out;
}

Matrix stack_rows(std::span<const std::vector<double>> rows) {
  require(!rows.empty(), "stack_rows: empty point set");
  const std::size_t dim = rows.front().size();
  Matrix out(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) {
      fail(ErrorCode::kInvalidArgument,
           "dimension mismatch at row " + std::to_string(i) + ": expected " +
               std::to_string(dim) + ", got " + std::to_string(rows[i].size()));
    }
    for (std::size_t k = 0; k < dim; ++k) out(i, k) = rows[i][k];
  }
  return out;
}

double sq_distance(const Location& a, const Location& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

Matrix pairwise_sq_edm(const Matrix& points) {
  require(points.rows() >= 1, "pairwise_sq_edm: need at least one point");
  const Eigen::Index n = points.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (points.row(i) - points.row(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

Matrix pairwise_sq_edm(std::span<const Location> locations) {
  return pairwise_sq_edm(to_matrix(locations));
}

Matrix kappa(const Matrix& gram) {
  require(gram.rows() == gram.cols(), "kappa: Gram matrix must be square");
  const Vector diag = gram.diagonal();
  const Eigen::Index n = gram.rows();
  Matrix out = diag * Vector::Ones(n).transpose() - 2.0 * gram +
               Vector::Ones(n) * diag.transpose();
  return out;
}

double wrapped_angle_difference(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
  if (d > std::numbers::pi) d = 2.0 * std::numbers::pi - d;
  return d;
}

PairSets classify_pairs(std::span<const Location> locations,
                        std::optional<std::span<const double>> headings,
                        double r1, double r2,
                        std::optional<double> max_heading) {
  require(!locations.empty(), "classify_pairs: no locations");
  require(r1 < r2, "classify_pairs: r1 must be smaller than r2");
  const bool filter_heading = headings.has_value() && max_heading.has_value();
  if (filter_heading) {
    require(headings->size() == locations.size(),
            "classify_pairs: headings and locations differ in length");
  }
  const double r1_sq = r1 * r1;
  const double r2_sq = r2 * r2;
  PairSets sets;
  for (std::size_t i = 0; i < locations.size(); ++i) {
    for (std::size_t j = i + 1; j < locations.size(); ++j) {
      const double d = sq_distance(locations[i], locations[j]);
      if (d <= r1_sq) {
        if (filter_heading &&
            wrapped_angle_difference((*headings)[i], (*headings)[j]) >
                *max_heading) {
          continue;
        }
        sets.positives.emplace_back(i, j);
      } else if (d >= r2_sq) {
        sets.negatives.emplace_back(i, j);
      }
    }
  }
  return sets;
}

Matrix center_rows(const Matrix& points) {
  const Eigen::RowVectorXd mean = points.colwise().mean();
  return points.rowwise() - mean;
}

}  // namespace gmf
