#include "gmf/losses.hpp"

#include <algorithm>
#include <cmath>

#include "gmf/error.hpp"

namespace gmf {

void LossConfig::validate() const {
  require(lambda > 0.0, "loss.lambda must be > 0");
  require(alpha > 0.0, "loss.alpha must be > 0");
  require(gamma >= 0.0, "loss.gamma must be >= 0");
  require(huber_delta > 0.0, "loss.huber_delta must be > 0");
  require(beta > 0.0, "loss.beta must be > 0");
}

double huber(double residual, double delta) {
  const double a = std::abs(residual);
  if (a <= delta) return 0.5 * residual * residual;
  return delta * (a - 0.5 * delta);
}

double huber_derivative(double residual, double delta) {
  if (std::abs(residual) <= delta) return residual;
  return residual > 0.0 ? delta : -delta;
}

double hinge(double d_pos, double d_neg, double alpha) {
  return std::max(0.0, d_pos - d_neg + alpha);
}

bool is_quadruplet(NvVariant v) {
  return v == NvVariant::kQuadruplet || v == NvVariant::kLazyQuadruplet;
}

bool is_lazy(NvVariant v) {
  return v == NvVariant::kLazyTriplet || v == NvVariant::kLazyQuadruplet;
}

LossValue vg_loss(const Matrix& features, std::span<const Location> locations,
                  std::span<const IndexPair> positives,
                  const LossConfig& config) {
  require(static_cast<std::size_t>(features.rows()) == locations.size(),
          "vg_loss: features and locations differ in length");
  LossValue out;
  out.grads = Matrix::Zero(features.rows(), features.cols());
  const auto n = static_cast<std::size_t>(features.rows());
  for (const auto& [i, j] : positives) {
    require(i < n && j < n, "vg_loss: pair index out of range");
    const Vector diff = features.row(i) - features.row(j);
    const double d_feat = diff.squaredNorm();
    const double d_geo = sq_distance(locations[i], locations[j]);
    const double r = d_geo - config.lambda * d_feat;
    double drho = 0.0;
    if (config.vg_variant == VgVariant::kSquared) {
      out.value += r * r;
      drho = 2.0 * r;
    } else {
      out.value += huber(r, config.huber_delta);
      drho = huber_derivative(r, config.huber_delta);
    }
    // d r / d f_i = -2 lambda (f_i - f_j)
    const Vector g = (-2.0 * config.lambda * drho) * diff;
    out.grads.row(i) += g.transpose();
    out.grads.row(j) -= g.transpose();
  }
  return out;
}

namespace {

// Accumulates hinge(d(p, q), d(u, v), margin) and its gradient into `grads`
// over the stacked rows of `f`. Returns the hinge value.
double add_hinge(const Matrix& f, Eigen::Index p, Eigen::Index q,
                 Eigen::Index u, Eigen::Index v, double margin, double weight,
                 Matrix& grads) {
  const Vector pos = f.row(p) - f.row(q);
  const Vector neg = f.row(u) - f.row(v);
  const double h = hinge(pos.squaredNorm(), neg.squaredNorm(), margin);
  if (h > 0.0 && weight != 0.0) {
    grads.row(p) += (2.0 * weight) * pos.transpose();
    grads.row(q) -= (2.0 * weight) * pos.transpose();
    grads.row(u) -= (2.0 * weight) * neg.transpose();
    grads.row(v) += (2.0 * weight) * neg.transpose();
  }
  return h;
}

// Either sums the hinge over `count` candidate negative pairs, or (lazy)
// keeps the largest one. `pair_of(k)` yields the (u, v) rows of candidate k.
template <typename PairOf>
double reduce_hinges(const Matrix& f, Eigen::Index anchor, Eigen::Index pos,
                     Eigen::Index count, PairOf pair_of, double margin,
                     bool lazy, Matrix& grads) {
  if (!lazy) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < count; ++k) {
      const auto [u, v] = pair_of(k);
      total += add_hinge(f, anchor, pos, u, v, margin, 1.0, grads);
    }
    return total;
  }
  // Lazy: the first maximizer receives the gradient.
  Eigen::Index best = -1;
  double best_value = 0.0;
  const double d_pos = (f.row(anchor) - f.row(pos)).squaredNorm();
  for (Eigen::Index k = 0; k < count; ++k) {
    const auto [u, v] = pair_of(k);
    const double h =
        hinge(d_pos, (f.row(u) - f.row(v)).squaredNorm(), margin);
    if (best < 0 || h > best_value) {
      best = k;
      best_value = h;
    }
  }
  if (best < 0) return 0.0;
  const auto [u, v] = pair_of(best);
  return add_hinge(f, anchor, pos, u, v, margin, 1.0, grads);
}

}  // namespace

LossValue nv_loss(const Vector& anchor, const Matrix& positives,
                  const Matrix& negatives, const LossConfig& config) {
  require(positives.rows() >= 1, "nv_loss: need at least one positive");
  require(negatives.rows() >= 1, "nv_loss: need at least one negative");
  require(positives.cols() == anchor.size() &&
              negatives.cols() == anchor.size(),
          "nv_loss: feature dimension mismatch");
  const bool quad = is_quadruplet(config.nv_variant);
  const bool lazy = is_lazy(config.nv_variant);
  if (quad && negatives.rows() < 2) {
    fail(ErrorCode::kInvalidArgument,
         "nv_loss: quadruplet variants need at least two negatives");
  }

  const Eigen::Index n_pos = positives.rows();
  const Eigen::Index n_neg = negatives.rows();
  Matrix f(1 + n_pos + n_neg, anchor.size());
  f.row(0) = anchor.transpose();
  f.middleRows(1, n_pos) = positives;
  f.bottomRows(n_neg) = negatives;
  const Eigen::Index neg0 = 1 + n_pos;
  const Eigen::Index other = neg0 + n_neg - 1;

  LossValue out;
  out.grads = Matrix::Zero(f.rows(), f.cols());
  for (Eigen::Index p = 1; p <= n_pos; ++p) {
    out.value += reduce_hinges(
        f, 0, p, n_neg,
        [&](Eigen::Index k) { return std::pair{Eigen::Index{0}, neg0 + k}; },
        config.alpha, lazy, out.grads);
    if (quad) {
      out.value += reduce_hinges(
          f, 0, p, n_neg - 1,
          [&](Eigen::Index k) { return std::pair{neg0 + k, other}; },
          config.beta, lazy, out.grads);
    }
  }
  return out;
}

CombinedLoss combined_loss(const Matrix& tuple_features,
                           std::size_t n_positives, std::size_t n_negatives,
                           std::span<const Location> locations,
                           std::span<const IndexPair> vg_pairs,
                           const LossConfig& config) {
  const auto n_pos = static_cast<Eigen::Index>(n_positives);
  const auto n_neg = static_cast<Eigen::Index>(n_negatives);
  require(tuple_features.rows() == 1 + n_pos + n_neg,
          "combined_loss: tuple size mismatch");
  const LossValue nv =
      nv_loss(tuple_features.row(0).transpose(),
              tuple_features.middleRows(1, n_pos),
              tuple_features.bottomRows(n_neg), config);
  CombinedLoss out;
  out.nv = nv.value;
  out.grads = nv.grads;
  if (config.gamma != 0.0 && !vg_pairs.empty()) {
    const LossValue vg = vg_loss(tuple_features, locations, vg_pairs, config);
    out.vg = vg.value;
    out.grads += config.gamma * vg.grads;
  }
  out.value = out.nv + config.gamma * out.vg;
  return out;
}

}  // namespace gmf
