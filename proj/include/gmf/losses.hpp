#pragma once

// Training losses over squared feature distances, with exact gradients with
// respect to the feature vectors.

#include <cstddef>
#include <span>

#include "gmf/geometry.hpp"

namespace gmf {

enum class VgVariant { kSquared, kHuber };
enum class NvVariant { kTriplet, kLazyTriplet, kQuadruplet, kLazyQuadruplet };

struct LossConfig {
  double lambda = 1.0;       // geometric sq distance per feature sq distance
  double alpha = 2.0;        // triplet margin, squared feature units
  double gamma = 2.0;        // weight of the visual-geometric term
  double huber_delta = 1.0;  // r1^2 for the default r1 = 1 m
  double beta = 1.0;         // quadruplet margin, alpha / 2
  VgVariant vg_variant = VgVariant::kSquared;
  NvVariant nv_variant = NvVariant::kTriplet;

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  Matrix grads;  // one row per input feature vector
};

double huber(double residual, double delta);
double huber_derivative(double residual, double delta);

/// max{0, d_pos - d_neg + alpha}
double hinge(double d_pos, double d_neg, double alpha);

bool is_quadruplet(NvVariant v);
bool is_lazy(NvVariant v);

/// Sum over positive pairs of rho(d_geo^2 - lambda * d_feat^2). The squared
/// variant uses rho(r) = r^2, the Huber variant the standard Huber function.
LossValue vg_loss(const Matrix& features, std::span<const Location> locations,
                  std::span<const IndexPair> positives,
                  const LossConfig& config);

/// Negative visual loss for one anchor. Gradient rows are stacked as
/// [anchor; positives; negatives].
///
/// Triplet variants sum hinge(d(a,p), d(a,n), alpha) over negatives, lazy
/// variants take the max over negatives instead. Quadruplet variants treat
/// the last negative as the "other" negative n* and add
/// hinge(d(a,p), d(n_j, n*), beta) over the remaining negatives n_j, again
/// summed or maxed.
LossValue nv_loss(const Vector& anchor, const Matrix& positives,
                  const Matrix& negatives, const LossConfig& config);

struct CombinedLoss {
  double value = 0.0;
  double nv = 0.0;
  double vg = 0.0;
  Matrix grads;
};

/// nv_loss + gamma * vg_loss over a stacked tuple [anchor; positives;
/// negatives]. `vg_pairs` index into the stacked rows and `locations` is
/// aligned with them.
CombinedLoss combined_loss(const Matrix& tuple_features,
                           std::size_t n_positives, std::size_t n_negatives,
                           std::span<const Location> locations,
                           std::span<const IndexPair> vg_pairs,
                           const LossConfig& config);

}  // namespace gmf
