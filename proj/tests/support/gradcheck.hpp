#pragma once

// Finite-difference checks of the loss gradients and the model backward pass.
// Loss values are recomputed here from their definitions, so the central
// differences do not depend on the library's forward code.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gmf/losses.hpp"
#include "gmf/model.hpp"
#include "oracles.hpp"

namespace gmf::gradcheck {

struct Stats {
  int instances = 0;
  int skipped = 0;  // rejected for lying near a kink
  double max_rel = 0.0;
  double max_value_diff = 0.0;  // library value vs reference value
};

constexpr double kStep = 1e-6;
constexpr double kKinkTol = 1e-4;

inline double sqd(const Matrix& f, Eigen::Index i, Eigen::Index j) {
  return (f.row(i) - f.row(j)).squaredNorm();
}

inline double ref_rho(double r, const LossConfig& c) {
  if (c.vg_variant == VgVariant::kSquared) return r * r;
  return std::abs(r) <= c.huber_delta ? 0.5 * r * r : c.huber_delta * (std::abs(r) - 0.5 * c.huber_delta);
}

inline double ref_vg(const Matrix& f, const std::vector<Location>& loc,
                     const std::vector<IndexPair>& pairs, const LossConfig& c) {
  double total = 0.0;
  for (auto [i, j] : pairs) {
    const double dg = std::pow(loc[i].x - loc[j].x, 2) + std::pow(loc[i].y - loc[j].y, 2);
    total += ref_rho(dg - c.lambda * sqd(f, Eigen::Index(i), Eigen::Index(j)), c);
  }
  return total;
}

// Hinge arguments per positive: first the triplet terms, then the quadruplet terms.
struct HingeArgs {
  std::vector<std::vector<double>> triplet, quad;
};

inline HingeArgs hinge_args(const Matrix& f, Eigen::Index n_pos, Eigen::Index n_neg,
                            const LossConfig& c) {
  HingeArgs h;
  const bool quad = c.nv_variant == NvVariant::kQuadruplet || c.nv_variant == NvVariant::kLazyQuadruplet;
  const Eigen::Index last = n_pos + n_neg;
  for (Eigen::Index p = 1; p <= n_pos; ++p) {
    std::vector<double> t, q;
    for (Eigen::Index j = n_pos + 1; j <= last; ++j) t.push_back(sqd(f, 0, p) - sqd(f, 0, j) + c.alpha);
    if (quad) {
      for (Eigen::Index j = n_pos + 1; j < last; ++j) q.push_back(sqd(f, 0, p) - sqd(f, j, last) + c.beta);
    }
    h.triplet.push_back(t);
    h.quad.push_back(q);
  }
  return h;
}

inline double ref_nv(const Matrix& f, Eigen::Index n_pos, Eigen::Index n_neg, const LossConfig& c) {
  const bool lazy = c.nv_variant == NvVariant::kLazyTriplet || c.nv_variant == NvVariant::kLazyQuadruplet;
  const HingeArgs h = hinge_args(f, n_pos, n_neg, c);
  auto reduce = [&](const std::vector<double>& args) {
    double acc = 0.0;
    for (double a : args) acc = lazy ? std::max(acc, std::max(0.0, a)) : acc + std::max(0.0, a);
    return acc;
  };
  double total = 0.0;
  for (std::size_t p = 0; p < h.triplet.size(); ++p) total += reduce(h.triplet[p]) + reduce(h.quad[p]);
  return total;
}

inline bool near_hinge_kink(const Matrix& f, Eigen::Index n_pos, Eigen::Index n_neg, const LossConfig& c) {
  const bool lazy = c.nv_variant == NvVariant::kLazyTriplet || c.nv_variant == NvVariant::kLazyQuadruplet;
  const HingeArgs h = hinge_args(f, n_pos, n_neg, c);
  auto bad = [&](std::vector<double> args) {
    for (double a : args) {
      if (std::abs(a) < kKinkTol) return true;
    }
    if (lazy && args.size() >= 2) {
      std::sort(args.begin(), args.end(), std::greater<>());
      if (args[0] > 0.0 && args[0] - args[1] < kKinkTol) return true;
    }
    return false;
  };
  for (std::size_t p = 0; p < h.triplet.size(); ++p) {
    if (bad(h.triplet[p]) || bad(h.quad[p])) return true;
  }
  return false;
}

inline bool near_huber_kink(const Matrix& f, const std::vector<Location>& loc,
                            const std::vector<IndexPair>& pairs, const LossConfig& c) {
  if (c.vg_variant != VgVariant::kHuber) return false;
  for (auto [i, j] : pairs) {
    const double dg = std::pow(loc[i].x - loc[j].x, 2) + std::pow(loc[i].y - loc[j].y, 2);
    const double r = dg - c.lambda * sqd(f, Eigen::Index(i), Eigen::Index(j));
    if (std::abs(std::abs(r) - c.huber_delta) < kKinkTol) return true;
  }
  return false;
}

inline std::vector<Location> random_locations(std::size_t n, double extent, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, extent);
  std::vector<Location> loc(n);
  for (auto& l : loc) l = {u(rng), u(rng)};
  return loc;
}

inline std::vector<IndexPair> all_pairs(std::size_t n) {
  std::vector<IndexPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) out.emplace_back(i, j);
  }
  return out;
}

inline LossConfig random_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LossConfig c;
  c.lambda = 0.3 + 2.7 * u(rng);
  c.alpha = 0.05 + u(rng);
  c.beta = 0.05 + 0.5 * u(rng);
  c.gamma = 0.1 + 2.0 * u(rng);
  c.huber_delta = 0.1 + 2.0 * u(rng);
  return c;
}

// Numerical vs analytic gradient for one matrix argument.
template <typename Value>
double compare(const Matrix& at, const Matrix& analytic, Value value) {
  const auto f = [&](const std::vector<double>& x) {
    return value(oracle::unflatten(x, at.rows(), at.cols()));
  };
  const auto numeric = oracle::central_differences(f, oracle::flatten(at), kStep);
  return oracle::relative_error(oracle::flatten(analytic), numeric);
}

inline Stats check_vg(VgVariant variant, int wanted, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Stats s;
  while (s.instances < wanted) {
    LossConfig c = random_config(rng);
    c.vg_variant = variant;
    const std::size_t n = 6;
    const auto loc = random_locations(n, 1.5, rng);
    const auto pairs = all_pairs(n);
    const Matrix f = oracle::random_matrix(static_cast<Eigen::Index>(n), 4, rng, 0.5);
    if (near_huber_kink(f, loc, pairs, c)) {
      ++s.skipped;
      continue;
    }
    const LossValue lv = vg_loss(f, loc, pairs, c);
    s.max_value_diff = std::max(s.max_value_diff, std::abs(lv.value - ref_vg(f, loc, pairs, c)));
    s.max_rel = std::max(s.max_rel, compare(f, lv.grads, [&](const Matrix& x) { return ref_vg(x, loc, pairs, c); }));
    ++s.instances;
  }
  return s;
}

inline Stats check_nv(NvVariant variant, int wanted, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Stats s;
  const Eigen::Index n_pos = 3, n_neg = 4;
  while (s.instances < wanted) {
    LossConfig c = random_config(rng);
    c.nv_variant = variant;
    const Matrix f = oracle::random_matrix(1 + n_pos + n_neg, 4, rng, 0.5);
    if (near_hinge_kink(f, n_pos, n_neg, c)) {
      ++s.skipped;
      continue;
    }
    const LossValue lv = nv_loss(f.row(0).transpose(), f.middleRows(1, n_pos), f.bottomRows(n_neg), c);
    s.max_value_diff = std::max(s.max_value_diff, std::abs(lv.value - ref_nv(f, n_pos, n_neg, c)));
    s.max_rel = std::max(s.max_rel, compare(f, lv.grads, [&](const Matrix& x) { return ref_nv(x, n_pos, n_neg, c); }));
    ++s.instances;
  }
  return s;
}

struct TupleInstance {
  Matrix f;
  std::vector<Location> loc;
  std::vector<IndexPair> pairs;
  LossConfig c;
};

inline TupleInstance random_tuple(std::mt19937_64& rng, Eigen::Index n_pos, Eigen::Index n_neg) {
  TupleInstance t;
  t.c = random_config(rng);
  std::uniform_int_distribution<int> v(0, 3);
  std::uniform_int_distribution<int> w(0, 1);
  t.c.nv_variant = static_cast<NvVariant>(v(rng));
  t.c.vg_variant = w(rng) ? VgVariant::kHuber : VgVariant::kSquared;
  const auto n = static_cast<std::size_t>(1 + n_pos + n_neg);
  t.loc = random_locations(n, 2.0, rng);
  for (auto [i, j] : all_pairs(n)) {
    if (std::pow(t.loc[i].x - t.loc[j].x, 2) + std::pow(t.loc[i].y - t.loc[j].y, 2) <= 1.0) {
      t.pairs.emplace_back(i, j);
    }
  }
  t.f = oracle::random_matrix(static_cast<Eigen::Index>(n), 4, rng, 0.5);
  return t;
}

inline double ref_combined(const TupleInstance& t, const Matrix& f, Eigen::Index n_pos, Eigen::Index n_neg) {
  return ref_nv(f, n_pos, n_neg, t.c) + t.c.gamma * ref_vg(f, t.loc, t.pairs, t.c);
}

inline Stats check_combined(int wanted, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Stats s;
  const Eigen::Index n_pos = 3, n_neg = 4;
  while (s.instances < wanted) {
    const TupleInstance t = random_tuple(rng, n_pos, n_neg);
    if (near_hinge_kink(t.f, n_pos, n_neg, t.c) || near_huber_kink(t.f, t.loc, t.pairs, t.c)) {
      ++s.skipped;
      continue;
    }
    const CombinedLoss cl = combined_loss(t.f, n_pos, n_neg, t.loc, t.pairs, t.c);
    s.max_value_diff = std::max(s.max_value_diff, std::abs(cl.value - ref_combined(t, t.f, n_pos, n_neg)));
    s.max_rel = std::max(s.max_rel, compare(t.f, cl.grads, [&](const Matrix& x) {
      return ref_combined(t, x, n_pos, n_neg);
    }));
    ++s.instances;
  }
  return s;
}

// Layer-by-layer forward pass written out directly from the parameter layout:
// per layer, a row-major (out x in) weight block followed by the bias.
inline Matrix ref_forward(const std::vector<std::size_t>& sizes, Activation act, bool normalize,
                          const std::vector<double>& params, const Matrix& x) {
  Matrix a = x;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    Matrix z(a.rows(), static_cast<Eigen::Index>(out));
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        double s = params[off + in * out + o];
        for (std::size_t i = 0; i < in; ++i) s += params[off + o * in + i] * a(r, static_cast<Eigen::Index>(i));
        const bool hidden = l + 2 < sizes.size();
        if (hidden && act == Activation::kTanh) s = std::tanh(s);
        if (hidden && act == Activation::kRelu) s = std::max(0.0, s);
        z(r, static_cast<Eigen::Index>(o)) = s;
      }
    }
    off += in * out + out;
    a = z;
  }
  if (normalize) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) a.row(r) /= a.row(r).norm();
  }
  return a;
}

// Scalar sum_i <g_i, f_i> through the model, and the combined loss through
// the model, each differentiated with respect to all parameters.
inline Stats check_backward(int wanted, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Stats s;
  std::uniform_int_distribution<int> coin(0, 1);
  while (s.instances < wanted) {
    const Activation act = coin(rng) ? Activation::kTanh : Activation::kIdentity;
    const bool normalize = coin(rng) == 1;
    const std::vector<std::size_t> sizes{5, 6, 4, 3};
    const EmbeddingModel model = EmbeddingModel::initialized(sizes, act, normalize, rng());
    const std::vector<double> params(model.parameters().begin(), model.parameters().end());
    const Matrix x = oracle::random_matrix(4, 5, rng);
    const Matrix g = oracle::random_matrix(4, 3, rng);
    const auto cache = model.forward_cached(x);
    s.max_value_diff = std::max(
        s.max_value_diff, (cache.features - ref_forward(sizes, act, normalize, params, x)).cwiseAbs().maxCoeff());
    const auto analytic = model.backward(cache, g);
    const auto numeric = oracle::central_differences(
        [&](const std::vector<double>& p) {
          return (ref_forward(sizes, act, normalize, p, x).array() * g.array()).sum();
        },
        params, kStep);
    s.max_rel = std::max(s.max_rel, oracle::relative_error(analytic, numeric));
    ++s.instances;
  }
  return s;
}

}  // namespace gmf::gradcheck
