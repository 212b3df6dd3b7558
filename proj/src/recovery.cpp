#include "gmf/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <string>

#include "gmf/error.hpp"

namespace gmf {

namespace {

struct Edge {
  Eigen::Index i, j;
  double d;  // squared target distance
};

std::vector<Edge> observed_edges(const MaskedEdm& m) {
  std::vector<Edge> edges;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    for (Eigen::Index j = i + 1; j < m.size(); ++j) {
      if (m.mask(i, j)) edges.push_back({i, j, m.d(i, j)});
    }
  }
  return edges;
}

void check_masked(const MaskedEdm& m) {
  require(m.d.rows() == m.d.cols(), "masked EDM must be square");
  require(m.mask.rows() == m.d.rows() && m.mask.cols() == m.d.cols(),
          "mask and distance matrix differ in shape");
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    require(m.mask(i, i) == 1, "mask diagonal must be observed");
    for (Eigen::Index j = 0; j < m.size(); ++j) {
      require(m.mask(i, j) == m.mask(j, i), "mask must be symmetric");
      if (m.mask(i, j)) require(m.d(i, j) >= 0.0, "observed distances must be >= 0");
    }
  }
}

void require_connected(const MaskedEdm& m) {
  const auto comps = mask_components(m.mask);
  if (comps.size() <= 1) return;
  std::string msg = "mask graph is disconnected: " + std::to_string(comps.size()) +
                    " components, sizes";
  for (const auto& c : comps) msg += " " + std::to_string(c.size()) + "(first " +
                                     std::to_string(c.front()) + ")";
  fail(ErrorCode::kDisconnected, msg);
}

// f(Y) = 2 sum_{edges} (|y_i - y_j|^2 - D_ij)^2, i.e. the full symmetric sum.
double objective_and_gradient(const std::vector<Edge>& edges, const Matrix& y, Matrix* grad) {
  double f = 0.0;
  if (grad) grad->setZero(y.rows(), y.cols());
  for (const auto& e : edges) {
    const Eigen::RowVectorXd diff = y.row(e.i) - y.row(e.j);
    const double r = diff.squaredNorm() - e.d;
    f += 2.0 * r * r;
    if (grad) {
      grad->row(e.i) += 8.0 * r * diff;
      grad->row(e.j) -= 8.0 * r * diff;
    }
  }
  return f;
}

double dot(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

}  // namespace

MaskedEdm build_masked_edm(const Matrix& features, double lambda, double r1) {
  require(lambda > 0.0, "build_masked_edm: lambda must be > 0");
  require(r1 > 0.0, "build_masked_edm: r1 must be > 0");
  MaskedEdm m;
  m.d = lambda * pairwise_sq_edm(features);
  const double r1_sq = r1 * r1;
  m.mask = (m.d.array() <= r1_sq).cast<std::uint8_t>();
  m.mask.diagonal().setOnes();
  return m;
}

std::vector<std::vector<std::size_t>> mask_components(const Mask& mask) {
  const auto n = static_cast<std::size_t>(mask.rows());
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!mask(i, j)) continue;
      const std::size_t a = find(i), b = find(j);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<std::vector<std::size_t>> comps;
  std::vector<std::size_t> slot(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (slot[r] == n) {
      slot[r] = comps.size();
      comps.emplace_back();
    }
    comps[slot[r]].push_back(i);
  }
  return comps;
}

Matrix shortest_path_completion(const MaskedEdm& masked) {
  check_masked(masked);
  require_connected(masked);
  const Eigen::Index n = masked.size();
  const double inf = std::numeric_limits<double>::infinity();
  Matrix g = Matrix::Constant(n, n, inf);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (masked.mask(i, j)) g(i, j) = std::sqrt(masked.d(i, j));
    }
    g(i, i) = 0.0;
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double gik = g(i, k);
      if (gik == inf) continue;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double via = gik + g(k, j);
        if (via < g(i, j)) g(i, j) = via;
      }
    }
  }
  Matrix out = g.array().square();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (masked.mask(i, j)) out(i, j) = masked.d(i, j);
    }
  }
  return out;
}

Matrix gram_from_edm(const Matrix& edm) {
  require(edm.rows() == edm.cols(), "gram_from_edm: matrix must be square");
  const Eigen::Index n = edm.rows();
  const Matrix j = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  Matrix g = -0.5 * j * edm * j;
  return 0.5 * (g + g.transpose());
}

double masked_objective(const MaskedEdm& masked, const Matrix& points) {
  return objective_and_gradient(observed_edges(masked), points, nullptr);
}

Matrix classical_mds(const Matrix& gram) {
  require(gram.rows() == gram.cols() && gram.rows() >= 1, "classical_mds: Gram matrix must be square");
  const Matrix sym = 0.5 * (gram + gram.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) fail(ErrorCode::kDegenerate, "classical_mds: eigendecomposition failed");
  const Eigen::Index n = gram.rows();
  const Vector& values = eig.eigenvalues();  // ascending
  if (!(values(n - 1) > 0.0)) {
    fail(ErrorCode::kDegenerate, "classical_mds: Gram matrix has no positive eigenvalue");
  }
  Matrix points = Matrix::Zero(n, 2);
  for (int k = 0; k < 2 && k < n; ++k) {
    const double lam = std::max(0.0, values(n - 1 - k));
    points.col(k) = std::sqrt(lam) * eig.eigenvectors().col(n - 1 - k);
  }
  return points;
}

GramCompletion complete_gram(const MaskedEdm& masked, std::size_t max_iters, double tol) {
  check_masked(masked);
  const Eigen::Index n = masked.size();
  if (n < 3) {
    fail(ErrorCode::kInvalidArgument,
         "complete_gram: need at least 3 points, got " + std::to_string(n));
  }
  require_connected(masked);

  const auto edges = observed_edges(masked);
  Matrix y = center_rows(classical_mds(gram_from_edm(shortest_path_completion(masked))));

  // L-BFGS with Armijo backtracking.
  constexpr std::size_t kMemory = 10;
  std::deque<Matrix> s_hist, y_hist;
  Matrix grad;
  double f = objective_and_gradient(edges, y, &grad);
  GramCompletion out;
  for (std::size_t it = 0; it < max_iters; ++it) {
    if (f == 0.0) {
      out.converged = true;
      break;
    }
    Matrix q = grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = dot(s_hist[k], q) / dot(y_hist[k], s_hist[k]);
      q -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) q *= dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = dot(y_hist[k], q) / dot(y_hist[k], s_hist[k]);
      q += (alpha[k] - beta) * s_hist[k];
    }
    Matrix dir = -q;
    double slope = dot(grad, dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      dir = -grad;
      slope = dot(grad, dir);
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::sqrt(dot(grad, grad))) : 1.0;
    Matrix y_new, grad_new;
    double f_new = f;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
      y_new = y + step * dir;
      f_new = objective_and_gradient(edges, y_new, &grad_new);
      if (f_new <= f + 1e-4 * step * slope) {
        moved = true;
        break;
      }
    }
    out.iterations = it + 1;
    if (!moved) {
      // no representable decrease along a descent direction
      out.converged = true;
      break;
    }
    Matrix s = y_new - y;
    Matrix yk = grad_new - grad;
    if (dot(s, yk) > 1e-300) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yk));
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    const double decrease = f - f_new;
    y = std::move(y_new);
    grad = std::move(grad_new);
    f = f_new;
    if (decrease <= tol * std::max(f + decrease, std::numeric_limits<double>::min())) {
      out.converged = true;
      break;
    }
  }
  out.points = center_rows(y);
  out.gram = out.points * out.points.transpose();
  out.objective = objective_and_gradient(edges, out.points, nullptr);
  return out;
}

double weighted_stress(const MaskedEdm& masked, const Matrix& points) {
  double s = 0.0;
  for (const auto& e : observed_edges(masked)) {
    const double r = std::sqrt(e.d) - (points.row(e.i) - points.row(e.j)).norm();
    s += r * r;
  }
  return s;
}

SmacofResult smacof(const MaskedEdm& masked, const Matrix& init, std::size_t max_iters,
                    double tol) {
  check_masked(masked);
  const Eigen::Index n = masked.size();
  require(init.rows() == n, "smacof: initial configuration has the wrong number of points");
  for (Eigen::Index i = 0; i < n; ++i) {
    bool has_neighbor = false;
    for (Eigen::Index j = 0; j < n && !has_neighbor; ++j) has_neighbor = j != i && masked.mask(i, j);
    if (!has_neighbor) {
      fail(ErrorCode::kDisconnected,
           "smacof: point " + std::to_string(i) + " has no observed distance");
    }
  }
  require_connected(masked);

  // V = sum_{i<j} w_ij (e_i - e_j)(e_i - e_j)^T; solving with V + 11^T/n gives
  // the Moore-Penrose solution for the centered right-hand side B(X) X.
  Matrix v = Matrix::Zero(n, n);
  const auto edges = observed_edges(masked);
  for (const auto& e : edges) {
    v(e.i, e.j) -= 1.0;
    v(e.j, e.i) -= 1.0;
    v(e.i, e.i) += 1.0;
    v(e.j, e.j) += 1.0;
  }
  const Eigen::LDLT<Matrix> solver(v + Matrix::Constant(n, n, 1.0 / static_cast<double>(n)));

  SmacofResult out;
  out.points = init;
  double stress = weighted_stress(masked, out.points);
  out.stress_trace.push_back(stress);
  for (std::size_t it = 0; it < max_iters; ++it) {
    if (stress == 0.0) {
      out.converged = true;
      break;
    }
    Matrix bx = Matrix::Zero(n, init.cols());
    for (const auto& e : edges) {
      const Eigen::RowVectorXd diff = out.points.row(e.i) - out.points.row(e.j);
      const double dist = diff.norm();
      if (dist <= 0.0) continue;
      const Eigen::RowVectorXd term = (std::sqrt(e.d) / dist) * diff;
      bx.row(e.i) += term;
      bx.row(e.j) -= term;
    }
    Matrix next = solver.solve(bx);
    const double next_stress = weighted_stress(masked, next);
    ++out.iterations;
    const double decrease = stress - next_stress;
    out.points = std::move(next);
    stress = next_stress;
    out.stress_trace.push_back(stress);
    if (decrease <= tol * (stress + decrease)) {
      out.converged = true;
      break;
    }
  }
  return out;
}

Alignment procrustes_align(const Matrix& estimate, const Matrix& ground_truth,
                           bool with_scale, bool allow_reflection) {
  require(estimate.rows() == ground_truth.rows() && estimate.cols() == ground_truth.cols(),
          "procrustes_align: point sets differ in shape");
  require(estimate.rows() >= 2, "procrustes_align: need at least two points");
  const Eigen::RowVectorXd mu_e = estimate.colwise().mean();
  const Eigen::RowVectorXd mu_g = ground_truth.colwise().mean();
  const Matrix a = estimate.rowwise() - mu_e;
  const Matrix b = ground_truth.rowwise() - mu_g;
  if (!(b.squaredNorm() > 0.0)) {
    fail(ErrorCode::kDegenerate, "procrustes_align: ground truth points are all coincident");
  }
  const double n = static_cast<double>(estimate.rows());
  const Matrix cov = b.transpose() * a / n;
  Eigen::JacobiSVD<Matrix> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector sign = Vector::Ones(cov.rows());
  const double det = (svd.matrixU() * svd.matrixV().transpose()).determinant();
  if (!allow_reflection && det < 0.0) sign(sign.size() - 1) = -1.0;
  const Matrix rot = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  const double var_a = a.squaredNorm() / n;
  double scale = 1.0;
  if (with_scale) scale = var_a > 0.0 ? svd.singularValues().dot(sign) / var_a : 0.0;

  Alignment out;
  out.scale = scale;
  out.reflected = rot.determinant() < 0.0;
  out.aligned = (scale * a * rot.transpose()).rowwise() + mu_g;
  out.rmse = std::sqrt((out.aligned - ground_truth).squaredNorm() / n);
  return out;
}

double path_length(const Matrix& points) {
  double len = 0.0;
  for (Eigen::Index i = 1; i < points.rows(); ++i) len += (points.row(i) - points.row(i - 1)).norm();
  return len;
}

void RecoveryConfig::validate() const {
  require(r1 > 0.0, "recover.r1 must be > 0");
  require(completion_max_iters >= 1, "recover.completion_max_iters must be >= 1");
  require(completion_tol >= 0.0, "recover.completion_tol must be >= 0");
  require(smacof_max_iters >= 1, "recover.smacof_max_iters must be >= 1");
  require(smacof_tol >= 0.0, "recover.smacof_tol must be >= 0");
}

RecoveryResult recover_trajectory(const Matrix& features, double lambda,
                                  const RecoveryConfig& config) {
  config.validate();
  RecoveryResult r;
  r.masked = build_masked_edm(features, lambda, config.r1);
  r.completion = complete_gram(r.masked, config.completion_max_iters, config.completion_tol);
  r.completed_edm = kappa(r.completion.gram);
  r.mds_points = classical_mds(r.completion.gram);
  r.refined = smacof(r.masked, r.mds_points, config.smacof_max_iters, config.smacof_tol);
  return r;
}

}  // namespace gmf
