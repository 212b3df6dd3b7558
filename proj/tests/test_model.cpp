#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "gmf/error.hpp"
#include "gmf/model.hpp"
#include "gradcheck.hpp"

using namespace gmf;

TEST_CASE("zero model with identity activation maps to zero") {
  EmbeddingModel m({3, 4, 2}, Activation::kIdentity, false);
  const std::vector<double> x{1.0, -2.0, 0.5};
  CHECK(m.forward(x).isZero());
}

TEST_CASE("forward is deterministic") {
  const auto m = EmbeddingModel::initialized({6, 8, 3}, Activation::kTanh, true, 5);
  const std::vector<double> x{0.1, 0.2, 0.3, -0.4, 0.5, 0.6};
  CHECK(m.forward(x) == m.forward(x));
  CHECK(m.forward(x).norm() == doctest::Approx(1.0));
}

TEST_CASE("2-2-2 network matches a hand computation") {
  EmbeddingModel m({2, 2, 2}, Activation::kTanh, false);
  // layer 0: W = [[0.5, -1], [2, 0.25]], b = [0.1, -0.2]
  // layer 1: W = [[1, 1], [-1, 0.5]],   b = [0, 0.3]
  const double p[] = {0.5, -1, 2, 0.25, 0.1, -0.2, 1, 1, -1, 0.5, 0, 0.3};
  std::copy(std::begin(p), std::end(p), m.parameters().begin());
  const std::vector<double> x{1.0, 2.0};
  const double h0 = std::tanh(0.5 * 1 - 1 * 2 + 0.1);
  const double h1 = std::tanh(2 * 1 + 0.25 * 2 - 0.2);
  const Vector f = m.forward(x);
  CHECK(f(0) == doctest::Approx(h0 + h1));
  CHECK(f(1) == doctest::Approx(-h0 + 0.5 * h1 + 0.3));

  EmbeddingModel n({2, 2, 2}, Activation::kTanh, true);
  std::copy(std::begin(p), std::end(p), n.parameters().begin());
  const double norm = std::hypot(h0 + h1, -h0 + 0.5 * h1 + 0.3);
  CHECK(n.forward(x)(0) == doctest::Approx((h0 + h1) / norm));
}

TEST_CASE("2-2-2 backward matches central differences") {
  EmbeddingModel m = EmbeddingModel::initialized({2, 2, 2}, Activation::kTanh, false, 3);
  Matrix x(1, 2);
  x << 0.7, -0.3;
  Matrix g(1, 2);
  g << 1.0, -2.0;
  const auto analytic = m.backward(m.forward_cached(x), g);
  const std::vector<double> p0(m.parameters().begin(), m.parameters().end());
  const auto numeric = oracle::central_differences(
      [&](const std::vector<double>& p) {
        return (gradcheck::ref_forward({2, 2, 2}, Activation::kTanh, false, p, x).array() * g.array()).sum();
      },
      p0, 1e-6);
  CHECK(oracle::relative_error(analytic, numeric) < 1e-5);
}

TEST_CASE("backward: zero feature gradients give zero parameter gradients") {
  const auto m = EmbeddingModel::initialized({4, 5, 3}, Activation::kRelu, true, 9);
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(3, 4, rng);
  const auto g = m.backward(m.forward_cached(x), Matrix::Zero(3, 3));
  for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("backward of a batch is the sum of per-example gradients") {
  const auto m = EmbeddingModel::initialized({4, 5, 3}, Activation::kTanh, true, 10);
  std::mt19937_64 rng(2);
  const Matrix x = oracle::random_matrix(3, 4, rng);
  const Matrix g = oracle::random_matrix(3, 3, rng);
  const auto batch = m.backward(m.forward_cached(x), g);
  std::vector<double> sum(batch.size(), 0.0);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const auto one = m.backward(m.forward_cached(x.row(i)), g.row(i));
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += one[k];
  }
  CHECK(oracle::relative_error(batch, sum) < 1e-12);
}

TEST_CASE("backward matches central differences for every activation mode") {
  const auto s = gradcheck::check_backward(30, 77);
  CHECK(s.max_rel < 1e-4);
  CHECK(s.max_value_diff < 1e-12);
}

TEST_CASE("relu backward away from the kink") {
  EmbeddingModel m = EmbeddingModel::initialized({3, 6, 2}, Activation::kRelu, false, 12);
  std::mt19937_64 rng(5);
  const Matrix x = oracle::random_matrix(2, 3, rng);
  const Matrix g = oracle::random_matrix(2, 2, rng);
  const std::vector<double> p0(m.parameters().begin(), m.parameters().end());
  const auto analytic = m.backward(m.forward_cached(x), g);
  const auto numeric = oracle::central_differences(
      [&](const std::vector<double>& p) {
        return (gradcheck::ref_forward({3, 6, 2}, Activation::kRelu, false, p, x).array() * g.array()).sum();
      },
      p0, 1e-7);
  CHECK(oracle::relative_error(analytic, numeric) < 1e-4);
}

TEST_CASE("dimension mismatches are rejected") {
  const auto m = EmbeddingModel::initialized({4, 3}, Activation::kTanh, false, 1);
  const std::vector<double> x{1.0, 2.0};
  CHECK_THROWS_AS(m.forward(x), Error);
  std::mt19937_64 rng(1);
  const Matrix batch = oracle::random_matrix(2, 4, rng);
  CHECK_THROWS_AS(m.backward(m.forward_cached(batch), Matrix::Zero(3, 3)), Error);
}

TEST_CASE("activation names round-trip") {
  for (auto a : {Activation::kTanh, Activation::kRelu, Activation::kIdentity}) {
    CHECK(parse_activation(activation_name(a)) == a);
  }
  CHECK_THROWS_AS(parse_activation("sigmoid"), Error);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  Checkpoint cp{EmbeddingModel::initialized({5, 7, 3}, Activation::kRelu, true, 4), 0.123456789};
  const auto path = std::filesystem::temp_directory_path() / "gmf_test_model.txt";
  save_checkpoint(cp, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.model == cp.model);
  CHECK(back.lambda == cp.lambda);
  std::filesystem::remove(path);
}

TEST_CASE("malformed checkpoints are parse errors") {
  const std::string text = serialize_checkpoint({EmbeddingModel({2, 2}, Activation::kTanh, false), 1.0});
  CHECK_NOTHROW(parse_checkpoint(text));
  std::string truncated = text.substr(0, text.rfind('0'));
  CHECK_THROWS_AS(parse_checkpoint(truncated), Error);
  CHECK_THROWS_AS(parse_checkpoint("gmf-model 2\n"), Error);
  CHECK_THROWS_AS(parse_checkpoint(text + "1.0\n"), Error);
}
