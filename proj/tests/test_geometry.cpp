#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "gmf/error.hpp"
#include "gmf/geometry.hpp"
#include "oracles.hpp"

using namespace gmf;

TEST_CASE("kappa of a Gram matrix is the squared EDM") {
  std::mt19937_64 rng(7);
  for (Eigen::Index n : {3, 10, 100}) {
    const Matrix x = oracle::random_matrix(n, 2, rng, 3.0);
    const Matrix expected = oracle::brute_force_sq_edm(x);
    const Matrix d = kappa(x * x.transpose());
    CHECK((d - expected).norm() / expected.norm() < 1e-9);
  }
}

TEST_CASE("kappa is invariant to translating the points") {
  std::mt19937_64 rng(8);
  Matrix x = oracle::random_matrix(12, 2, rng);
  const Matrix d0 = kappa(x * x.transpose());
  x.col(0).array() += 5.0;
  x.col(1).array() -= 2.0;
  const Matrix d1 = kappa(x * x.transpose());
  CHECK((d0 - d1).norm() < 1e-9 * d0.norm());
}

TEST_CASE("pairwise EDM matches brute force and is symmetric with zero diagonal") {
  std::mt19937_64 rng(9);
  const Matrix x = oracle::random_matrix(30, 5, rng);
  const Matrix d = pairwise_sq_edm(x);
  CHECK((d - oracle::brute_force_sq_edm(x)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(d.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK(d.minCoeff() >= 0.0);
}

TEST_CASE("location overload agrees with the matrix overload") {
  std::vector<Location> loc{{0, 0}, {3, 4}, {-1, 2}};
  const Matrix d = pairwise_sq_edm(loc);
  CHECK(d(0, 1) == 25.0);
  CHECK(d(1, 2) == 20.0);
  CHECK((d - pairwise_sq_edm(to_matrix(loc))).norm() == 0.0);
}

TEST_CASE("stack_rows rejects ragged input") {
  std::vector<std::vector<double>> rows{{1, 2}, {3}};
  CHECK_THROWS_AS(stack_rows(rows), Error);
  std::vector<std::vector<double>> ok{{1, 2}, {3, 4}};
  CHECK(stack_rows(ok)(1, 0) == 3.0);
}

TEST_CASE("classify_pairs: radii are inclusive") {
  std::vector<Location> loc{{0, 0}, {1, 0}, {4, 0}, {2.5, 0}};
  const PairSets s = classify_pairs(loc, std::nullopt, 1.0, 4.0);
  auto has = [](const std::vector<IndexPair>& v, IndexPair p) {
    return std::find(v.begin(), v.end(), p) != v.end();
  };
  CHECK(has(s.positives, {0, 1}));   // exactly r1
  CHECK(has(s.negatives, {0, 2}));   // exactly r2
  CHECK(!has(s.positives, {0, 3}));  // band
  CHECK(!has(s.negatives, {0, 3}));
  CHECK(has(s.positives, {2, 3}) == false);
  CHECK(has(s.positives, {1, 3}) == false);
}

TEST_CASE("classify_pairs: heading filter only removes positives") {
  std::vector<Location> loc{{0, 0}, {0.5, 0}, {10, 0}};
  std::vector<double> head{0.0, 3.0, 0.0};
  const PairSets with = classify_pairs(loc, std::span<const double>(head), 1.0, 4.0, 0.5);
  const PairSets without = classify_pairs(loc, std::nullopt, 1.0, 4.0);
  CHECK(with.positives.empty());
  CHECK(without.positives.size() == 1);
  CHECK(with.negatives == without.negatives);
}

TEST_CASE("classify_pairs: same place is positive, far place is negative") {
  std::vector<Location> loc{{2, 2}, {2, 2}, {20, 2}};
  const PairSets s = classify_pairs(loc, std::nullopt, 1.0, 4.0);
  REQUIRE(s.positives.size() == 1);
  CHECK(s.positives[0] == IndexPair{0, 1});
  CHECK(s.negatives.size() == 2);
}

TEST_CASE("classify_pairs: positive and negative sets are disjoint") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 6.0);
  std::vector<Location> loc(60);
  for (auto& l : loc) l = {u(rng), u(rng)};
  const PairSets s = classify_pairs(loc, std::nullopt, 1.0, 4.0);
  for (const auto& p : s.positives) {
    CHECK(std::find(s.negatives.begin(), s.negatives.end(), p) == s.negatives.end());
    CHECK(sq_distance(loc[p.first], loc[p.second]) <= 1.0);
  }
  for (const auto& p : s.negatives) CHECK(sq_distance(loc[p.first], loc[p.second]) >= 16.0);
}

TEST_CASE("classify_pairs: invalid radii") {
  std::vector<Location> loc{{0, 0}, {1, 0}};
  CHECK_THROWS_AS(classify_pairs(loc, std::nullopt, 4.0, 1.0), Error);
  CHECK_THROWS_AS(classify_pairs(loc, std::nullopt, 2.0, 2.0), Error);
  CHECK_THROWS_AS(classify_pairs({}, std::nullopt, 1.0, 2.0), Error);
}

TEST_CASE("classify_pairs: points on a line") {
  std::vector<Location> loc{{0, 0}, {0.5, 0}, {5, 0}};
  const PairSets s = classify_pairs(loc, std::nullopt, 1.0, 4.0);
  CHECK(s.positives == std::vector<IndexPair>{{0, 1}});
  CHECK(s.negatives == std::vector<IndexPair>{{0, 2}, {1, 2}});
}

TEST_CASE("classify_pairs: 45 degrees apart fails a 30 degree filter") {
  std::vector<Location> loc{{1, 1}, {1, 1}};
  std::vector<double> head{0.0, std::numbers::pi / 4};
  const PairSets s = classify_pairs(loc, std::span<const double>(head), 1.0, 4.0, std::numbers::pi / 6);
  CHECK(s.positives.empty());
}

TEST_CASE("classify_pairs: monotone in the radii") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 8.0);
  std::vector<Location> loc(80);
  for (auto& l : loc) l = {u(rng), u(rng)};
  const PairSets base = classify_pairs(loc, std::nullopt, 1.5, 4.0);
  const PairSets small_r1 = classify_pairs(loc, std::nullopt, 1.0, 4.0);
  const PairSets big_r2 = classify_pairs(loc, std::nullopt, 1.5, 5.0);
  for (const auto& p : small_r1.positives) {
    CHECK(std::find(base.positives.begin(), base.positives.end(), p) != base.positives.end());
  }
  for (const auto& p : big_r2.negatives) {
    CHECK(std::find(base.negatives.begin(), base.negatives.end(), p) != base.negatives.end());
  }
  CHECK(small_r1.positives.size() <= base.positives.size());
  CHECK(big_r2.negatives.size() <= base.negatives.size());
}

TEST_CASE("wrapped angle difference") {
  constexpr double pi = std::numbers::pi;
  CHECK(wrapped_angle_difference(0.1, -0.1) == doctest::Approx(0.2));
  CHECK(wrapped_angle_difference(pi - 0.1, -pi + 0.1) == doctest::Approx(0.2));
  CHECK(wrapped_angle_difference(0.0, pi) == doctest::Approx(pi));
  CHECK(wrapped_angle_difference(0.3, 0.3 + 4 * pi) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("center_rows gives zero column means") {
  std::mt19937_64 rng(12);
  const Matrix c = center_rows(oracle::random_matrix(20, 3, rng, 4.0));
  CHECK(c.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
}
