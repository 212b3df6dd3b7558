#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "gmf/error.hpp"
#include "gmf/io.hpp"
#include "gmf/scene.hpp"

using namespace gmf;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gmf_test_scene_" + name);
}

}  // namespace

TEST_CASE("image count is poses times conditions") {
  SceneConfig c;
  c.n_poses = 200;
  c.conditions = 2;
  const Scene s = generate_scene(c);
  CHECK(s.images.size() == 400);
  CHECK(s.conditions == std::vector<std::string>{"c0", "c1"});
  CHECK(s.with_condition("c1").images.size() == 200);
}

TEST_CASE("generation is a pure function of the config") {
  for (auto t : {Trajectory::kLoop, Trajectory::kFigureEight, Trajectory::kRandomWalk}) {
    SceneConfig c;
    c.trajectory = t;
    c.n_poses = 50;
    CHECK(generate_scene(c) == generate_scene(c));
    SceneConfig d = c;
    d.seed = 2;
    CHECK(!(generate_scene(c) == generate_scene(d)));
  }
}

TEST_CASE("noiseless single condition: identical poses give identical observations") {
  SceneConfig c;
  c.conditions = 1;
  c.noise_sigma = 0.0;
  c.n_poses = 40;
  const Scene a = generate_scene(c);
  SceneConfig c2 = c;
  c2.conditions = 3;
  const Scene b = generate_scene(c2);
  // every condition sees the same poses; with zero offset they coincide
  c2.condition_offset_scale = 0.0;
  const Scene z = generate_scene(c2);
  CHECK(a == generate_scene(c));
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(z.images[i].observation == z.images[40 + i].observation);
    CHECK(b.images[i].location == b.images[80 + i].location);
  }
}

TEST_CASE("noiseless condition shift is the same at every pose") {
  SceneConfig c;
  c.noise_sigma = 0.0;
  c.n_poses = 25;
  const Scene s = generate_scene(c);
  for (std::size_t i = 1; i < 25; ++i) {
    for (std::size_t k = 0; k < c.obs_dim; ++k) {
      const double d0 = s.images[25].observation[k] - s.images[0].observation[k];
      const double di = s.images[25 + i].observation[k] - s.images[i].observation[k];
      CHECK(di == doctest::Approx(d0).epsilon(1e-12));
    }
  }
}

TEST_CASE("condition offsets have the configured norm") {
  SceneConfig c;
  c.noise_sigma = 0.0;
  c.condition_offset_scale = 0.7;
  c.conditions = 2;
  c.n_poses = 10;
  SceneConfig flat = c;
  flat.condition_offset_scale = 0.0;
  const Scene s = generate_scene(c);
  const Scene f = generate_scene(flat);
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    double n = 0.0;
    for (std::size_t k = 0; k < c.obs_dim; ++k) {
      n += std::pow(s.images[i].observation[k] - f.images[i].observation[k], 2);
    }
    CHECK(std::sqrt(n) == doctest::Approx(0.7).epsilon(1e-9));
  }
}

TEST_CASE("headings are trajectory tangents") {
  SceneConfig c;
  c.n_poses = 400;
  c.conditions = 1;
  for (auto t : {Trajectory::kLoop, Trajectory::kFigureEight, Trajectory::kRandomWalk}) {
    c.trajectory = t;
    const Scene s = generate_scene(c);
    for (std::size_t i = 1; i + 1 < s.images.size(); ++i) {
      const Location a = s.images[i - 1].location, b = s.images[i + 1].location;
      const double chord = std::atan2(b.y - a.y, b.x - a.x);
      double diff = std::remainder(chord - s.images[i].heading, 2.0 * M_PI);
      // the random walk is a polyline, so its tangent jumps at vertices
      CHECK(std::abs(diff) < (t == Trajectory::kRandomWalk ? 0.6 : 0.05));
    }
  }
}

TEST_CASE("noiseless observation map is smooth in location") {
  // Empirical Lipschitz estimate on neighbouring poses, then check that
  // pairs closer together never differ by more than the bound predicts.
  SceneConfig c;
  c.n_poses = 1000;
  c.conditions = 1;
  c.noise_sigma = 0.0;
  const Scene s = generate_scene(c);
  auto obs_dist = [&](std::size_t i, std::size_t j) {
    double d = 0.0;
    for (std::size_t k = 0; k < c.obs_dim; ++k) {
      d += std::pow(s.images[i].observation[k] - s.images[j].observation[k], 2);
    }
    return std::sqrt(d);
  };
  auto geo = [&](std::size_t i, std::size_t j) { return std::sqrt(sq_distance(s.images[i].location, s.images[j].location)); };
  double lip = 0.0;
  for (std::size_t i = 0; i + 1 < s.images.size(); ++i) lip = std::max(lip, obs_dist(i, i + 1) / geo(i, i + 1));
  CHECK(lip < 50.0);
  for (std::size_t i = 0; i + 3 < s.images.size(); i += 7) {
    CHECK(obs_dist(i, i + 3) <= 1.5 * lip * geo(i, i + 3));
  }
  // and the difference shrinks with the step
  double prev = 1e9;
  for (std::size_t step : {64, 16, 4, 1}) {
    double m = 0.0;
    for (std::size_t i = 0; i + step < s.images.size(); i += 13) m = std::max(m, obs_dist(i, i + step));
    CHECK(m < prev);
    prev = m;
  }
}

TEST_CASE("traversals share the world but not poses or noise") {
  SceneConfig c;
  c.n_poses = 60;
  SceneConfig q = c;
  q.traversal = 1;
  const Scene a = generate_scene(c), b = generate_scene(q);
  CHECK(a.images.size() == b.images.size());
  CHECK(!(a.images[0].location == b.images[0].location));
  // same radius for the loop
  const double ra = std::hypot(a.images[5].location.x, a.images[5].location.y);
  const double rb = std::hypot(b.images[5].location.x, b.images[5].location.y);
  CHECK(ra == doctest::Approx(rb));
}

TEST_CASE("scene config validation") {
  SceneConfig c;
  c.n_poses = 1;
  CHECK_THROWS_AS(generate_scene(c), Error);
  c = {};
  c.obs_dim = 3;
  CHECK_THROWS_AS(generate_scene(c), Error);
  c = {};
  c.noise_sigma = -1.0;
  CHECK_THROWS_AS(generate_scene(c), Error);
  c = {};
  c.conditions = 0;
  CHECK_THROWS_AS(generate_scene(c), Error);
}

TEST_CASE("trajectory names round-trip") {
  for (auto t : {Trajectory::kLoop, Trajectory::kFigureEight, Trajectory::kRandomWalk}) {
    CHECK(parse_trajectory(trajectory_name(t)) == t);
  }
  CHECK_THROWS_AS(parse_trajectory("spiral"), Error);
}

TEST_CASE("save and load round-trip bit-exactly") {
  for (auto t : {Trajectory::kLoop, Trajectory::kFigureEight, Trajectory::kRandomWalk}) {
    SceneConfig c;
    c.trajectory = t;
    c.n_poses = 30;
    c.conditions = 3;
    const Scene s = generate_scene(c);
    const auto path = temp_path("roundtrip.txt");
    save_scene(s, path);
    const Scene back = load_scene(path);
    CHECK(back == s);
    std::filesystem::remove(path);
  }
}

TEST_CASE("parse errors name the line and the offending id") {
  const std::string good =
      "gmf-scene 1\nobs_dim 4\nconditions 1 c0\nimages 2\n"
      "0 0 0 0 c0 1 2 3 4\n"
      "1 1 0 0 c0 1 2 3 4\n";
  CHECK(parse_scene(good).images.size() == 2);

  const std::string short_row =
      "gmf-scene 1\nobs_dim 4\nconditions 1 c0\nimages 2\n"
      "0 0 0 0 c0 1 2 3 4\n"
      "17 1 0 0 c0 1 2 3\n";
  try {
    parse_scene(short_row, "bad.txt");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    const std::string msg = e.what();
    CHECK(msg.find("bad.txt:6") != std::string::npos);
    CHECK(msg.find("17") != std::string::npos);
  }

  const std::string empty = "gmf-scene 1\nobs_dim 4\nconditions 1 c0\nimages 0\n";
  CHECK_THROWS_AS(parse_scene(empty), Error);

  const std::string dup =
      "gmf-scene 1\nobs_dim 4\nconditions 1 c0\nimages 2\n"
      "3 0 0 0 c0 1 2 3 4\n"
      "3 1 0 0 c0 1 2 3 4\n";
  CHECK_THROWS_AS(parse_scene(dup), Error);

  const std::string bad_tag =
      "gmf-scene 1\nobs_dim 4\nconditions 1 c0\nimages 2\n"
      "0 0 0 0 c0 1 2 3 4\n"
      "1 1 0 0 c9 1 2 3 4\n";
  CHECK_THROWS_AS(parse_scene(bad_tag), Error);

  CHECK_THROWS_AS(parse_scene("not a scene"), Error);
}

TEST_CASE("loading a missing file is an io error") {
  try {
    load_scene(temp_path("does_not_exist.txt"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}
