#pragma once

// Synthetic geo-tagged observations standing in for image datasets.
//
// Every pose on a trajectory is observed once per condition. An observation
// is phi(x, heading) + offset_c + noise, where phi is a fixed random Fourier
// feature map of location and heading. The world (trajectory shape, phi,
// condition offsets) depends only on `seed`; `traversal` selects a pose phase
// along the trajectory and an independent noise stream, so traversal 0 is the
// reference run and traversal k > 0 a held-out run over the same world.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gmf/geometry.hpp"

namespace gmf {

enum class Trajectory { kLoop, kFigureEight, kRandomWalk };

struct SceneConfig {
  Trajectory trajectory = Trajectory::kLoop;
  std::size_t n_poses = 200;
  std::size_t conditions = 2;
  std::size_t obs_dim = 32;
  double condition_offset_scale = 0.5;
  double noise_sigma = 0.01;
  double extent = 8.0;        // loop radius / half-width of the figure eight, meters
  double length_scale = 1.5;  // spatial scale of phi, meters
  double heading_weight = 1.0;
  double warp = 0.4;  // strength of the smooth location warp applied before phi
  std::uint64_t seed = 1;
  std::uint32_t traversal = 0;

  void validate() const;
};

struct Image {
  std::int64_t id = 0;
  Location location;
  double heading = 0.0;
  std::string condition;
  std::vector<double> observation;

  friend bool operator==(const Image&, const Image&) = default;
};

struct Scene {
  std::size_t obs_dim = 0;
  std::vector<std::string> conditions;
  std::vector<Image> images;  // condition-major: all poses of c0, then c1, ...

  std::vector<Location> locations() const;
  std::vector<double> headings() const;
  Matrix observations() const;  // one row per image

  /// Images with the given condition tag, in order.
  Scene with_condition(const std::string& tag) const;

  /// Throws if ids repeat, dimensions differ, values are non-finite, a
  /// condition tag is undeclared, or there are fewer than two images.
  void validate() const;

  friend bool operator==(const Scene&, const Scene&) = default;
};

Scene generate_scene(const SceneConfig& config);

std::string trajectory_name(Trajectory t);
Trajectory parse_trajectory(const std::string& name);

std::string serialize_scene(const Scene& scene);
Scene parse_scene(const std::string& text, const std::string& source = "scene");

void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

}  // namespace gmf
