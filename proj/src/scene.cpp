#include "gmf/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "gmf/error.hpp"
#include "gmf/io.hpp"

namespace gmf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Independent deterministic streams derived from the world seed.
enum Stream : std::uint64_t {
  kStreamPhi = 1,
  kStreamOffsets = 2,
  kStreamPath = 3,
  kStreamPhase = 4,
  kStreamNoise = 5,
};

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream,
                         std::uint32_t traversal = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), traversal};
  return std::mt19937_64(seq);
}

// Closed or open planar curve parametrized over u in [0, 1).
class Curve {
 public:
  Curve(const SceneConfig& config) : kind_(config.trajectory), r_(config.extent) {
    if (kind_ == Trajectory::kRandomWalk) build_walk(config.seed);
  }

  Location at(double u) const {
    switch (kind_) {
      case Trajectory::kLoop:
        return {r_ * std::cos(kTwoPi * u), r_ * std::sin(kTwoPi * u)};
      case Trajectory::kFigureEight:
        return {r_ * std::sin(kTwoPi * u),
                r_ * std::sin(kTwoPi * u) * std::cos(kTwoPi * u)};
      case Trajectory::kRandomWalk:
        return walk_at(u);
    }
    return {};
  }

  double heading(double u) const {
    constexpr double h = 1e-6;
    const Location a = at(std::max(0.0, u - h));
    const Location b = at(std::min(1.0, u + h));
    return std::atan2(b.y - a.y, b.x - a.x);
  }

 private:
  void build_walk(std::uint64_t seed) {
    constexpr int kVertices = 512;
    auto rng = make_rng(seed, kStreamPath);
    std::normal_distribution<double> turn(0.0, 0.15);
    const double step = kTwoPi * r_ / kVertices;
    double theta = 0.0;
    Location p{0.0, 0.0};
    walk_.push_back(p);
    arc_.push_back(0.0);
    for (int i = 0; i < kVertices; ++i) {
      theta += turn(rng);
      p = {p.x + step * std::cos(theta), p.y + step * std::sin(theta)};
      walk_.push_back(p);
      arc_.push_back(arc_.back() + step);
    }
  }

  Location walk_at(double u) const {
    const double s = std::clamp(u, 0.0, 1.0) * arc_.back();
    auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
    std::size_t k = static_cast<std::size_t>(it - arc_.begin());
    if (k == 0) k = 1;
    if (k >= arc_.size()) k = arc_.size() - 1;
    const double t = (s - arc_[k - 1]) / (arc_[k] - arc_[k - 1]);
    const Location& a = walk_[k - 1];
    const Location& b = walk_[k];
    return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
  }

  Trajectory kind_;
  double r_;
  std::vector<Location> walk_;
  std::vector<double> arc_;
};

// Random Fourier features of (x, y, cos h, sin h).
class ObservationMap {
 public:
  explicit ObservationMap(const SceneConfig& config)
      : dim_(config.obs_dim),
        freq_(config.obs_dim, 4),
        phase_(config.obs_dim) {
    auto rng = make_rng(config.seed, kStreamPhi);
    build_warp(config, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, kTwoPi);
    for (std::size_t k = 0; k < dim_; ++k) {
      freq_(k, 0) = normal(rng) / config.length_scale;
      freq_(k, 1) = normal(rng) / config.length_scale;
      freq_(k, 2) = normal(rng) * config.heading_weight;
      freq_(k, 3) = normal(rng) * config.heading_weight;
      phase_(k) = uniform(rng);
    }
  }

  std::vector<double> operator()(const Location& p, double heading) const {
    const Location x = warped(p);
    const double scale = std::sqrt(2.0 / static_cast<double>(dim_));
    std::vector<double> out(dim_);
    for (std::size_t k = 0; k < dim_; ++k) {
      const double arg = freq_(k, 0) * x.x + freq_(k, 1) * x.y +
                         freq_(k, 2) * std::cos(heading) +
                         freq_(k, 3) * std::sin(heading) + phase_(k);
      out[k] = scale * std::cos(arg);
    }
    return out;
  }

 private:
  static constexpr int kWarpTerms = 4;

  // p + sum_m a_m * sin(<c_m, p> + e_m); the Jacobian deviates from the
  // identity by roughly `warp`, so the visual change per meter varies.
  void build_warp(const SceneConfig& config, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, kTwoPi);
    const double wl = 0.5 * config.extent;
    for (int m = 0; m < kWarpTerms; ++m) {
      WarpTerm t;
      t.c = {normal(rng) / wl, normal(rng) / wl};
      const double ang = uniform(rng);
      const double amp = config.warp * wl / std::sqrt(static_cast<double>(kWarpTerms));
      t.a = {amp * std::cos(ang), amp * std::sin(ang)};
      t.e = uniform(rng);
      warp_.push_back(t);
    }
  }

  Location warped(const Location& p) const {
    Location out = p;
    for (const auto& t : warp_) {
      const double s = std::sin(t.c.x * p.x + t.c.y * p.y + t.e);
      out.x += t.a.x * s;
      out.y += t.a.y * s;
    }
    return out;
  }

  struct WarpTerm {
    Location c, a;
    double e = 0.0;
  };
  std::vector<WarpTerm> warp_;
  std::size_t dim_;
  Matrix freq_;
  Vector phase_;
};

}  // namespace

void SceneConfig::validate() const {
  require(n_poses >= 2, "scene.n_poses must be >= 2");
  require(conditions >= 1, "scene.conditions must be >= 1");
  require(obs_dim >= 4, "scene.obs_dim must be >= 4");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma),
          "scene.noise_sigma must be >= 0");
  require(condition_offset_scale >= 0.0 && std::isfinite(condition_offset_scale),
          "scene.condition_offset_scale must be >= 0");
  require(extent > 0.0 && std::isfinite(extent), "scene.extent must be > 0");
  require(length_scale > 0.0 && std::isfinite(length_scale),
          "scene.length_scale must be > 0");
  require(heading_weight >= 0.0 && std::isfinite(heading_weight),
          "scene.heading_weight must be >= 0");
  require(warp >= 0.0 && std::isfinite(warp), "scene.warp must be >= 0");
}

Scene generate_scene(const SceneConfig& config) {
  config.validate();
  const Curve curve(config);
  const ObservationMap phi(config);

  std::vector<std::vector<double>> offsets(config.conditions);
  {
    auto rng = make_rng(config.seed, kStreamOffsets);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& o : offsets) {
      o.resize(config.obs_dim);
      double norm = 0.0;
      for (double& v : o) {
        v = normal(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (double& v : o) v *= config.condition_offset_scale / norm;
    }
  }

  double phase = 0.0;
  if (config.traversal > 0) {
    auto rng = make_rng(config.seed, kStreamPhase, config.traversal);
    phase = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  }

  auto noise_rng = make_rng(config.seed, kStreamNoise, config.traversal);
  std::normal_distribution<double> noise(0.0, 1.0);

  Scene scene;
  scene.obs_dim = config.obs_dim;
  for (std::size_t c = 0; c < config.conditions; ++c) {
    scene.conditions.push_back("c" + std::to_string(c));
  }
  scene.images.reserve(config.n_poses * config.conditions);
  const double n = static_cast<double>(config.n_poses);
  for (std::size_t c = 0; c < config.conditions; ++c) {
    for (std::size_t i = 0; i < config.n_poses; ++i) {
      const double u = (static_cast<double>(i) + phase) / n;
      Image img;
      img.id = static_cast<std::int64_t>(c * config.n_poses + i);
      img.location = curve.at(u);
      img.heading = curve.heading(u);
      img.condition = scene.conditions[c];
      img.observation = phi(img.location, img.heading);
      for (std::size_t k = 0; k < config.obs_dim; ++k) {
        img.observation[k] += offsets[c][k];
        if (config.noise_sigma > 0.0) {
          img.observation[k] += config.noise_sigma * noise(noise_rng);
        }
      }
      scene.images.push_back(std::move(img));
    }
  }
  return scene;
}

std::vector<Location> Scene::locations() const {
  std::vector<Location> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(img.location);
  return out;
}

std::vector<double> Scene::headings() const {
  std::vector<double> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(img.heading);
  return out;
}

Matrix Scene::observations() const {
  Matrix out(static_cast<Eigen::Index>(images.size()),
             static_cast<Eigen::Index>(obs_dim));
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t k = 0; k < obs_dim; ++k) out(i, k) = images[i].observation[k];
  }
  return out;
}

Scene Scene::with_condition(const std::string& tag) const {
  Scene out;
  out.obs_dim = obs_dim;
  out.conditions = {tag};
  for (const auto& img : images) {
    if (img.condition == tag) out.images.push_back(img);
  }
  return out;
}

void Scene::validate() const {
  if (images.size() < 2) {
    fail(ErrorCode::kParse, "scene must contain at least 2 images, found " +
                                std::to_string(images.size()));
  }
  require(obs_dim >= 1, "scene obs_dim must be positive");
  std::set<std::int64_t> ids;
  const std::set<std::string> tags(conditions.begin(), conditions.end());
  for (const auto& img : images) {
    const std::string who = "image id " + std::to_string(img.id);
    if (!ids.insert(img.id).second) fail(ErrorCode::kParse, "duplicate " + who);
    if (img.observation.size() != obs_dim) {
      fail(ErrorCode::kParse, who + ": expected " + std::to_string(obs_dim) +
                                  " observation values, got " +
                                  std::to_string(img.observation.size()));
    }
    if (!tags.contains(img.condition)) {
      fail(ErrorCode::kParse, who + ": undeclared condition '" + img.condition + "'");
    }
    bool finite = std::isfinite(img.location.x) && std::isfinite(img.location.y) &&
                  std::isfinite(img.heading);
    for (double v : img.observation) finite = finite && std::isfinite(v);
    if (!finite) fail(ErrorCode::kParse, who + ": non-finite value");
  }
}

std::string trajectory_name(Trajectory t) {
  switch (t) {
    case Trajectory::kLoop: return "loop";
    case Trajectory::kFigureEight: return "figure_eight";
    case Trajectory::kRandomWalk: return "random_walk";
  }
  return "loop";
}

Trajectory parse_trajectory(const std::string& name) {
  if (name == "loop") return Trajectory::kLoop;
  if (name == "figure_eight") return Trajectory::kFigureEight;
  if (name == "random_walk") return Trajectory::kRandomWalk;
  fail(ErrorCode::kInvalidArgument, "unknown trajectory '" + name + "'");
}

// Format:
//   gmf-scene 1
//   obs_dim <D>
//   conditions <C> <tag_1> ... <tag_C>
//   images <N>
//   <id> <x> <y> <heading> <condition> <v_1> ... <v_D>     (N records)
std::string serialize_scene(const Scene& scene) {
  std::ostringstream out;
  out << "gmf-scene 1\n";
  out << "obs_dim " << scene.obs_dim << "\n";
  out << "conditions " << scene.conditions.size();
  for (const auto& c : scene.conditions) out << ' ' << c;
  out << "\nimages " << scene.images.size() << "\n";
  for (const auto& img : scene.images) {
    out << img.id << ' ' << io::format_double(img.location.x) << ' '
        << io::format_double(img.location.y) << ' '
        << io::format_double(img.heading) << ' ' << img.condition;
    for (double v : img.observation) out << ' ' << io::format_double(v);
    out << '\n';
  }
  return out.str();
}

Scene parse_scene(const std::string& text, const std::string& source) {
  io::LineReader reader(text);
  std::vector<std::string_view> tok;
  auto expect = [&](std::string_view key, std::size_t min_tokens) {
    if (!reader.next(tok)) {
      io::parse_error(source, reader.line(),
                      "unexpected end of file, expected '" + std::string(key) + "'");
    }
    if (tok[0] != key || tok.size() < min_tokens) {
      io::parse_error(source, reader.line(),
                      "expected '" + std::string(key) + "' header");
    }
  };

  expect("gmf-scene", 2);
  if (tok[1] != "1") io::parse_error(source, reader.line(), "unsupported version");
  Scene scene;
  expect("obs_dim", 2);
  scene.obs_dim = io::parse_size(tok[1], reader.line());
  expect("conditions", 2);
  const std::size_t n_cond = io::parse_size(tok[1], reader.line());
  if (tok.size() != 2 + n_cond) {
    io::parse_error(source, reader.line(), "condition count does not match tags");
  }
  for (std::size_t c = 0; c < n_cond; ++c) scene.conditions.emplace_back(tok[2 + c]);
  expect("images", 2);
  const std::size_t n_images = io::parse_size(tok[1], reader.line());

  scene.images.reserve(n_images);
  while (reader.next(tok)) {
    const std::size_t line = reader.line();
    if (tok.size() < 5) io::parse_error(source, line, "truncated image record");
    Image img;
    img.id = io::parse_int(tok[0], line);
    if (tok.size() != 5 + scene.obs_dim) {
      io::parse_error(source, line,
                      "image id " + std::to_string(img.id) + ": expected " +
                          std::to_string(scene.obs_dim) +
                          " observation values, got " +
                          std::to_string(tok.size() - 5));
    }
    img.location = {io::parse_double(tok[1], line), io::parse_double(tok[2], line)};
    img.heading = io::parse_double(tok[3], line);
    img.condition = std::string(tok[4]);
    img.observation.reserve(scene.obs_dim);
    for (std::size_t k = 0; k < scene.obs_dim; ++k) {
      img.observation.push_back(io::parse_double(tok[5 + k], line));
    }
    scene.images.push_back(std::move(img));
  }
  if (scene.images.size() != n_images) {
    io::parse_error(source, reader.line(),
                    "header declares " + std::to_string(n_images) +
                        " images, found " + std::to_string(scene.images.size()));
  }
  scene.validate();
  return scene;
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  scene.validate();
  io::write_file_atomic(path, serialize_scene(scene));
}

Scene load_scene(const std::filesystem::path& path) {
  return parse_scene(io::read_file(path), path.string());
}

}  // namespace gmf
