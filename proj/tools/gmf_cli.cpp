// gmf-cli: batch driver for scene generation, training, evaluation and
// trajectory recovery. Talks to the library only through gmf.h.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "CLI11.hpp"
#include "gmf/gmf.h"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kCliVersion = "0.1.0";

enum Exit { kExitOk = 0, kExitUsage = 1, kExitConfig = 2, kExitRuntime = 3 };

struct Failure {
  Exit code;
  std::string message;
};

[[noreturn]] void config_error(const std::string& msg) { throw Failure{kExitConfig, msg}; }
[[noreturn]] void runtime_error(const std::string& msg) { throw Failure{kExitRuntime, msg}; }

void check(gmf_status s, const std::string& what) {
  if (s == GMF_OK) return;
  runtime_error(what + ": " + gmf_status_string(s) + ": " + gmf_last_error());
}

void check_config(gmf_status s, const std::string& what) {
  if (s == GMF_OK) return;
  config_error(what + ": " + gmf_last_error());
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ScenePtr = std::unique_ptr<gmf_scene, Deleter<gmf_scene, gmf_scene_free>>;
using ModelPtr = std::unique_ptr<gmf_model, Deleter<gmf_model, gmf_model_free>>;
using LogPtr = std::unique_ptr<gmf_loss_log, Deleter<gmf_loss_log, gmf_loss_log_free>>;
using RecoveryPtr = std::unique_ptr<gmf_recovery, Deleter<gmf_recovery, gmf_recovery_free>>;

// ---------------------------------------------------------------- config ---

// Indexed by the gmf_activation and gmf_nv_variant values.
constexpr const char* kActivationNames[] = {"tanh", "relu", "identity"};
constexpr const char* kNvNames[] = {"triplet", "lazy_triplet", "quadruplet", "lazy_quadruplet"};

json default_config() {
  gmf_scene_config sc;
  gmf_scene_config_default(&sc);
  gmf_train_config tc;
  gmf_train_config_default(&tc);
  gmf_recover_config rc;
  gmf_recover_config_default(&rc);

  json hidden = json::array();
  for (size_t k = 0; k < tc.n_hidden; ++k) hidden.push_back(tc.hidden[k]);

  return json{
      {"seed", sc.seed},
      {"scene",
       {{"trajectory", "loop"},
        {"n_poses", sc.n_poses},
        {"conditions", sc.conditions},
        {"obs_dim", sc.obs_dim},
        {"condition_offset_scale", sc.condition_offset_scale},
        {"noise_sigma", sc.noise_sigma},
        {"extent", sc.extent},
        {"length_scale", sc.length_scale},
        {"heading_weight", sc.heading_weight},
        {"warp", sc.warp},
        {"query_traversal", 1u}}},
      {"train",
       {{"r1", tc.r1},
        {"r2", tc.r2},
        {"max_heading", nullptr},
        {"positives_per_anchor", tc.positives_per_anchor},
        {"negatives_per_anchor", tc.negatives_per_anchor},
        {"hard_fraction", tc.hard_fraction},
        {"cache_refresh_iters", tc.cache_refresh_iters},
        {"learning_rate", tc.learning_rate},
        {"momentum", tc.momentum},
        {"max_grad_norm", tc.max_grad_norm},
        {"epochs", tc.epochs},
        {"batch_anchors", tc.batch_anchors},
        {"hidden", hidden},
        {"feature_dim", tc.feature_dim},
        {"activation", kActivationNames[tc.activation]},
        {"normalize", tc.normalize != 0},
        {"calibrate_lambda", tc.calibrate_lambda != 0},
        {"loss",
         {{"lambda", tc.loss.lambda},
          {"alpha", tc.loss.alpha},
          {"gamma", tc.loss.gamma},
          {"beta", tc.loss.beta},
          {"huber_delta", tc.loss.huber_delta},
          {"vg", tc.loss.vg_variant == GMF_VG_HUBER ? "huber" : "squared"},
          {"nv", kNvNames[tc.loss.nv_variant]}}}}},
      {"landmarks", {{"method", "greedy"}, {"count", 20u}, {"first", nullptr}, {"r_lm", 1.0}}},
      {"evaluate", {{"tolerances", {0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0}}, {"kdtree", true}}},
      {"recover",
       {{"condition", "c0"},
        {"completion_max_iters", rc.completion_max_iters},
        {"completion_tol", rc.completion_tol},
        {"smacof_max_iters", rc.smacof_max_iters},
        {"smacof_tol", rc.smacof_tol}}}};
}

bool same_kind(const json& def, const json& v) {
  if (def.is_null()) return v.is_null() || v.is_number();
  if (def.is_number_unsigned()) return v.is_number_unsigned();
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return false;
}

// Overlays `user` on `base`, rejecting keys and types the defaults do not have.
void merge_strict(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) config_error(where + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) config_error("unknown key '" + key + "'");
    json& slot = base[it.key()];
    if (!same_kind(slot, it.value())) config_error("wrong type for '" + key + "'");
    if (slot.is_object()) {
      merge_strict(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_config(const std::optional<std::string>& path, std::optional<std::uint64_t> seed) {
  json cfg = default_config();
  if (path) {
    std::string text;
    try {
      text = read_text(*path);
    } catch (const Failure& f) {
      config_error(f.message);
    }
    json user;
    try {
      user = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
      config_error(*path + ": " + e.what());
    }
    merge_strict(cfg, user, "");
  }
  if (seed) cfg["seed"] = *seed;
  return cfg;
}

template <class T>
T get(const json& j, const char* key) {
  return j.at(key).get<T>();
}

gmf_scene_config scene_config(const json& cfg, std::uint32_t traversal) {
  const json& s = cfg.at("scene");
  gmf_scene_config c;
  gmf_scene_config_default(&c);
  const auto traj = get<std::string>(s, "trajectory");
  if (traj == "loop") {
    c.trajectory = GMF_TRAJECTORY_LOOP;
  } else if (traj == "figure_eight") {
    c.trajectory = GMF_TRAJECTORY_FIGURE_EIGHT;
  } else if (traj == "random_walk") {
    c.trajectory = GMF_TRAJECTORY_RANDOM_WALK;
  } else {
    config_error("scene.trajectory must be loop, figure_eight or random_walk");
  }
  c.n_poses = get<size_t>(s, "n_poses");
  c.conditions = get<size_t>(s, "conditions");
  c.obs_dim = get<size_t>(s, "obs_dim");
  c.condition_offset_scale = get<double>(s, "condition_offset_scale");
  c.noise_sigma = get<double>(s, "noise_sigma");
  c.extent = get<double>(s, "extent");
  c.length_scale = get<double>(s, "length_scale");
  c.heading_weight = get<double>(s, "heading_weight");
  c.warp = get<double>(s, "warp");
  c.seed = get<std::uint64_t>(cfg, "seed");
  c.traversal = traversal;
  check_config(gmf_scene_config_validate(&c), "scene");
  return c;
}

gmf_train_config train_config(const json& cfg) {
  const json& t = cfg.at("train");
  gmf_train_config c;
  gmf_train_config_default(&c);
  c.r1 = get<double>(t, "r1");
  c.r2 = get<double>(t, "r2");
  c.max_heading = t.at("max_heading").is_null() ? -1.0 : get<double>(t, "max_heading");
  c.positives_per_anchor = get<size_t>(t, "positives_per_anchor");
  c.negatives_per_anchor = get<size_t>(t, "negatives_per_anchor");
  c.hard_fraction = get<double>(t, "hard_fraction");
  c.cache_refresh_iters = get<size_t>(t, "cache_refresh_iters");
  c.learning_rate = get<double>(t, "learning_rate");
  c.momentum = get<double>(t, "momentum");
  c.max_grad_norm = get<double>(t, "max_grad_norm");
  c.epochs = get<size_t>(t, "epochs");
  c.batch_anchors = get<size_t>(t, "batch_anchors");
  c.seed = get<std::uint64_t>(cfg, "seed");
  const json& hidden = t.at("hidden");
  if (hidden.size() > GMF_MAX_HIDDEN_LAYERS) {
    config_error("train.hidden has more than " + std::to_string(GMF_MAX_HIDDEN_LAYERS) +
                 " layers");
  }
  c.n_hidden = hidden.size();
  for (size_t k = 0; k < hidden.size(); ++k) {
    if (!hidden[k].is_number_unsigned() || hidden[k].get<size_t>() == 0) {
      config_error("train.hidden entries must be positive integers");
    }
    c.hidden[k] = hidden[k].get<size_t>();
  }
  c.feature_dim = get<size_t>(t, "feature_dim");
  const auto act = get<std::string>(t, "activation");
  if (act == "tanh") {
    c.activation = GMF_ACTIVATION_TANH;
  } else if (act == "relu") {
    c.activation = GMF_ACTIVATION_RELU;
  } else if (act == "identity") {
    c.activation = GMF_ACTIVATION_IDENTITY;
  } else {
    config_error("train.activation must be tanh, relu or identity");
  }
  c.normalize = get<bool>(t, "normalize") ? 1 : 0;
  c.calibrate_lambda = get<bool>(t, "calibrate_lambda") ? 1 : 0;

  const json& l = t.at("loss");
  c.loss.lambda = get<double>(l, "lambda");
  c.loss.alpha = get<double>(l, "alpha");
  c.loss.gamma = get<double>(l, "gamma");
  c.loss.beta = get<double>(l, "beta");
  c.loss.huber_delta = get<double>(l, "huber_delta");
  const auto vg = get<std::string>(l, "vg");
  if (vg == "squared") {
    c.loss.vg_variant = GMF_VG_SQUARED;
  } else if (vg == "huber") {
    c.loss.vg_variant = GMF_VG_HUBER;
  } else {
    config_error("train.loss.vg must be squared or huber");
  }
  const auto nv = get<std::string>(l, "nv");
  const auto it = std::find_if(std::begin(kNvNames), std::end(kNvNames),
                               [&](const char* name) { return nv == name; });
  if (it == std::end(kNvNames)) {
    config_error("train.loss.nv must be triplet, lazy_triplet, quadruplet or lazy_quadruplet");
  }
  c.loss.nv_variant = static_cast<gmf_nv_variant>(it - std::begin(kNvNames));
  check_config(gmf_train_config_validate(&c), "train");
  return c;
}

struct LandmarkConfig {
  bool greedy = true;
  size_t count = 0;
  std::int64_t first = -1;
  double r_lm = 1.0;
};

LandmarkConfig landmark_config(const json& cfg) {
  const json& l = cfg.at("landmarks");
  LandmarkConfig c;
  const auto method = get<std::string>(l, "method");
  if (method != "greedy" && method != "threshold") {
    config_error("landmarks.method must be greedy or threshold");
  }
  c.greedy = method == "greedy";
  c.count = get<size_t>(l, "count");
  c.r_lm = get<double>(l, "r_lm");
  if (!l.at("first").is_null()) {
    if (!l.at("first").is_number_unsigned()) config_error("landmarks.first must be an index");
    c.first = l.at("first").get<std::int64_t>();
  }
  if (c.greedy && c.count == 0) config_error("landmarks.count must be >= 1");
  if (!c.greedy && !(c.r_lm > 0.0)) config_error("landmarks.r_lm must be > 0");
  return c;
}

std::vector<double> tolerances(const json& cfg) {
  std::vector<double> out;
  for (const auto& v : cfg.at("evaluate").at("tolerances")) {
    if (!v.is_number() || v.get<double>() < 0.0) {
      config_error("evaluate.tolerances must be non-negative numbers");
    }
    out.push_back(v.get<double>());
  }
  if (out.empty()) config_error("evaluate.tolerances must not be empty");
  return out;
}

gmf_recover_config recover_config(const json& cfg) {
  const json& r = cfg.at("recover");
  gmf_recover_config c;
  gmf_recover_config_default(&c);
  c.r1 = get<double>(cfg.at("train"), "r1");
  c.completion_max_iters = get<size_t>(r, "completion_max_iters");
  c.completion_tol = get<double>(r, "completion_tol");
  c.smacof_max_iters = get<size_t>(r, "smacof_max_iters");
  c.smacof_tol = get<double>(r, "smacof_tol");
  check_config(gmf_recover_config_validate(&c), "recover");
  return c;
}

// Converts and validates every section so a bad value fails before any work.
void validate_all(const json& cfg) {
  scene_config(cfg, 0);
  train_config(cfg);
  landmark_config(cfg);
  tolerances(cfg);
  recover_config(cfg);
  if (cfg.at("recover").at("condition").get<std::string>().empty()) {
    config_error("recover.condition must not be empty");
  }
}

// ---------------------------------------------------------------- output ---

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    runtime_error(where + ": not a number: '" + s + "'");
  }
  return v;
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_atomic(const fs::path& path, const std::string& data) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) runtime_error("cannot write " + tmp.string());
    out << data;
    out.flush();
    if (!out) runtime_error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    runtime_error("cannot rename onto " + path.string());
  }
}

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Csv read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  Csv csv;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) runtime_error(path.string() + ": empty file");
  csv.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != csv.header.size()) {
      runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(csv.header.size()) + " fields, got " +
                    std::to_string(row.size()));
    }
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

// A run records its inputs and outputs and finishes with a manifest.
class Run {
 public:
  Run(std::string command, const json& cfg, fs::path in, fs::path out, bool quiet)
      : command_(std::move(command)), cfg_(cfg), in_(std::move(in)), out_(std::move(out)),
        quiet_(quiet) {}

  const json& cfg() const { return cfg_; }
  bool quiet() const { return quiet_; }

  fs::path input(const std::string& name) {
    const fs::path p = in_ / name;
    if (!fs::exists(p)) runtime_error("missing input " + p.string());
    inputs_[name] = hex(fnv1a64(read_text(p)));
    return p;
  }

  fs::path output_path(const std::string& name) const { return out_ / name; }

  void write(const std::string& name, const std::string& data) {
    write_atomic(out_ / name, data);
    outputs_[name] = hex(fnv1a64(data));
  }

  // For files written by the library itself.
  void record(const std::string& name) { outputs_[name] = hex(fnv1a64(read_text(out_ / name))); }

  void say(const std::string& msg) const {
    if (!quiet_) std::cout << command_ << ": " << msg << "\n";
  }

  void finish() {
    json m;
    m["command"] = command_;
    m["cli_version"] = kCliVersion;
    m["library_version"] = gmf_version();
    m["seed"] = cfg_.at("seed");
    m["config_hash"] = hex(fnv1a64(cfg_.dump()));
    m["config"] = cfg_;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    write_atomic(out_ / (command_ + ".manifest.json"), m.dump(2) + "\n");
  }

 private:
  std::string command_;
  json cfg_;
  fs::path in_, out_;
  bool quiet_;
  std::map<std::string, std::string> inputs_, outputs_;
};

// -------------------------------------------------------------- features ---

struct FeatureTable {
  std::vector<std::int64_t> ids;
  std::vector<double> xy;
  std::vector<std::string> conditions;
  std::vector<double> features;  // row-major
  size_t dim = 0;

  size_t size() const { return ids.size(); }

  FeatureTable with_condition(const std::string& tag) const {
    FeatureTable out;
    out.dim = dim;
    for (size_t i = 0; i < size(); ++i) {
      if (conditions[i] != tag) continue;
      out.ids.push_back(ids[i]);
      out.xy.insert(out.xy.end(), xy.begin() + 2 * i, xy.begin() + 2 * i + 2);
      out.conditions.push_back(tag);
      out.features.insert(out.features.end(), features.begin() + i * dim,
                          features.begin() + (i + 1) * dim);
    }
    return out;
  }
};

std::string features_csv(const gmf_scene* scene, const std::vector<double>& f, size_t dim) {
  std::string out = "id,x,y,heading,condition";
  for (size_t k = 0; k < dim; ++k) out += ",f" + std::to_string(k);
  out += "\n";
  const size_t n = gmf_scene_size(scene);
  for (size_t i = 0; i < n; ++i) {
    gmf_image_view v;
    check(gmf_scene_image(scene, i, &v), "scene image");
    out += std::to_string(v.id) + "," + fmt(v.x) + "," + fmt(v.y) + "," + fmt(v.heading) + "," +
           v.condition;
    for (size_t k = 0; k < dim; ++k) out += "," + fmt(f[i * dim + k]);
    out += "\n";
  }
  return out;
}

FeatureTable load_features(const fs::path& path) {
  const Csv csv = read_csv(path);
  if (csv.header.size() < 6 || csv.header[0] != "id" || csv.header[4] != "condition") {
    runtime_error(path.string() + ": not a feature file");
  }
  FeatureTable t;
  t.dim = csv.header.size() - 5;
  for (const auto& row : csv.rows) {
    t.ids.push_back(static_cast<std::int64_t>(parse_double(row[0], path.string())));
    t.xy.push_back(parse_double(row[1], path.string()));
    t.xy.push_back(parse_double(row[2], path.string()));
    t.conditions.push_back(row[4]);
    for (size_t k = 0; k < t.dim; ++k) t.features.push_back(parse_double(row[5 + k], path.string()));
  }
  if (t.size() < 2) runtime_error(path.string() + ": fewer than two feature rows");
  return t;
}

ScenePtr load_scene(const fs::path& path) {
  gmf_scene* s = nullptr;
  check(gmf_scene_load(path.string().c_str(), &s), "load " + path.string());
  return ScenePtr(s);
}

ModelPtr load_model(const fs::path& path) {
  gmf_model* m = nullptr;
  check(gmf_model_load(path.string().c_str(), &m), "load " + path.string());
  return ModelPtr(m);
}

// -------------------------------------------------------------- commands ---

void cmd_gen_scene(Run& run) {
  const json& cfg = run.cfg();
  const auto traversal = cfg.at("scene").at("query_traversal").get<std::uint32_t>();
  if (traversal == 0) config_error("scene.query_traversal must differ from the reference run (0)");
  const auto ref_cfg = scene_config(cfg, 0);
  const auto query_cfg = scene_config(cfg, traversal);
  for (const auto& [name, c] : {std::pair{"scene.txt", ref_cfg}, std::pair{"query_scene.txt", query_cfg}}) {
    gmf_scene* s = nullptr;
    check(gmf_scene_generate(&c, &s), "generate scene");
    ScenePtr owned(s);
    check(gmf_scene_save(s, run.output_path(name).string().c_str()), std::string("save ") + name);
    run.record(name);
    run.say(std::string(name) + ": " + std::to_string(gmf_scene_size(s)) + " images");
  }
}

void cmd_train(Run& run) {
  const auto tc = train_config(run.cfg());
  const ScenePtr scene = load_scene(run.input("scene.txt"));
  gmf_model* m = nullptr;
  gmf_loss_log* l = nullptr;
  gmf_train_report report;
  check(gmf_train(scene.get(), &tc, &m, &l, &report), "train");
  ModelPtr model(m);
  LogPtr log(l);
  check(gmf_model_save(model.get(), run.output_path("model.txt").string().c_str()), "save model");
  run.record("model.txt");

  std::string csv = "iteration,loss,nv,vg\n";
  for (size_t i = 0; i < gmf_loss_log_size(log.get()); ++i) {
    gmf_loss_entry e;
    check(gmf_loss_log_entry(log.get(), i, &e), "loss log");
    csv += std::to_string(e.iteration) + "," + fmt(e.loss) + "," + fmt(e.nv) + "," + fmt(e.vg) + "\n";
  }
  run.write("loss_log.csv", csv);
  json rep{{"lambda", report.lambda},
           {"anchor_visits", report.anchor_visits},
           {"skipped_anchors", report.skipped_anchors},
           {"cache_refreshes", report.cache_refreshes},
           {"iterations", report.iterations}};
  run.write("train_report.json", rep.dump(2) + "\n");
  run.say(std::to_string(report.iterations) + " updates, lambda " + fmt(report.lambda));
}

void cmd_embed(Run& run) {
  const ModelPtr model = load_model(run.input("model.txt"));
  const size_t dim = gmf_model_feature_dim(model.get());
  for (const auto& [in, out] : {std::pair{"scene.txt", "features.csv"},
                                std::pair{"query_scene.txt", "query_features.csv"}}) {
    const ScenePtr scene = load_scene(run.input(in));
    std::vector<double> f(gmf_scene_size(scene.get()) * dim);
    check(gmf_embed(model.get(), scene.get(), f.data()), std::string("embed ") + in);
    run.write(out, features_csv(scene.get(), f, dim));
    run.say(std::string(out) + ": " + std::to_string(gmf_scene_size(scene.get())) + " x " +
            std::to_string(dim));
  }
}

void cmd_landmarks(Run& run) {
  const LandmarkConfig lc = landmark_config(run.cfg());
  const ScenePtr scene = load_scene(run.input("scene.txt"));
  const size_t n = gmf_scene_size(scene.get());
  std::vector<double> xy(2 * n);
  check(gmf_scene_locations(scene.get(), xy.data()), "scene locations");
  std::vector<size_t> idx;
  if (lc.greedy) {
    idx.resize(lc.count);
    check(gmf_landmarks_greedy(xy.data(), n, lc.count, run.cfg().at("seed").get<std::uint64_t>(),
                               lc.first, idx.data()),
          "greedy landmarks");
  } else {
    idx.resize(n);
    size_t count = 0;
    check(gmf_landmarks_threshold(xy.data(), n, lc.r_lm, idx.data(), &count), "threshold landmarks");
    idx.resize(count);
  }
  std::string csv = "rank,index,id,x,y\n";
  for (size_t r = 0; r < idx.size(); ++r) {
    gmf_image_view v;
    check(gmf_scene_image(scene.get(), idx[r], &v), "scene image");
    csv += std::to_string(r) + "," + std::to_string(idx[r]) + "," + std::to_string(v.id) + "," +
           fmt(v.x) + "," + fmt(v.y) + "\n";
  }
  run.write("landmarks.csv", csv);
  run.say(std::to_string(idx.size()) + " landmarks");
}

struct Evaluation {
  std::optional<double> pearson_all, pearson_r2, pearson_r1;
  size_t pairs_all = 0, pairs_r2 = 0, pairs_r1 = 0;
  double accuracy_r1 = 0.0, accuracy_r2 = 0.0, upper_r1 = 0.0, upper_r2 = 0.0;
};

std::optional<double> correlation(const FeatureTable& t, double max_geo, size_t& pairs) {
  double r = 0.0;
  const gmf_status s = gmf_distance_correlation(t.xy.data(), t.features.data(), t.size(), t.dim,
                                                max_geo, &r, &pairs);
  if (s == GMF_ERR_DEGENERATE) return std::nullopt;
  check(s, "pearson");
  return r;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

Evaluation cmd_evaluate(Run& run) {
  const json& cfg = run.cfg();
  const auto tol = tolerances(cfg);
  const double r1 = cfg.at("train").at("r1").get<double>();
  const double r2 = cfg.at("train").at("r2").get<double>();
  const bool kdtree = cfg.at("evaluate").at("kdtree").get<bool>();

  const FeatureTable ref = load_features(run.input("features.csv"));
  const FeatureTable query = load_features(run.input("query_features.csv"));
  const Csv lm_csv = read_csv(run.input("landmarks.csv"));
  if (lm_csv.rows.empty()) config_error("landmarks.csv holds zero landmarks");
  if (ref.dim != query.dim) runtime_error("reference and query features differ in dimension");

  std::vector<double> lm_feat, lm_xy;
  for (const auto& row : lm_csv.rows) {
    const auto i = static_cast<size_t>(parse_double(row[1], "landmarks.csv"));
    if (i >= ref.size()) runtime_error("landmarks.csv: index " + row[1] + " out of range");
    lm_feat.insert(lm_feat.end(), ref.features.begin() + i * ref.dim,
                   ref.features.begin() + (i + 1) * ref.dim);
    lm_xy.insert(lm_xy.end(), ref.xy.begin() + 2 * i, ref.xy.begin() + 2 * i + 2);
  }
  const size_t n_lm = lm_csv.rows.size();

  std::vector<size_t> retrieved(query.size());
  check(gmf_top1_retrieve(query.features.data(), query.size(), lm_feat.data(), n_lm, ref.dim,
                          kdtree ? 1 : 0, retrieved.data()),
        "retrieve");

  std::vector<double> acc(tol.size()), ub(tol.size());
  check(gmf_accuracy_curve(retrieved.data(), query.xy.data(), query.size(), lm_xy.data(), n_lm,
                           tol.data(), tol.size(), acc.data(), ub.data()),
        "accuracy curve");
  std::string curve = "tolerance,accuracy,upper_bound\n";
  for (size_t t = 0; t < tol.size(); ++t) {
    curve += fmt(tol[t]) + "," + fmt(acc[t]) + "," + fmt(ub[t]) + "\n";
  }
  run.write("accuracy.csv", curve);

  Evaluation ev;
  const double radii[2] = {r1, r2};
  double acc_r[2], ub_r[2];
  check(gmf_accuracy_curve(retrieved.data(), query.xy.data(), query.size(), lm_xy.data(), n_lm,
                           radii, 2, acc_r, ub_r),
        "accuracy at r1/r2");
  ev.accuracy_r1 = acc_r[0];
  ev.accuracy_r2 = acc_r[1];
  ev.upper_r1 = ub_r[0];
  ev.upper_r2 = ub_r[1];

  std::string retrievals = "query_id,landmark_rank,error\n";
  for (size_t q = 0; q < query.size(); ++q) {
    const size_t l = retrieved[q];
    const double err = std::hypot(query.xy[2 * q] - lm_xy[2 * l], query.xy[2 * q + 1] - lm_xy[2 * l + 1]);
    retrievals += std::to_string(query.ids[q]) + "," + std::to_string(l) + "," + fmt(err) + "\n";
  }
  run.write("retrievals.csv", retrievals);

  // Pairwise distances over the held-out query set.
  const size_t n = query.size();
  std::vector<double> geo(n * n), feat(n * n);
  check(gmf_pairwise_sq_edm(query.xy.data(), n, 2, geo.data()), "geometric distances");
  check(gmf_pairwise_sq_edm(query.features.data(), n, query.dim, feat.data()), "feature distances");
  std::string scatter = "geo_dist,feat_dist\n";
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      scatter += fmt(std::sqrt(geo[i * n + j])) + "," + fmt(std::sqrt(feat[i * n + j])) + "\n";
    }
  }
  run.write("scatter.csv", scatter);

  ev.pearson_all = correlation(query, 0.0, ev.pairs_all);
  ev.pearson_r2 = correlation(query, r2, ev.pairs_r2);
  ev.pearson_r1 = correlation(query, r1, ev.pairs_r1);

  json rep{{"queries", query.size()},
           {"landmarks", n_lm},
           {"pearson_all", optional_number(ev.pearson_all)},
           {"pearson_within_r2", optional_number(ev.pearson_r2)},
           {"pearson_within_r1", optional_number(ev.pearson_r1)},
           {"pairs_all", ev.pairs_all},
           {"pairs_within_r2", ev.pairs_r2},
           {"pairs_within_r1", ev.pairs_r1},
           {"accuracy_at_r1", ev.accuracy_r1},
           {"upper_bound_at_r1", ev.upper_r1},
           {"accuracy_at_r2", ev.accuracy_r2},
           {"upper_bound_at_r2", ev.upper_r2}};
  run.write("evaluation.json", rep.dump(2) + "\n");
  run.say("accuracy@r1 " + fmt(ev.accuracy_r1) + ", accuracy@r2 " + fmt(ev.accuracy_r2) +
          ", pearson(<=r1) " + (ev.pearson_r1 ? fmt(*ev.pearson_r1) : "n/a"));
  return ev;
}

struct Recovery {
  double rmse_mds = 0.0, rmse_smacof = 0.0, length = 0.0;
};

Recovery cmd_recover(Run& run) {
  const json& cfg = run.cfg();
  const gmf_recover_config rc = recover_config(cfg);
  const auto tag = cfg.at("recover").at("condition").get<std::string>();
  const ModelPtr model = load_model(run.input("model.txt"));
  const FeatureTable all = load_features(run.input("query_features.csv"));
  const FeatureTable t = all.with_condition(tag);
  if (t.size() < 3) runtime_error("condition '" + tag + "' has fewer than 3 query images");
  const size_t n = t.size();

  gmf_recovery* r = nullptr;
  check(gmf_recover(t.features.data(), n, t.dim, gmf_model_lambda(model.get()), &rc, &r), "recover");
  RecoveryPtr rec(r);
  gmf_recovery_summary sum;
  check(gmf_recovery_summary_get(rec.get(), &sum), "recovery summary");

  std::vector<double> d(n * n), mask(n * n), completed(n * n);
  check(gmf_recovery_masked_edm(rec.get(), d.data(), mask.data()), "masked EDM");
  check(gmf_recovery_completed_edm(rec.get(), completed.data()), "completed EDM");
  std::string masked = "i,j,d,observed\n";
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      masked += std::to_string(i) + "," + std::to_string(j) + "," + fmt(d[i * n + j]) + "," +
                (mask[i * n + j] != 0.0 ? "1" : "0") + "\n";
    }
  }
  run.write("masked_edm.csv", masked);
  std::string comp;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) comp += (j ? "," : "") + fmt(completed[i * n + j]);
    comp += "\n";
  }
  run.write("completed_edm.csv", comp);

  std::vector<double> mds(2 * n), sm(2 * n), mds_al(2 * n), sm_al(2 * n);
  check(gmf_recovery_points(rec.get(), GMF_RECOVERY_CLASSICAL_MDS, mds.data()), "MDS points");
  check(gmf_recovery_points(rec.get(), GMF_RECOVERY_SMACOF, sm.data()), "SMACOF points");
  Recovery out;
  check(gmf_procrustes(mds.data(), t.xy.data(), n, 1, 1, mds_al.data(), &out.rmse_mds), "align MDS");
  check(gmf_procrustes(sm.data(), t.xy.data(), n, 1, 1, sm_al.data(), &out.rmse_smacof), "align SMACOF");
  // closed trajectory: the sequence plus the segment back to the start
  out.length = gmf_path_length(t.xy.data(), n) +
               std::hypot(t.xy[2 * (n - 1)] - t.xy[0], t.xy[2 * (n - 1) + 1] - t.xy[1]);

  std::string traj = "id,x,y,x_mds,y_mds,x_smacof,y_smacof\n";
  for (size_t i = 0; i < n; ++i) {
    traj += std::to_string(t.ids[i]) + "," + fmt(t.xy[2 * i]) + "," + fmt(t.xy[2 * i + 1]) + "," +
            fmt(mds_al[2 * i]) + "," + fmt(mds_al[2 * i + 1]) + "," + fmt(sm_al[2 * i]) + "," +
            fmt(sm_al[2 * i + 1]) + "\n";
  }
  run.write("trajectory.csv", traj);

  std::vector<double> trace(gmf_recovery_stress_trace_size(rec.get()));
  check(gmf_recovery_stress_trace(rec.get(), trace.data()), "stress trace");
  std::string st = "iteration,stress\n";
  for (size_t k = 0; k < trace.size(); ++k) st += std::to_string(k) + "," + fmt(trace[k]) + "\n";
  run.write("stress_trace.csv", st);

  json rep{{"condition", tag},
           {"n", n},
           {"observed_pairs", sum.observed_pairs},
           {"completion_objective", sum.completion_objective},
           {"completion_iterations", sum.completion_iterations},
           {"completion_converged", sum.completion_converged != 0},
           {"smacof_iterations", sum.smacof_iterations},
           {"smacof_converged", sum.smacof_converged != 0},
           {"trajectory_length", out.length},
           {"rmse_mds", out.rmse_mds},
           {"rmse_smacof", out.rmse_smacof},
           {"rmse_mds_fraction", out.rmse_mds / out.length},
           {"rmse_smacof_fraction", out.rmse_smacof / out.length}};
  run.write("recovery.json", rep.dump(2) + "\n");
  run.say("RMSE mds " + fmt(out.rmse_mds) + " m, smacof " + fmt(out.rmse_smacof) + " m of " +
          fmt(out.length) + " m");
  return out;
}

struct PipelineResult {
  Evaluation eval;
  Recovery rec;
};

PipelineResult pipeline(const json& cfg, const fs::path& dir, bool quiet) {
  fs::create_directories(dir);
  auto step = [&](const std::string& name, auto&& fn) {
    Run run(name, cfg, dir, dir, quiet);
    auto result = fn(run);
    run.finish();
    return result;
  };
  step("gen-scene", [](Run& r) { cmd_gen_scene(r); return 0; });
  step("train", [](Run& r) { cmd_train(r); return 0; });
  step("embed", [](Run& r) { cmd_embed(r); return 0; });
  step("landmarks", [](Run& r) { cmd_landmarks(r); return 0; });
  PipelineResult out;
  out.eval = step("evaluate", [](Run& r) { return cmd_evaluate(r); });
  out.rec = step("recover", [](Run& r) { return cmd_recover(r); });
  return out;
}

void cmd_compare(Run& run, const std::vector<std::pair<std::string, json>>& configs) {
  std::string table =
      "config,pearson_within_r1,pearson_within_r2,pearson_all,accuracy_at_r1,accuracy_at_r2,"
      "rmse_mds,rmse_smacof,trajectory_length\n";
  auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& [name, cfg] : configs) {
    const PipelineResult r = pipeline(cfg, run.output_path(name), run.quiet());
    table += name + "," + cell(r.eval.pearson_r1) + "," + cell(r.eval.pearson_r2) + "," +
             cell(r.eval.pearson_all) + "," + fmt(r.eval.accuracy_r1) + "," +
             fmt(r.eval.accuracy_r2) + "," + fmt(r.rec.rmse_mds) + "," + fmt(r.rec.rmse_smacof) +
             "," + fmt(r.rec.length) + "\n";
  }
  run.write("compare.csv", table);
  if (!run.quiet()) std::cout << table;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gmf-cli: geometrically mappable features pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kCliVersion));

  std::vector<std::string> config_paths;
  std::string out_dir = ".";
  std::string in_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto add_common = [&](CLI::App* sub, bool multi_config) {
    if (multi_config) {
      sub->add_option("--config", config_paths, "two config files to compare")->required()->expected(2);
    } else {
      sub->add_option("--config", config_paths, "JSON config (comments allowed)")->expected(1);
    }
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    if (!multi_config) sub->add_option("--in", in_dir, "input directory (default: --out)");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_flag("--quiet", quiet, "suppress progress output");
  };

  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-scene", "generate reference and held-out query scenes"},
      {"train", "train an embedding model on scene.txt"},
      {"embed", "embed scene.txt and query_scene.txt"},
      {"landmarks", "select landmarks from scene.txt"},
      {"evaluate", "retrieval accuracy and distance correlation"},
      {"recover", "recover the query trajectory from feature distances"},
      {"compare", "run the full pipeline for two configs side by side"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    add_common(subs[name], name == "compare");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }

  try {
    const fs::path out(out_dir);
    const fs::path in = in_dir.empty() ? out : fs::path(in_dir);

    if (command == "compare") {
      std::vector<std::pair<std::string, json>> configs;
      for (const auto& p : config_paths) {
        json cfg = load_config(p, seed);
        validate_all(cfg);
        std::string name = fs::path(p).stem().string();
        for (const auto& c : configs) {
          if (c.first == name) name += "_" + std::to_string(configs.size());
        }
        configs.emplace_back(name, std::move(cfg));
      }
      fs::create_directories(out);
      json both{{"configs", json::object()}, {"seed", configs.front().second.at("seed")}};
      for (const auto& [name, cfg] : configs) both["configs"][name] = cfg;
      Run run("compare", both, in, out, quiet);
      cmd_compare(run, configs);
      run.finish();
      return kExitOk;
    }

    const std::optional<std::string> path =
        config_paths.empty() ? std::nullopt : std::optional<std::string>(config_paths.front());
    const json cfg = load_config(path, seed);
    validate_all(cfg);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) runtime_error("cannot create " + out.string() + ": " + ec.message());

    Run run(command, cfg, in, out, quiet);
    if (command == "gen-scene") {
      cmd_gen_scene(run);
    } else if (command == "train") {
      cmd_train(run);
    } else if (command == "embed") {
      cmd_embed(run);
    } else if (command == "landmarks") {
      cmd_landmarks(run);
    } else if (command == "evaluate") {
      cmd_evaluate(run);
    } else if (command == "recover") {
      cmd_recover(run);
    }
    run.finish();
    return kExitOk;
  } catch (const Failure& f) {
    std::cerr << "error: " << (f.code == kExitConfig ? "config" : "runtime") << ": "
              << one_line(f.message) << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  }
}
