#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gmf_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(GMF_CLI_PATH) + " " + args + " --quiet 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  fs::remove(err);
  return r;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

const std::vector<std::string> kPipeline{"gen-scene", "train", "embed", "landmarks", "evaluate", "recover"};

// A pipeline small enough for unit tests.
const char* kSmall = R"({
  "scene": {"n_poses": 120},
  "train": {"epochs": 5}
})";

void run_pipeline(const fs::path& dir, const fs::path& config) {
  fs::create_directories(dir);
  for (const auto& c : kPipeline) {
    const Result r = cli(c + " --config " + config.string() + " --out " + dir.string(), dir);
    REQUIRE_MESSAGE(r.code == 0, c << ": " << r.err);
  }
}

}  // namespace

TEST_CASE("pipeline output is byte-identical across runs") {
  const fs::path base = scratch("determinism");
  const fs::path cfg = write_config(base, "small.json", kSmall);
  const fs::path a = base / "a", b = base / "b";
  run_pipeline(a, cfg);
  run_pipeline(b, cfg);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    CHECK_MESSAGE(slurp(entry.path()) == slurp(b / name), name.string());
    ++compared;
    CHECK(entry.path().extension() != ".tmp");
  }
  CHECK(compared >= 20);
  for (const char* f : {"accuracy.csv", "scatter.csv", "trajectory.csv", "features.csv",
                        "loss_log.csv", "masked_edm.csv", "evaluation.json", "recovery.json"}) {
    CHECK_MESSAGE(fs::exists(a / f), f);
  }
}

TEST_CASE("manifests record the seed, hash and outputs") {
  const fs::path dir = scratch("manifest");
  const fs::path cfg = write_config(dir, "small.json", kSmall);
  REQUIRE(cli("gen-scene --config " + cfg.string() + " --out " + dir.string() + " --seed 7", dir).code == 0);
  const auto m = nlohmann::json::parse(slurp(dir / "gen-scene.manifest.json"));
  CHECK(m["seed"] == 7);
  CHECK(m["config"]["seed"] == 7);
  CHECK(m["config"]["scene"]["n_poses"] == 120);
  CHECK(m["outputs"].contains("scene.txt"));
  CHECK(m["outputs"].contains("query_scene.txt"));
  CHECK(m["config_hash"].get<std::string>().size() == 16);
  CHECK(slurp(dir / "gen-scene.manifest.json").find("time") == std::string::npos);
}

TEST_CASE("the shipped default config matches the built-in defaults") {
  const fs::path a = scratch("defaults_a"), b = scratch("defaults_b");
  const fs::path shipped = fs::path(GMF_SOURCE_DIR) / "configs" / "default.json";
  REQUIRE(cli("gen-scene --out " + a.string(), a).code == 0);
  REQUIRE(cli("gen-scene --config " + shipped.string() + " --out " + b.string(), b).code == 0);
  const auto ma = nlohmann::json::parse(slurp(a / "gen-scene.manifest.json"));
  const auto mb = nlohmann::json::parse(slurp(b / "gen-scene.manifest.json"));
  CHECK(ma["config_hash"] == mb["config_hash"]);
  CHECK(slurp(a / "scene.txt") == slurp(b / "scene.txt"));
}

TEST_CASE("config errors exit with code 2 and one line") {
  const fs::path dir = scratch("config_errors");
  const auto unknown = write_config(dir, "unknown.json", R"({"train": {"epochs": 2, "epoch": 3}})");
  Result r = cli("train --config " + unknown.string() + " --out " + dir.string(), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("train.epoch") != std::string::npos);
  CHECK(r.err.find('\n') == r.err.size() - 1);

  const auto type = write_config(dir, "type.json", R"({"scene": {"n_poses": "many"}})");
  CHECK(cli("gen-scene --config " + type.string() + " --out " + dir.string(), dir).code == 2);

  const auto invalid = write_config(dir, "invalid.json", R"({"train": {"r1": 5.0}})");
  CHECK(cli("train --config " + invalid.string() + " --out " + dir.string(), dir).code == 2);

  const auto broken = write_config(dir, "broken.json", "{\"seed\": ");
  CHECK(cli("gen-scene --config " + broken.string() + " --out " + dir.string(), dir).code == 2);

  CHECK(cli("gen-scene --config " + (dir / "absent.json").string() + " --out " + dir.string(), dir).code == 2);

  const auto comments = write_config(dir, "comments.json", "// note\n{ /* inline */ \"seed\": 3 }\n");
  CHECK(cli("gen-scene --config " + comments.string() + " --out " + dir.string(), dir).code == 0);
}

TEST_CASE("evaluate with zero landmarks fails before any compute") {
  const fs::path dir = scratch("zero_landmarks");
  const auto cfg = write_config(dir, "zero.json", R"({"landmarks": {"count": 0}})");
  const Result r = cli("evaluate --config " + cfg.string() + " --out " + dir.string(), dir);
  CHECK(r.code == 2);
  CHECK(r.err.find("landmarks.count") != std::string::npos);
  CHECK(!fs::exists(dir / "accuracy.csv"));
  CHECK(!fs::exists(dir / "evaluate.manifest.json"));
}

TEST_CASE("usage and runtime errors") {
  const fs::path dir = scratch("usage");
  CHECK(cli("", dir).code == 1);
  CHECK(cli("frobnicate", dir).code == 1);
  CHECK(cli("train --bogus-flag", dir).code == 1);
  const Result missing = cli("train --out " + dir.string(), dir);
  CHECK(missing.code == 3);
  CHECK(missing.err.find("scene.txt") != std::string::npos);
}

TEST_CASE("threshold landmarks and an explicit input directory") {
  const fs::path dir = scratch("threshold");
  const auto cfg = write_config(dir, "thr.json", R"({"scene": {"n_poses": 60}, "landmarks": {"method": "threshold", "r_lm": 2.0}})");
  REQUIRE(cli("gen-scene --config " + cfg.string() + " --out " + dir.string(), dir).code == 0);
  const fs::path out = dir / "lm";
  REQUIRE(cli("landmarks --config " + cfg.string() + " --in " + dir.string() + " --out " + out.string(), dir).code == 0);
  const std::string csv = slurp(out / "landmarks.csv");
  CHECK(csv.rfind("rank,index,id,x,y\n0,0,", 0) == 0);
}

TEST_CASE("compare reports both configs and favours the combined loss") {
  const fs::path dir = scratch("compare");
  const fs::path configs = fs::path(GMF_SOURCE_DIR) / "configs";
  const Result r = cli("compare --config " + (configs / "default.json").string() + " --config " +
                           (configs / "nv_only.json").string() + " --out " + dir.string(),
                       dir);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::istringstream table(slurp(dir / "compare.csv"));
  std::string header, combined, nv;
  std::getline(table, header);
  std::getline(table, combined);
  std::getline(table, nv);
  CHECK(header.rfind("config,pearson_within_r1,", 0) == 0);
  CHECK(combined.rfind("default,", 0) == 0);
  CHECK(nv.rfind("nv_only,", 0) == 0);
  auto field = [](const std::string& row, int k) {
    std::istringstream s(row);
    std::string cell;
    for (int i = 0; i <= k; ++i) std::getline(s, cell, ',');
    return std::stod(cell);
  };
  CHECK(field(combined, 1) > field(nv, 1));
  CHECK(fs::exists(dir / "default" / "evaluation.json"));
  CHECK(fs::exists(dir / "compare.manifest.json"));
}
