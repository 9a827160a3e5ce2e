#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "s2s/cli.hpp"
#include "s2s/synthdata.hpp"
#include "s2s/trainer.hpp"

using namespace s2s;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path work() {
  static const fs::path p = [] {
    auto dir = fs::temp_directory_path() / "s2s_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
  }();
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

fs::path spec_file() {
  GeneratorSpec s;
  s.n_train = 96;
  s.n_val = 32;
  s.n_test = 40;
  s.grid_rows = 3;
  s.grid_cols = 4;
  const auto p = work() / "spec.json";
  write_json(p, generator_spec_to_json(s));
  return p;
}

// Generated once and shared by the later cases.
fs::path data_dir() {
  static const fs::path d = [] {
    const auto dir = work() / "data";
    REQUIRE(cli({"gen-data", "--spec", spec_file().string(), "--out", dir.string(), "--seed", "7"}).code == 0);
    return dir;
  }();
  return d;
}

fs::path config_file(const std::string& name, double lr) {
  TrainConfig c;
  c.d = 8;
  c.M = 8;
  c.epochs = 2;
  c.batch_size = 16;
  c.lr = lr;
  c.pooling_mode = PoolingMode::softmax;
  c.train_data = (data_dir() / "train").string();
  c.val_data = (data_dir() / "val").string();
  const auto p = work() / (name + ".json");
  write_json(p, train_config_to_json(c));
  return p;
}

fs::path trained() {
  static const fs::path ckpt = [] {
    const auto out = work() / "run";
    const auto r = cli({"train", "--config", config_file("cfg", 0.01).string(), "--out", out.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return out / "best.s2sc";
  }();
  return ckpt;
}

double logged_best(const fs::path& ckpt) {
  fs::path log = ckpt;
  log.replace_extension(".log");
  std::istringstream lines(slurp(log));
  std::string line;
  double best = -1.0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("best").get<bool>()) best = j.at("val_i2a_r10").get<double>();
  }
  return best;
}

}  // namespace

TEST_CASE("gen-data is a pure function of spec and seed") {
  const auto a = work() / "gen_a";
  const auto b = work() / "gen_b";
  const auto c = work() / "gen_c";
  REQUIRE(cli({"gen-data", "--spec", spec_file().string(), "--out", a.string(), "--seed", "7"}).code == 0);
  REQUIRE(cli({"gen-data", "--spec", spec_file().string(), "--out", b.string(), "--seed", "7"}).code == 0);
  REQUIRE(cli({"gen-data", "--spec", spec_file().string(), "--out", c.string(), "--seed", "8"}).code == 0);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  CHECK(names == std::vector<std::string>{"grid.s2s-data", "grid.s2s-meta", "test.s2s-data", "test.s2s-meta",
                                          "train.s2s-data", "train.s2s-meta", "val.s2s-data", "val.s2s-meta"});
  for (const auto& n : names) CHECK(slurp(a / n) == slurp(b / n));
  CHECK(slurp(a / "train.s2s-data") != slurp(c / "train.s2s-data"));
}

TEST_CASE("train then eval reproduces the logged best validation recall") {
  const auto ckpt = trained();
  const double logged = logged_best(ckpt);
  REQUIRE(logged >= 0.0);
  const auto r = cli({"eval", "--ckpt", ckpt.string(), "--data", (data_dir() / "val").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto report = nlohmann::json::parse(r.out.substr(0, r.out.find('\n')));
  CHECK(std::abs(report.at("R@10%").get<double>() - logged) <= 1e-6);
}

TEST_CASE("training twice writes identical checkpoints and logs") {
  const auto out = work() / "run2";
  REQUIRE(cli({"train", "--config", config_file("cfg", 0.01).string(), "--out", out.string()}).code == 0);
  CHECK(slurp(out / "best.s2sc") == slurp(trained()));
  CHECK(slurp(out / "best.log") == slurp(fs::path(trained()).replace_extension(".log")));
  // --seed overrides the config seed.
  const auto other = work() / "run3";
  REQUIRE(cli({"train", "--config", config_file("cfg", 0.01).string(), "--out", other.string(), "--seed", "5"}).code == 0);
  CHECK(slurp(other / "best.s2sc") != slurp(trained()));
}

TEST_CASE("eval reports recall and median rank") {
  const auto csv = work() / "ranks.csv";
  const auto r = cli({"eval", "--ckpt", trained().string(), "--data", (data_dir() / "test").string(), "--direction",
                      "i2a", "--composed", "audio", "--csv", csv.string(), "--seed", "1"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("\"R@10%\"") != std::string::npos);
  CHECK(r.out.find("\"MedianRank\"") != std::string::npos);
  CHECK(r.out.find("\"composed\":\"audio\"") != std::string::npos);
  CHECK(slurp(csv).rfind("query_index,id,rank\n", 0) == 0);
  const auto text = cli({"eval", "--ckpt", trained().string(), "--data", (data_dir() / "test").string(), "--direction",
                         "i2t", "--metadata-mask", "00000"});
  REQUIRE_MESSAGE(text.code == 0, text.err);
  CHECK(text.out.find("\"BLEU\"") != std::string::npos);
}

TEST_CASE("map and ground write rasters and tables") {
  const auto prefix = (work() / "heat").string();
  const auto r = cli({"map", "--ckpt", trained().string(), "--grid-data", (data_dir() / "grid").string(),
                      "--query-text", "1 2", "--out", prefix, "--normalize"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(slurp(prefix + ".pgm").rfind("P2\n4 3\n255\n", 0) == 0);
  CHECK(fs::exists(prefix + ".csv"));
  const auto first = slurp(prefix + ".pgm");
  REQUIRE(cli({"map", "--ckpt", trained().string(), "--grid-data", (data_dir() / "grid").string(), "--query-text",
               "1 2", "--out", prefix, "--normalize"})
              .code == 0);
  CHECK(slurp(prefix + ".pgm") == first);
  const auto audio = cli({"map", "--ckpt", trained().string(), "--grid-data", (data_dir() / "grid").string(),
                          "--query-audio-record", "grid-r001-c002", "--out", prefix});
  CHECK_MESSAGE(audio.code == 0, audio.err);
  // Both or neither query kind is a usage error.
  CHECK(cli({"map", "--ckpt", trained().string(), "--grid-data", (data_dir() / "grid").string(), "--out", prefix})
            .code == kExitUsage);

  const auto test = load_dataset(data_dir() / "test");
  const auto g = cli({"ground", "--ckpt", trained().string(), "--data", (data_dir() / "test").string(), "--record-id",
                      test.records[0].id, "--words", "0 3", "--out", (work() / "gr").string()});
  REQUIRE_MESSAGE(g.code == 0, g.err);
  CHECK(fs::exists(work() / "gr.pgm"));
  CHECK(fs::exists(work() / "gr.w0.pgm"));
  CHECK(fs::exists(work() / "gr.w3.csv"));
}

TEST_CASE("inspect lists tensors in sorted order") {
  const auto a = cli({"inspect", "--ckpt", trained().string()});
  REQUIRE(a.code == 0);
  CHECK(cli({"inspect", "--ckpt", trained().string()}).out == a.out);
  std::istringstream lines(a.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "tensors:");
  std::vector<std::string> names;
  while (std::getline(lines, line) && line.rfind("  ", 0) == 0) names.push_back(line.substr(2, line.find(' ', 2) - 2));
  CHECK(names.size() > 10);
  CHECK(std::is_sorted(names.begin(), names.end()));
  CHECK(std::find(names.begin(), names.end(), "codebook") != names.end());
  CHECK(a.out.find("train: {") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"inspect", "--ckpt", trained().string(), "--verbose"}).code == kExitUsage);
  CHECK(cli({"eval", "--data", "x"}).code == kExitUsage);
  CHECK(cli({"eval", "--ckpt", trained().string(), "--data", (data_dir() / "test").string(), "--direction", "up"})
            .code == kExitUsage);
  CHECK(cli({"eval", "--ckpt", trained().string(), "--data", (data_dir() / "test").string(), "--metadata-mask",
             "11x11"})
            .code == kExitUsage);
  const auto missing = cli({"inspect", "--ckpt", (work() / "nope.s2sc").string()});
  CHECK(missing.code == kExitData);
  CHECK(missing.out.empty());
  CHECK_FALSE(missing.err.empty());
  std::ofstream(work() / "junk.s2sc") << "not a checkpoint";
  CHECK(cli({"inspect", "--ckpt", (work() / "junk.s2sc").string()}).code == kExitData);
  std::ofstream(work() / "bad.json") << "{\"d\": 8, \"colour\": 1}";
  CHECK(cli({"train", "--config", (work() / "bad.json").string(), "--out", (work() / "x").string()}).code ==
        kExitUsage);
  // An absurd learning rate blows the parameters up within a few steps.
  const auto blown = cli({"train", "--config", config_file("blown", 1e36).string(), "--out", (work() / "blown").string()});
  CHECK(blown.code == kExitNumeric);
  CHECK(blown.err.find("non-finite") != std::string::npos);
}
