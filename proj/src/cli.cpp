#include "s2s/cli.hpp"

#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "s2s/error.hpp"
#include "s2s/evalsuite.hpp"
#include "s2s/maptool.hpp"
#include "s2s/pipeline.hpp"
#include "s2s/synthdata.hpp"
#include "s2s/trainer.hpp"

namespace s2s {
namespace {

namespace fs = std::filesystem;

std::vector<int> parse_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<int> ids;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      const int id = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      ids.push_back(id);
    } catch (const std::exception&) {
      throw UsageError("words must be whitespace-separated caption ids, got '" + tok + "'");
    }
  }
  if (ids.empty()) throw UsageError("no words given");
  return ids;
}

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t a = 0;
    std::size_t b = 0;
    const auto r = std::stoul(text.substr(0, x), &a);
    const auto c = std::stoul(text.substr(x + 1), &b);
    if (a != x || b != text.size() - x - 1 || r == 0 || c == 0) throw std::invalid_argument(text);
    return {r, c};
  } catch (const std::exception&) {
    throw UsageError("grid must look like ROWSxCOLS, got '" + text + "'");
  }
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed " + path.string() + ": " + e.what());
  }
}

const RawSample& find_record(const Dataset& data, const std::string& id) {
  for (const auto& s : data.records) {
    if (s.id == id) return s;
  }
  throw UsageError("no record with id '" + id + "'");
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

struct GenDataArgs {
  std::string spec;
  std::string out;
};

void run_gen_data(const GenDataArgs& a, std::optional<std::uint64_t> seed, std::ostream& out) {
  GeneratorSpec spec = a.spec.empty() ? GeneratorSpec{} : generator_spec_from_json(read_json_file(a.spec));
  if (seed) spec.seed = *seed;
  spec.validate();
  const auto data = generate(spec);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  save_dataset(data.train, dir / "train");
  save_dataset(data.val, dir / "val");
  save_dataset(data.test, dir / "test");
  if (data.grid) save_dataset(*data.grid, dir / "grid");
  nlohmann::json summary = {{"train", data.train.records.size()},
                            {"val", data.val.records.size()},
                            {"test", data.test.records.size()},
                            {"seed", spec.seed}};
  if (data.grid) summary["grid"] = data.grid->records.size();
  out << summary.dump() << '\n';
}

struct TrainArgs {
  std::string config;
  std::string out;
};

void run_train(const TrainArgs& a, std::optional<std::uint64_t> seed, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = load_train_config(a.config);
  if (seed) cfg.seed = *seed;
  if (cfg.train_data.empty() || cfg.val_data.empty()) throw UsageError("config must name train_data and val_data");
  const Dataset train_data = load_dataset(cfg.train_data);
  const Dataset val_data = load_dataset(cfg.val_data);
  fs::path ckpt_path;
  if (!a.out.empty()) {
    ckpt_path = fs::path(a.out) / "best.s2sc";
  } else if (!cfg.checkpoint.empty()) {
    ckpt_path = cfg.checkpoint;
  } else {
    throw UsageError("train needs --out or a checkpoint path in the config");
  }
  if (ckpt_path.has_parent_path()) fs::create_directories(ckpt_path.parent_path());
  fs::path log_path = ckpt_path;
  log_path.replace_extension(".log");
  std::ofstream sidecar(log_path, std::ios::binary);
  if (!sidecar) throw FormatError("cannot write " + log_path.string());
  const TrainSinks sinks{&out, &sidecar, &err};
  const auto result = train(cfg, train_data, val_data, sinks);
  save_checkpoint(result.best, ckpt_path);
  err << "best epoch " << result.best.epoch << " val i2a R@10% " << result.best.val_i2a_r10 << " -> "
      << ckpt_path.string() << '\n';
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string direction = "i2a";
  std::string composed = "none";
  std::string mask = "11111";
  std::string csv;
};

void run_eval(const EvalArgs& a, std::ostream& out) {
  const auto ckpt = load_checkpoint(a.ckpt);
  const Model model = model_from_checkpoint(ckpt);
  const Dataset data = load_dataset(a.data);
  const auto dir = parse_direction(a.direction);
  const auto mode = parse_composed(a.composed);
  const auto gallery = embed_gallery(data, model, parse_meta_mask(a.mask));
  const auto report = evaluate(gallery, dir, mode);
  out << report_to_json(report).dump() << '\n';
  write_report_table(out, report);
  if (!a.csv.empty()) {
    std::ofstream csv(a.csv, std::ios::binary);
    if (!csv) throw FormatError("cannot write " + a.csv);
    write_ranks_csv(csv, report, gallery);
  }
}

struct MapArgs {
  std::string ckpt;
  std::string grid_data;
  std::string query_text;
  std::string query_record;
  std::string query_data;
  std::string out;
  std::string grid;
  bool normalize = false;
};

void run_map(const MapArgs& a, std::ostream& out) {
  if (a.query_text.empty() == a.query_record.empty()) {
    throw UsageError("map needs exactly one of --query-text or --query-audio-record");
  }
  const auto ckpt = load_checkpoint(a.ckpt);
  const Model model = model_from_checkpoint(ckpt);
  const Dataset grid = load_dataset(a.grid_data);
  std::size_t rows = grid.header.grid_rows;
  std::size_t cols = grid.header.grid_cols;
  if (!a.grid.empty()) std::tie(rows, cols) = parse_grid(a.grid);
  if (rows == 0 || cols == 0) throw UsageError("grid dimensions unknown; pass --grid ROWSxCOLS");
  const auto gallery = embed_gallery(grid, model);
  std::vector<double> query;
  if (!a.query_text.empty()) {
    query = text_query_embedding(model, parse_words(a.query_text));
  } else {
    const Dataset source = a.query_data.empty() ? grid : load_dataset(a.query_data);
    const auto emb = embed_sample(model, find_record(source, a.query_record), kAllMeta);
    query = emb.pooled[modality_index(Modality::audio)];
  }
  const auto map = build_heatmap(gallery.embedding(Modality::image), rows, cols, query, a.normalize);
  write_file(a.out + ".pgm", raster_string(map));
  write_file(a.out + ".csv", csv_string(map));
  const auto [r, c] = map.argmax();
  out << nlohmann::json{{"rows", rows}, {"cols", cols}, {"argmax", {r, c}}, {"max", map.at(r, c)},
                        {"pgm", a.out + ".pgm"}, {"csv", a.out + ".csv"}}
             .dump()
      << '\n';
}

struct GroundArgs {
  std::string ckpt;
  std::string data;
  std::string record;
  std::string words;
  std::string out;
  std::string grid;
};

void run_ground(const GroundArgs& a, std::ostream& out) {
  const auto ckpt = load_checkpoint(a.ckpt);
  const Model model = model_from_checkpoint(ckpt);
  const Dataset data = load_dataset(a.data);
  std::optional<std::pair<std::size_t, std::size_t>> grid;
  if (!a.grid.empty()) grid = parse_grid(a.grid);
  const auto maps = build_grounding_map(model, find_record(data, a.record), parse_words(a.words), grid);
  nlohmann::json report = {{"record", a.record}, {"rows", maps.phrase.rows}, {"cols", maps.phrase.cols}};
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < maps.words.size(); ++i) {
    const std::string stem = a.out + ".w" + std::to_string(maps.words[i]);
    write_file(stem + ".pgm", raster_string(maps.per_word[i]));
    write_file(stem + ".csv", csv_string(maps.per_word[i]));
    files.push_back(stem + ".pgm");
  }
  write_file(a.out + ".pgm", raster_string(maps.phrase));
  write_file(a.out + ".csv", csv_string(maps.phrase));
  files.push_back(a.out + ".pgm");
  report["files"] = files;
  out << report.dump() << '\n';
}

void run_inspect(const std::string& path, std::ostream& out) {
  const auto ckpt = load_checkpoint(path);
  out << "tensors:\n";
  std::size_t width = 0;
  for (const auto& [name, p] : ckpt.params) width = std::max(width, name.size());
  for (const auto& [name, p] : ckpt.params) {
    out << "  " << name << std::string(width - name.size() + 2, ' ') << p.value.shape_string() << '\n';
  }
  out << "parameters: " << ckpt.params.scalar_count() << '\n';
  out << "epoch: " << ckpt.epoch << "\nstep: " << ckpt.step << "\nval_i2a_r10: " << ckpt.val_i2a_r10 << '\n';
  out << "model: " << model_config_to_json(ckpt.model).dump() << '\n';
  out << "train: " << train_config_to_json(ckpt.train).dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Soundscape embedding toolkit", "s2s"};
  app.require_subcommand(1, 1);
  std::optional<std::uint64_t> seed;
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "random seed"); };

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen_cmd->add_option("--spec", gen.spec, "generator spec file")->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  add_seed(gen_cmd);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", tr.config, "training config file")->required();
  train_cmd->add_option("--out", tr.out, "output directory");
  add_seed(train_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate retrieval");
  eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "dataset")->required();
  eval_cmd->add_option("--direction", ev.direction, "i2a|a2i|i2t|t2i");
  eval_cmd->add_option("--composed", ev.composed, "none|audio|query");
  eval_cmd->add_option("--metadata-mask", ev.mask, "5-char bitmask, 1 = component present");
  eval_cmd->add_option("--csv", ev.csv, "per-query ranks output");
  add_seed(eval_cmd);

  MapArgs mp;
  auto* map_cmd = app.add_subcommand("map", "build a heatmap over a grid of images");
  map_cmd->add_option("--ckpt", mp.ckpt, "checkpoint")->required();
  map_cmd->add_option("--grid-data", mp.grid_data, "grid dataset")->required();
  map_cmd->add_option("--query-text", mp.query_text, "caption word ids");
  map_cmd->add_option("--query-audio-record", mp.query_record, "record id whose audio is the query");
  map_cmd->add_option("--query-data", mp.query_data, "dataset holding the query record");
  map_cmd->add_option("--grid", mp.grid, "ROWSxCOLS when the dataset does not declare one");
  map_cmd->add_option("--out", mp.out, "output path prefix")->required();
  map_cmd->add_flag("--normalize", mp.normalize, "min-max normalize the map");
  add_seed(map_cmd);

  GroundArgs gr;
  auto* ground_cmd = app.add_subcommand("ground", "ground words on image patches");
  ground_cmd->add_option("--ckpt", gr.ckpt, "checkpoint")->required();
  ground_cmd->add_option("--data", gr.data, "dataset holding the record")->required();
  ground_cmd->add_option("--record-id", gr.record, "image record id")->required();
  ground_cmd->add_option("--words", gr.words, "caption word ids")->required();
  ground_cmd->add_option("--grid", gr.grid, "ROWSxCOLS for non-square patch counts");
  ground_cmd->add_option("--out", gr.out, "output path prefix")->required();
  add_seed(ground_cmd);

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "list checkpoint contents");
  inspect_cmd->add_option("--ckpt", inspect_path, "checkpoint")->required();
  add_seed(inspect_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*gen_cmd) run_gen_data(gen, seed, out);
    if (*train_cmd) run_train(tr, seed, out, err);
    if (*eval_cmd) run_eval(ev, out);
    if (*map_cmd) run_map(mp, out);
    if (*ground_cmd) run_ground(gr, out);
    if (*inspect_cmd) run_inspect(inspect_path, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace s2s
