#include "s2s/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "s2s/error.hpp"

namespace s2s {

namespace {

// Float-valued documents keep records compact and round-trip float32 exactly.
using RecordJson =
    nlohmann::basic_json<std::map, std::vector, std::string, bool, std::int64_t, std::uint64_t, float>;

constexpr int kFormatVersion = 1;

std::uint64_t tag_of(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ULL;
  return h;
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (n > 0.0) {
    for (auto& x : v) x /= n;
  }
}

// count random directions in R^dim, orthonormal when count <= dim.
std::vector<std::vector<double>> random_directions(Rng& rng, std::size_t count, std::size_t dim) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto v = gaussian_vector(rng, dim);
    if (i < dim) {
      for (const auto& u : out) {
        const double p = dot(v, u);
        for (std::size_t k = 0; k < dim; ++k) v[k] -= p * u[k];
      }
    }
    normalize(v);
    out.push_back(std::move(v));
  }
  return out;
}

// rows x cols matrix with orthonormal columns when rows >= cols.
std::vector<std::vector<double>> view_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
  if (rows >= cols) {
    auto columns = random_directions(rng, cols, rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) m[r][c] = columns[c][r];
  } else {
    const double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (auto& row : m)
      for (auto& x : row) x = rng.normal() * s;
  }
  return m;
}

std::vector<float> project(const std::vector<std::vector<double>>& view, const std::vector<double>& latent,
                           double sigma, Rng& rng) {
  std::vector<float> out(view.size());
  for (std::size_t r = 0; r < view.size(); ++r) {
    double s = dot(view[r], latent);
    if (sigma > 0.0) s += sigma * rng.normal();
    out[r] = static_cast<float>(s);
  }
  return out;
}

std::vector<int> with_filler(std::vector<int> ids, const GeneratorSpec& spec, Rng& rng) {
  rng.shuffle(std::span<int>(ids));
  if (spec.vocab_size > spec.k_true && spec.max_filler > 0) {
    const auto n = rng.below(spec.max_filler + 1);
    for (std::size_t i = 0; i < n; ++i) {
      const int word = static_cast<int>(spec.k_true + rng.below(spec.vocab_size - spec.k_true));
      const auto pos = rng.below(ids.size() + 1);
      ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(pos), word);
    }
  }
  return ids;
}

float as_float(double x) { return static_cast<float>(x); }

}  // namespace

void GeneratorSpec::validate() const {
  if (k_true == 0 || d_latent == 0 || audio_tokens == 0 || audio_dim == 0 || image_patches == 0 ||
      image_dim == 0 || vocab_size == 0) {
    throw UsageError("generator counts and dimensions must be >= 1");
  }
  if (concepts_min == 0 || concepts_min > concepts_max) {
    throw UsageError("generator needs 1 <= concepts_min <= concepts_max");
  }
  if (concepts_max > k_true) throw UsageError("concepts_per_sample exceeds k_true");
  if (k_true > vocab_size) throw UsageError("k_true must not exceed vocab_size");
  if (n_audio_sources == 0 || n_audio_sources > 4) throw UsageError("n_audio_sources must be in 1..4");
  if (noise_sigma < 0.0 || source_bias_sigma < 0.0) throw UsageError("sigmas must be non-negative");
  if (audio_concept_keep < 0.0 || audio_concept_keep > 1.0) throw UsageError("audio_concept_keep must be in [0,1]");
  if ((grid_rows == 0) != (grid_cols == 0)) throw UsageError("grid needs both rows and cols");
}

nlohmann::json generator_spec_to_json(const GeneratorSpec& s) {
  return {{"n_train", s.n_train},
          {"n_val", s.n_val},
          {"n_test", s.n_test},
          {"k_true", s.k_true},
          {"concepts_min", s.concepts_min},
          {"concepts_max", s.concepts_max},
          {"d_latent", s.d_latent},
          {"audio_tokens", s.audio_tokens},
          {"audio_dim", s.audio_dim},
          {"image_patches", s.image_patches},
          {"image_dim", s.image_dim},
          {"noise_sigma", s.noise_sigma},
          {"vocab_size", s.vocab_size},
          {"max_filler", s.max_filler},
          {"n_audio_sources", s.n_audio_sources},
          {"source_bias_sigma", s.source_bias_sigma},
          {"audio_concept_keep", s.audio_concept_keep},
          {"grid_rows", s.grid_rows},
          {"grid_cols", s.grid_cols},
          {"seed", s.seed}};
}

GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("generator spec must be an object");
  GeneratorSpec s;
  const auto known = generator_spec_to_json(s);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw UsageError("unknown generator spec key: " + key);
  }
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw UsageError(std::string("bad value for generator spec key: ") + key);
    }
  };
  read("n_train", s.n_train);
  read("n_val", s.n_val);
  read("n_test", s.n_test);
  read("k_true", s.k_true);
  read("concepts_min", s.concepts_min);
  read("concepts_max", s.concepts_max);
  read("d_latent", s.d_latent);
  read("audio_tokens", s.audio_tokens);
  read("audio_dim", s.audio_dim);
  read("image_patches", s.image_patches);
  read("image_dim", s.image_dim);
  read("noise_sigma", s.noise_sigma);
  read("vocab_size", s.vocab_size);
  read("max_filler", s.max_filler);
  read("n_audio_sources", s.n_audio_sources);
  read("source_bias_sigma", s.source_bias_sigma);
  read("audio_concept_keep", s.audio_concept_keep);
  read("grid_rows", s.grid_rows);
  read("grid_cols", s.grid_cols);
  read("seed", s.seed);
  s.validate();
  return s;
}

SyntheticWorld make_world(const GeneratorSpec& spec) {
  spec.validate();
  Rng rng = Rng(spec.seed).split(tag_of("world"));
  SyntheticWorld w;
  Rng concept_rng = rng.split(1);
  w.concepts = random_directions(concept_rng, spec.k_true, spec.d_latent);
  Rng audio_rng = rng.split(2);
  w.audio_view = view_matrix(audio_rng, spec.audio_dim, spec.d_latent);
  Rng image_rng = rng.split(3);
  w.image_view = view_matrix(image_rng, spec.image_dim, spec.d_latent);
  // Each source carries its own signature sound type: the bias points along
  // one ground-truth concept, distinct per source while concepts last.
  Rng bias_rng = rng.split(4);
  std::vector<std::size_t> order(spec.k_true);
  std::iota(order.begin(), order.end(), std::size_t{0});
  bias_rng.shuffle(std::span<std::size_t>(order));
  for (std::size_t s = 0; s < spec.n_audio_sources; ++s) {
    auto b = w.concepts[order[s % spec.k_true]];
    for (auto& x : b) x *= spec.source_bias_sigma;
    w.source_bias.push_back(std::move(b));
  }
  return w;
}

RawSample synthesize_sample(const SyntheticWorld& world, const GeneratorSpec& spec, Rng& rng,
                            std::string id, const std::vector<int>& active) {
  if (active.empty()) throw UsageError("a sample needs at least one active concept");
  const std::size_t dl = spec.d_latent;
  RawSample s;
  s.id = std::move(id);

  s.metadata.lat = as_float(rng.uniform(-90.0, 90.0));
  s.metadata.lon = as_float(rng.uniform(-180.0, 180.0));
  s.metadata.month = rng.range(1, 12);
  s.metadata.hour = rng.range(0, 23);
  s.metadata.audio_source = static_cast<int>(rng.below(spec.n_audio_sources));
  s.metadata.caption_source = static_cast<int>(rng.below(2));
  s.scale = 1 + 2 * static_cast<int>(rng.below(3));

  // Image: each patch shows one active concept.
  std::vector<int> patch_concepts(spec.image_patches);
  for (std::size_t p = 0; p < spec.image_patches; ++p) {
    patch_concepts[p] = p < active.size() ? active[p] : active[rng.below(active.size())];
  }
  rng.shuffle(std::span<int>(patch_concepts));
  std::vector<float> image;
  image.reserve(spec.image_patches * spec.image_dim);
  for (int k : patch_concepts) {
    const double amp = rng.uniform(0.75, 1.25);
    std::vector<double> latent(dl);
    for (std::size_t i = 0; i < dl; ++i) latent[i] = amp * world.concepts[static_cast<std::size_t>(k)][i];
    auto x = project(world.image_view, latent, spec.noise_sigma, rng);
    image.insert(image.end(), x.begin(), x.end());
  }
  s.image_patches = Tensor::matrix(spec.image_patches, spec.image_dim, std::move(image));

  // Audio hears a subset of the active concepts, shifted by its source bias.
  std::vector<int> audible;
  for (int k : active) {
    if (rng.bernoulli(spec.audio_concept_keep)) audible.push_back(k);
  }
  if (audible.empty()) audible.push_back(active[rng.below(active.size())]);
  const auto& bias = world.source_bias[static_cast<std::size_t>(s.metadata.audio_source)];
  std::vector<float> audio;
  audio.reserve(spec.audio_tokens * spec.audio_dim);
  for (std::size_t t = 0; t < spec.audio_tokens; ++t) {
    const int k = t < audible.size() ? audible[t] : audible[rng.below(audible.size())];
    const double amp = rng.uniform(0.75, 1.25);
    std::vector<double> latent(dl);
    for (std::size_t i = 0; i < dl; ++i) latent[i] = amp * world.concepts[static_cast<std::size_t>(k)][i] + bias[i];
    auto x = project(world.audio_view, latent, spec.noise_sigma, rng);
    audio.insert(audio.end(), x.begin(), x.end());
  }
  s.audio_tokens = Tensor::matrix(spec.audio_tokens, spec.audio_dim, std::move(audio));

  s.audio_caption_ids = with_filler(audible, spec, rng);
  s.image_caption_ids = with_filler(active, spec, rng);

  s.truth.concepts = active;
  std::sort(s.truth.concepts.begin(), s.truth.concepts.end());
  s.truth.audio_concepts = audible;
  std::sort(s.truth.audio_concepts.begin(), s.truth.audio_concepts.end());
  s.truth.patch_concepts = patch_concepts;
  return s;
}

namespace {

DatasetHeader header_for(const GeneratorSpec& spec, const std::string& split, std::size_t n) {
  DatasetHeader h;
  h.split = split;
  h.n_records = n;
  h.audio_dim = spec.audio_dim;
  h.image_dim = spec.image_dim;
  h.vocab_size = spec.vocab_size;
  h.n_audio_sources = spec.n_audio_sources;
  h.generator = generator_spec_to_json(spec);
  return h;
}

Dataset random_split(const GeneratorSpec& spec, const SyntheticWorld& world, const std::string& split,
                     std::size_t n) {
  Dataset ds;
  ds.header = header_for(spec, split, n);
  const Rng stream = Rng(spec.seed).split(tag_of(split));
  char id[64];
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = stream.split(i);
    const auto count = static_cast<std::size_t>(
        rng.range(static_cast<int>(spec.concepts_min), static_cast<int>(spec.concepts_max)));
    std::vector<int> active;
    for (auto k : rng.choose(spec.k_true, count)) active.push_back(static_cast<int>(k));
    std::snprintf(id, sizeof id, "%s-%06zu", split.c_str(), i);
    ds.records.push_back(synthesize_sample(world, spec, rng, id, active));
  }
  return ds;
}

// Concepts occupy discs on the grid so neighbouring cells share sounds.
Dataset grid_split(const GeneratorSpec& spec, const SyntheticWorld& world) {
  const std::size_t rows = spec.grid_rows;
  const std::size_t cols = spec.grid_cols;
  Dataset ds;
  ds.header = header_for(spec, "grid", rows * cols);
  ds.header.grid_rows = rows;
  ds.header.grid_cols = cols;
  Rng layout = Rng(spec.seed).split(tag_of("grid-layout"));
  const double extent = static_cast<double>(std::max(rows, cols));
  std::vector<std::array<double, 3>> discs;
  for (std::size_t k = 0; k < spec.k_true; ++k) {
    discs.push_back({layout.uniform(0.0, static_cast<double>(rows)), layout.uniform(0.0, static_cast<double>(cols)),
                     layout.uniform(0.25, 0.5) * extent});
  }
  const Rng stream = Rng(spec.seed).split(tag_of("grid"));
  char id[64];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::vector<std::pair<double, int>> by_distance;
      for (std::size_t k = 0; k < discs.size(); ++k) {
        const double dr = static_cast<double>(r) + 0.5 - discs[k][0];
        const double dc = static_cast<double>(c) + 0.5 - discs[k][1];
        by_distance.emplace_back(std::sqrt(dr * dr + dc * dc) / discs[k][2], static_cast<int>(k));
      }
      std::sort(by_distance.begin(), by_distance.end());
      std::vector<int> active;
      for (const auto& [dist, k] : by_distance) {
        if ((dist < 1.0 || active.empty()) && active.size() < spec.concepts_max) active.push_back(k);
      }
      Rng rng = stream.split(r * cols + c);
      std::snprintf(id, sizeof id, "grid-r%03zu-c%03zu", r, c);
      auto sample = synthesize_sample(world, spec, rng, id, active);
      // Computed in float: GCC 11 -O3 loop vectorization dropped the double->float rounding here.
      sample.metadata.lat = 40.0f - 0.05f * static_cast<float>(r);
      sample.metadata.lon = -100.0f + 0.05f * static_cast<float>(c);
      ds.records.push_back(std::move(sample));
    }
  }
  return ds;
}

}  // namespace

GeneratedData generate(const GeneratorSpec& spec) {
  spec.validate();
  const auto world = make_world(spec);
  GeneratedData out;
  out.train = random_split(spec, world, "train", spec.n_train);
  out.val = random_split(spec, world, "val", spec.n_val);
  out.test = random_split(spec, world, "test", spec.n_test);
  if (spec.grid_rows > 0) out.grid = grid_split(spec, world);
  return out;
}

std::filesystem::path dataset_prefix(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == kMetaExtension || ext == kDataExtension) {
    auto p = path;
    p.replace_extension();
    return p;
  }
  return path;
}

namespace {

std::filesystem::path with_ext(const std::filesystem::path& prefix, const char* ext) {
  return std::filesystem::path(prefix.string() + ext);
}

nlohmann::json header_to_json(const DatasetHeader& h) {
  return {{"format", "s2s-dataset"},
          {"version", kFormatVersion},
          {"split", h.split},
          {"n_records", h.n_records},
          {"audio_dim", h.audio_dim},
          {"image_dim", h.image_dim},
          {"vocab_size", h.vocab_size},
          {"n_audio_sources", h.n_audio_sources},
          {"grid_rows", h.grid_rows},
          {"grid_cols", h.grid_cols},
          {"generator", h.generator}};
}

DatasetHeader header_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "s2s-dataset") throw FormatError("not an s2s dataset header");
    if (j.at("version").get<int>() != kFormatVersion) {
      throw FormatError("unsupported dataset format version " + j.at("version").dump());
    }
    DatasetHeader h;
    h.split = j.at("split").get<std::string>();
    h.n_records = j.at("n_records").get<std::size_t>();
    h.audio_dim = j.at("audio_dim").get<std::size_t>();
    h.image_dim = j.at("image_dim").get<std::size_t>();
    h.vocab_size = j.at("vocab_size").get<std::size_t>();
    h.n_audio_sources = j.at("n_audio_sources").get<std::size_t>();
    h.grid_rows = j.value("grid_rows", std::size_t{0});
    h.grid_cols = j.value("grid_cols", std::size_t{0});
    h.generator = j.value("generator", nlohmann::json());
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad dataset header: ") + e.what());
  }
}

DatasetHeader read_header(const std::filesystem::path& prefix) {
  const auto path = with_ext(prefix, kMetaExtension);
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset header " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset header " + path.string() + ": " + e.what());
  }
  return header_from_json(j);
}

RecordJson tokens_to_json(const Tensor& t) {
  RecordJson rows = RecordJson::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    RecordJson row = RecordJson::array();
    for (float x : t.row(r)) row.push_back(x);
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor tokens_from_json(const RecordJson& j, const char* field) {
  if (!j.is_array() || j.empty()) throw FormatError(std::string(field) + " must be a non-empty array of rows");
  const std::size_t cols = j[0].size();
  if (cols == 0) throw FormatError(std::string(field) + " rows must be non-empty");
  std::vector<float> data;
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != cols) throw FormatError(std::string(field) + " rows have unequal widths");
    for (const auto& x : row) {
      if (!x.is_number()) throw FormatError(std::string(field) + " entries must be numbers");
      data.push_back(x.get<float>());
    }
  }
  try {
    return Tensor::matrix(j.size(), cols, std::move(data));
  } catch (const std::exception& e) {
    throw FormatError(std::string(field) + ": " + e.what());
  }
}

}  // namespace

std::string serialize_record(const RawSample& s) {
  RecordJson j;
  j["id"] = s.id;
  j["scale"] = s.scale;
  j["metadata"] = {{"lat", static_cast<float>(s.metadata.lat)},
                   {"lon", static_cast<float>(s.metadata.lon)},
                   {"month", s.metadata.month},
                   {"hour", s.metadata.hour},
                   {"audio_source", s.metadata.audio_source},
                   {"caption_source", s.metadata.caption_source}};
  j["audio_tokens"] = tokens_to_json(s.audio_tokens);
  j["audio_caption"] = s.audio_caption_ids;
  j["image_patches"] = tokens_to_json(s.image_patches);
  j["image_caption"] = s.image_caption_ids;
  if (!s.truth.concepts.empty() || !s.truth.audio_concepts.empty() || !s.truth.patch_concepts.empty()) {
    j["truth"] = {{"concepts", s.truth.concepts},
                  {"audio_concepts", s.truth.audio_concepts},
                  {"patch_concepts", s.truth.patch_concepts}};
  }
  return j.dump();
}

RawSample parse_record(std::string_view line) {
  RecordJson j;
  try {
    j = RecordJson::parse(line);
  } catch (const RecordJson::exception& e) {
    throw FormatError(std::string("malformed record: ") + e.what());
  }
  try {
    RawSample s;
    s.id = j.at("id").get<std::string>();
    s.scale = j.at("scale").get<int>();
    const auto& m = j.at("metadata");
    s.metadata.lat = m.at("lat").get<float>();
    s.metadata.lon = m.at("lon").get<float>();
    s.metadata.month = m.at("month").get<int>();
    s.metadata.hour = m.at("hour").get<int>();
    s.metadata.audio_source = m.at("audio_source").get<int>();
    s.metadata.caption_source = m.at("caption_source").get<int>();
    s.audio_tokens = tokens_from_json(j.at("audio_tokens"), "audio_tokens");
    s.audio_caption_ids = j.at("audio_caption").get<std::vector<int>>();
    s.image_patches = tokens_from_json(j.at("image_patches"), "image_patches");
    s.image_caption_ids = j.at("image_caption").get<std::vector<int>>();
    if (j.contains("truth")) {
      const auto& t = j.at("truth");
      s.truth.concepts = t.at("concepts").get<std::vector<int>>();
      s.truth.audio_concepts = t.at("audio_concepts").get<std::vector<int>>();
      s.truth.patch_concepts = t.at("patch_concepts").get<std::vector<int>>();
    }
    return s;
  } catch (const RecordJson::exception& e) {
    throw FormatError(std::string("bad record field: ") + e.what());
  }
}

std::string check_record(const RawSample& s, const DatasetHeader& h) {
  std::ostringstream err;
  if (s.audio_tokens.cols() != h.audio_dim) err << "audio token width " << s.audio_tokens.cols() << " != " << h.audio_dim << "; ";
  if (s.image_patches.cols() != h.image_dim) err << "image patch width " << s.image_patches.cols() << " != " << h.image_dim << "; ";
  if (s.audio_caption_ids.empty()) err << "empty audio caption; ";
  if (s.image_caption_ids.empty()) err << "empty image caption; ";
  for (const auto* ids : {&s.audio_caption_ids, &s.image_caption_ids}) {
    for (int id : *ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= h.vocab_size) {
        err << "caption id " << id << " outside vocabulary; ";
        break;
      }
    }
  }
  const auto& m = s.metadata;
  if (!(m.lat >= -90.0 && m.lat <= 90.0)) err << "lat out of range; ";
  if (!(m.lon >= -180.0 && m.lon <= 180.0)) err << "lon out of range; ";
  if (m.month < 1 || m.month > 12) err << "month " << m.month << " out of range 1..12; ";
  if (m.hour < 0 || m.hour > 23) err << "hour " << m.hour << " out of range 0..23; ";
  if (m.audio_source < 0 || m.audio_source > 3 ||
      (h.n_audio_sources > 0 && static_cast<std::size_t>(m.audio_source) >= h.n_audio_sources)) {
    err << "audio_source " << m.audio_source << " out of range; ";
  }
  if (m.caption_source < 0 || m.caption_source > 1) err << "caption_source " << m.caption_source << " out of range 0..1; ";
  if (s.scale != 1 && s.scale != 3 && s.scale != 5) err << "scale " << s.scale << " not in {1,3,5}; ";
  auto msg = err.str();
  if (msg.size() >= 2) msg.resize(msg.size() - 2);
  return msg;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  const auto prefix = dataset_prefix(path);
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  DatasetHeader h = data.header;
  h.n_records = data.records.size();
  {
    std::ofstream out(with_ext(prefix, kMetaExtension), std::ios::binary);
    if (!out) throw FormatError("cannot write " + with_ext(prefix, kMetaExtension).string());
    out << header_to_json(h).dump(2) << '\n';
  }
  std::ofstream out(with_ext(prefix, kDataExtension), std::ios::binary);
  if (!out) throw FormatError("cannot write " + with_ext(prefix, kDataExtension).string());
  for (const auto& r : data.records) out << serialize_record(r) << '\n';
}

namespace {

// Walks the record file; calls on_record(record_no, offset, line) for each
// newline-terminated line and reports a trailing unterminated fragment.
template <class F>
std::size_t scan_lines(const std::filesystem::path& path, F&& on_record, std::string* truncated_tail,
                       std::size_t* tail_offset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset records " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t offset = 0;
  std::size_t record = 0;
  while (offset < content.size()) {
    const auto nl = content.find('\n', offset);
    if (nl == std::string::npos) {
      *truncated_tail = content.substr(offset);
      *tail_offset = offset;
      break;
    }
    on_record(record, offset, std::string_view(content).substr(offset, nl - offset));
    ++record;
    offset = nl + 1;
  }
  return record;
}

std::string where(std::size_t record, std::size_t offset) {
  return "record " + std::to_string(record) + " (byte offset " + std::to_string(offset) + ")";
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  const auto prefix = dataset_prefix(path);
  Dataset ds;
  ds.header = read_header(prefix);
  std::string tail;
  std::size_t tail_offset = 0;
  std::set<std::string> ids;
  const auto count = scan_lines(
      with_ext(prefix, kDataExtension),
      [&](std::size_t record, std::size_t offset, std::string_view line) {
        RawSample s;
        try {
          s = parse_record(line);
        } catch (const FormatError& e) {
          throw FormatError(where(record, offset) + ": " + e.what());
        }
        if (auto msg = check_record(s, ds.header); !msg.empty()) {
          throw FormatError(where(record, offset) + ": " + msg);
        }
        if (!ids.insert(s.id).second) throw FormatError(where(record, offset) + ": duplicate id " + s.id);
        ds.records.push_back(std::move(s));
      },
      &tail, &tail_offset);
  if (!tail.empty()) {
    throw FormatError(where(count, tail_offset) + ": truncated record (no terminating newline)");
  }
  if (count != ds.header.n_records) {
    throw FormatError("header declares " + std::to_string(ds.header.n_records) + " records, file has " +
                      std::to_string(count));
  }
  return ds;
}

ValidationReport validate_dataset(const std::filesystem::path& path) {
  const auto prefix = dataset_prefix(path);
  ValidationReport report;
  DatasetHeader header;
  try {
    header = read_header(prefix);
  } catch (const FormatError& e) {
    report.issues.push_back({0, 0, e.what()});
    return report;
  }
  std::string tail;
  std::size_t tail_offset = 0;
  std::set<std::string> ids;
  const auto count = scan_lines(
      with_ext(prefix, kDataExtension),
      [&](std::size_t record, std::size_t offset, std::string_view line) {
        ++report.records_checked;
        try {
          auto s = parse_record(line);
          if (auto msg = check_record(s, header); !msg.empty()) report.issues.push_back({record, offset, msg});
          if (!ids.insert(s.id).second) report.issues.push_back({record, offset, "duplicate id " + s.id});
        } catch (const FormatError& e) {
          report.issues.push_back({record, offset, e.what()});
        }
      },
      &tail, &tail_offset);
  if (!tail.empty()) report.issues.push_back({count, tail_offset, "truncated record (no terminating newline)"});
  if (count != header.n_records) {
    report.issues.push_back({count, tail_offset,
                             "header declares " + std::to_string(header.n_records) + " records, file has " +
                                 std::to_string(count)});
  }
  return report;
}

}  // namespace s2s
