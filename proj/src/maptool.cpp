#include "s2s/maptool.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "s2s/codebook.hpp"
#include "s2s/encoders.hpp"
#include "s2s/error.hpp"

namespace s2s {

std::pair<std::size_t, std::size_t> Heatmap::argmax() const {
  if (values.empty()) throw UsageError("argmax of an empty heatmap");
  const auto i = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
  return {i / cols, i % cols};
}

Heatmap normalize(const Heatmap& map) {
  Heatmap out = map;
  out.values = min_max_normalize(map.values);
  out.normalized = true;
  return out;
}

Heatmap build_heatmap(const Tensor& gallery, std::size_t rows, std::size_t cols, std::span<const double> query,
                      bool normalize_values) {
  if (rows == 0 || cols == 0) throw UsageError("heatmap grid must be non-empty");
  if (gallery.rows() != rows * cols) {
    throw UsageError("grid " + std::to_string(rows) + "x" + std::to_string(cols) + " needs " +
                     std::to_string(rows * cols) + " gallery rows, got " + std::to_string(gallery.rows()));
  }
  if (gallery.cols() != query.size()) throw UsageError("query and gallery dimensions differ");
  double qn = 0.0;
  for (double x : query) qn += x * x;
  qn = std::sqrt(qn);
  Heatmap map{rows, cols, std::vector<double>(rows * cols, 0.0), false};
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const auto g = gallery.row(i);
    double dot = 0.0;
    double gn = 0.0;
    for (std::size_t k = 0; k < query.size(); ++k) {
      dot += query[k] * g[k];
      gn += static_cast<double>(g[k]) * g[k];
    }
    const double denom = std::max(qn * std::sqrt(gn), 1e-12);
    map.values[i] = dot / denom;
  }
  return normalize_values ? normalize(map) : map;
}

namespace {

RawSample text_sample(std::span<const int> ids, Modality modality) {
  RawSample s;
  s.id = "query";
  const std::vector<int> v(ids.begin(), ids.end());
  if (modality == Modality::audio_caption) {
    s.audio_caption_ids = v;
  } else if (modality == Modality::image_caption) {
    s.image_caption_ids = v;
  } else {
    throw UsageError("text queries must use a caption modality");
  }
  return s;
}

void check_words(const Model& model, std::span<const int> ids) {
  if (ids.empty()) throw UsageError("query needs at least one word");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.config().vocab_size) {
      throw UsageError("word id " + std::to_string(id) + " outside the vocabulary");
    }
  }
}

}  // namespace

std::vector<double> text_query_embedding(const Model& model, std::span<const int> word_ids, Modality modality) {
  check_words(model, word_ids);
  const Tensor tokens = encode(text_sample(word_ids, modality), modality, model);
  const Tensor& cb = model.param("codebook").value;
  const auto r = relevance(tokens, cb);
  return pool(attention_weights(r.scores, model.config().pooling), cb).normalized;
}

std::optional<std::size_t> square_side(std::size_t n) {
  auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (s * s == n) return s;
  return std::nullopt;
}

GroundingMaps build_grounding_map(const Model& model, const RawSample& image, std::span<const int> word_ids,
                                  std::optional<std::pair<std::size_t, std::size_t>> grid) {
  check_words(model, word_ids);
  const std::size_t n = image.image_patches.rows();
  std::size_t rows = 0;
  std::size_t cols = 0;
  if (grid) {
    std::tie(rows, cols) = *grid;
    if (rows * cols != n) {
      throw UsageError("grid " + std::to_string(rows) + "x" + std::to_string(cols) + " does not cover " +
                       std::to_string(n) + " patches");
    }
  } else if (auto side = square_side(n)) {
    rows = cols = *side;
  } else {
    throw UsageError(std::to_string(n) + " patches do not form a square grid; pass the grid dimensions");
  }

  ad::Tape tape;
  const auto fused = graph::image_tokens(tape, image, model, MetaFlags{}).value().to_tensor();
  std::vector<float> patch_rows(fused.data().begin(), fused.data().begin() + static_cast<std::ptrdiff_t>(n * fused.cols()));
  const Tensor targets = Tensor::matrix(n, fused.cols(), std::move(patch_rows));
  const Tensor& cb = model.param("codebook").value;

  GroundingMaps out;
  out.words.assign(word_ids.begin(), word_ids.end());
  out.phrase = Heatmap{rows, cols, std::vector<double>(n, 0.0), false};
  for (int id : word_ids) {
    const int one[] = {id};
    const Tensor word = encode(text_sample(one, Modality::image_caption), Modality::image_caption, model);
    const auto g = ground(word, targets, cb, model.config().pooling);
    Heatmap map{rows, cols, g.scores, false};
    for (std::size_t i = 0; i < n; ++i) out.phrase.values[i] += map.values[i] / static_cast<double>(word_ids.size());
    out.per_word.push_back(std::move(map));
  }
  return out;
}

std::string raster_string(const Heatmap& map) {
  if (map.values.size() != map.rows * map.cols || map.values.empty()) throw UsageError("malformed heatmap");
  const Heatmap scaled = map.normalized ? map : normalize(map);
  std::string out = "P2\n" + std::to_string(map.cols) + " " + std::to_string(map.rows) + "\n255\n";
  for (std::size_t r = 0; r < map.rows; ++r) {
    for (std::size_t c = 0; c < map.cols; ++c) {
      const double v = std::clamp(scaled.at(r, c), 0.0, 1.0);
      if (c) out += ' ';
      out += std::to_string(std::lround(v * 255.0));
    }
    out += '\n';
  }
  return out;
}

std::string csv_string(const Heatmap& map) {
  if (map.values.size() != map.rows * map.cols) throw UsageError("malformed heatmap");
  std::string out;
  char buf[64];
  for (std::size_t r = 0; r < map.rows; ++r) {
    for (std::size_t c = 0; c < map.cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.6g", map.at(r, c));
      if (c) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace {

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace

void write_raster(const Heatmap& map, const std::filesystem::path& path) { write_text(raster_string(map), path); }

void write_csv(const Heatmap& map, const std::filesystem::path& path) { write_text(csv_string(map), path); }

Heatmap read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  Heatmap map;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        map.values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ": bad value '" + cell + "' on row " + std::to_string(map.rows + 1));
      }
      ++cols;
    }
    if (map.rows == 0) {
      map.cols = cols;
    } else if (cols != map.cols) {
      throw FormatError(path.string() + ": ragged row " + std::to_string(map.rows + 1));
    }
    ++map.rows;
  }
  if (map.rows == 0) throw FormatError(path.string() + ": empty map");
  return map;
}

}  // namespace s2s
