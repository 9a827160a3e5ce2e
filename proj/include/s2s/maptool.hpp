#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2s/model.hpp"
#include "s2s/sample.hpp"
#include "s2s/tensor.hpp"

namespace s2s {

struct Heatmap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major
  bool normalized = false;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::pair<std::size_t, std::size_t> argmax() const;
};

// Min-max rescaled copy; a flat map becomes 0.5 everywhere.
Heatmap normalize(const Heatmap& map);

/// Cosine similarity of the query against each of the rows*cols gallery
/// embeddings, laid out row-major.
Heatmap build_heatmap(const Tensor& gallery, std::size_t rows, std::size_t cols, std::span<const double> query,
                      bool normalize_values = false);

/// Pooled embedding of a free-text query given as caption word ids.
std::vector<double> text_query_embedding(const Model& model, std::span<const int> word_ids,
                                         Modality modality = Modality::audio_caption);

struct GroundingMaps {
  std::vector<int> words;
  std::vector<Heatmap> per_word;
  Heatmap phrase;  // elementwise mean of the per-word maps
};

// Square side of n, or nullopt when n is not a perfect square.
std::optional<std::size_t> square_side(std::size_t n);

/// Scores every image patch against the concept each word attends to most.
/// Patches are laid out on a square grid unless grid = (rows, cols) is given.
GroundingMaps build_grounding_map(const Model& model, const RawSample& image, std::span<const int> word_ids,
                                  std::optional<std::pair<std::size_t, std::size_t>> grid = std::nullopt);

/// Plain-text graymap ("P2", maxval 255); unnormalized maps are min-max
/// scaled first.
void write_raster(const Heatmap& map, const std::filesystem::path& path);
std::string raster_string(const Heatmap& map);
void write_csv(const Heatmap& map, const std::filesystem::path& path);
std::string csv_string(const Heatmap& map);
Heatmap read_csv(const std::filesystem::path& path);

}  // namespace s2s
