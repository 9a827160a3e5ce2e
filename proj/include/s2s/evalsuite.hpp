#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2s/model.hpp"
#include "s2s/synthdata.hpp"

namespace s2s {

struct Gallery {
  std::vector<std::string> ids;
  std::array<Tensor, 4> embeddings;      // N x d, normalized, by Modality
  std::array<Tensor, 4> weights;         // N x M pooling weights
  std::vector<std::vector<int>> audio_captions;
  std::vector<std::vector<int>> image_captions;
  std::vector<MetadataRecord> metadata;
  MetaFlags metadata_present = kAllMeta;

  std::size_t size() const { return ids.size(); }
  const Tensor& embedding(Modality m) const { return embeddings[static_cast<std::size_t>(m)]; }
  const Tensor& weight(Modality m) const { return weights[static_cast<std::size_t>(m)]; }
};

/// Embeds every record; present[k] = false replaces component k by its null.
Gallery embed_gallery(const Dataset& data, const Model& model, const MetaFlags& present = kAllMeta);

enum class Direction { i2a, a2i, i2t, t2i };
enum class ComposedMode { none, audio, query };

std::string_view direction_name(Direction d);
Direction parse_direction(std::string_view s);
std::string_view composed_name(ComposedMode m);
ComposedMode parse_composed(std::string_view s);

/// 1 + #{j : s_j > s_t} + #{j < t : s_j == s_t} for cosine scores s.
std::size_t rank(std::span<const float> query, const Tensor& gallery, std::size_t target);

/// Fraction of ranks <= ceil(pct * gallery_size).
double recall_at_pct(std::span<const std::size_t> ranks, std::size_t gallery_size, double pct = 0.10);
double recall_at_pct(std::span<const std::size_t> ranks, double pct = 0.10);
/// Lower median.
double median_rank(std::span<const std::size_t> ranks);

struct ComposedPair {
  std::vector<double> query;
  std::vector<double> gallery;
};

/// Query/gallery vectors for one audio->image pair under a composed mode:
/// none -> (f_a, f_i); audio -> (n(f_a + f_c), f_i); query -> (n(f_a + f_c), n(f_i + f_c)).
ComposedPair composed_query(std::span<const double> f_a, std::span<const double> f_c,
                            std::span<const double> f_i, ComposedMode mode);

struct RetrievalReport {
  Direction direction = Direction::i2a;
  ComposedMode composed = ComposedMode::none;
  std::size_t gallery_size = 0;
  double recall_at_10pct = 0.0;
  double median_rank = 0.0;
  std::vector<std::size_t> ranks;
  std::optional<double> bleu;            // image -> text only
  std::array<double, 4> mean_support{};  // mean nonzero pooling weights by modality
};

RetrievalReport evaluate(const Gallery& gallery, Direction direction, ComposedMode composed = ComposedMode::none);

nlohmann::json report_to_json(const RetrievalReport& r);
void write_report_table(std::ostream& out, const RetrievalReport& r);
void write_ranks_csv(std::ostream& out, const RetrievalReport& r, const Gallery& gallery);

/// Smoothed sentence BLEU. Zero-match orders n >= 2 get +1 on numerator and
/// denominator; a zero unigram match count gives 0.
double bleu(std::span<const int> candidate, std::span<const int> reference, std::size_t max_n = 4,
            bool brevity_penalty = true);

struct ConceptGroup {
  std::vector<std::size_t> concepts;  // sorted
  std::vector<std::string> ids;
};

/// Groups samples sharing the same set of top-k concepts; groups with at
/// least min_group members, largest first.
std::vector<ConceptGroup> group_by_concepts(const Gallery& gallery, std::size_t k, std::size_t min_group,
                                            Modality modality = Modality::image_caption);

}  // namespace s2s
