#include "s2s/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>

#include "s2s/codebook.hpp"
#include "s2s/error.hpp"
#include "s2s/pipeline.hpp"
#include "s2s/simplex.hpp"

namespace s2s {

Gallery embed_gallery(const Dataset& data, const Model& model, const MetaFlags& present) {
  const auto& cfg = model.config();
  if (data.header.audio_dim != cfg.audio_dim || data.header.image_dim != cfg.image_dim ||
      data.header.vocab_size > cfg.vocab_size) {
    throw FormatError("dataset dimensions (audio " + std::to_string(data.header.audio_dim) + ", image " +
                      std::to_string(data.header.image_dim) + ", vocab " + std::to_string(data.header.vocab_size) +
                      ") do not match the model");
  }
  if (data.records.empty()) throw FormatError("cannot embed an empty dataset");
  const std::size_t n = data.records.size();
  std::array<std::vector<float>, 4> emb;
  std::array<std::vector<float>, 4> wts;
  Gallery g;
  g.metadata_present = present;
  for (const auto& s : data.records) {
    const auto e = embed_sample(model, s, present);
    for (std::size_t m = 0; m < 4; ++m) {
      emb[m].insert(emb[m].end(), e.pooled[m].begin(), e.pooled[m].end());
      wts[m].insert(wts[m].end(), e.weights[m].begin(), e.weights[m].end());
    }
    g.ids.push_back(s.id);
    g.audio_captions.push_back(s.audio_caption_ids);
    g.image_captions.push_back(s.image_caption_ids);
    g.metadata.push_back(s.metadata);
  }
  for (std::size_t m = 0; m < 4; ++m) {
    g.embeddings[m] = Tensor::matrix(n, cfg.d, std::move(emb[m]));
    g.weights[m] = Tensor::matrix(n, cfg.concepts, std::move(wts[m]));
  }
  return g;
}

std::string_view direction_name(Direction d) {
  switch (d) {
    case Direction::i2a: return "i2a";
    case Direction::a2i: return "a2i";
    case Direction::i2t: return "i2t";
    case Direction::t2i: return "t2i";
  }
  return "?";
}

Direction parse_direction(std::string_view s) {
  for (auto d : {Direction::i2a, Direction::a2i, Direction::i2t, Direction::t2i}) {
    if (direction_name(d) == s) return d;
  }
  throw UsageError("direction must be one of i2a, a2i, i2t, t2i");
}

std::string_view composed_name(ComposedMode m) {
  switch (m) {
    case ComposedMode::none: return "none";
    case ComposedMode::audio: return "audio";
    case ComposedMode::query: return "query";
  }
  return "?";
}

ComposedMode parse_composed(std::string_view s) {
  for (auto m : {ComposedMode::none, ComposedMode::audio, ComposedMode::query}) {
    if (composed_name(m) == s) return m;
  }
  throw UsageError("composed mode must be one of none, audio, query");
}

namespace {

std::vector<double> scores(std::span<const float> query, const Tensor& gallery) {
  if (query.size() != gallery.cols()) throw UsageError("rank: query width differs from gallery width");
  std::vector<double> s(gallery.rows(), 0.0);
  for (std::size_t j = 0; j < gallery.rows(); ++j) {
    const auto row = gallery.row(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) acc += static_cast<double>(query[k]) * row[k];
    s[j] = acc;
  }
  return s;
}

std::size_t rank_from_scores(std::span<const double> s, std::size_t target) {
  std::size_t r = 1;
  const double st = s[target];
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s[j] > st || (j < target && s[j] == st)) ++r;
  }
  return r;
}

std::vector<float> add_normalized(std::span<const float> a, std::span<const float> b) {
  std::vector<double> sum(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) sum[k] = static_cast<double>(a[k]) + b[k];
  auto n = l2_normalize(sum);
  return std::vector<float>(n.begin(), n.end());
}

Tensor composed_rows(const Tensor& base, const Tensor& caption) {
  std::vector<float> out;
  out.reserve(base.size());
  for (std::size_t i = 0; i < base.rows(); ++i) {
    auto row = add_normalized(base.row(i), caption.row(i));
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor::matrix(base.rows(), base.cols(), std::move(out));
}

}  // namespace

std::size_t rank(std::span<const float> query, const Tensor& gallery, std::size_t target) {
  if (target >= gallery.rows()) {
    throw UsageError("rank: target " + std::to_string(target) + " outside gallery of " +
                     std::to_string(gallery.rows()));
  }
  return rank_from_scores(scores(query, gallery), target);
}

double recall_at_pct(std::span<const std::size_t> ranks, std::size_t gallery_size, double pct) {
  if (ranks.empty()) throw UsageError("recall_at_pct: no ranks");
  const auto cutoff = static_cast<std::size_t>(std::ceil(pct * static_cast<double>(gallery_size) - 1e-9));
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [&](std::size_t r) { return r <= cutoff; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double recall_at_pct(std::span<const std::size_t> ranks, double pct) {
  return recall_at_pct(ranks, ranks.size(), pct);
}

double median_rank(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw UsageError("median_rank: no ranks");
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  return static_cast<double>(sorted[(sorted.size() - 1) / 2]);
}

ComposedPair composed_query(std::span<const double> f_a, std::span<const double> f_c,
                            std::span<const double> f_i, ComposedMode mode) {
  if (f_a.size() != f_c.size() || f_a.size() != f_i.size()) throw UsageError("composed_query: width mismatch");
  auto sum = [](std::span<const double> a, std::span<const double> b) {
    std::vector<double> s(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) s[k] = a[k] + b[k];
    return l2_normalize(s);
  };
  switch (mode) {
    case ComposedMode::none: return {std::vector<double>(f_a.begin(), f_a.end()), std::vector<double>(f_i.begin(), f_i.end())};
    case ComposedMode::audio: return {sum(f_a, f_c), std::vector<double>(f_i.begin(), f_i.end())};
    case ComposedMode::query: return {sum(f_a, f_c), sum(f_i, f_c)};
  }
  throw UsageError("unknown composed mode");
}

RetrievalReport evaluate(const Gallery& gallery, Direction direction, ComposedMode composed) {
  const bool text = direction == Direction::i2t || direction == Direction::t2i;
  if (text && composed != ComposedMode::none) {
    throw UsageError("composed retrieval applies to image/audio directions only");
  }
  const Tensor& image = gallery.embedding(Modality::image);
  const Tensor& audio = gallery.embedding(Modality::audio);
  const Tensor& caption = gallery.embedding(Modality::audio_caption);
  Tensor audio_side = composed == ComposedMode::none ? audio : composed_rows(audio, caption);
  Tensor image_side = composed == ComposedMode::query ? composed_rows(image, caption) : image;

  const Tensor* queries = nullptr;
  const Tensor* targets = nullptr;
  switch (direction) {
    case Direction::i2a: queries = &image_side; targets = &audio_side; break;
    case Direction::a2i: queries = &audio_side; targets = &image_side; break;
    case Direction::i2t: queries = &image; targets = &gallery.embedding(Modality::image_caption); break;
    case Direction::t2i: queries = &gallery.embedding(Modality::image_caption); targets = &image; break;
  }
  RetrievalReport r;
  r.direction = direction;
  r.composed = composed;
  r.gallery_size = gallery.size();
  double bleu_sum = 0.0;
  for (std::size_t q = 0; q < gallery.size(); ++q) {
    const auto s = scores(queries->row(q), *targets);
    r.ranks.push_back(rank_from_scores(s, q));
    if (direction == Direction::i2t) {
      const auto top = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
      bleu_sum += bleu(gallery.image_captions[top], gallery.image_captions[q]);
    }
  }
  r.recall_at_10pct = recall_at_pct(r.ranks, r.gallery_size, 0.10);
  r.median_rank = median_rank(r.ranks);
  if (direction == Direction::i2t) r.bleu = bleu_sum / static_cast<double>(gallery.size());
  for (std::size_t m = 0; m < 4; ++m) {
    const auto& w = gallery.weights[m];
    std::size_t nonzero = 0;
    for (float x : w.data()) nonzero += x > 0.0f;
    r.mean_support[m] = static_cast<double>(nonzero) / static_cast<double>(w.rows());
  }
  return r;
}

nlohmann::json report_to_json(const RetrievalReport& r) {
  nlohmann::json support;
  for (auto m : kModalities) support[std::string(modality_name(m))] = r.mean_support[static_cast<std::size_t>(m)];
  nlohmann::json j = {{"direction", std::string(direction_name(r.direction))},
                      {"composed", std::string(composed_name(r.composed))},
                      {"N", r.gallery_size},
                      {"R@10%", r.recall_at_10pct},
                      {"MedianRank", r.median_rank},
                      {"mean_support", support}};
  if (r.bleu) j["BLEU"] = *r.bleu;
  return j;
}

void write_report_table(std::ostream& out, const RetrievalReport& r) {
  out << std::left << std::setw(10) << "direction" << std::setw(10) << "composed" << std::setw(8) << "N"
      << std::setw(10) << "R@10%" << std::setw(12) << "MedianRank";
  if (r.bleu) out << std::setw(8) << "BLEU";
  out << '\n';
  out << std::left << std::setw(10) << direction_name(r.direction) << std::setw(10) << composed_name(r.composed)
      << std::setw(8) << r.gallery_size << std::setw(10) << std::fixed << std::setprecision(4) << r.recall_at_10pct
      << std::setw(12) << std::setprecision(1) << r.median_rank;
  if (r.bleu) out << std::setw(8) << std::setprecision(4) << *r.bleu;
  out << '\n';
  out.unsetf(std::ios::floatfield);
}

void write_ranks_csv(std::ostream& out, const RetrievalReport& r, const Gallery& gallery) {
  out << "query_index,id,rank\n";
  for (std::size_t q = 0; q < r.ranks.size(); ++q) out << q << ',' << gallery.ids[q] << ',' << r.ranks[q] << '\n';
}

double bleu(std::span<const int> candidate, std::span<const int> reference, std::size_t max_n, bool brevity_penalty) {
  if (reference.empty()) throw UsageError("bleu: empty reference");
  if (candidate.empty()) return 0.0;
  if (max_n == 0) throw UsageError("bleu: max_n must be >= 1");
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::map<std::vector<int>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= reference.size(); ++i) {
      ++ref_counts[std::vector<int>(reference.begin() + static_cast<std::ptrdiff_t>(i),
                                    reference.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    std::map<std::vector<int>, std::size_t> cand_counts;
    std::size_t total = 0;
    for (std::size_t i = 0; i + n <= candidate.size(); ++i) {
      ++cand_counts[std::vector<int>(candidate.begin() + static_cast<std::ptrdiff_t>(i),
                                     candidate.begin() + static_cast<std::ptrdiff_t>(i + n))];
      ++total;
    }
    std::size_t matches = 0;
    for (const auto& [gram, count] : cand_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matches += std::min(count, it->second);
    }
    double precision;
    if (matches > 0) {
      precision = static_cast<double>(matches) / static_cast<double>(total);
    } else if (n == 1) {
      return 0.0;
    } else {
      precision = 1.0 / static_cast<double>(total + 1);
    }
    log_sum += std::log(precision);
  }
  double score = std::exp(log_sum / static_cast<double>(max_n));
  if (brevity_penalty) {
    const double c = static_cast<double>(candidate.size());
    const double r = static_cast<double>(reference.size());
    score *= std::min(1.0, std::exp(1.0 - r / c));
  }
  return score;
}

std::vector<ConceptGroup> group_by_concepts(const Gallery& gallery, std::size_t k, std::size_t min_group,
                                            Modality modality) {
  if (k < 1) throw UsageError("group_by_concepts: k must be >= 1");
  const Tensor& w = gallery.weight(modality);
  std::map<std::vector<std::size_t>, std::vector<std::string>> buckets;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    const auto row = w.row(i);
    std::vector<double> weights(row.begin(), row.end());
    auto key = top_concepts(weights, std::min(k, weights.size()));
    std::sort(key.begin(), key.end());
    buckets[key].push_back(gallery.ids[i]);
  }
  std::vector<ConceptGroup> groups;
  for (auto& [key, ids] : buckets) {
    if (ids.size() >= min_group) groups.push_back({key, std::move(ids)});
  }
  std::stable_sort(groups.begin(), groups.end(),
                   [](const ConceptGroup& a, const ConceptGroup& b) { return a.ids.size() > b.ids.size(); });
  return groups;
}

}  // namespace s2s
