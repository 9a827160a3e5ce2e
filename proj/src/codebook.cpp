#include "s2s/codebook.hpp"

#include <algorithm>
#include <numeric>

#include "s2s/error.hpp"
#include "s2s/simplex.hpp"

namespace s2s {

Relevance relevance(const Tensor& tokens, const Tensor& codebook) {
  if (tokens.rows() == 0) throw UsageError("relevance: no tokens");
  if (tokens.cols() != codebook.cols()) throw UsageError("relevance: token width differs from codebook width");
  const std::size_t M = codebook.rows();
  const std::size_t d = codebook.cols();
  Relevance out;
  out.scores.assign(M, 0.0);
  out.argmax_token.assign(M, 0);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t j = 0; j < tokens.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += static_cast<double>(tokens.at(j, k)) * codebook.at(m, k);
      if (j == 0 || s > out.scores[m]) {
        out.scores[m] = s;
        out.argmax_token[m] = j;
      }
    }
  }
  return out;
}

ConceptWeights attention_weights(std::span<const double> r, PoolingMode mode) {
  return {mode == PoolingMode::softmax ? softmax(r) : sparsemax(r), mode};
}

PooledEmbedding pool(const ConceptWeights& w, const Tensor& codebook) {
  if (w.weights.size() != codebook.rows()) throw UsageError("pool: weight count differs from codebook size");
  PooledEmbedding out;
  out.raw.assign(codebook.cols(), 0.0);
  for (std::size_t m = 0; m < codebook.rows(); ++m) {
    if (w.weights[m] == 0.0) continue;
    for (std::size_t k = 0; k < codebook.cols(); ++k) out.raw[k] += w.weights[m] * codebook.at(m, k);
  }
  out.normalized = l2_normalize(out.raw);
  return out;
}

std::vector<std::size_t> top_concepts(std::span<const double> w, std::size_t k) {
  if (k < 1 || k > w.size()) throw UsageError("top_concepts: k must be in [1, M]");
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  idx.resize(k);
  return idx;
}

std::vector<double> min_max_normalize(std::span<const double> v) {
  if (v.empty()) return {};
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.5);
  if (*hi > *lo) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
  }
  return out;
}

GroundingResult ground(const Tensor& query_tokens, const Tensor& target_tokens, const Tensor& codebook,
                       PoolingMode mode) {
  if (query_tokens.rows() == 0 || target_tokens.rows() == 0) throw UsageError("ground: empty token set");
  if (target_tokens.cols() != codebook.cols()) throw UsageError("ground: target width differs from codebook");
  GroundingResult out;
  const std::size_t n_target = target_tokens.rows();
  out.scores.assign(n_target, 0.0);
  for (std::size_t q = 0; q < query_tokens.rows(); ++q) {
    const Tensor word = Tensor::matrix(1, query_tokens.cols(),
                                       {query_tokens.row(q).begin(), query_tokens.row(q).end()});
    const auto w = attention_weights(relevance(word, codebook).scores, mode);
    const std::size_t chosen = top_concepts(w.weights, 1).front();
    out.chosen_concepts.push_back(chosen);
    std::vector<double> row(n_target, 0.0);
    for (std::size_t j = 0; j < n_target; ++j) {
      for (std::size_t k = 0; k < codebook.cols(); ++k) {
        row[j] += static_cast<double>(target_tokens.at(j, k)) * codebook.at(chosen, k);
      }
      out.scores[j] += row[j];
    }
    out.per_word.push_back(std::move(row));
  }
  for (auto& s : out.scores) s /= static_cast<double>(query_tokens.rows());
  out.normalized = min_max_normalize(out.scores);
  return out;
}

namespace graph {

PooledVars pool_tokens(ad::Var tokens, ad::Var codebook, ad::Var codebook_t, PoolingMode mode) {
  ad::Var r = ad::max_over_rows(ad::matmul(tokens, codebook_t));
  ad::Var w = mode == PoolingMode::softmax ? ad::softmax_rows(r) : ad::sparsemax_rows(r);
  return {r, w, ad::l2_normalize_rows(ad::matmul(w, codebook))};
}

}  // namespace graph

}  // namespace s2s
