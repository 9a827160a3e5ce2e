#pragma once

#include <vector>

#include "s2s/autodiff.hpp"
#include "s2s/model.hpp"
#include "s2s/tensor.hpp"

namespace s2s {

struct Relevance {
  std::vector<double> scores;             // r_m
  std::vector<std::size_t> argmax_token;  // token row attaining r_m, lowest on ties
};

/// r_m = max_j <token_j, C_m>.
Relevance relevance(const Tensor& tokens, const Tensor& codebook);

struct ConceptWeights {
  std::vector<double> weights;
  PoolingMode mode = PoolingMode::sparsemax;
};

ConceptWeights attention_weights(std::span<const double> r, PoolingMode mode);

struct PooledEmbedding {
  std::vector<double> raw;         // sum_m w_m C_m
  std::vector<double> normalized;  // raw / max(||raw||, eps)
};

PooledEmbedding pool(const ConceptWeights& w, const Tensor& codebook);

// Indices of the k largest weights, descending, ties to the lowest index.
std::vector<std::size_t> top_concepts(std::span<const double> w, std::size_t k);

struct GroundingResult {
  // One row per query token: <target_j, C_{m*}> for every target token j.
  std::vector<std::vector<double>> per_word;
  std::vector<std::size_t> chosen_concepts;  // m* per query token
  std::vector<double> scores;                // mean over query tokens
  std::vector<double> normalized;            // min-max of scores, 0.5 if flat
};

/// Scores target tokens against the concept each query token attends to most.
GroundingResult ground(const Tensor& query_tokens, const Tensor& target_tokens, const Tensor& codebook,
                       PoolingMode mode);

// Min-max rescaling into [0,1]; a constant input maps to 0.5 everywhere.
std::vector<double> min_max_normalize(std::span<const double> v);

namespace graph {

struct PooledVars {
  ad::Var relevance;   // 1 x M
  ad::Var weights;     // 1 x M
  ad::Var normalized;  // 1 x d
};

/// Relevance -> attention weights -> pooled, L2-normalized embedding.
/// codebook_t is the transposed codebook (d x M) shared across calls.
PooledVars pool_tokens(ad::Var tokens, ad::Var codebook, ad::Var codebook_t, PoolingMode mode);

}  // namespace graph

}  // namespace s2s
