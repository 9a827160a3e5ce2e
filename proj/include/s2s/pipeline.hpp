#pragma once

#include <array>
#include <span>
#include <vector>

#include "s2s/codebook.hpp"
#include "s2s/encoders.hpp"
#include "s2s/objective.hpp"

namespace s2s {

inline std::size_t modality_index(Modality m) { return static_cast<std::size_t>(m); }

namespace graph {

struct SampleVars {
  std::array<ad::Var, 4> pooled;   // normalized 1 x d, indexed by Modality
  std::array<ad::Var, 4> weights;  // 1 x M
  std::array<ad::Var, 4> relevance;
};

struct CodebookVars {
  ad::Var codebook;
  ad::Var codebook_t;
};

CodebookVars codebook_vars(ad::Tape& tape, const Model& model);

// dropped[k] replaces metadata component k by its null embedding.
SampleVars forward_sample(ad::Tape& tape, const Model& model, const CodebookVars& cb,
                          const RawSample& sample, const MetaFlags& dropped);

struct BatchLoss {
  BatchVars batch;
  LossVars loss;
};

BatchLoss batch_loss(ad::Tape& tape, const Model& model, std::span<const RawSample* const> samples,
                     std::span<const MetaFlags> dropped, const LossOptions& options);

}  // namespace graph

struct SampleEmbedding {
  std::array<std::vector<double>, 4> pooled;           // normalized, by Modality
  std::array<std::vector<double>, 4> weights;          // pooling weights (model's mode)
  std::array<std::vector<double>, 4> softmax_weights;  // diagnostics
};

/// Forward pass for evaluation; present[k] = false nulls component k.
SampleEmbedding embed_sample(const Model& model, const RawSample& sample, const MetaFlags& present);

inline MetaFlags dropped_from_present(const MetaFlags& present) {
  MetaFlags d{};
  for (std::size_t k = 0; k < present.size(); ++k) d[k] = !present[k];
  return d;
}

}  // namespace s2s
