#pragma once

#include <array>
#include <optional>
#include <vector>

#include "s2s/autodiff.hpp"
#include "s2s/model.hpp"
#include "s2s/tensor.hpp"

namespace s2s {

inline constexpr double kMinTemperature = 1e-3;
inline constexpr double kMaxTemperature = 1.0;

struct LossFlags {
  bool trimodal = true;      // (L_ia + L_ic + L_ac) / 3
  bool composed = true;      // L_{i,a+c}
  bool image_text = true;    // L_{i,t}

  bool any() const { return trimodal || composed || image_text; }
  friend bool operator==(const LossFlags&, const LossFlags&) = default;
};

struct LossOptions {
  double alpha = 0.1;           // pseudo-positive weight
  double pseudo_margin = 0.0;   // s is pseudo-positive iff S[n][s] >= S[n][n] - margin
  LossFlags flags;
};

/// Per-term values; inactive terms stay empty.
struct LossBreakdown {
  std::array<std::optional<double>, 5> terms;   // indexed by LossPair
  std::optional<double> trimodal;
  double total = 0.0;
};

/// Symmetric InfoNCE over logits U V^T / tau with diagonal positives.
double infonce(const Tensor& U, const Tensor& V, double tau);

/// Row-major B x B mask: mask[n][s] = s != n && S[n][s] >= S[n][n] - margin.
std::vector<char> pseudo_positive_mask(const Tensor& similarity, double margin = 0.0);

/// L + alpha * L_pseudo, where L_pseudo averages exp-logits over the
/// ground truth plus pseudo-positives in the numerator.
double augmented_loss(const Tensor& U, const Tensor& V, double tau, double alpha, double margin = 0.0);

// normalize(a + c) row-wise.
Tensor compose_embeddings(const Tensor& audio, const Tensor& audio_caption);

struct BatchEmbeddings {
  Tensor image;
  Tensor audio;
  Tensor audio_caption;
  Tensor image_caption;
  Tensor composed;
};

LossBreakdown total_loss(const BatchEmbeddings& batch, const std::array<double, 5>& temperatures,
                         const LossOptions& options);

namespace graph {

ad::Var infonce(ad::Var U, ad::Var V, ad::Var tau);
ad::Var augmented_loss(ad::Var U, ad::Var V, ad::Var tau, double alpha, double margin);
ad::Var compose(ad::Var audio, ad::Var audio_caption);
ad::Var temperature(ad::Tape& tape, const Model& model, LossPair pair);

struct BatchVars {
  ad::Var image;
  ad::Var audio;
  ad::Var audio_caption;
  ad::Var image_caption;
  ad::Var composed;
};

struct LossVars {
  ad::Var total;
  std::array<std::optional<ad::Var>, 5> terms;
};

LossVars total_loss(const BatchVars& batch, const std::array<ad::Var, 5>& temperatures,
                    const LossOptions& options);

LossBreakdown breakdown(const LossVars& vars);

}  // namespace graph

}  // namespace s2s
