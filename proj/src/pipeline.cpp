#include "s2s/pipeline.hpp"

#include "s2s/error.hpp"
#include "s2s/simplex.hpp"

namespace s2s {

namespace graph {

CodebookVars codebook_vars(ad::Tape& tape, const Model& model) {
  ad::Var c = tape.param(model.param(param_names::kCodebook));
  return {c, ad::transpose(c)};
}

SampleVars forward_sample(ad::Tape& tape, const Model& model, const CodebookVars& cb,
                          const RawSample& sample, const MetaFlags& dropped) {
  SampleVars out;
  const auto mode = model.config().pooling;
  for (auto m : kModalities) {
    ad::Var tokens = m == Modality::image ? image_tokens(tape, sample, model, dropped)
                                          : encode(tape, sample, m, model);
    auto pooled = pool_tokens(tokens, cb.codebook, cb.codebook_t, mode);
    out.pooled[modality_index(m)] = pooled.normalized;
    out.weights[modality_index(m)] = pooled.weights;
    out.relevance[modality_index(m)] = pooled.relevance;
  }
  return out;
}

BatchLoss batch_loss(ad::Tape& tape, const Model& model, std::span<const RawSample* const> samples,
                     std::span<const MetaFlags> dropped, const LossOptions& options) {
  if (samples.empty() || samples.size() != dropped.size()) {
    throw UsageError("batch_loss: need one dropout mask per sample and at least one sample");
  }
  const auto cb = codebook_vars(tape, model);
  std::array<std::vector<ad::Var>, 4> rows;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto s = forward_sample(tape, model, cb, *samples[i], dropped[i]);
    for (std::size_t m = 0; m < 4; ++m) rows[m].push_back(s.pooled[m]);
  }
  auto stack = [&](Modality m) { return ad::concat_rows(rows[modality_index(m)]); };
  BatchLoss out;
  out.batch.image = stack(Modality::image);
  out.batch.audio = stack(Modality::audio);
  out.batch.audio_caption = stack(Modality::audio_caption);
  out.batch.image_caption = stack(Modality::image_caption);
  out.batch.composed = compose(out.batch.audio, out.batch.audio_caption);
  std::array<ad::Var, 5> temps;
  for (auto p : kLossPairs) temps[static_cast<std::size_t>(p)] = temperature(tape, model, p);
  out.loss = total_loss(out.batch, temps, options);
  return out;
}

}  // namespace graph

SampleEmbedding embed_sample(const Model& model, const RawSample& sample, const MetaFlags& present) {
  ad::Tape tape;
  const auto cb = graph::codebook_vars(tape, model);
  auto vars = graph::forward_sample(tape, model, cb, sample, dropped_from_present(present));
  SampleEmbedding out;
  for (std::size_t m = 0; m < 4; ++m) {
    out.pooled[m] = vars.pooled[m].value().v;
    out.weights[m] = vars.weights[m].value().v;
    out.softmax_weights[m] = softmax(vars.relevance[m].value().v);
  }
  return out;
}

}  // namespace s2s
