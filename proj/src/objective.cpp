#include "s2s/objective.hpp"

#include <cmath>

#include "s2s/error.hpp"
#include "s2s/rng.hpp"

namespace s2s {

using ad::Mat;
using ad::Var;

namespace {

void require_pair(const ad::Mat& U, const ad::Mat& V) {
  if (U.rows != V.rows || U.cols != V.cols || U.rows == 0) {
    throw UsageError("contrastive loss needs two B x d matrices with B >= 1");
  }
}

std::vector<char> mask_from(const Mat& S, double margin) {
  const std::size_t B = S.rows;
  std::vector<char> mask(B * B, 0);
  for (std::size_t n = 0; n < B; ++n) {
    for (std::size_t s = 0; s < B; ++s) {
      if (s != n && S(n, s) >= S(n, n) - margin) mask[n * B + s] = 1;
    }
  }
  return mask;
}

Mat transpose_values(const Mat& A) {
  Mat out(A.cols, A.rows);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) out(j, i) = A(i, j);
  return out;
}

// -(1/2B) * sum over both directions of (diag - lse_row)
Var directional_sum(Var logits, Var logits_t) {
  Var fwd = ad::sub(ad::diag(logits), ad::logsumexp_rows(logits));
  Var bwd = ad::sub(ad::diag(logits_t), ad::logsumexp_rows(logits_t));
  const double B = static_cast<double>(logits.rows());
  return ad::scale(ad::add(ad::sum_all(fwd), ad::sum_all(bwd)), -1.0 / (2.0 * B));
}

Var multi_positive(Var logits, const std::vector<char>& pseudo) {
  const std::size_t B = logits.rows();
  std::vector<char> positives = pseudo;
  Mat log_count(B, 1);
  for (std::size_t n = 0; n < B; ++n) {
    positives[n * B + n] = 1;
    double count = 0.0;
    for (std::size_t s = 0; s < B; ++s) count += positives[n * B + s];
    log_count.v[n] = -std::log(count);
  }
  Var numer = ad::add_const(ad::logsumexp_rows(logits, positives), log_count);
  return ad::sub(numer, ad::logsumexp_rows(logits));
}

}  // namespace

namespace graph {

Var infonce(Var U, Var V, Var tau) {
  require_pair(U.value(), V.value());
  if (tau.scalar() <= 0.0) throw UsageError("infonce: temperature must be positive");
  Var logits = ad::div_scalar(ad::matmul(U, ad::transpose(V)), tau);
  return directional_sum(logits, ad::transpose(logits));
}

Var augmented_loss(Var U, Var V, Var tau, double alpha, double margin) {
  if (alpha < 0.0) throw UsageError("augmented_loss: alpha must be non-negative");
  require_pair(U.value(), V.value());
  if (tau.scalar() <= 0.0) throw UsageError("infonce: temperature must be positive");
  Var logits = ad::div_scalar(ad::matmul(U, ad::transpose(V)), tau);
  Var logits_t = ad::transpose(logits);
  Var base = directional_sum(logits, logits_t);
  if (alpha == 0.0) return base;

  // Masks come from the cosine similarities and are held constant.
  Mat S(U.rows(), V.rows());
  const Mat& Uv = U.value();
  const Mat& Vv = V.value();
  for (std::size_t n = 0; n < Uv.rows; ++n)
    for (std::size_t s = 0; s < Vv.rows; ++s) {
      double dot = 0.0;
      for (std::size_t k = 0; k < Uv.cols; ++k) dot += Uv(n, k) * Vv(s, k);
      S(n, s) = dot;
    }
  const Mat St = transpose_values(S);
  const auto mask_uv = mask_from(S, margin);
  const auto mask_vu = mask_from(St, margin);
  ad::Tape& tape = *U.tape;
  std::uint64_t token = 0x70736575ULL;
  for (std::size_t n = 0; n < S.rows; ++n) {
    for (std::size_t s = 0; s < S.cols; ++s) {
      token = mix64(token ^ (static_cast<std::uint64_t>(mask_uv[n * S.cols + s]) << 1 |
                             static_cast<std::uint64_t>(mask_vu[n * S.cols + s])));
      if (s != n) {
        tape.note_margin(std::abs(S(n, s) - S(n, n) + margin));
        tape.note_margin(std::abs(St(n, s) - St(n, n) + margin));
      }
    }
  }
  tape.note_branch(token);

  const double B = static_cast<double>(S.rows);
  Var pseudo = ad::scale(ad::add(ad::sum_all(multi_positive(logits, mask_uv)),
                                 ad::sum_all(multi_positive(logits_t, mask_vu))),
                         -1.0 / (2.0 * B));
  return ad::add(base, ad::scale(pseudo, alpha));
}

Var compose(Var audio, Var audio_caption) {
  return ad::l2_normalize_rows(ad::add(audio, audio_caption));
}

Var temperature(ad::Tape& tape, const Model& model, LossPair pair) {
  return ad::exp_clamped(tape.param(model.param(param_names::temperature(pair))), kMinTemperature,
                         kMaxTemperature);
}

LossVars total_loss(const BatchVars& batch, const std::array<Var, 5>& temps, const LossOptions& opt) {
  if (!opt.flags.any()) throw UsageError("total_loss: every loss term is disabled");
  LossVars out;
  auto term = [&](LossPair p, Var u, Var v) {
    Var l = augmented_loss(u, v, temps[static_cast<std::size_t>(p)], opt.alpha, opt.pseudo_margin);
    out.terms[static_cast<std::size_t>(p)] = l;
    return l;
  };
  std::vector<Var> parts;
  if (opt.flags.trimodal) {
    Var ia = term(LossPair::image_audio, batch.image, batch.audio);
    Var ic = term(LossPair::image_caption, batch.image, batch.audio_caption);
    Var ac = term(LossPair::audio_caption, batch.audio, batch.audio_caption);
    parts.push_back(ad::scale(ad::add(ad::add(ia, ic), ac), 1.0 / 3.0));
  }
  if (opt.flags.composed) parts.push_back(term(LossPair::image_composed, batch.image, batch.composed));
  if (opt.flags.image_text) parts.push_back(term(LossPair::image_text, batch.image, batch.image_caption));
  out.total = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out.total = ad::add(out.total, parts[i]);
  return out;
}

LossBreakdown breakdown(const LossVars& vars) {
  LossBreakdown b;
  for (std::size_t i = 0; i < 5; ++i) {
    if (vars.terms[i]) b.terms[i] = vars.terms[i]->scalar();
  }
  if (b.terms[0] && b.terms[1] && b.terms[2]) b.trimodal = (*b.terms[0] + *b.terms[1] + *b.terms[2]) / 3.0;
  b.total = vars.total.scalar();
  return b;
}

}  // namespace graph

double infonce(const Tensor& U, const Tensor& V, double tau) {
  if (tau <= 0.0) throw UsageError("infonce: temperature must be positive");
  ad::Tape tape;
  return graph::infonce(tape.constant(Mat::from_tensor(U)), tape.constant(Mat::from_tensor(V)),
                        tape.constant(Mat(1, 1, {tau})))
      .scalar();
}

std::vector<char> pseudo_positive_mask(const Tensor& similarity, double margin) {
  if (similarity.rows() != similarity.cols()) throw UsageError("pseudo_positive_mask: matrix must be square");
  return mask_from(Mat::from_tensor(similarity), margin);
}

double augmented_loss(const Tensor& U, const Tensor& V, double tau, double alpha, double margin) {
  if (tau <= 0.0) throw UsageError("infonce: temperature must be positive");
  ad::Tape tape;
  return graph::augmented_loss(tape.constant(Mat::from_tensor(U)), tape.constant(Mat::from_tensor(V)),
                               tape.constant(Mat(1, 1, {tau})), alpha, margin)
      .scalar();
}

Tensor compose_embeddings(const Tensor& audio, const Tensor& audio_caption) {
  ad::Tape tape;
  return graph::compose(tape.constant(Mat::from_tensor(audio)), tape.constant(Mat::from_tensor(audio_caption)))
      .value()
      .to_tensor();
}

LossBreakdown total_loss(const BatchEmbeddings& batch, const std::array<double, 5>& temperatures,
                         const LossOptions& options) {
  ad::Tape tape;
  auto c = [&](const Tensor& t) { return tape.constant(Mat::from_tensor(t)); };
  graph::BatchVars vars{c(batch.image), c(batch.audio), c(batch.audio_caption), c(batch.image_caption),
                        c(batch.composed)};
  std::array<Var, 5> temps;
  for (std::size_t i = 0; i < 5; ++i) {
    if (temperatures[i] <= 0.0) throw UsageError("infonce: temperature must be positive");
    temps[i] = tape.constant(Mat(1, 1, {temperatures[i]}));
  }
  return graph::breakdown(graph::total_loss(vars, temps, options));
}

}  // namespace s2s
