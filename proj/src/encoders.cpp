#include "s2s/encoders.hpp"

#include <cmath>
#include <numbers>

#include "s2s/error.hpp"

namespace s2s {

namespace pn = param_names;
using ad::Mat;
using ad::Var;

double scale_channel(int scale) { return static_cast<double>(scale) / 5.0; }

std::array<double, 4> location_features(double lat_deg, double lon_deg) {
  const double lat = lat_deg * std::numbers::pi / 180.0;
  const double lon = lon_deg * std::numbers::pi / 180.0;
  return {std::sin(lat), std::cos(lat), std::sin(lon), std::cos(lon)};
}

std::array<double, 2> month_features(int month) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(month % 12) / 12.0;
  return {std::sin(phase), std::cos(phase)};
}

std::array<double, 2> hour_features(int hour) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(hour % 24) / 24.0;
  return {std::sin(phase), std::cos(phase)};
}

namespace graph {

namespace {

Var affine_tanh(ad::Tape& tape, Var x, const Model& model, Modality m) {
  Var w = tape.param(model.param(pn::weight(m)));
  Var b = tape.param(model.param(pn::bias(m)));
  return ad::tanh(ad::add_row(ad::matmul(x, w), b));
}

Var linear(ad::Tape& tape, Var x, const Model& model, const std::string& prefix) {
  return ad::add_row(ad::matmul(x, tape.param(model.param(prefix + ".weight"))),
                     tape.param(model.param(prefix + ".bias")));
}

}  // namespace

Var encode(ad::Tape& tape, const RawSample& sample, Modality which, const Model& model) {
  const auto& cfg = model.config();
  switch (which) {
    case Modality::audio: {
      if (sample.audio_tokens.cols() != cfg.audio_dim) {
        throw FormatError("audio token width " + std::to_string(sample.audio_tokens.cols()) +
                          " does not match model audio_dim " + std::to_string(cfg.audio_dim));
      }
      return affine_tanh(tape, tape.constant(Mat::from_tensor(sample.audio_tokens)), model, which);
    }
    case Modality::image: {
      const Tensor& p = sample.image_patches;
      if (p.cols() != cfg.image_dim) {
        throw FormatError("image patch width " + std::to_string(p.cols()) +
                          " does not match model image_dim " + std::to_string(cfg.image_dim));
      }
      Mat x(p.rows(), p.cols() + 1);
      for (std::size_t i = 0; i < p.rows(); ++i) {
        for (std::size_t j = 0; j < p.cols(); ++j) x(i, j) = p.at(i, j);
        x(i, p.cols()) = scale_channel(sample.scale);
      }
      return affine_tanh(tape, tape.constant(std::move(x)), model, which);
    }
    case Modality::audio_caption:
    case Modality::image_caption: {
      const auto& ids = which == Modality::audio_caption ? sample.audio_caption_ids : sample.image_caption_ids;
      Var table = tape.param(model.param(pn::kTextEmbedding));
      return affine_tanh(tape, ad::gather_rows(table, ids), model, which);
    }
  }
  throw UsageError("unknown modality");
}

Var embed_metadata(ad::Tape& tape, const MetadataRecord& meta, const Model& model,
                   const MetaFlags& dropped) {
  const auto& cfg = model.config();
  if (!cfg.metadata_enabled) throw UsageError("model was built without metadata fusion");
  std::vector<Var> rows;
  rows.reserve(kMetaComponents);
  for (std::size_t k = 0; k < kMetaComponents; ++k) {
    if (dropped[k] || !cfg.components[k]) {
      rows.push_back(tape.param(model.param(pn::meta_null(k))));
      continue;
    }
    switch (k) {
      case kLocation: {
        auto f = location_features(meta.lat, meta.lon);
        rows.push_back(linear(tape, tape.constant(Mat(1, 4, {f.begin(), f.end()})), model,
                              "meta.location"));
        break;
      }
      case kMonth: {
        auto f = month_features(meta.month);
        rows.push_back(linear(tape, tape.constant(Mat(1, 2, {f.begin(), f.end()})), model, "meta.month"));
        break;
      }
      case kHour: {
        auto f = hour_features(meta.hour);
        rows.push_back(linear(tape, tape.constant(Mat(1, 2, {f.begin(), f.end()})), model, "meta.hour"));
        break;
      }
      case kAudioSource:
        rows.push_back(ad::gather_rows(tape.param(model.param(pn::meta_table(kAudioSource))),
                                       {meta.audio_source}));
        break;
      case kCaptionSource:
        rows.push_back(ad::gather_rows(tape.param(model.param(pn::meta_table(kCaptionSource))),
                                       {meta.caption_source}));
        break;
    }
  }
  return ad::concat_rows(rows);
}

Var fuse_metadata(ad::Tape& tape, Var patches, Var meta_rows, const Model& model) {
  const auto& cfg = model.config();
  if (!cfg.metadata_enabled) throw UsageError("model was built without metadata fusion");
  if (patches.cols() != cfg.d || meta_rows.cols() != cfg.d || meta_rows.rows() != kMetaComponents) {
    throw UsageError("fuse_metadata: expected N x d patches and 5 x d metadata rows");
  }
  Var x = ad::concat_rows({patches, meta_rows});
  Var q = linear(tape, x, model, "fusion.q");
  Var k = linear(tape, x, model, "fusion.k");
  Var v = linear(tape, x, model, "fusion.v");
  const std::size_t head_dim = cfg.d / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    Var qh = ad::slice_cols(q, h * head_dim, head_dim);
    Var kh = ad::slice_cols(k, h * head_dim, head_dim);
    Var vh = ad::slice_cols(v, h * head_dim, head_dim);
    Var att = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
    heads.push_back(ad::matmul(att, vh));
  }
  Var attended = linear(tape, heads.size() == 1 ? heads[0] : ad::concat_cols(heads), model, "fusion.o");
  Var normed = ad::layernorm_rows(ad::add(x, attended), tape.param(model.param("fusion.norm.gain")),
                                  tape.param(model.param("fusion.norm.bias")));
  Var hidden = ad::tanh(linear(tape, normed, model, "fusion.ffn1"));
  return ad::add(normed, linear(tape, hidden, model, "fusion.ffn2"));
}

Var image_tokens(ad::Tape& tape, const RawSample& sample, const Model& model, const MetaFlags& dropped) {
  Var patches = encode(tape, sample, Modality::image, model);
  if (!model.config().metadata_enabled) return patches;
  return fuse_metadata(tape, patches, embed_metadata(tape, sample.metadata, model, dropped), model);
}

}  // namespace graph

Tensor encode(const RawSample& sample, Modality which, const Model& model) {
  ad::Tape tape;
  return graph::encode(tape, sample, which, model).value().to_tensor();
}

Tensor embed_metadata(const MetadataRecord& meta, const Model& model, const MetaFlags& dropped) {
  ad::Tape tape;
  return graph::embed_metadata(tape, meta, model, dropped).value().to_tensor();
}

Tensor fuse_metadata(const Tensor& patches, const Tensor& meta_rows, const Model& model) {
  ad::Tape tape;
  Var p = tape.constant(Mat::from_tensor(patches));
  Var m = tape.constant(Mat::from_tensor(meta_rows));
  return graph::fuse_metadata(tape, p, m, model).value().to_tensor();
}

}  // namespace s2s
