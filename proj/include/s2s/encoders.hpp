#pragma once

#include "s2s/autodiff.hpp"
#include "s2s/model.hpp"
#include "s2s/sample.hpp"

namespace s2s {

// Value of the constant scale channel appended to image patch features.
double scale_channel(int scale);

// Periodic/angular features fed to the metadata projections.
std::array<double, 4> location_features(double lat_deg, double lon_deg);
std::array<double, 2> month_features(int month);
std::array<double, 2> hour_features(int hour);

/// Token embeddings N^m x d for one modality: affine + tanh for continuous
/// tokens, table lookup + affine + tanh for caption ids.
Tensor encode(const RawSample& sample, Modality which, const Model& model);

/// 5 x d metadata block. dropped[k] selects component k's learned null
/// embedding; components without a learned table are always null.
Tensor embed_metadata(const MetadataRecord& meta, const Model& model, const MetaFlags& dropped);

/// Self-attention block over [patches; meta_rows] with residual + per-token
/// normalization, then a residual two-layer feed-forward.
Tensor fuse_metadata(const Tensor& patches, const Tensor& meta_rows, const Model& model);

namespace graph {

ad::Var encode(ad::Tape& tape, const RawSample& sample, Modality which, const Model& model);
ad::Var embed_metadata(ad::Tape& tape, const MetadataRecord& meta, const Model& model,
                       const MetaFlags& dropped);
ad::Var fuse_metadata(ad::Tape& tape, ad::Var patches, ad::Var meta_rows, const Model& model);

// Image tokens as seen by the codebook: fused (N^i + 5 rows) when metadata
// is enabled, raw patch embeddings otherwise.
ad::Var image_tokens(ad::Tape& tape, const RawSample& sample, const Model& model,
                     const MetaFlags& dropped);

}  // namespace graph

}  // namespace s2s
