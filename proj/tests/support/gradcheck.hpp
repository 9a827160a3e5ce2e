#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2s/model.hpp"
#include "s2s/objective.hpp"
#include "s2s/sample.hpp"

namespace gradcheck {

struct TensorReport {
  std::string name;
  double rel_error = 0.0;   // ||g_ad - g_fd|| / max(||g_ad||, ||g_fd||) over kept coordinates
  std::size_t checked = 0;
  std::size_t excluded = 0;  // stencil crossed a branch boundary
};

struct Report {
  bool near_boundary = false;  // base point within the exclusion margin; caller resamples
  double base_margin = 0.0;
  std::vector<TensorReport> tensors;
  double max_rel_error() const;
};

struct Case {
  s2s::ModelConfig model;
  std::vector<s2s::RawSample> samples;
  std::vector<s2s::MetaFlags> dropped;
  s2s::LossOptions options;
  std::uint64_t model_seed = 0;
};

// Small random instance: d, M, batch size, pooling mode; metadata fusion on.
Case random_case(std::uint64_t seed, std::size_t d, std::size_t M, std::size_t batch, s2s::PoolingMode mode);

// Reverse-mode gradients of the total loss against central differences for
// every scalar of every parameter tensor.
Report run(const Case& c, double eps = 1e-3, double boundary = 1e-4);

}  // namespace gradcheck
