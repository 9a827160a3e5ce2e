#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace s2s {

/// Max-subtracted softmax. Throws UsageError on an empty input.
std::vector<double> softmax(std::span<const double> v);

struct SparsemaxResult {
  std::vector<double> probs;
  double threshold = 0.0;             // tau
  std::vector<std::size_t> support;   // sorted-prefix indices, ascending
  // Smallest |v_i - tau|; distance of the input from a support change.
  double boundary_margin = 0.0;
};

/// Euclidean projection onto the probability simplex (sort-based).
/// Ties at the support boundary follow the sorted prefix: equal values are
/// ordered by index before the support size is chosen.
SparsemaxResult sparsemax_full(std::span<const double> v);
std::vector<double> sparsemax(std::span<const double> v);

/// v / max(||v||, eps).
std::vector<double> l2_normalize(std::span<const double> v, double eps = 1e-8);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / 2eps.
/// Throws NumericError if f returns a non-finite value.
std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double eps);

}  // namespace s2s
