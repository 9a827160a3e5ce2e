#include "s2s/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "s2s/error.hpp"

namespace s2s {

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw UsageError("softmax of an empty vector");
  const double top = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - top);
    total += out[i];
  }
  for (auto& x : out) x /= total;
  return out;
}

SparsemaxResult sparsemax_full(std::span<const double> v) {
  if (v.empty()) throw UsageError("sparsemax of an empty vector");
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });

  double prefix = 0.0;
  double support_sum = 0.0;
  std::size_t k_star = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    const double z = v[order[k - 1]];
    prefix += z;
    if (1.0 + static_cast<double>(k) * z > prefix) {
      k_star = k;
      support_sum = prefix;
    }
  }
  // k = 1 always qualifies, so k_star >= 1.
  SparsemaxResult res;
  res.threshold = (support_sum - 1.0) / static_cast<double>(k_star);
  res.probs.assign(n, 0.0);
  res.support.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_star));
  std::sort(res.support.begin(), res.support.end());
  for (auto i : res.support) res.probs[i] = std::max(v[i] - res.threshold, 0.0);
  res.boundary_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    res.boundary_margin = std::min(res.boundary_margin, std::abs(v[i] - res.threshold));
  }
  return res;
}

std::vector<double> sparsemax(std::span<const double> v) {
  return sparsemax_full(v).probs;
}

std::vector<double> l2_normalize(std::span<const double> v, double eps) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double denom = std::max(std::sqrt(sq), eps);
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x /= denom;
  return out;
}

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double eps) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double hi = f(probe);
    probe[i] = x[i] - eps;
    const double lo = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(hi) || !std::isfinite(lo)) {
      throw NumericError("finite_diff_grad: non-finite objective at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

}  // namespace s2s
