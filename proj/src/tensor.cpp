#include "s2s/tensor.hpp"

#include <cmath>
#include <sstream>

#include "s2s/error.hpp"

namespace s2s {

namespace {

std::size_t extent_product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) {
    if (d == 0) throw UsageError("tensor extents must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (dims_.empty()) throw UsageError("tensor must have rank >= 1");
  if (extent_product(dims_) != data_.size()) {
    throw UsageError("tensor data length " + std::to_string(data_.size()) +
                     " does not match extents " + shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericError("non-finite tensor entry at flat index " + std::to_string(i));
    }
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> dims) {
  const auto n = extent_product(dims);
  return Tensor(std::move(dims), std::vector<float>(n, 0.0f));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<float> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::from_doubles(std::vector<std::size_t> dims, std::span<const double> data) {
  std::vector<float> f(data.begin(), data.end());
  return Tensor(std::move(dims), std::move(f));
}

std::size_t Tensor::rows() const {
  if (dims_.empty()) return 0;
  return dims_.size() == 1 ? 1 : dims_[0];
}

std::size_t Tensor::cols() const {
  if (dims_.empty()) return 0;
  return dims_.size() == 1 ? dims_[0] : data_.size() / dims_[0];
}

std::span<const float> Tensor::row(std::size_t r) const {
  const auto c = cols();
  return std::span<const float>(data_).subspan(r * c, c);
}

std::vector<double> Tensor::to_doubles() const {
  return std::vector<double>(data_.begin(), data_.end());
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ", ";
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace s2s
