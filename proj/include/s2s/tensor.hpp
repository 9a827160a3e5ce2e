#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace s2s {

/// Dense row-major float32 tensor. Construction rejects NaN/Inf and
/// inconsistent extents.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> dims, std::vector<float> data);

  static Tensor zeros(std::vector<std::size_t> dims);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<float> data);
  static Tensor from_doubles(std::vector<std::size_t> dims, std::span<const double> data);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix views: rank-1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  float operator[](std::size_t i) const { return data_[i]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  std::span<const float> row(std::size_t r) const;

  std::span<const float> data() const { return data_; }
  // Mutation is reserved for parameter updates; callers keep values finite.
  std::span<float> mutable_data() { return data_; }

  std::vector<double> to_doubles() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<float> data_;
};

}  // namespace s2s
