#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <unordered_map>
#include <vector>

#include "s2s/params.hpp"
#include "s2s/tensor.hpp"

// Reverse-mode differentiation over row-major double matrices, covering the
// operation set used by the encoders, the codebook pooling and the losses.
namespace s2s::ad {

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  Mat(std::size_t r, std::size_t c, std::vector<double> data);

  static Mat from_tensor(const Tensor& t);
  Tensor to_tensor() const;

  double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  bool empty() const { return v.empty(); }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Mat& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  double scalar() const;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var constant(Mat m);
  // One leaf per parameter per tape; repeated calls return the same node.
  Var param(const Parameter& p);
  Var push(Mat value, Backward fn);

  const Mat& value(std::size_t id) const { return values_[id]; }
  const Mat& grad(std::size_t id) const { return grads_[id]; }
  Mat& grad_acc(std::size_t id);

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse.
  void backward(Var root);
  // Gradient of the last backward() w.r.t. a parameter leaf; nullptr when
  // the parameter never reached the root.
  const Mat* leaf_grad(const Parameter& p) const;
  // Adds every leaf gradient into the matching Parameter::grad of store.
  void accumulate_into(ParamStore& store) const;

  // Piecewise-smooth ops record which branch they took (argmax, support,
  // clamp state) and how close the input was to switching branch.
  void note_branch(std::uint64_t token);
  void note_margin(double m);
  std::uint64_t branch_signature() const { return signature_; }
  double min_margin() const { return min_margin_; }

  std::size_t size() const { return values_.size(); }

 private:
  std::vector<Mat> values_;
  std::vector<Backward> backward_;
  std::vector<Mat> grads_;
  std::unordered_map<const Parameter*, std::size_t> leaf_index_;
  std::uint64_t signature_ = 0x243f6a8885a308d3ULL;
  double min_margin_ = std::numeric_limits<double>::infinity();
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var a, Var row);          // broadcast a 1 x c row over every row
Var scale(Var a, double k);
Var add_const(Var a, const Mat& c);
Var div_scalar(Var a, Var s);         // s is 1 x 1
Var tanh(Var a);
Var gather_rows(Var table, const std::vector<int>& ids);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var softmax_rows(Var a);
Var sparsemax_rows(Var a);
Var max_over_rows(Var a);             // r x c -> 1 x c, ties to the lowest row
Var layernorm_rows(Var a, Var gain, Var bias, double eps = 1e-5);
Var l2_normalize_rows(Var a, double eps = 1e-8);
Var exp_clamped(Var s, double lo, double hi);
// Per-row log-sum-exp restricted to mask (row-major r x c); empty mask = all.
Var logsumexp_rows(Var a, const std::vector<char>& mask = {});
Var diag(Var a);                      // n x n -> n x 1
Var sum_all(Var a);
Var select_row(Var a, std::size_t r);

}  // namespace s2s::ad
