#include "s2s/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "s2s/error.hpp"
#include "s2s/rng.hpp"
#include "s2s/simplex.hpp"

namespace s2s::ad {

Mat::Mat(std::size_t r, std::size_t c, std::vector<double> data)
    : rows(r), cols(c), v(std::move(data)) {
  if (v.size() != r * c) throw UsageError("Mat data length mismatch");
}

Mat Mat::from_tensor(const Tensor& t) {
  return Mat(t.rows(), t.cols(), t.to_doubles());
}

Tensor Mat::to_tensor() const {
  return Tensor::from_doubles({rows, cols}, v);
}

const Mat& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const auto& m = value();
  if (m.v.size() != 1) throw UsageError("Var::scalar on a non-scalar value");
  return m.v[0];
}

Var Tape::constant(Mat m) { return push(std::move(m), nullptr); }

Var Tape::param(const Parameter& p) {
  if (auto it = leaf_index_.find(&p); it != leaf_index_.end()) return Var{this, it->second};
  Var v = push(Mat::from_tensor(p.value), nullptr);
  leaf_index_.emplace(&p, v.id);
  return v;
}

const Mat* Tape::leaf_grad(const Parameter& p) const {
  auto it = leaf_index_.find(&p);
  if (it == leaf_index_.end() || it->second >= grads_.size()) return nullptr;
  const Mat& g = grads_[it->second];
  return g.empty() ? nullptr : &g;
}

void Tape::accumulate_into(ParamStore& store) const {
  for (auto& [name, p] : store) {
    if (const Mat* g = leaf_grad(p)) {
      for (std::size_t k = 0; k < g->v.size(); ++k) p.grad[k] += g->v[k];
    }
  }
}

Var Tape::push(Mat value, Backward fn) {
  values_.push_back(std::move(value));
  backward_.push_back(std::move(fn));
  return Var{this, values_.size() - 1};
}

Mat& Tape::grad_acc(std::size_t id) {
  auto& g = grads_[id];
  if (g.empty() && !values_[id].empty()) g = Mat(values_[id].rows, values_[id].cols);
  return g;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw UsageError("backward root belongs to another tape");
  if (value(root.id).v.size() != 1) throw UsageError("backward root must be a scalar");
  grads_.assign(values_.size(), Mat());
  grad_acc(root.id).v[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (grads_[i].empty() || !backward_[i]) continue;
    backward_[i](*this, i);
  }
}

void Tape::note_branch(std::uint64_t token) {
  signature_ = mix64(signature_ ^ mix64(token));
}

void Tape::note_margin(double m) { min_margin_ = std::min(min_margin_, m); }

namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw UsageError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Mat& A = a.value();
  const Mat& B = b.value();
  if (A.cols != B.rows) throw UsageError("matmul: inner dimension mismatch");
  Mat out(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    for (std::size_t k = 0; k < A.cols; ++k) {
      const double aik = A(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < B.cols; ++j) out(i, j) += aik * B(k, j);
    }
  }
  return a.tape->push(std::move(out), [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    const Mat& A = t.value(ai);
    const Mat& B = t.value(bi);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t k = 0; k < A.cols; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < B.cols; ++j) s += G(i, j) * B(k, j);
        gA(i, k) += s;
      }
    }
    Mat& gB = t.grad_acc(bi);
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t k = 0; k < A.cols; ++k) {
        const double aik = A(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < B.cols; ++j) gB(k, j) += aik * G(i, j);
      }
    }
  });
}

Var transpose(Var a) {
  const Mat& A = a.value();
  Mat out(A.cols, A.rows);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) out(j, i) = A(i, j);
  return a.tape->push(std::move(out), [ai = a.id](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < gA.rows; ++i)
      for (std::size_t j = 0; j < gA.cols; ++j) gA(i, j) += G(j, i);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Mat out = a.value();
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.value().v[i];
  return a.tape->push(std::move(out), [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < G.v.size(); ++i) gA.v[i] += G.v[i];
    Mat& gB = t.grad_acc(bi);
    for (std::size_t i = 0; i < G.v.size(); ++i) gB.v[i] += G.v[i];
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Mat out = a.value();
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.value().v[i];
  return a.tape->push(std::move(out), [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < G.v.size(); ++i) gA.v[i] += G.v[i];
    Mat& gB = t.grad_acc(bi);
    for (std::size_t i = 0; i < G.v.size(); ++i) gB.v[i] -= G.v[i];
  });
}

Var add_row(Var a, Var row) {
  const Mat& A = a.value();
  const Mat& R = row.value();
  if (R.rows != 1 || R.cols != A.cols) throw UsageError("add_row: bias shape mismatch");
  Mat out = A;
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) out(i, j) += R.v[j];
  return a.tape->push(std::move(out), [ai = a.id, ri = row.id](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < G.v.size(); ++i) gA.v[i] += G.v[i];
    Mat& gR = t.grad_acc(ri);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) gR.v[j] += G(i, j);
  });
}

Var scale(Var a, double k) {
  Mat out = a.value();
  for (auto& x : out.v) x *= k;
  return a.tape->push(std::move(out), [ai = a.id, k](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < G.v.size(); ++i) gA.v[i] += k * G.v[i];
  });
}

Var add_const(Var a, const Mat& c) {
  require_same_shape(a.value(), c, "add_const");
  Mat out = a.value();
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += c.v[i];
  return a.tape->push(std::move(out), [ai = a.id](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < G.v.size(); ++i) gA.v[i] += G.v[i];
  });
}

Var div_scalar(Var a, Var s) {
  const double sv = s.scalar();
  if (sv == 0.0) throw NumericError("div_scalar: division by zero");
  Mat out = a.value();
  for (auto& x : out.v) x /= sv;
  return a.tape->push(std::move(out), [ai = a.id, si = s.id](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    const Mat& A = t.value(ai);
    const double sv = t.value(si).v[0];
    Mat& gA = t.grad_acc(ai);
    double gs = 0.0;
    for (std::size_t i = 0; i < G.v.size(); ++i) {
      gA.v[i] += G.v[i] / sv;
      gs -= G.v[i] * A.v[i];
    }
    t.grad_acc(si).v[0] += gs / (sv * sv);
  });
}

Var tanh(Var a) {
  Mat out = a.value();
  for (auto& x : out.v) x = std::tanh(x);
  return a.tape->push(std::move(out), [ai = a.id](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    const Mat& Y = t.value(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < G.v.size(); ++i) gA.v[i] += G.v[i] * (1.0 - Y.v[i] * Y.v[i]);
  });
}

Var gather_rows(Var table, const std::vector<int>& ids) {
  const Mat& T = table.value();
  if (ids.empty()) throw UsageError("gather_rows: empty id list");
  Mat out(ids.size(), T.cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= T.rows) {
      throw UsageError("token id " + std::to_string(ids[r]) + " outside vocabulary of " +
                       std::to_string(T.rows));
    }
    std::copy_n(T.v.begin() + static_cast<std::ptrdiff_t>(ids[r] * T.cols), T.cols,
                out.v.begin() + static_cast<std::ptrdiff_t>(r * T.cols));
  }
  return table.tape->push(std::move(out), [ti = table.id, ids](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gT = t.grad_acc(ti);
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t j = 0; j < G.cols; ++j) gT(static_cast<std::size_t>(ids[r]), j) += G(r, j);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_rows: no parts");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw UsageError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<std::size_t> ids;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().v.begin(), p.value().v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.value().v.size();
    ids.push_back(p.id);
  }
  return parts[0].tape->push(std::move(out), [ids](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    std::size_t offset = 0;
    for (auto id : ids) {
      Mat& g = t.grad_acc(id);
      for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] += G.v[offset + i];
      offset += g.v.size();
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no parts");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw UsageError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<std::size_t> ids;
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const Mat& P = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < P.cols; ++j) out(i, c0 + j) = P(i, j);
    c0 += P.cols;
    ids.push_back(p.id);
  }
  return parts[0].tape->push(std::move(out), [ids](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    std::size_t c0 = 0;
    for (auto id : ids) {
      Mat& g = t.grad_acc(id);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) g(i, j) += G(i, c0 + j);
      c0 += g.cols;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Mat& A = a.value();
  if (begin + count > A.rows || count == 0) throw UsageError("slice_rows: out of range");
  Mat out(count, A.cols);
  std::copy_n(A.v.begin() + static_cast<std::ptrdiff_t>(begin * A.cols), count * A.cols, out.v.begin());
  return a.tape->push(std::move(out), [ai = a.id, begin](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gA = t.grad_acc(ai);
    const std::size_t off = begin * gA.cols;
    for (std::size_t i = 0; i < G.v.size(); ++i) gA.v[off + i] += G.v[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Mat& A = a.value();
  if (begin + count > A.cols || count == 0) throw UsageError("slice_cols: out of range");
  Mat out(A.rows, count);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = A(i, begin + j);
  return a.tape->push(std::move(out), [ai = a.id, begin](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < G.rows; ++i)
      for (std::size_t j = 0; j < G.cols; ++j) gA(i, begin + j) += G(i, j);
  });
}

Var softmax_rows(Var a) {
  const Mat& A = a.value();
  Mat out(A.rows, A.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    auto p = softmax(std::span<const double>(A.v).subspan(i * A.cols, A.cols));
    std::copy(p.begin(), p.end(), out.v.begin() + static_cast<std::ptrdiff_t>(i * A.cols));
  }
  return a.tape->push(std::move(out), [ai = a.id](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    const Mat& Y = t.value(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < Y.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < Y.cols; ++j) dot += G(i, j) * Y(i, j);
      for (std::size_t j = 0; j < Y.cols; ++j) gA(i, j) += Y(i, j) * (G(i, j) - dot);
    }
  });
}

Var sparsemax_rows(Var a) {
  const Mat& A = a.value();
  Mat out(A.rows, A.cols);
  // Support indicator per entry, used by the Jacobian diag(s) - s s^T / |S|.
  std::vector<char> support(A.v.size(), 0);
  for (std::size_t i = 0; i < A.rows; ++i) {
    auto res = sparsemax_full(std::span<const double>(A.v).subspan(i * A.cols, A.cols));
    std::copy(res.probs.begin(), res.probs.end(), out.v.begin() + static_cast<std::ptrdiff_t>(i * A.cols));
    std::uint64_t token = 0x73706d78ULL;
    for (auto s : res.support) {
      support[i * A.cols + s] = 1;
      token = mix64(token ^ s);
    }
    a.tape->note_branch(token);
    a.tape->note_margin(res.boundary_margin);
  }
  return a.tape->push(std::move(out), [ai = a.id, support = std::move(support)](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < G.rows; ++i) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t j = 0; j < G.cols; ++j) {
        if (support[i * G.cols + j]) {
          sum += G(i, j);
          ++count;
        }
      }
      const double mean = sum / static_cast<double>(count);
      for (std::size_t j = 0; j < G.cols; ++j) {
        if (support[i * G.cols + j]) gA(i, j) += G(i, j) - mean;
      }
    }
  });
}

Var max_over_rows(Var a) {
  const Mat& A = a.value();
  if (A.rows == 0) throw UsageError("max_over_rows: no rows");
  Mat out(1, A.cols);
  std::vector<std::size_t> arg(A.cols, 0);
  for (std::size_t j = 0; j < A.cols; ++j) {
    double best = A(0, j);
    double second = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < A.rows; ++i) {
      const double x = A(i, j);
      if (x > best) {
        second = best;
        best = x;
        arg[j] = i;
      } else if (x > second) {
        second = x;
      }
    }
    out.v[j] = best;
    a.tape->note_branch(arg[j] * 1315423911ULL + j);
    if (A.rows > 1) a.tape->note_margin(best - second);
  }
  return a.tape->push(std::move(out), [ai = a.id, arg = std::move(arg)](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t j = 0; j < G.cols; ++j) gA(arg[j], j) += G.v[j];
  });
}

Var layernorm_rows(Var a, Var gain, Var bias, double eps) {
  const Mat& A = a.value();
  const Mat& Gm = gain.value();
  const Mat& Bs = bias.value();
  if (Gm.rows != 1 || Gm.cols != A.cols || Bs.rows != 1 || Bs.cols != A.cols) {
    throw UsageError("layernorm_rows: gain/bias shape mismatch");
  }
  const std::size_t n = A.cols;
  Mat xhat(A.rows, n);
  std::vector<double> inv_std(A.rows);
  Mat out(A.rows, n);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += A(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (A(i, j) - mean) * (A(i, j) - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (A(i, j) - mean) * inv_std[i];
      out(i, j) = xhat(i, j) * Gm.v[j] + Bs.v[j];
    }
  }
  return a.tape->push(std::move(out), [ai = a.id, gi = gain.id, bi = bias.id,
                                       xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    const Mat& Gm = t.value(gi);
    const std::size_t n = G.cols;
    Mat& gGain = t.grad_acc(gi);
    Mat& gBias = t.grad_acc(bi);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < G.rows; ++i) {
      double sum_dx = 0.0;
      double sum_dx_x = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        gGain.v[j] += G(i, j) * xhat(i, j);
        gBias.v[j] += G(i, j);
        const double dx = G(i, j) * Gm.v[j];
        sum_dx += dx;
        sum_dx_x += dx * xhat(i, j);
      }
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        const double dx = G(i, j) * Gm.v[j];
        gA(i, j) += inv_std[i] * (dx - inv_n * sum_dx - xhat(i, j) * inv_n * sum_dx_x);
      }
    }
  });
}

Var l2_normalize_rows(Var a, double eps) {
  const Mat& A = a.value();
  Mat out(A.rows, A.cols);
  std::vector<double> denom(A.rows);
  std::vector<char> guarded(A.rows);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) sq += A(i, j) * A(i, j);
    const double norm = std::sqrt(sq);
    guarded[i] = norm <= eps;
    denom[i] = guarded[i] ? eps : norm;
    for (std::size_t j = 0; j < A.cols; ++j) out(i, j) = A(i, j) / denom[i];
  }
  return a.tape->push(std::move(out), [ai = a.id, denom = std::move(denom),
                                       guarded = std::move(guarded)](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    const Mat& Y = t.value(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < G.rows; ++i) {
      double dot = 0.0;
      if (!guarded[i]) {
        for (std::size_t j = 0; j < G.cols; ++j) dot += G(i, j) * Y(i, j);
      }
      for (std::size_t j = 0; j < G.cols; ++j) gA(i, j) += (G(i, j) - Y(i, j) * dot) / denom[i];
    }
  });
}

Var exp_clamped(Var s, double lo, double hi) {
  const double raw = std::exp(s.scalar());
  const double val = std::clamp(raw, lo, hi);
  const bool inside = raw > lo && raw < hi;
  s.tape->note_branch(raw <= lo ? 1 : (raw >= hi ? 2 : 3));
  s.tape->note_margin(std::min(std::abs(std::log(raw) - std::log(lo)), std::abs(std::log(raw) - std::log(hi))));
  return s.tape->push(Mat(1, 1, {val}), [si = s.id, inside](Tape& t, std::size_t self) {
    if (!inside) return;
    t.grad_acc(si).v[0] += t.grad(self).v[0] * t.value(self).v[0];
  });
}

Var logsumexp_rows(Var a, const std::vector<char>& mask) {
  const Mat& A = a.value();
  if (!mask.empty() && mask.size() != A.v.size()) throw UsageError("logsumexp_rows: mask size mismatch");
  auto on = [&mask](std::size_t k) { return mask.empty() || mask[k]; };
  Mat out(A.rows, 1);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    std::size_t selected = 0;
    bool nan = false;
    for (std::size_t j = 0; j < A.cols; ++j) {
      if (!on(i * A.cols + j)) continue;
      ++selected;
      nan |= std::isnan(A(i, j));
      top = std::max(top, A(i, j));
    }
    if (selected == 0) throw UsageError("logsumexp_rows: row has no selected entries");
    // NaN inputs propagate so the caller's finiteness check sees them.
    if (nan || !std::isfinite(top)) {
      out.v[i] = nan ? std::numeric_limits<double>::quiet_NaN() : top;
      continue;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j)
      if (on(i * A.cols + j)) total += std::exp(A(i, j) - top);
    out.v[i] = top + std::log(total);
  }
  return a.tape->push(std::move(out), [ai = a.id, mask](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    const Mat& A = t.value(ai);
    const Mat& Y = t.value(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < A.rows; ++i) {
      for (std::size_t j = 0; j < A.cols; ++j) {
        const std::size_t k = i * A.cols + j;
        if (!mask.empty() && !mask[k]) continue;
        gA.v[k] += G.v[i] * std::exp(A.v[k] - Y.v[i]);
      }
    }
  });
}

Var diag(Var a) {
  const Mat& A = a.value();
  if (A.rows != A.cols) throw UsageError("diag: matrix is not square");
  Mat out(A.rows, 1);
  for (std::size_t i = 0; i < A.rows; ++i) out.v[i] = A(i, i);
  return a.tape->push(std::move(out), [ai = a.id](Tape& t, std::size_t self) {
    const Mat& G = t.grad(self);
    Mat& gA = t.grad_acc(ai);
    for (std::size_t i = 0; i < G.rows; ++i) gA(i, i) += G.v[i];
  });
}

Var sum_all(Var a) {
  double s = 0.0;
  for (double x : a.value().v) s += x;
  return a.tape->push(Mat(1, 1, {s}), [ai = a.id](Tape& t, std::size_t self) {
    const double g = t.grad(self).v[0];
    Mat& gA = t.grad_acc(ai);
    for (auto& x : gA.v) x += g;
  });
}

Var select_row(Var a, std::size_t r) { return slice_rows(a, r, 1); }

}  // namespace s2s::ad
