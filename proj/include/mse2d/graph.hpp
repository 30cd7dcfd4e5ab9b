#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "mse2d/tensor.hpp"

namespace mse2d::ad {

enum class OpKind {
  kParameter,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kRowSoftmax,
  kLog,
  kExp,
  kL2NormalizeRows,
  kLayerNorm,
  kGelu,
  kEmbeddingLookup,
  kMaskedMeanRows,
  kSliceCols,
  kConcatRows,
  kConcatCols,
  kSum,
  kMean,
  kDetach,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kParameter: return "parameter";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kRowSoftmax: return "row_softmax";
    case OpKind::kLog: return "log";
    case OpKind::kExp: return "exp";
    case OpKind::kL2NormalizeRows: return "l2_normalize_rows";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kGelu: return "gelu";
    case OpKind::kEmbeddingLookup: return "embedding_lookup";
    case OpKind::kMaskedMeanRows: return "masked_mean_rows";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kDetach: return "detach";
  }
  return "?";
}

template <class S>
struct Node {
  OpKind kind;
  std::vector<std::shared_ptr<Node>> parents;
  Tensor<S> value;
  Tensor<S> grad;  // same dims as value; allocated by backward()
  bool requires_grad = false;
  std::function<void(Node&)> backward_fn;
};

// Value-semantic handle to a graph node. Ops build the graph eagerly: the
// output tensor is computed (and checked finite) at construction time.
template <class S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Var parameter(Tensor<S> t) {
    auto n = std::make_shared<Node<S>>();
    n->kind = OpKind::kParameter;
    n->value = std::move(t);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  static Var constant(Tensor<S> t) {
    auto n = std::make_shared<Node<S>>();
    n->kind = OpKind::kConstant;
    n->value = std::move(t);
    n->requires_grad = false;
    return Var(std::move(n));
  }

  bool valid() const { return node_ != nullptr; }
  const Tensor<S>& value() const { return node_->value; }
  const Tensor<S>& grad() const {
    if (node_->grad.numel() == 0) {
      throw std::runtime_error("Var::grad: no gradient; run backward() first");
    }
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  Node<S>* raw() const { return node_.get(); }
  const std::shared_ptr<Node<S>>& node() const { return node_; }

  // Overwrites the leaf value in place (optimizer updates). Graphs built
  // afterwards see the new value; dims must not change.
  void set_value(const Tensor<S>& t) {
    if (!t.same_dims(node_->value)) {
      throw std::invalid_argument("Var::set_value: dims mismatch");
    }
    node_->value = t;
  }
  Tensor<S>& mutable_value() { return node_->value; }

 private:
  std::shared_ptr<Node<S>> node_;
};

// ---------------------------------------------------------------------------
// raw matrix kernels (accumulating)
// ---------------------------------------------------------------------------

// C(m x n) += A(m x k) * B(k x n)
template <class S>
void gemm_nn_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<size_t>(i) * k;
    S* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const S av = arow[p];
      const S* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m x n) += A(m x k) * B(n x k)^T
template <class S>
void gemm_nt_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<size_t>(i) * k;
    S* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const S* brow = b + static_cast<size_t>(j) * k;
      S acc = S(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C(k x n) += A(m x k)^T * B(m x n)
template <class S>
void gemm_tn_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int p = 0; p < m; ++p) {
    const S* arow = a + static_cast<size_t>(p) * k;
    const S* brow = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < k; ++i) {
      const S av = arow[i];
      S* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// ---------------------------------------------------------------------------
// op construction helpers
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
std::shared_ptr<Node<S>> make_op(OpKind kind, std::vector<std::shared_ptr<Node<S>>> parents,
                                 Tensor<S> out) {
  if (!out.all_finite()) {
    throw std::runtime_error(std::string(op_name(kind)) + ": non-finite result");
  }
  auto n = std::make_shared<Node<S>>();
  n->kind = kind;
  n->parents = std::move(parents);
  n->value = std::move(out);
  for (const auto& p : n->parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  return n;
}

template <class S>
void require_rank2(const Var<S>& v, const char* op) {
  if (v.value().rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-2 operand, got " + v.value().dims_str());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b, bool transpose_b = false) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const auto& av = a.value();
  const auto& bv = b.value();
  const int m = av.rows();
  const int k = av.cols();
  const int n = transpose_b ? bv.rows() : bv.cols();
  const int bk = transpose_b ? bv.cols() : bv.rows();
  if (bk != k) {
    throw std::invalid_argument(std::string("matmul: inner dims mismatch ") + av.dims_str() + " vs " +
                                bv.dims_str() + (transpose_b ? " (rhs transposed)" : ""));
  }
  Tensor<S> out = Tensor<S>::zeros(m, n);
  if (transpose_b) {
    gemm_nt_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  } else {
    gemm_nn_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  }
  auto node = detail::make_op<S>(OpKind::kMatMul, {a.node(), b.node()}, std::move(out));
  node->backward_fn = [m, k, n, transpose_b](Node<S>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const S* g = self.grad.data.data();
    if (transpose_b) {
      // C = A * B^T : dA += dC * B ; dB += dC^T * A
      if (pa.requires_grad) gemm_nn_acc(g, pb.value.data.data(), pa.grad.data.data(), m, n, k);
      if (pb.requires_grad) gemm_tn_acc(g, pa.value.data.data(), pb.grad.data.data(), m, n, k);
    } else {
      // C = A * B : dA += dC * B^T ; dB += A^T * dC
      if (pa.requires_grad) gemm_nt_acc(g, pb.value.data.data(), pa.grad.data.data(), m, n, k);
      if (pb.requires_grad) gemm_tn_acc(pa.value.data.data(), g, pb.grad.data.data(), m, k, n);
    }
  };
  return Var<S>(std::move(node));
}

namespace detail {

// add/sub share shape logic: same dims, or one operand a 1xN row vector
// broadcast over the other's rows (bias addition).
template <class S>
void check_addsub_dims(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.same_dims(b)) return;
  if (a.rank() == 2 && b.rank() == 2 && a.cols() == b.cols() && (a.rows() == 1 || b.rows() == 1)) return;
  throw std::invalid_argument(std::string(op) + ": dims mismatch " + a.dims_str() + " vs " + b.dims_str());
}

// Accumulates dC into a parent grad, summing over rows when the parent was
// a broadcast row vector.
template <class S>
void acc_addsub_grad(Node<S>& parent, const Tensor<S>& g, S sign) {
  if (!parent.requires_grad) return;
  if (parent.value.same_dims(g)) {
    for (size_t i = 0; i < g.data.size(); ++i) parent.grad.data[i] += sign * g.data[i];
    return;
  }
  const int rows = g.rows();
  const int cols = g.cols();
  for (int r = 0; r < rows; ++r) {
    const S* grow = g.data.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) parent.grad.data[c] += sign * grow[c];
  }
}

}  // namespace detail

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::check_addsub_dims(av, bv, "add");
  const bool a_bcast = !av.same_dims(bv) && av.rows() == 1;
  const bool b_bcast = !av.same_dims(bv) && !a_bcast;
  const Tensor<S>& big = a_bcast ? bv : av;
  Tensor<S> out = big;
  if (av.same_dims(bv)) {
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] + bv.data[i];
  } else {
    const Tensor<S>& vec = a_bcast ? av : bv;
    const int rows = big.rows();
    const int cols = big.cols();
    for (int r = 0; r < rows; ++r) {
      const S* brow = big.data.data() + static_cast<size_t>(r) * cols;
      S* orow = out.data.data() + static_cast<size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) orow[c] = brow[c] + vec.data[c];
    }
    (void)b_bcast;
  }
  auto node = detail::make_op<S>(OpKind::kAdd, {a.node(), b.node()}, std::move(out));
  node->backward_fn = [](Node<S>& self) {
    detail::acc_addsub_grad(*self.parents[0], self.grad, S(1));
    detail::acc_addsub_grad(*self.parents[1], self.grad, S(1));
  };
  return Var<S>(std::move(node));
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::check_addsub_dims(av, bv, "sub");
  const bool a_bcast = !av.same_dims(bv) && av.rows() == 1;
  const Tensor<S>& big = a_bcast ? bv : av;
  Tensor<S> out = big;
  if (av.same_dims(bv)) {
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] - bv.data[i];
  } else {
    const int rows = big.rows();
    const int cols = big.cols();
    for (int r = 0; r < rows; ++r) {
      S* orow = out.data.data() + static_cast<size_t>(r) * cols;
      if (a_bcast) {
        const S* brow = bv.data.data() + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) orow[c] = av.data[c] - brow[c];
      } else {
        const S* arow = av.data.data() + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) orow[c] = arow[c] - bv.data[c];
      }
    }
  }
  auto node = detail::make_op<S>(OpKind::kSub, {a.node(), b.node()}, std::move(out));
  node->backward_fn = [](Node<S>& self) {
    detail::acc_addsub_grad(*self.parents[0], self.grad, S(1));
    detail::acc_addsub_grad(*self.parents[1], self.grad, S(-1));
  };
  return Var<S>(std::move(node));
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!av.same_dims(bv)) {
    throw std::invalid_argument("mul: dims mismatch " + av.dims_str() + " vs " + bv.dims_str());
  }
  Tensor<S> out = av;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
  auto node = detail::make_op<S>(OpKind::kMul, {a.node(), b.node()}, std::move(out));
  node->backward_fn = [](Node<S>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const size_t n = self.grad.data.size();
    if (pa.requires_grad) {
      for (size_t i = 0; i < n; ++i) pa.grad.data[i] += self.grad.data[i] * pb.value.data[i];
    }
    if (pb.requires_grad) {
      for (size_t i = 0; i < n; ++i) pb.grad.data[i] += self.grad.data[i] * pa.value.data[i];
    }
  };
  return Var<S>(std::move(node));
}

template <class S>
Var<S> scale(const Var<S>& a, S factor) {
  Tensor<S> out = a.value();
  for (auto& v : out.data) v *= factor;
  auto node = detail::make_op<S>(OpKind::kScale, {a.node()}, std::move(out));
  node->backward_fn = [factor](Node<S>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < self.grad.data.size(); ++i) pa.grad.data[i] += factor * self.grad.data[i];
  };
  return Var<S>(std::move(node));
}

template <class S>
Var<S> row_softmax(const Var<S>& a) {
  detail::require_rank2(a, "row_softmax");
  const auto& av = a.value();
  const int rows = av.rows();
  const int cols = av.cols();
  Tensor<S> out = av;
  for (int r = 0; r < rows; ++r) {
    S* row = out.data.data() + static_cast<size_t>(r) * cols;
    S mx = row[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    S denom = S(0);
    for (int c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      denom += row[c];
    }
    for (int c = 0; c < cols; ++c) row[c] /= denom;
  }
  auto node = detail::make_op<S>(OpKind::kRowSoftmax, {a.node()}, std::move(out));
  node->backward_fn = [rows, cols](Node<S>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (int r = 0; r < rows; ++r) {
      const S* p = self.value.data.data() + static_cast<size_t>(r) * cols;
      const S* g = self.grad.data.data() + static_cast<size_t>(r) * cols;
      S* out = pa.grad.data.data() + static_cast<size_t>(r) * cols;
      S dot = S(0);
      for (int c = 0; c < cols; ++c) dot += p[c] * g[c];
      for (int c = 0; c < cols; ++c) out[c] += p[c] * (g[c] - dot);
    }
  };
  return Var<S>(std::move(node));
}

template <class S>
Var<S> log(const Var<S>& a) {
  Tensor<S> out = a.value();
  for (auto& v : out.data) v = std::log(v);
  auto node = detail::make_op<S>(OpKind::kLog, {a.node()}, std::move(out));
  node->backward_fn = [](Node<S>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < self.grad.data.size(); ++i) {
      pa.grad.data[i] += self.grad.data[i] / pa.value.data[i];
    }
  };
  return Var<S>(std::move(node));
}

template <class S>
Var<S> exp(const Var<S>& a) {
  Tensor<S> out = a.value();
  for (auto& v : out.data) v = std::exp(v);
  auto node = detail::make_op<S>(OpKind::kExp, {a.node()}, std::move(out));
  node->backward_fn = [](Node<S>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < self.grad.data.size(); ++i) {
      pa.grad.data[i] += self.grad.data[i] * self.value.data[i];
    }
  };
  return Var<S>(std::move(node));
}

template <class S>
Var<S> l2_normalize_rows(const Var<S>& a) {
  detail::require_rank2(a, "l2_normalize_rows");
  const auto& av = a.value();
  const int rows = av.rows();
  const int cols = av.cols();
  Tensor<S> out = av;
  std::vector<S> norms(static_cast<size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    S* row = out.data.data() + static_cast<size_t>(r) * cols;
    S sq = S(0);
    for (int c = 0; c < cols; ++c) sq += row[c] * row[c];
    const S n = std::sqrt(sq);
    if (!(n > S(1e-12))) {
      throw std::runtime_error("l2_normalize_rows: zero-norm row " + std::to_string(r));
    }
    norms[static_cast<size_t>(r)] = n;
    for (int c = 0; c < cols; ++c) row[c] /= n;
  }
  auto node = detail::make_op<S>(OpKind::kL2NormalizeRows, {a.node()}, std::move(out));
  node->backward_fn = [rows, cols, norms](Node<S>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (int r = 0; r < rows; ++r) {
      const S* y = self.value.data.data() + static_cast<size_t>(r) * cols;
      const S* g = self.grad.data.data() + static_cast<size_t>(r) * cols;
      S* out = pa.grad.data.data() + static_cast<size_t>(r) * cols;
      S dot = S(0);
      for (int c = 0; c < cols; ++c) dot += y[c] * g[c];
      const S inv_n = S(1) / norms[static_cast<size_t>(r)];
      for (int c = 0; c < cols; ++c) out[c] += (g[c] - y[c] * dot) * inv_n;
    }
  };
  return Var<S>(std::move(node));
}

// Row-wise layer normalization with learned gain/bias (gamma, beta are 1 x d).
template <class S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps = S(1e-5)) {
  detail::require_rank2(x, "layer_norm");
  const auto& xv = x.value();
  const int rows = xv.rows();
  const int cols = xv.cols();
  if (gamma.value().rows() != 1 || gamma.value().cols() != cols || beta.value().rows() != 1 ||
      beta.value().cols() != cols) {
    throw std::invalid_argument("layer_norm: gamma/beta must be 1 x cols");
  }
  Tensor<S> out = Tensor<S>::zeros(rows, cols);
  Tensor<S> xhat = Tensor<S>::zeros(rows, cols);
  std::vector<S> inv_std(static_cast<size_t>(rows));
  const S* gam = gamma.value().data.data();
  const S* bet = beta.value().data.data();
  for (int r = 0; r < rows; ++r) {
    const S* row = xv.data.data() + static_cast<size_t>(r) * cols;
    S mean = S(0);
    for (int c = 0; c < cols; ++c) mean += row[c];
    mean /= static_cast<S>(cols);
    S var = S(0);
    for (int c = 0; c < cols; ++c) {
      const S d = row[c] - mean;
      var += d * d;
    }
    var /= static_cast<S>(cols);
    const S is = S(1) / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = is;
    S* xh = xhat.data.data() + static_cast<size_t>(r) * cols;
    S* o = out.data.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) {
      xh[c] = (row[c] - mean) * is;
      o[c] = gam[c] * xh[c] + bet[c];
    }
  }
  auto node =
      detail::make_op<S>(OpKind::kLayerNorm, {x.node(), gamma.node(), beta.node()}, std::move(out));
  node->backward_fn = [rows, cols, xhat, inv_std](Node<S>& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    const S* gam = pg.value.data.data();
    for (int r = 0; r < rows; ++r) {
      const S* g = self.grad.data.data() + static_cast<size_t>(r) * cols;
      const S* xh = xhat.data.data() + static_cast<size_t>(r) * cols;
      if (pg.requires_grad) {
        for (int c = 0; c < cols; ++c) pg.grad.data[c] += g[c] * xh[c];
      }
      if (pb.requires_grad) {
        for (int c = 0; c < cols; ++c) pb.grad.data[c] += g[c];
      }
      if (px.requires_grad) {
        S sum_dy = S(0), sum_dy_xh = S(0);
        for (int c = 0; c < cols; ++c) {
          const S dy = g[c] * gam[c];
          sum_dy += dy;
          sum_dy_xh += dy * xh[c];
        }
        const S inv_d = S(1) / static_cast<S>(cols);
        const S is = inv_std[static_cast<size_t>(r)];
        S* o = px.grad.data.data() + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
          const S dy = g[c] * gam[c];
          o[c] += is * (dy - inv_d * sum_dy - xh[c] * inv_d * sum_dy_xh);
        }
      }
    }
  };
  return Var<S>(std::move(node));
}

// tanh-approximation GELU
template <class S>
Var<S> gelu(const Var<S>& a) {
  static const S kC = static_cast<S>(std::sqrt(2.0 / 3.14159265358979323846));
  static const S kA = static_cast<S>(0.044715);
  const auto& av = a.value();
  Tensor<S> out = av;
  for (size_t i = 0; i < out.data.size(); ++i) {
    const S x = av.data[i];
    const S u = kC * (x + kA * x * x * x);
    out.data[i] = S(0.5) * x * (S(1) + std::tanh(u));
  }
  auto node = detail::make_op<S>(OpKind::kGelu, {a.node()}, std::move(out));
  node->backward_fn = [](Node<S>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < self.grad.data.size(); ++i) {
      const S x = pa.value.data[i];
      const S u = kC * (x + kA * x * x * x);
      const S t = std::tanh(u);
      const S du = kC * (S(1) + S(3) * kA * x * x);
      const S d = S(0.5) * (S(1) + t) + S(0.5) * x * (S(1) - t * t) * du;
      pa.grad.data[i] += self.grad.data[i] * d;
    }
  };
  return Var<S>(std::move(node));
}

// Gathers table rows by id; output is ids.size() x d.
template <class S>
Var<S> embedding_lookup(const Var<S>& table, const std::vector<int>& ids) {
  detail::require_rank2(table, "embedding_lookup");
  const auto& tv = table.value();
  const int vocab = tv.rows();
  const int d = tv.cols();
  if (ids.empty()) throw std::invalid_argument("embedding_lookup: empty id sequence");
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(id) + " out of range [0," +
                              std::to_string(vocab) + ")");
    }
  }
  Tensor<S> out = Tensor<S>::zeros(static_cast<int>(ids.size()), d);
  for (size_t t = 0; t < ids.size(); ++t) {
    const S* src = tv.data.data() + static_cast<size_t>(ids[t]) * d;
    std::copy(src, src + d, out.data.data() + t * d);
  }
  auto node = detail::make_op<S>(OpKind::kEmbeddingLookup, {table.node()}, std::move(out));
  node->backward_fn = [ids, d](Node<S>& self) {
    auto& pt = *self.parents[0];
    if (!pt.requires_grad) return;
    for (size_t t = 0; t < ids.size(); ++t) {
      const S* g = self.grad.data.data() + t * d;
      S* dst = pt.grad.data.data() + static_cast<size_t>(ids[t]) * d;
      for (int c = 0; c < d; ++c) dst[c] += g[c];
    }
  };
  return Var<S>(std::move(node));
}

// Mean over the rows selected by mask; output is 1 x d.
template <class S>
Var<S> masked_mean_rows(const Var<S>& a, const std::vector<uint8_t>& mask) {
  detail::require_rank2(a, "masked_mean_rows");
  const auto& av = a.value();
  const int rows = av.rows();
  const int cols = av.cols();
  if (static_cast<int>(mask.size()) != rows) {
    throw std::invalid_argument("masked_mean_rows: mask length != rows");
  }
  int count = 0;
  for (uint8_t m : mask) count += m ? 1 : 0;
  if (count == 0) throw std::runtime_error("masked_mean_rows: all rows masked out");
  Tensor<S> out = Tensor<S>::zeros(1, cols);
  for (int r = 0; r < rows; ++r) {
    if (!mask[static_cast<size_t>(r)]) continue;
    const S* row = av.data.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) out.data[c] += row[c];
  }
  const S inv = S(1) / static_cast<S>(count);
  for (int c = 0; c < cols; ++c) out.data[c] *= inv;
  auto node = detail::make_op<S>(OpKind::kMaskedMeanRows, {a.node()}, std::move(out));
  node->backward_fn = [mask, rows, cols, inv](Node<S>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (int r = 0; r < rows; ++r) {
      if (!mask[static_cast<size_t>(r)]) continue;
      S* out = pa.grad.data.data() + static_cast<size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) out[c] += self.grad.data[c] * inv;
    }
  };
  return Var<S>(std::move(node));
}

// Contiguous column slice [offset, offset+len). truncate() is the prefix case.
template <class S>
Var<S> slice_cols(const Var<S>& a, int offset, int len) {
  detail::require_rank2(a, "slice_cols");
  const auto& av = a.value();
  const int rows = av.rows();
  const int cols = av.cols();
  if (offset < 0 || len <= 0 || offset + len > cols) {
    throw std::out_of_range("slice_cols: range [" + std::to_string(offset) + "," +
                            std::to_string(offset + len) + ") out of 0.." + std::to_string(cols));
  }
  Tensor<S> out = Tensor<S>::zeros(rows, len);
  for (int r = 0; r < rows; ++r) {
    const S* src = av.data.data() + static_cast<size_t>(r) * cols + offset;
    std::copy(src, src + len, out.data.data() + static_cast<size_t>(r) * len);
  }
  auto node = detail::make_op<S>(OpKind::kSliceCols, {a.node()}, std::move(out));
  node->backward_fn = [rows, cols, offset, len](Node<S>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (int r = 0; r < rows; ++r) {
      const S* g = self.grad.data.data() + static_cast<size_t>(r) * len;
      S* dst = pa.grad.data.data() + static_cast<size_t>(r) * cols + offset;
      for (int c = 0; c < len; ++c) dst[c] += g[c];
    }
  };
  return Var<S>(std::move(node));
}

// Prefix of the trailing dimension (the Matryoshka truncation).
template <class S>
Var<S> truncate(const Var<S>& a, int k) {
  return slice_cols(a, 0, k);
}

template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int cols = parts[0].value().cols();
  int rows = 0;
  std::vector<std::shared_ptr<Node<S>>> parents;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_rows");
    if (p.value().cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.value().rows();
    parents.push_back(p.node());
  }
  Tensor<S> out = Tensor<S>::zeros(rows, cols);
  int at = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    std::copy(pv.data.begin(), pv.data.end(), out.data.data() + static_cast<size_t>(at) * cols);
    at += pv.rows();
  }
  auto node = detail::make_op<S>(OpKind::kConcatRows, std::move(parents), std::move(out));
  node->backward_fn = [cols](Node<S>& self) {
    int at = 0;
    for (auto& pptr : self.parents) {
      auto& p = *pptr;
      const int prows = p.value.rows();
      if (p.requires_grad) {
        const S* g = self.grad.data.data() + static_cast<size_t>(at) * cols;
        for (size_t i = 0; i < p.grad.data.size(); ++i) p.grad.data[i] += g[i];
      }
      at += prows;
    }
  };
  return Var<S>(std::move(node));
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int rows = parts[0].value().rows();
  int cols = 0;
  std::vector<std::shared_ptr<Node<S>>> parents;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_cols");
    if (p.value().rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.value().cols();
    parents.push_back(p.node());
  }
  Tensor<S> out = Tensor<S>::zeros(rows, cols);
  int at = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    const int pc = pv.cols();
    for (int r = 0; r < rows; ++r) {
      std::copy(pv.data.data() + static_cast<size_t>(r) * pc, pv.data.data() + static_cast<size_t>(r + 1) * pc,
                out.data.data() + static_cast<size_t>(r) * cols + at);
    }
    at += pc;
  }
  auto node = detail::make_op<S>(OpKind::kConcatCols, std::move(parents), std::move(out));
  node->backward_fn = [rows, cols](Node<S>& self) {
    int at = 0;
    for (auto& pptr : self.parents) {
      auto& p = *pptr;
      const int pc = p.value.cols();
      if (p.requires_grad) {
        for (int r = 0; r < rows; ++r) {
          const S* g = self.grad.data.data() + static_cast<size_t>(r) * cols + at;
          S* dst = p.grad.data.data() + static_cast<size_t>(r) * pc;
          for (int c = 0; c < pc; ++c) dst[c] += g[c];
        }
      }
      at += pc;
    }
  };
  return Var<S>(std::move(node));
}

template <class S>
Var<S> sum(const Var<S>& a) {
  S acc = S(0);
  for (S v : a.value().data) acc += v;
  auto node = detail::make_op<S>(OpKind::kSum, {a.node()}, Tensor<S>::scalar(acc));
  node->backward_fn = [](Node<S>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    const S g = self.grad.data[0];
    for (auto& v : pa.grad.data) v += g;
  };
  return Var<S>(std::move(node));
}

template <class S>
Var<S> mean(const Var<S>& a) {
  S acc = S(0);
  for (S v : a.value().data) acc += v;
  const S inv = S(1) / static_cast<S>(a.value().numel());
  auto node = detail::make_op<S>(OpKind::kMean, {a.node()}, Tensor<S>::scalar(acc * inv));
  node->backward_fn = [inv](Node<S>& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    const S g = self.grad.data[0] * inv;
    for (auto& v : pa.grad.data) v += g;
  };
  return Var<S>(std::move(node));
}

// Stop-gradient: value passes through, no gradient flows upstream. The node
// is a fresh leaf so graph walks stop here.
template <class S>
Var<S> detach(const Var<S>& a) {
  auto n = std::make_shared<Node<S>>();
  n->kind = OpKind::kDetach;
  n->value = a.value();
  n->requires_grad = false;
  return Var<S>(std::move(n));
}

// ---------------------------------------------------------------------------
// evaluation and backpropagation
// ---------------------------------------------------------------------------

// Ops evaluate eagerly, so this just validates and returns the cached root.
template <class S>
const Tensor<S>& forward_eval(const Var<S>& root) {
  if (!root.valid()) throw std::runtime_error("forward_eval: empty graph");
  if (!root.value().all_finite()) throw std::runtime_error("forward_eval: non-finite root value");
  return root.value();
}

template <class S>
std::vector<Node<S>*> topo_order(Node<S>* root) {
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> visited;
  // iterative post-order DFS
  std::vector<std::pair<Node<S>*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<S>* next = node->parents[idx].get();
      ++idx;
      if (visited.insert(next).second) stack.emplace_back(next, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

// Reverse-mode sweep from a scalar root. Gradient accumulators of every
// reachable node are zeroed first, then d(root)/d(node) accumulates into
// node.grad for all nodes with requires_grad.
template <class S>
void backward(const Var<S>& root) {
  if (!root.valid()) throw std::runtime_error("backward: empty graph");
  if (!root.value().is_scalar()) {
    throw std::runtime_error("backward: root must be scalar, got " + root.value().dims_str());
  }
  auto order = topo_order(root.raw());
  for (Node<S>* n : order) {
    if (!n->requires_grad) continue;
    if (n->grad.same_dims(n->value)) {
      n->grad.fill(S(0));
    } else {
      n->grad = Tensor<S>(n->value.dims, std::vector<S>(n->value.numel(), S(0)));
    }
  }
  if (!root.raw()->requires_grad) return;  // constant graph; all-zero gradients
  root.raw()->grad.data[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace mse2d::ad
