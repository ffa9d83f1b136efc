#pragma once

// Minimal reverse-mode differentiation over dense tensors.
//
// A tape records every primitive as a node holding its value, a lazily
// allocated gradient buffer, and a closure that pushes the node's gradient
// into its inputs. Nodes live in a deque so references stay valid while the
// tape grows. Leaves created with param() forward their gradient into the
// Parameter on backward(); gradients accumulate (+=) so a parameter used many
// times in one pass collects every contribution.
//
// Parameters always store 64-bit values. The tape's working precision is a
// template argument: training runs on Tape (double); the finite-difference
// oracle in gradcheck.hpp replays the same forward code on a quad-precision tape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "aflstm/errors.hpp"
#include "aflstm/tensor.hpp"

namespace aflstm {

struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  // Rows (first axis) excluded from gradient updates, e.g. the padding embedding.
  std::vector<std::size_t> frozen_rows;

  void zero_grad() { grad.fill(0.0); }

  // Number of scalar entries that receive updates.
  std::size_t trainable_size() const {
    if (!trainable) return 0;
    if (frozen_rows.empty()) return value.size();
    const std::size_t row = value.size() / value.dim(0);
    return value.size() - frozen_rows.size() * row;
  }

  bool is_frozen_entry(std::size_t flat) const {
    if (!trainable) return true;
    if (frozen_rows.empty()) return false;
    const std::size_t row = flat / (value.size() / value.dim(0));
    return std::find(frozen_rows.begin(), frozen_rows.end(), row) != frozen_rows.end();
  }
};

template <class T>
class BasicTape;

// Handle to a node on a tape. Cheap to copy; valid while the tape is alive and not cleared.
template <class T>
class BasicVar {
 public:
  using scalar_type = T;

  BasicVar() = default;
  BasicVar(BasicTape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const BasicTensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  BasicTape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  BasicTape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class BasicTape {
 public:
  using scalar_type = T;
  using TensorT = BasicTensor<T>;
  using VarT = BasicVar<T>;
  using BackwardFn = std::function<void(BasicTape&, const TensorT& grad_out)>;

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  VarT constant(TensorT value) { return push(std::move(value), nullptr); }

  template <class U>
    requires(!std::is_same_v<U, T>)
  VarT constant(const BasicTensor<U>& value) {
    return push(TensorT::cast(value), nullptr);
  }

  VarT param(Parameter& p) {
    VarT v = push(TensorT::cast(p.value), nullptr);
    nodes_.back().param = &p;
    return v;
  }

  VarT push(TensorT value, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), TensorT{}, std::move(fn), nullptr});
    return VarT(this, nodes_.size() - 1);
  }

  const TensorT& value(std::size_t id) const { return nodes_.at(id).value; }

  // Adds `g` into the gradient buffer of node `id`.
  void accumulate(std::size_t id, const TensorT& g) {
    TensorT& buf = grad_buffer(id);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
  }

  TensorT& grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.size() == 0) n.grad = TensorT(n.value.shape());
    return n.grad;
  }

  // Gradient of the most recent backward() with respect to `v`; zeros if unreached.
  TensorT grad(VarT v) const {
    const Node& n = nodes_.at(v.id());
    return n.grad.size() == 0 ? TensorT(n.value.shape()) : n.grad;
  }

  // Replays the tape from `loss` down to the first node. `seed` scales d(loss).
  void backward(VarT loss, T seed = T(1)) {
    if (&loss.tape() != this) throw ContractError("backward: loss recorded on another tape");
    const TensorT& lv = value(loss.id());
    if (lv.size() != 1) throw ContractError("backward: loss must be scalar, got shape " + shape_str(lv.shape()));
    for (Node& n : nodes_) n.grad = TensorT{};
    grad_buffer(loss.id())[0] = seed;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param != nullptr && n.param->trainable) {
        Tensor& dst = n.param->grad;
        for (std::size_t j = 0; j < dst.size(); ++j) {
          if (!n.param->frozen_rows.empty() && n.param->is_frozen_entry(j)) continue;
          dst[j] += static_cast<double>(n.grad[j]);
        }
      }
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    BackwardFn backward;
    Parameter* param;
  };

  std::deque<Node> nodes_;
};

using Tape = BasicTape<double>;
using Var = BasicVar<double>;

namespace detail {

template <class T>
void require_same_tape(const BasicVar<T>& a, const BasicVar<T>& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
}

template <class T>
void require_same_shape(const BasicVar<T>& a, const BasicVar<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class T>
bool is_scalar_like(const BasicTensor<T>& t) {
  return t.size() == 1 && t.rank() <= 1;
}

}  // namespace detail

// C = A·B for A[m×n], B[n×p]; B may also be a vector [n], giving C[m].
template <class T>
BasicVar<T> matmul(BasicVar<T> a, BasicVar<T> b) {
  detail::require_same_tape(a, b);
  const BasicTensor<T>& A = a.value();
  const BasicTensor<T>& B = b.value();
  if (A.rank() != 2 || (B.rank() != 2 && B.rank() != 1) || A.dim(1) != B.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(A.shape()) + " and " + shape_str(B.shape()));
  }
  const std::size_t m = A.dim(0), n = A.dim(1);
  const std::size_t p = B.rank() == 2 ? B.dim(1) : 1;
  BasicTensor<T> C(B.rank() == 2 ? Shape{m, p} : Shape{m});
  const T* pa = A.data().data();
  const T* pb = B.data().data();
  T* pc = C.data().data();
  const std::size_t ia = a.id(), ib = b.id();
  if (p == 1) {
    // Matrix-vector product: row dot products forward, rank-1 update and row sweep backward.
    for (std::size_t i = 0; i < m; ++i) {
      const T* arow = pa + i * n;
      T acc = 0;
      for (std::size_t k = 0; k < n; ++k) acc += arow[k] * pb[k];
      pc[i] = acc;
    }
    return a.tape().push(std::move(C), [ia, ib, m, n](BasicTape<T>& t, const BasicTensor<T>& g) {
      const T* pg = g.data().data();
      const T* pa = t.value(ia).data().data();
      const T* pb = t.value(ib).data().data();
      T* ga = t.grad_buffer(ia).data().data();
      T* gb = t.grad_buffer(ib).data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const T gi = pg[i];
        T* garow = ga + i * n;
        const T* arow = pa + i * n;
        for (std::size_t k = 0; k < n; ++k) garow[k] += gi * pb[k];
        for (std::size_t k = 0; k < n; ++k) gb[k] += gi * arow[k];
      }
    });
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const T aik = pa[i * n + k];
      const T* brow = pb + k * p;
      T* crow = pc + i * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
  return a.tape().push(std::move(C), [ia, ib, m, n, p](BasicTape<T>& t, const BasicTensor<T>& g) {
    const T* pg = g.data().data();
    {
      const T* pb = t.value(ib).data().data();
      T* ga = t.grad_buffer(ia).data().data();
      // dA = dC·Bᵀ
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
          T acc = 0;
          for (std::size_t j = 0; j < p; ++j) acc += pg[i * p + j] * pb[k * p + j];
          ga[i * n + k] += acc;
        }
      }
    }
    {
      const T* pa = t.value(ia).data().data();
      T* gb = t.grad_buffer(ib).data().data();
      // dB = Aᵀ·dC
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
          const T aik = pa[i * n + k];
          for (std::size_t j = 0; j < p; ++j) gb[k * p + j] += aik * pg[i * p + j];
        }
      }
    }
  });
}

enum class Elementwise { add, sub, mul, tanh, sigmoid };

namespace detail {

// Binary op where one side may be a single-entry tensor broadcast over the other.
template <class T, class Fwd, class DA, class DB>
BasicVar<T> binary(BasicVar<T> a, BasicVar<T> b, const char* name, Fwd fwd, DA da, DB db) {
  require_same_tape(a, b);
  const BasicTensor<T>& A = a.value();
  const BasicTensor<T>& B = b.value();
  const bool a_scalar = A.shape() != B.shape() && is_scalar_like(A);
  const bool b_scalar = A.shape() != B.shape() && !a_scalar && is_scalar_like(B);
  if (A.shape() != B.shape() && !a_scalar && !b_scalar) require_same_shape(a, b, name);
  BasicTensor<T> C(a_scalar ? B.shape() : A.shape());
  const std::size_t n = C.size();
  for (std::size_t i = 0; i < n; ++i) C[i] = fwd(A[a_scalar ? 0 : i], B[b_scalar ? 0 : i]);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(C), [=](BasicTape<T>& t, const BasicTensor<T>& g) {
    const BasicTensor<T>& av = t.value(ia);
    const BasicTensor<T>& bv = t.value(ib);
    BasicTensor<T>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < n; ++i) ga[a_scalar ? 0 : i] += g[i] * da(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
    BasicTensor<T>& gb = t.grad_buffer(ib);
    for (std::size_t i = 0; i < n; ++i) gb[b_scalar ? 0 : i] += g[i] * db(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  });
}

// Unary op whose derivative is a function of the output y.
template <class T, class Fwd, class DyFromY>
BasicVar<T> unary_from_output(BasicVar<T> a, Fwd fwd, DyFromY dy) {
  BasicTensor<T> out(a.shape());
  const BasicTensor<T>& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  const std::size_t self = a.tape().size();
  return a.tape().push(std::move(out), [ia, self, dy](BasicTape<T>& t, const BasicTensor<T>& g) {
    const BasicTensor<T>& y = t.value(self);
    BasicTensor<T>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dy(y[i]);
  });
}

}  // namespace detail

template <class T>
BasicVar<T> add(BasicVar<T> a, BasicVar<T> b) {
  return detail::binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <class T>
BasicVar<T> sub(BasicVar<T> a, BasicVar<T> b) {
  return detail::binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <class T>
BasicVar<T> mul(BasicVar<T> a, BasicVar<T> b) {
  return detail::binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <class T>
BasicVar<T> tanh(BasicVar<T> a) {
  return detail::unary_from_output(
      a, [](T x) {
        using std::tanh;
        return tanh(x);
      }, [](T y) { return T(1) - y * y; });
}

template <class T>
T sigmoid_scalar(T x) {
  using std::exp;
  if (x >= 0) return T(1) / (T(1) + exp(-x));
  const T e = exp(x);
  return e / (T(1) + e);
}

template <class T>
BasicVar<T> sigmoid(BasicVar<T> a) {
  return detail::unary_from_output(
      a, [](T x) { return sigmoid_scalar(x); }, [](T y) { return y * (T(1) - y); });
}

template <class T>
BasicVar<T> elementwise(Elementwise kind, BasicVar<T> a, BasicVar<T> b = {}) {
  switch (kind) {
    case Elementwise::add:
    case Elementwise::sub:
    case Elementwise::mul:
      if (!b.valid()) throw ContractError("elementwise: binary kind needs two operands");
      return kind == Elementwise::add ? add(a, b) : kind == Elementwise::sub ? sub(a, b) : mul(a, b);
    case Elementwise::tanh:
      return tanh(a);
    case Elementwise::sigmoid:
      return sigmoid(a);
  }
  throw ContractError("elementwise: unknown kind");
}

// a * c for a constant c.
template <class T>
BasicVar<T> scale(BasicVar<T> a, std::type_identity_t<T> c) {
  BasicTensor<T> out = a.value();
  for (T& v : out.values()) v *= c;
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), [ia, c](BasicTape<T>& t, const BasicTensor<T>& g) {
    BasicTensor<T>& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

// Softmax over positions where mask is true; masked positions are exactly zero.
template <class T>
BasicVar<T> masked_softmax(BasicVar<T> x, const std::vector<bool>& mask) {
  const BasicTensor<T>& xv = x.value();
  if (xv.rank() != 1 || mask.size() != xv.size()) {
    throw DimensionError("masked_softmax: input " + shape_str(xv.shape()) + " vs mask length " + std::to_string(mask.size()));
  }
  bool any = false;
  T mx = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (mask[i] && (!any || xv[i] > mx)) mx = xv[i];
    any = any || mask[i];
  }
  if (!any) throw DegenerateMaskError("masked_softmax: every position is masked");
  BasicTensor<T> out(xv.shape());
  using std::exp;
  T z = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (mask[i]) {
      out[i] = exp(xv[i] - mx);
      z += out[i];
    }
  }
  for (T& v : out.values()) v /= z;
  const std::size_t ix = x.id();
  const std::size_t self = x.tape().size();
  return x.tape().push(std::move(out), [ix, self](BasicTape<T>& t, const BasicTensor<T>& g) {
    const BasicTensor<T>& y = t.value(self);
    T dot = 0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
    BasicTensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += y[i] * (g[i] - dot);
  });
}

template <class T>
BasicVar<T> softmax(BasicVar<T> x) {
  return masked_softmax(x, std::vector<bool>(x.size(), true));
}

// Concatenates vectors end to end.
template <class T>
BasicVar<T> concat(const std::vector<BasicVar<T>>& parts) {
  if (parts.empty()) throw ContractError("concat: no operands");
  std::vector<T> data;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (node id, length)
  for (const auto& p : parts) {
    detail::require_same_tape(parts.front(), p);
    if (p.value().rank() != 1) throw DimensionError("concat: operand of shape " + shape_str(p.shape()) + " is not a vector");
    data.insert(data.end(), p.value().values().begin(), p.value().values().end());
    spans.emplace_back(p.id(), p.size());
  }
  return parts.front().tape().push(BasicTensor<T>::vector(std::move(data)), [spans](BasicTape<T>& t, const BasicTensor<T>& g) {
    std::size_t off = 0;
    for (auto [id, len] : spans) {
      BasicTensor<T>& gp = t.grad_buffer(id);
      for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
      off += len;
    }
  });
}

template <class T>
BasicVar<T> concat(std::initializer_list<BasicVar<T>> parts) {
  return concat(std::vector<BasicVar<T>>(parts));
}

// Stacks equal-length vectors as the rows of a matrix.
template <class T>
BasicVar<T> stack_rows(const std::vector<BasicVar<T>>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: no rows");
  const std::size_t cols = rows.front().size();
  std::vector<T> data;
  data.reserve(rows.size() * cols);
  std::vector<std::size_t> ids;
  for (const auto& r : rows) {
    detail::require_same_tape(rows.front(), r);
    if (r.value().rank() != 1 || r.size() != cols) {
      throw DimensionError("stack_rows: row of shape " + shape_str(r.shape()) + ", expected [" + std::to_string(cols) + "]");
    }
    data.insert(data.end(), r.value().values().begin(), r.value().values().end());
    ids.push_back(r.id());
  }
  BasicTensor<T> out(Shape{rows.size(), cols}, std::move(data));
  return rows.front().tape().push(std::move(out), [ids, cols](BasicTape<T>& t, const BasicTensor<T>& g) {
    for (std::size_t r = 0; r < ids.size(); ++r) {
      BasicTensor<T>& gr = t.grad_buffer(ids[r]);
      for (std::size_t c = 0; c < cols; ++c) gr[c] += g[r * cols + c];
    }
  });
}

template <class T>
BasicVar<T> row(BasicVar<T> x, std::size_t r) {
  const BasicTensor<T>& xv = x.value();
  if (xv.rank() != 2 || r >= xv.dim(0)) throw DimensionError("row: index " + std::to_string(r) + " out of " + shape_str(xv.shape()));
  const std::size_t cols = xv.dim(1);
  std::vector<T> data(xv.values().begin() + static_cast<std::ptrdiff_t>(r * cols),
                      xv.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  const std::size_t ix = x.id();
  return x.tape().push(BasicTensor<T>::vector(std::move(data)), [ix, r, cols](BasicTape<T>& t, const BasicTensor<T>& g) {
    BasicTensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c];
  });
}

template <class T>
BasicVar<T> transpose(BasicVar<T> x) {
  const BasicTensor<T>& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("transpose: shape " + shape_str(xv.shape()) + " is not a matrix");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  BasicTensor<T> out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = xv.at(i, j);
  const std::size_t ix = x.id();
  return x.tape().push(std::move(out), [ix, m, n](BasicTape<T>& t, const BasicTensor<T>& g) {
    BasicTensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
  });
}

// Selects rows of a [v×k] table; repeated indices accumulate on backward.
template <class T>
BasicVar<T> gather_rows(BasicVar<T> table, const std::vector<std::size_t>& indices) {
  const BasicTensor<T>& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("gather_rows: table shape " + shape_str(tv.shape()) + " is not a matrix");
  if (indices.empty()) throw ContractError("gather_rows: empty index list");
  const std::size_t k = tv.dim(1);
  BasicTensor<T> out(Shape{indices.size(), k});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= tv.dim(0)) {
      throw VocabularyError("token index " + std::to_string(indices[r]) + " outside vocabulary of size " + std::to_string(tv.dim(0)));
    }
    for (std::size_t c = 0; c < k; ++c) out.at(r, c) = tv.at(indices[r], c);
  }
  const std::size_t it = table.id();
  return table.tape().push(std::move(out), [it, indices, k](BasicTape<T>& t, const BasicTensor<T>& g) {
    BasicTensor<T>& gt = t.grad_buffer(it);
    for (std::size_t r = 0; r < indices.size(); ++r)
      for (std::size_t c = 0; c < k; ++c) gt[indices[r] * k + c] += g[r * k + c];
  });
}

template <class T>
BasicVar<T> sum(BasicVar<T> x) {
  T s = 0;
  for (T v : x.value().values()) s += v;
  const std::size_t ix = x.id();
  return x.tape().push(BasicTensor<T>::scalar(s), [ix](BasicTape<T>& t, const BasicTensor<T>& g) {
    BasicTensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
  });
}

template <class T>
BasicVar<T> sum_squares(BasicVar<T> x) {
  T s = 0;
  for (T v : x.value().values()) s += v * v;
  const std::size_t ix = x.id();
  return x.tape().push(BasicTensor<T>::scalar(s), [ix](BasicTape<T>& t, const BasicTensor<T>& g) {
    const BasicTensor<T>& xv = t.value(ix);
    BasicTensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += T(2) * xv[i] * g[0];
  });
}

// Floor applied to the picked probability before the log.
inline constexpr double kProbFloor = 1e-12;

// −log(max(probs[label], 1e-12)).
template <class T>
BasicVar<T> nll(BasicVar<T> probs, std::size_t label) {
  const BasicTensor<T>& p = probs.value();
  if (p.rank() != 1 || label >= p.size()) {
    throw ContractError("nll: label " + std::to_string(label) + " outside distribution of shape " + shape_str(p.shape()));
  }
  const T picked = p[label];
  const bool clamped = picked < T(kProbFloor);
  using std::log;
  const T loss = -log(clamped ? T(kProbFloor) : picked);
  const std::size_t ip = probs.id();
  return probs.tape().push(BasicTensor<T>::scalar(loss), [ip, label, clamped](BasicTape<T>& t, const BasicTensor<T>& g) {
    if (clamped) return;
    t.grad_buffer(ip)[label] += -g[0] / t.value(ip)[label];
  });
}

}  // namespace aflstm
