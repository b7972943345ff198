#pragma once

// Reverse-mode autodiff on dense row-major tensors. Ops evaluate eagerly
// and, when a tape is active and an input requires grad, push a backward
// closure onto the tape. Single training thread owns a tape; everything
// here is deterministic for fixed inputs.

#include <algorithm>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <vector>

#include <cblas.h>

#include "udnf/common.hpp"

namespace udnf {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename T>
struct TensorDataT {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
};

template <typename T>
class TensorT {
 public:
  TensorT() : d_(std::make_shared<TensorDataT<T>>()) {}

  explicit TensorT(Shape shape, T fill = T(0))
      : d_(std::make_shared<TensorDataT<T>>()) {
    d_->shape = std::move(shape);
    d_->data.assign(shape_numel(d_->shape), fill);
  }

  TensorT(Shape shape, std::vector<T> values)
      : d_(std::make_shared<TensorDataT<T>>()) {
    d_->shape = std::move(shape);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(d_->shape))
      throw ShapeError("tensor: data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(d_->shape));
    d_->data = std::move(values);
  }

  static TensorT scalar(T v) { return TensorT({1}, {v}); }

  const Shape& shape() const { return d_->shape; }
  std::int64_t dim(int i) const { return d_->shape[i]; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(d_->data.size()); }

  T* data() { return d_->data.data(); }
  const T* data() const { return d_->data.data(); }
  std::vector<T>& vec() { return d_->data; }
  const std::vector<T>& vec() const { return d_->data; }

  T item() const {
    if (numel() != 1) throw ShapeError("item: tensor is not scalar, shape " + shape_str(shape()));
    return d_->data[0];
  }
  T operator[](std::int64_t i) const { return d_->data[i]; }
  T& at(std::int64_t i) { return d_->data[i]; }

  bool requires_grad() const { return d_->requires_grad; }
  TensorT& set_requires_grad(bool v) {
    d_->requires_grad = v;
    return *this;
  }

  T* grad() {
    if (d_->grad.size() != d_->data.size()) d_->grad.assign(d_->data.size(), T(0));
    return d_->grad.data();
  }
  bool has_grad() const { return d_->grad.size() == d_->data.size(); }
  void zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), T(0));
  }

  bool same_storage(const TensorT& o) const { return d_ == o.d_; }

  // Deep copy of values; grad state not copied.
  TensorT clone() const {
    TensorT out;
    out.d_->shape = d_->shape;
    out.d_->data = d_->data;
    return out;
  }

  // Shares storage (and gradient) but drops the requires_grad flag, so
  // downstream ops treat it as a constant.
  TensorT detach() const {
    TensorT out;
    out.d_ = std::make_shared<TensorDataT<T>>();
    out.d_->shape = d_->shape;
    out.d_->data = d_->data;  // value copy: detached view is a constant
    return out;
  }

  std::shared_ptr<TensorDataT<T>> handle() const { return d_; }

 private:
  std::shared_ptr<TensorDataT<T>> d_;
};

// ---------------------------------------------------------------------------
// Tape

template <typename T>
class TapeT {
 public:
  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays recorded ops in reverse.
  void backward(TensorT<T> loss) {
    if (loss.numel() != 1)
      throw ShapeError("backward: loss must be scalar, got shape " +
                       shape_str(loss.shape()));
    loss.grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> nodes_;
};

template <typename T>
inline TapeT<T>*& active_tape() {
  thread_local TapeT<T>* tape = nullptr;
  return tape;
}

// RAII: makes `tape` the recording target for ops on this thread.
template <typename T>
class TapeScopeT {
 public:
  explicit TapeScopeT(TapeT<T>& tape) : prev_(active_tape<T>()) {
    active_tape<T>() = &tape;
  }
  ~TapeScopeT() { active_tape<T>() = prev_; }

 private:
  TapeT<T>* prev_;
};

// RAII: disables recording (inference mode).
template <typename T>
class NoTapeScopeT {
 public:
  NoTapeScopeT() : prev_(active_tape<T>()) { active_tape<T>() = nullptr; }
  ~NoTapeScopeT() { active_tape<T>() = prev_; }

 private:
  TapeT<T>* prev_;
};

namespace detail {

template <typename T>
inline bool tracked(const TensorT<T>& t) {
  return active_tape<T>() != nullptr && t.requires_grad();
}

template <typename T>
inline void mark_tracked(TensorT<T>& out) {
  out.set_requires_grad(true);
}

inline void gemm(bool ta, bool tb, std::int64_t m, std::int64_t n,
                 std::int64_t k, float alpha, const float* a, std::int64_t lda,
                 const float* b, std::int64_t ldb, float beta, float* c,
                 std::int64_t ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

inline void gemm(bool ta, bool tb, std::int64_t m, std::int64_t n,
                 std::int64_t k, double alpha, const double* a,
                 std::int64_t lda, const double* b, std::int64_t ldb,
                 double beta, double* c, std::int64_t ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

// Strides for numpy-style broadcasting of `shape` against `out_shape`:
// missing leading axes and size-1 axes get stride 0.
inline std::vector<std::int64_t> broadcast_strides(const Shape& shape,
                                                   const Shape& out_shape) {
  const int out_rank = static_cast<int>(out_shape.size());
  const int rank = static_cast<int>(shape.size());
  std::vector<std::int64_t> strides(out_rank, 0);
  std::int64_t s = 1;
  for (int i = rank - 1; i >= 0; --i) {
    const int oi = out_rank - (rank - i);
    if (shape[i] != 1) strides[oi] = s;
    s *= shape[i];
  }
  return strides;
}

inline Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const int rank = static_cast<int>(std::max(a.size(), b.size()));
  Shape out(rank);
  for (int i = 0; i < rank; ++i) {
    const int ia = static_cast<int>(a.size()) - rank + i;
    const int ib = static_cast<int>(b.size()) - rank + i;
    const std::int64_t da = ia >= 0 ? a[ia] : 1;
    const std::int64_t db = ib >= 0 ? b[ib] : 1;
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                       shape_str(b) + " are not broadcastable");
    out[i] = std::max(da, db);
  }
  return out;
}

// Iterates the flat output index together with broadcast source offsets.
template <typename F>
inline void for_each_broadcast(const Shape& out_shape,
                               const std::vector<std::int64_t>& sa,
                               const std::vector<std::int64_t>& sb, F&& f) {
  const int rank = static_cast<int>(out_shape.size());
  const std::int64_t n = shape_numel(out_shape);
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t oa = 0, ob = 0;
  for (std::int64_t o = 0; o < n; ++o) {
    f(o, oa, ob);
    for (int i = rank - 1; i >= 0; --i) {
      ++idx[i];
      oa += sa[i];
      ob += sb[i];
      if (idx[i] < out_shape[i]) break;
      idx[i] = 0;
      oa -= sa[i] * out_shape[i];
      ob -= sb[i] * out_shape[i];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with broadcasting

template <typename T, typename Fwd, typename BwdA, typename BwdB>
TensorT<T> binary_op(const char* name, const TensorT<T>& a,
                     const TensorT<T>& b, Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
  const bool same = a.shape() == b.shape();
  TensorT<T> out;
  if (same) {
    out = TensorT<T>(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  } else {
    Shape os = detail::broadcast_shape(name, a.shape(), b.shape());
    out = TensorT<T>(os);
    auto sa = detail::broadcast_strides(a.shape(), os);
    auto sb = detail::broadcast_strides(b.shape(), os);
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    detail::for_each_broadcast(os, sa, sb,
                               [&](std::int64_t o, std::int64_t ia,
                                   std::int64_t ib) { po[o] = fwd(pa[ia], pb[ib]); });
  }
  const bool ga = detail::tracked(a), gb = detail::tracked(b);
  if (ga || gb) {
    detail::mark_tracked(out);
    TensorT<T> ac = a, bc = b, oc = out;
    active_tape<T>()->record([=]() mutable {
      const T* go = oc.grad();
      if (ac.shape() == bc.shape()) {
        const std::int64_t n = ac.numel();
        if (ga) {
          T* gpa = ac.grad();
          for (std::int64_t i = 0; i < n; ++i)
            gpa[i] += go[i] * bwd_a(ac.data()[i], bc.data()[i], oc.data()[i]);
        }
        if (gb) {
          T* gpb = bc.grad();
          for (std::int64_t i = 0; i < n; ++i)
            gpb[i] += go[i] * bwd_b(ac.data()[i], bc.data()[i], oc.data()[i]);
        }
      } else {
        const Shape& os = oc.shape();
        auto sa = detail::broadcast_strides(ac.shape(), os);
        auto sb = detail::broadcast_strides(bc.shape(), os);
        T* gpa = ga ? ac.grad() : nullptr;
        T* gpb = gb ? bc.grad() : nullptr;
        detail::for_each_broadcast(
            os, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
              if (gpa) gpa[ia] += go[o] * bwd_a(ac.data()[ia], bc.data()[ib], oc.data()[o]);
              if (gpb) gpb[ib] += go[o] * bwd_b(ac.data()[ia], bc.data()[ib], oc.data()[o]);
            });
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_op<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T, T, T) { return T(1); }, [](T, T, T) { return T(1); });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_op<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T, T, T) { return T(1); }, [](T, T, T) { return T(-1); });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_op<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T, T y, T) { return y; }, [](T x, T, T) { return x; });
}

template <typename T>
TensorT<T> divide(const TensorT<T>& a, const TensorT<T>& b) {
  return binary_op<T>(
      "div", a, b, [](T x, T y) { return x / y; },
      [](T, T y, T) { return T(1) / y; },
      [](T, T y, T o) { return -o / y; });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops

template <typename T, typename Fwd, typename Bwd>
TensorT<T> unary_op(const TensorT<T>& a, Fwd fwd, Bwd bwd) {
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  if (detail::tracked(a)) {
    detail::mark_tracked(out);
    TensorT<T> ac = a, oc = out;
    active_tape<T>()->record([=]() mutable {
      const T* go = oc.grad();
      T* gpa = ac.grad();
      const std::int64_t m = ac.numel();
      for (std::int64_t i = 0; i < m; ++i)
        gpa[i] += go[i] * bwd(ac.data()[i], oc.data()[i]);
    });
  }
  return out;
}

template <typename T>
TensorT<T> neg(const TensorT<T>& a) {
  return unary_op<T>(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}
template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
  return unary_op<T>(a, [](T x) { return x > T(0) ? x : T(0); },
                     [](T x, T) { return x > T(0) ? T(1) : T(0); });
}
template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
  return unary_op<T>(
      a,
      [](T x) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      },
      [](T, T o) { return o * (T(1) - o); });
}
template <typename T>
TensorT<T> silu(const TensorT<T>& a) {
  return unary_op<T>(
      a,
      [](T x) {
        const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                              : std::exp(x) / (T(1) + std::exp(x));
        return x * s;
      },
      [](T x, T o) {
        const T s = x != T(0) ? o / x : T(0.5);
        return s + x * s * (T(1) - s);
      });
}
template <typename T>
TensorT<T> softplus(const TensorT<T>& a) {
  return unary_op<T>(
      a,
      [](T x) {
        // max(x,0) + log1p(exp(-|x|)), stable both directions
        return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
      },
      [](T x, T) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      });
}
template <typename T>
TensorT<T> exp(const TensorT<T>& a) {
  return unary_op<T>(a, [](T x) { return std::exp(x); },
                     [](T, T o) { return o; });
}
template <typename T>
TensorT<T> log(const TensorT<T>& a) {
  return unary_op<T>(a, [](T x) { return std::log(x); },
                     [](T x, T) { return T(1) / x; });
}
template <typename T>
TensorT<T> sqrt(const TensorT<T>& a) {
  return unary_op<T>(a, [](T x) { return std::sqrt(x); },
                     [](T, T o) { return T(0.5) / o; });
}
template <typename T>
TensorT<T> sin(const TensorT<T>& a) {
  return unary_op<T>(a, [](T x) { return std::sin(x); },
                     [](T x, T) { return std::cos(x); });
}
template <typename T>
TensorT<T> cos(const TensorT<T>& a) {
  return unary_op<T>(a, [](T x) { return std::cos(x); },
                     [](T x, T) { return -std::sin(x); });
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& a, T s) {
  return unary_op<T>(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}
template <typename T>
TensorT<T> mul_scalar(const TensorT<T>& a, T s) {
  return unary_op<T>(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

// ---------------------------------------------------------------------------
// matmul (2D)

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  TensorT<T> out({m, n});
  detail::gemm(false, false, m, n, k, T(1), a.data(), k, b.data(), n, T(0),
               out.data(), n);
  const bool ga = detail::tracked(a), gb = detail::tracked(b);
  if (ga || gb) {
    detail::mark_tracked(out);
    TensorT<T> ac = a, bc = b, oc = out;
    active_tape<T>()->record([=]() mutable {
      // dA += dC * B^T ; dB += A^T * dC
      if (ga)
        detail::gemm(false, true, m, k, n, T(1), oc.grad(), n, bc.data(), n,
                     T(1), ac.grad(), k);
      if (gb)
        detail::gemm(true, false, k, n, m, T(1), ac.data(), k, oc.grad(), n,
                     T(1), bc.grad(), n);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape shape) {
  // -1 infers one dimension
  std::int64_t known = 1;
  int infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one -1");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) shape[infer] = a.numel() / known;
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  TensorT<T> out(shape);
  std::memcpy(out.data(), a.data(), sizeof(T) * a.numel());
  if (detail::tracked(a)) {
    detail::mark_tracked(out);
    TensorT<T> ac = a, oc = out;
    active_tape<T>()->record([=]() mutable {
      const T* go = oc.grad();
      T* gpa = ac.grad();
      const std::int64_t n = ac.numel();
      for (std::int64_t i = 0; i < n; ++i) gpa[i] += go[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> transpose2d(const TensorT<T>& a) {
  if (a.rank() != 2)
    throw ShapeError("transpose2d: expected rank-2, got " + shape_str(a.shape()));
  const std::int64_t m = a.dim(0), n = a.dim(1);
  TensorT<T> out({n, m});
  const T* pa = a.data();
  T* po = out.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];
  if (detail::tracked(a)) {
    detail::mark_tracked(out);
    TensorT<T> ac = a, oc = out;
    active_tape<T>()->record([=]() mutable {
      const T* go = oc.grad();
      T* gpa = ac.grad();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) gpa[i * n + j] += go[j * m + i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> broadcast_to(const TensorT<T>& a, const Shape& shape) {
  TensorT<T> zeros(shape, T(0));
  return add(a, zeros);
}

template <typename T>
TensorT<T> slice(const TensorT<T>& a, int axis, std::int64_t start,
                 std::int64_t len) {
  if (axis < 0 || axis >= a.rank())
    throw ShapeError("slice: axis out of range for " + shape_str(a.shape()));
  if (start < 0 || len < 0 || start + len > a.dim(axis))
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of bounds for " +
                     shape_str(a.shape()));
  Shape os = a.shape();
  os[axis] = len;
  TensorT<T> out(os);
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::int64_t in_stride = a.dim(axis) * inner;
  const std::int64_t out_stride = len * inner;
  for (std::int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * out_stride,
                a.data() + o * in_stride + start * inner,
                sizeof(T) * out_stride);
  if (detail::tracked(a)) {
    detail::mark_tracked(out);
    TensorT<T> ac = a, oc = out;
    active_tape<T>()->record([=]() mutable {
      const T* go = oc.grad();
      T* gpa = ac.grad();
      for (std::int64_t o = 0; o < outer; ++o) {
        T* dst = gpa + o * in_stride + start * inner;
        const T* src = go + o * out_stride;
        for (std::int64_t i = 0; i < out_stride; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) throw ShapeError("concat: axis out of range");
  Shape os = parts[0].shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis && p.dim(i) != os[i])
        throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) +
                         " vs " + shape_str(os));
    total += p.dim(axis);
  }
  os[axis] = total;
  TensorT<T> out(os);
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= os[i];
  for (int i = axis + 1; i < rank; ++i) inner *= os[i];
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const std::int64_t chunk = p.dim(axis) * inner;
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + o * total * inner + offset,
                  p.data() + o * chunk, sizeof(T) * chunk);
    offset += chunk;
  }
  bool any = false;
  for (const auto& p : parts) any = any || detail::tracked(p);
  if (any) {
    detail::mark_tracked(out);
    std::vector<TensorT<T>> pc = parts;
    TensorT<T> oc = out;
    active_tape<T>()->record([=]() mutable {
      const T* go = oc.grad();
      std::int64_t off = 0;
      for (auto& p : pc) {
        const std::int64_t chunk = p.dim(axis) * inner;
        if (p.requires_grad()) {
          T* gp = p.grad();
          for (std::int64_t o = 0; o < outer; ++o) {
            const T* src = go + o * total * inner + off;
            T* dst = gp + o * chunk;
            for (std::int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
        off += chunk;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
TensorT<T> sum_all(const TensorT<T>& a) {
  TensorT<T> out({1});
  T acc = T(0);
  const T* pa = a.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) acc += pa[i];
  out.data()[0] = acc;
  if (detail::tracked(a)) {
    detail::mark_tracked(out);
    TensorT<T> ac = a, oc = out;
    active_tape<T>()->record([=]() mutable {
      const T g = oc.grad()[0];
      T* gpa = ac.grad();
      const std::int64_t m = ac.numel();
      for (std::int64_t i = 0; i < m; ++i) gpa[i] += g;
    });
  }
  return out;
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& a) {
  return mul_scalar(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

// Sum over one axis; keepdim keeps it as size 1 (useful for broadcasting).
template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& a, int axis, bool keepdim = false) {
  if (axis < 0 || axis >= a.rank())
    throw ShapeError("reduce_sum: axis out of range for " + shape_str(a.shape()));
  std::int64_t outer = 1, inner = 1;
  const std::int64_t d = a.dim(axis);
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  Shape os;
  for (int i = 0; i < a.rank(); ++i) {
    if (i == axis) {
      if (keepdim) os.push_back(1);
    } else {
      os.push_back(a.dim(i));
    }
  }
  if (os.empty()) os.push_back(1);
  TensorT<T> out(os, T(0));
  const T* pa = a.data();
  T* po = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t j = 0; j < d; ++j) {
      const T* src = pa + (o * d + j) * inner;
      T* dst = po + o * inner;
      for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  if (detail::tracked(a)) {
    detail::mark_tracked(out);
    TensorT<T> ac = a, oc = out;
    active_tape<T>()->record([=]() mutable {
      const T* go = oc.grad();
      T* gpa = ac.grad();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t j = 0; j < d; ++j) {
          T* dst = gpa + (o * d + j) * inner;
          const T* src = go + o * inner;
          for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    });
  }
  return out;
}

template <typename T>
TensorT<T> reduce_mean(const TensorT<T>& a, int axis, bool keepdim = false) {
  return mul_scalar(reduce_sum(a, axis, keepdim),
                    T(1) / static_cast<T>(a.dim(axis)));
}

// Exclusive prefix sum along the last axis: y_i = sum_{j<i} x_j.
template <typename T>
TensorT<T> cumsum_exclusive(const TensorT<T>& a) {
  const int axis = a.rank() - 1;
  const std::int64_t d = a.dim(axis);
  const std::int64_t rows = a.numel() / d;
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    T acc = T(0);
    for (std::int64_t j = 0; j < d; ++j) {
      po[r * d + j] = acc;
      acc += pa[r * d + j];
    }
  }
  if (detail::tracked(a)) {
    detail::mark_tracked(out);
    TensorT<T> ac = a, oc = out;
    active_tape<T>()->record([=]() mutable {
      // dx_j = sum_{i>j} dy_i : reverse exclusive suffix sum
      const T* go = oc.grad();
      T* gpa = ac.grad();
      for (std::int64_t r = 0; r < rows; ++r) {
        T acc = T(0);
        for (std::int64_t j = d - 1; j >= 0; --j) {
          gpa[r * d + j] += acc;
          acc += go[r * d + j];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax / cross entropy (last axis)

template <typename T>
TensorT<T> softmax(const TensorT<T>& a) {
  const std::int64_t d = a.dim(a.rank() - 1);
  const std::int64_t rows = a.numel() / d;
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* x = pa + r * d;
    T* y = po + r * d;
    T mx = x[0];
    for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
    T z = T(0);
    for (std::int64_t j = 0; j < d; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::int64_t j = 0; j < d; ++j) y[j] /= z;
  }
  if (detail::tracked(a)) {
    detail::mark_tracked(out);
    TensorT<T> ac = a, oc = out;
    active_tape<T>()->record([=]() mutable {
      const T* go = oc.grad();
      const T* y = oc.data();
      T* gpa = ac.grad();
      for (std::int64_t r = 0; r < rows; ++r) {
        T dot = T(0);
        for (std::int64_t j = 0; j < d; ++j) dot += go[r * d + j] * y[r * d + j];
        for (std::int64_t j = 0; j < d; ++j)
          gpa[r * d + j] += y[r * d + j] * (go[r * d + j] - dot);
      }
    });
  }
  return out;
}

// -log softmax(logits)[label]; gradient is softmax - onehot.
template <typename T>
TensorT<T> cross_entropy_with_logits(const TensorT<T>& logits,
                                     std::int64_t label) {
  if (logits.rank() != 1)
    throw ShapeError("cross_entropy: expected rank-1 logits, got " +
                     shape_str(logits.shape()));
  const std::int64_t k = logits.dim(0);
  if (label < 0 || label >= k)
    throw DataError("cross_entropy: label " + std::to_string(label) +
                    " out of range [0," + std::to_string(k) + ")");
  const T* x = logits.data();
  T mx = x[0];
  for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, x[j]);
  T z = T(0);
  for (std::int64_t j = 0; j < k; ++j) z += std::exp(x[j] - mx);
  const T lse = mx + std::log(z);
  TensorT<T> out = TensorT<T>::scalar(lse - x[label]);
  if (detail::tracked(logits)) {
    detail::mark_tracked(out);
    TensorT<T> lc = logits, oc = out;
    active_tape<T>()->record([=]() mutable {
      const T g = oc.grad()[0];
      T* gp = lc.grad();
      const T* xv = lc.data();
      T m2 = xv[0];
      for (std::int64_t j = 1; j < k; ++j) m2 = std::max(m2, xv[j]);
      T zz = T(0);
      for (std::int64_t j = 0; j < k; ++j) zz += std::exp(xv[j] - m2);
      for (std::int64_t j = 0; j < k; ++j) {
        T p = std::exp(xv[j] - m2) / zz;
        gp[j] += g * (p - (j == label ? T(1) : T(0)));
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d / pooling (NCHW, 3x3 kernels, zero padding 1, stride 1 or 2)

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  int stride = 1) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ShapeError("conv2d: expected NCHW input and OIHW weight, got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::int64_t oc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != c)
    throw ShapeError("conv2d: channel mismatch " + shape_str(x.shape()) +
                     " vs " + shape_str(w.shape()));
  if (kh != 3 || kw != 3) throw ShapeError("conv2d: only 3x3 kernels supported");
  const int pad = 1;
  const std::int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::int64_t ow = (wd + 2 * pad - kw) / stride + 1;

  // im2col: [C*9, OH*OW] per sample, then W[OC, C*9] x col
  const std::int64_t ck = c * kh * kw;
  const std::int64_t hw = oh * ow;
  std::vector<T> col(ck * hw);
  TensorT<T> out({n, oc, oh, ow});

  auto fill_col = [&](const T* xs) {
    std::int64_t p = 0;
    for (std::int64_t ci = 0; ci < c; ++ci)
      for (std::int64_t ki = 0; ki < kh; ++ki)
        for (std::int64_t kj = 0; kj < kw; ++kj) {
          for (std::int64_t oy = 0; oy < oh; ++oy) {
            const std::int64_t iy = oy * stride + ki - pad;
            for (std::int64_t ox = 0; ox < ow; ++ox) {
              const std::int64_t ix = ox * stride + kj - pad;
              col[p++] = (iy >= 0 && iy < h && ix >= 0 && ix < wd)
                             ? xs[(ci * h + iy) * wd + ix]
                             : T(0);
            }
          }
        }
  };

  for (std::int64_t ni = 0; ni < n; ++ni) {
    fill_col(x.data() + ni * c * h * wd);
    detail::gemm(false, false, oc, hw, ck, T(1), w.data(), ck, col.data(), hw,
                 T(0), out.data() + ni * oc * hw, hw);
    T* po = out.data() + ni * oc * hw;
    for (std::int64_t o = 0; o < oc; ++o) {
      const T bias = b.data()[o];
      for (std::int64_t i = 0; i < hw; ++i) po[o * hw + i] += bias;
    }
  }

  const bool gx = detail::tracked(x), gw = detail::tracked(w),
             gb = detail::tracked(b);
  if (gx || gw || gb) {
    detail::mark_tracked(out);
    TensorT<T> xc = x, wc = w, bc = b, outc = out;
    active_tape<T>()->record([=]() mutable {
      std::vector<T> colb(ck * hw);
      std::vector<T> dcol(ck * hw);
      auto fill_colb = [&](const T* xs) {
        std::int64_t p = 0;
        for (std::int64_t ci = 0; ci < c; ++ci)
          for (std::int64_t ki = 0; ki < kh; ++ki)
            for (std::int64_t kj = 0; kj < kw; ++kj)
              for (std::int64_t oy = 0; oy < oh; ++oy) {
                const std::int64_t iy = oy * stride + ki - pad;
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                  const std::int64_t ix = ox * stride + kj - pad;
                  colb[p++] = (iy >= 0 && iy < h && ix >= 0 && ix < wd)
                                  ? xs[(ci * h + iy) * wd + ix]
                                  : T(0);
                }
              }
      };
      for (std::int64_t ni = 0; ni < n; ++ni) {
        const T* go = outc.grad() + ni * oc * hw;
        if (gw || gx) fill_colb(xc.data() + ni * c * h * wd);
        if (gw)
          detail::gemm(false, true, oc, ck, hw, T(1), go, hw, colb.data(), hw,
                       T(1), wc.grad(), ck);
        if (gb) {
          T* gbp = bc.grad();
          for (std::int64_t o = 0; o < oc; ++o) {
            T acc = T(0);
            for (std::int64_t i = 0; i < hw; ++i) acc += go[o * hw + i];
            gbp[o] += acc;
          }
        }
        if (gx) {
          detail::gemm(true, false, ck, hw, oc, T(1), wc.data(), ck, go, hw,
                       T(0), dcol.data(), hw);
          // col2im scatter-add
          T* gx_ptr = xc.grad() + ni * c * h * wd;
          std::int64_t p = 0;
          for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t ki = 0; ki < kh; ++ki)
              for (std::int64_t kj = 0; kj < kw; ++kj)
                for (std::int64_t oy = 0; oy < oh; ++oy) {
                  const std::int64_t iy = oy * stride + ki - pad;
                  for (std::int64_t ox = 0; ox < ow; ++ox, ++p) {
                    const std::int64_t ix = ox * stride + kj - pad;
                    if (iy >= 0 && iy < h && ix >= 0 && ix < wd)
                      gx_ptr[(ci * h + iy) * wd + ix] += dcol[p];
                  }
                }
        }
      }
    });
  }
  return out;
}

// 2x2 average pooling, stride 2.
template <typename T>
TensorT<T> avgpool2(const TensorT<T>& x) {
  if (x.rank() != 4) throw ShapeError("avgpool2: expected NCHW input");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2)
    throw ShapeError("avgpool2: odd spatial size " + shape_str(x.shape()));
  const std::int64_t oh = h / 2, ow = w / 2;
  TensorT<T> out({n, c, oh, ow});
  const T* px = x.data();
  T* po = out.data();
  for (std::int64_t nc = 0; nc < n * c; ++nc)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx) {
        const T* s = px + nc * h * w + 2 * y * w + 2 * xx;
        po[nc * oh * ow + y * ow + xx] =
            (s[0] + s[1] + s[w] + s[w + 1]) * T(0.25);
      }
  if (detail::tracked(x)) {
    detail::mark_tracked(out);
    TensorT<T> xc = x, oc2 = out;
    active_tape<T>()->record([=]() mutable {
      const T* go = oc2.grad();
      T* gx = xc.grad();
      for (std::int64_t nc = 0; nc < n * c; ++nc)
        for (std::int64_t y = 0; y < oh; ++y)
          for (std::int64_t xx = 0; xx < ow; ++xx) {
            const T g = go[nc * oh * ow + y * ow + xx] * T(0.25);
            T* d = gx + nc * h * w + 2 * y * w + 2 * xx;
            d[0] += g;
            d[1] += g;
            d[w] += g;
            d[w + 1] += g;
          }
    });
  }
  return out;
}

// Mean over spatial dims: [N,C,H,W] -> [N,C].
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool: expected NCHW input");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  TensorT<T> out({n, c});
  const T* px = x.data();
  T* po = out.data();
  for (std::int64_t i = 0; i < n * c; ++i) {
    T acc = T(0);
    for (std::int64_t j = 0; j < hw; ++j) acc += px[i * hw + j];
    po[i] = acc / static_cast<T>(hw);
  }
  if (detail::tracked(x)) {
    detail::mark_tracked(out);
    TensorT<T> xc = x, oc2 = out;
    active_tape<T>()->record([=]() mutable {
      const T* go = oc2.grad();
      T* gx = xc.grad();
      for (std::int64_t i = 0; i < n * c; ++i) {
        const T g = go[i] / static_cast<T>(hw);
        for (std::int64_t j = 0; j < hw; ++j) gx[i * hw + j] += g;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Composites

// Group normalization built from primitives so backward is automatic.
// groups must divide C; groups=1 degrades to layer normalization.
template <typename T>
TensorT<T> group_norm(const TensorT<T>& x, const TensorT<T>& gamma,
                      const TensorT<T>& beta, int groups,
                      T eps = T(1e-5)) {
  if (x.rank() != 4) throw ShapeError("group_norm: expected NCHW input");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c % groups)
    throw ShapeError("group_norm: groups " + std::to_string(groups) +
                     " does not divide channels " + std::to_string(c));
  auto r = reshape(x, {n * groups, (c / groups) * h * w});
  auto mu = reduce_mean(r, 1, true);
  auto xc = sub(r, mu);
  auto var = reduce_mean(mul(xc, xc), 1, true);
  auto y = divide(xc, sqrt(add_scalar(var, eps)));
  y = reshape(y, {n, c, h, w});
  auto g = reshape(gamma, {c, 1, 1});
  auto b = reshape(beta, {c, 1, 1});
  return add(mul(y, g), b);
}

// x @ W + b for row-major batches: x [N,in], W [in,out], b [out].
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w,
                  const TensorT<T>& b) {
  return add(matmul(x, w), b);
}

template <typename T>
TensorT<T> mse(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  auto d = sub(a, b);
  return mean_all(mul(d, d));
}

// ---------------------------------------------------------------------------
// Checked mode helpers

template <typename T>
void check_finite(const TensorT<T>& t, const char* what) {
  const T* p = t.data();
  const std::int64_t n = t.numel();
  for (std::int64_t i = 0; i < n; ++i)
    if (!std::isfinite(static_cast<double>(p[i])))
      throw NumericError(std::string("non-finite value in ") + what +
                         " at index " + std::to_string(i));
}

using real = float;
using Tensor = TensorT<real>;
using Tape = TapeT<real>;
using TapeScope = TapeScopeT<real>;
using NoTapeScope = NoTapeScopeT<real>;

}  // namespace udnf
