#pragma once

#include <vector>

#include "udnf/tensor.hpp"

namespace udnf {

// Adam with bias correction. One instance per parameter group; the field
// and the pose network keep separate optimizers.
template <typename T>
class AdamT {
 public:
  AdamT(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr < T(0)) throw NumericError("adam: negative learning rate");
  }

  // Applies one update from the gradients stored on the parameters.
  // checked=true rejects NaN/Inf gradients before touching state.
  void step(std::vector<TensorT<T>>& params, bool checked = false) {
    if (m_.empty()) {
      for (auto& p : params) {
        m_.emplace_back(p.shape(), T(0));
        v_.emplace_back(p.shape(), T(0));
      }
    }
    if (m_.size() != params.size())
      throw ShapeError("adam: parameter count changed between steps");
    if (checked)
      for (size_t i = 0; i < params.size(); ++i)
        if (params[i].has_grad()) check_finite_grad(params[i], i);
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      TensorT<T>& p = params[i];
      const T* g = p.grad();
      T* pm = m_[i].data();
      T* pv = v_[i].data();
      T* pd = p.data();
      const std::int64_t n = p.numel();
      for (std::int64_t j = 0; j < n; ++j) {
        pm[j] = beta1_ * pm[j] + (T(1) - beta1_) * g[j];
        pv[j] = beta2_ * pv[j] + (T(1) - beta2_) * g[j] * g[j];
        const T mhat = pm[j] / bc1;
        const T vhat = pv[j] / bc2;
        pd[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  std::int64_t step_count() const { return t_; }
  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }
  T beta1() const { return beta1_; }
  T beta2() const { return beta2_; }

  std::vector<TensorT<T>>& moment1() { return m_; }
  std::vector<TensorT<T>>& moment2() { return v_; }
  void set_step_count(std::int64_t t) { t_ = t; }

 private:
  static void check_finite_grad(TensorT<T>& p, size_t idx) {
    const T* g = p.grad();
    for (std::int64_t j = 0; j < p.numel(); ++j)
      if (!std::isfinite(static_cast<double>(g[j])))
        throw NumericError("adam: non-finite gradient in parameter " +
                           std::to_string(idx));
  }

  T lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<TensorT<T>> m_, v_;
};

using Adam = AdamT<real>;

}  // namespace udnf
