#pragma once

// Test-only verification oracles, independent of the tape's backward path.

#include <functional>
#include <vector>

#include "udnf/tensor.hpp"

namespace udnf::testing {

// Central differences (f(x+h) - f(x-h)) / 2h per coordinate of every input,
// computed in double precision. `f` must be a pure function of the inputs.
inline std::vector<std::vector<double>> finite_diff_grad(
    const std::function<double()>& f, std::vector<TensorT<double>> inputs,
    double h = 1e-4) {
  std::vector<std::vector<double>> grads;
  for (auto& x : inputs) {
    std::vector<double> g(x.numel());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      const double orig = x[i];
      x.at(i) = orig + h;
      const double fp = f();
      x.at(i) = orig - h;
      const double fm = f();
      x.at(i) = orig;
      g[i] = (fp - fm) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// Max relative error between tape gradients and the finite-difference
// oracle, denominators floored at `floor`.
inline double grad_check(
    const std::function<TensorT<double>()>& loss_fn,
    std::vector<TensorT<double>> params, double h = 1e-4,
    double floor = 1e-6) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  TapeT<double> tape;
  {
    TapeScopeT<double> scope(tape);
    auto loss = loss_fn();
    tape.backward(loss);
  }
  auto fd = finite_diff_grad(
      [&]() {
        NoTapeScopeT<double> guard;
        return loss_fn().item();
      },
      params, h);
  double worst = 0;
  for (size_t p = 0; p < params.size(); ++p) {
    const double* g = params[p].grad();
    for (std::int64_t i = 0; i < params[p].numel(); ++i) {
      const double denom = std::max({std::abs(g[i]), std::abs(fd[p][i]), floor});
      worst = std::max(worst, std::abs(g[i] - fd[p][i]) / denom);
    }
  }
  return worst;
}

inline TensorT<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                                     double hi = 1.0) {
  TensorT<double> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

}  // namespace udnf::testing
