#pragma once

// Denoising-diffusion machinery: linear noise schedule, forward diffusion,
// reverse posterior step (x0-parameterized), and noise->image sampling built
// on a caller-supplied one-step denoiser.

#include <functional>
#include <vector>

#include "udnf/tensor.hpp"

namespace udnf {

struct DiffusionSchedule {
  int t_max = 0;
  std::vector<double> beta;       // index t-1 holds beta_t
  std::vector<double> alpha;      // 1 - beta_t
  std::vector<double> alpha_bar;  // prod_{s<=t} alpha_s

  // alpha_bar_0 == 1 by convention, which makes the t=1 posterior exact.
  double abar(int t) const { return t == 0 ? 1.0 : alpha_bar[t - 1]; }
};

inline DiffusionSchedule make_schedule(int t_max, double beta_start = 1e-3,
                                       double beta_end = 0.2) {
  if (t_max < 1) throw DataError("schedule: need at least one step");
  if (!(beta_start > 0) || !(beta_start <= beta_end) || !(beta_end < 1))
    throw DataError("schedule: need 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.t_max = t_max;
  s.beta.resize(t_max);
  s.alpha.resize(t_max);
  s.alpha_bar.resize(t_max);
  double prod = 1.0;
  for (int i = 0; i < t_max; ++i) {
    const double b = t_max == 1
                         ? beta_start
                         : beta_start + (beta_end - beta_start) * i / (t_max - 1);
    s.beta[i] = b;
    s.alpha[i] = 1.0 - b;
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  return s;
}

namespace detail {
inline void check_step(const DiffusionSchedule& s, int t, const char* who) {
  if (t < 1 || t > s.t_max)
    throw DataError(std::string(who) + ": step " + std::to_string(t) +
                    " outside [1," + std::to_string(s.t_max) + "]");
}
}  // namespace detail

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
template <typename T>
TensorT<T> forward_diffuse(const TensorT<T>& x0, int t, const TensorT<T>& eps,
                           const DiffusionSchedule& s) {
  detail::check_step(s, t, "forward_diffuse");
  if (eps.shape() != x0.shape())
    throw ShapeError("forward_diffuse: noise shape " + shape_str(eps.shape()) +
                     " != image shape " + shape_str(x0.shape()));
  const double ab = s.abar(t);
  return add(mul_scalar(x0, T(std::sqrt(ab))),
             mul_scalar(eps, T(std::sqrt(1.0 - ab))));
}

template <typename T>
TensorT<T> gaussian_like(const TensorT<T>& x, Rng& rng) {
  TensorT<T> out(x.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = T(rng.normal());
  return out;
}

// DDPM posterior mean plus sigma_t z, with sigma_t^2 the posterior variance
// beta_t (1 - abar_{t-1}) / (1 - abar_t). abar_0 == 1, so t = 1 returns
// x0_hat exactly.
template <typename T>
TensorT<T> posterior_step(const TensorT<T>& x_t, const TensorT<T>& x0_hat,
                          int t, std::type_identity_t<const TensorT<T>*> z,
                          const DiffusionSchedule& s) {
  detail::check_step(s, t, "posterior_step");
  if (x0_hat.shape() != x_t.shape())
    throw ShapeError("posterior_step: shape mismatch " +
                     shape_str(x0_hat.shape()) + " vs " + shape_str(x_t.shape()));
  // abar_0 == 1 collapses the coefficients to (1, 0) and sigma to 0; take
  // that branch explicitly so the final step is exact rather than
  // exact-up-to-rounding.
  if (t == 1) return x0_hat.clone();
  const double ab_t = s.abar(t), ab_prev = s.abar(t - 1);
  const double beta_t = s.beta[t - 1], alpha_t = s.alpha[t - 1];
  const double c0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
  const double ct = std::sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t);
  auto mean = add(mul_scalar(x0_hat, T(c0)), mul_scalar(x_t, T(ct)));
  if (!z) return mean;
  if (z->shape() != x_t.shape())
    throw ShapeError("posterior_step: noise shape mismatch");
  const double sigma = std::sqrt(beta_t * (1.0 - ab_prev) / (1.0 - ab_t));
  return add(mean, mul_scalar(*z, T(sigma)));
}

// One-step denoiser contract: (x_t, t) -> x0_hat. Implemented by the model
// (encode -> pose head -> render) or by test oracles.
template <typename T>
using DenoiserFn = std::function<TensorT<T>(const TensorT<T>&, int)>;

template <typename T>
struct SampleStep {
  int t = 0;
  TensorT<T> x0_hat;
  TensorT<T> x_prev;  // x_{t-1}
};

// Full reverse trajectory from x_T ~ N(0,1) (or a provided start). z = 0
// deterministic mode when `stochastic` is false.
template <typename T>
std::vector<SampleStep<T>> sample_from_noise(const DenoiserFn<T>& denoise,
                                             const DiffusionSchedule& s,
                                             const Shape& shape, Rng& rng,
                                             bool stochastic = false,
                                             const TensorT<T>* start = nullptr) {
  NoTapeScopeT<T> guard;
  TensorT<T> x = start ? start->clone() : TensorT<T>(shape);
  if (!start)
    for (std::int64_t i = 0; i < x.numel(); ++i) x.at(i) = T(rng.normal());
  std::vector<SampleStep<T>> traj;
  traj.reserve(s.t_max);
  for (int t = s.t_max; t >= 1; --t) {
    auto x0_hat = denoise(x, t);
    TensorT<T> z;
    const bool add_noise = stochastic && t > 1;
    if (add_noise) z = gaussian_like(x, rng);
    auto x_prev = posterior_step(x, x0_hat, t, add_noise ? &z : nullptr, s);
    traj.push_back({t, x0_hat, x_prev});
    x = x_prev;
  }
  return traj;
}

// Pixel-range conventions: the diffusion state lives in [-1,1]; the renderer
// and image files live in [0,1].
template <typename T>
TensorT<T> to_diffusion_range(const TensorT<T>& x01) {
  return add_scalar(mul_scalar(x01, T(2)), T(-1));
}

template <typename T>
TensorT<T> to_unit_range(const TensorT<T>& xpm1) {
  return add_scalar(mul_scalar(xpm1, T(0.5)), T(0.5));
}

}  // namespace udnf
