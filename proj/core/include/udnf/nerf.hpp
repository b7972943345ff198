#pragma once

// Scene representation and volume renderer: positional-encoded MLP field,
// ray-marching quadrature, image rendering, density point-cloud export.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "udnf/geometry.hpp"
#include "udnf/tensor.hpp"

namespace udnf {

// Anything renderable: maps points [M,3] (and optional unit dirs [M,3])
// to (sigma [M], rgb [M,3]).
template <typename T>
class FieldT {
 public:
  virtual ~FieldT() = default;
  virtual std::pair<TensorT<T>, TensorT<T>> eval(
      const TensorT<T>& points, const TensorT<T>* dirs = nullptr) = 0;
  virtual bool wants_dirs() const { return false; }
};

// sin/cos features: [x, sin(2^k pi x), cos(2^k pi x)] for k = 0..L-1.
template <typename T>
TensorT<T> positional_encoding(const TensorT<T>& x, int l) {
  if (l < 0) throw DataError("positional_encoding: L must be >= 0");
  if (l == 0) return x;
  std::vector<TensorT<T>> parts{x};
  T freq = T(M_PI);
  for (int k = 0; k < l; ++k) {
    auto scaled = mul_scalar(x, freq);
    parts.push_back(sin(scaled));
    parts.push_back(cos(scaled));
    freq *= T(2);
  }
  return concat(parts, x.rank() - 1);
}

struct FieldConfig {
  int width = 64;
  int hidden_layers = 4;
  int l_pos = 6;
  int l_dir = 0;
  bool use_viewdirs = false;
  bool relu_sigma = false;  // default softplus
  // Added to the density-head output before the softplus/relu. A negative
  // value starts the field almost transparent, so early renders are close
  // to the background instead of direction-dependent fog.
  double sigma_bias = 0.0;
};

template <typename T>
class RadianceFieldT : public FieldT<T> {
 public:
  RadianceFieldT(const FieldConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int pos_dim = 3 + 6 * cfg.l_pos;
    int in = pos_dim;
    for (int i = 0; i < cfg.hidden_layers; ++i) {
      add_linear("layer" + std::to_string(i), in, cfg.width, rng);
      in = cfg.width;
    }
    add_linear("sigma_head", cfg.width, 1, rng);
    const int rgb_in =
        cfg.use_viewdirs ? cfg.width + 3 + 6 * cfg.l_dir : cfg.width;
    add_linear("rgb_head", rgb_in, 3, rng);
  }

  std::pair<TensorT<T>, TensorT<T>> eval(const TensorT<T>& points,
                                         const TensorT<T>* dirs) override {
    auto h = positional_encoding(points, cfg_.l_pos);
    for (int i = 0; i < cfg_.hidden_layers; ++i)
      h = relu(linear(h, params_[2 * i], params_[2 * i + 1]));
    const size_t sig = 2 * cfg_.hidden_layers;
    auto sigma_pre = linear(h, params_[sig], params_[sig + 1]);
    if (cfg_.sigma_bias != 0.0)
      sigma_pre = add_scalar(sigma_pre, T(cfg_.sigma_bias));
    auto sigma = cfg_.relu_sigma ? relu(sigma_pre) : softplus(sigma_pre);
    TensorT<T> rgb_in = h;
    if (cfg_.use_viewdirs) {
      if (!dirs) throw DataError("field: view-dependent field needs directions");
      rgb_in = concat<T>({h, positional_encoding(*dirs, cfg_.l_dir)}, 1);
    }
    auto rgb = sigmoid(linear(rgb_in, params_[sig + 2], params_[sig + 3]));
    return {reshape(sigma, {points.dim(0)}), rgb};
  }

  bool wants_dirs() const override { return cfg_.use_viewdirs; }

  std::vector<TensorT<T>>& parameters() { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  const FieldConfig& config() const { return cfg_; }

 private:
  void add_linear(const std::string& name, int in, int out, Rng& rng) {
    const double bound = std::sqrt(6.0 / in);
    TensorT<T> w({in, out});
    for (std::int64_t i = 0; i < w.numel(); ++i)
      w.at(i) = T(rng.uniform(-bound, bound));
    TensorT<T> b({out}, T(0));
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    params_.push_back(w);
    params_.push_back(b);
    names_.push_back(name + ".weight");
    names_.push_back(name + ".bias");
  }

  FieldConfig cfg_;
  std::vector<TensorT<T>> params_;
  std::vector<std::string> names_;
};

// Analytic stand-in fields (test/oracle surface, also used by scenegen).
template <typename T>
class FunctionFieldT : public FieldT<T> {
 public:
  // sigma_fn(x,y,z) and rgb_fn(x,y,z, rgb_out)
  using SigmaFn = std::function<double(double, double, double)>;
  using RgbFn = std::function<void(double, double, double, double*)>;

  FunctionFieldT(SigmaFn sigma, RgbFn rgb)
      : sigma_(std::move(sigma)), rgb_(std::move(rgb)) {}

  static FunctionFieldT constant(double sigma, std::array<double, 3> color) {
    return FunctionFieldT(
        [sigma](double, double, double) { return sigma; },
        [color](double, double, double, double* out) {
          out[0] = color[0];
          out[1] = color[1];
          out[2] = color[2];
        });
  }

  static FunctionFieldT sphere(double radius, double sigma,
                               std::array<double, 3> color) {
    return FunctionFieldT(
        [radius, sigma](double x, double y, double z) {
          return x * x + y * y + z * z <= radius * radius ? sigma : 0.0;
        },
        [color](double, double, double, double* out) {
          out[0] = color[0];
          out[1] = color[1];
          out[2] = color[2];
        });
  }

  std::pair<TensorT<T>, TensorT<T>> eval(const TensorT<T>& points,
                                         const TensorT<T>*) override {
    const std::int64_t n = points.dim(0);
    TensorT<T> sigma({n});
    TensorT<T> rgb({n, 3});
    double c[3];
    for (std::int64_t i = 0; i < n; ++i) {
      const double x = points[i * 3], y = points[i * 3 + 1], z = points[i * 3 + 2];
      sigma.at(i) = T(sigma_(x, y, z));
      rgb_(x, y, z, c);
      rgb.at(i * 3) = T(c[0]);
      rgb.at(i * 3 + 1) = T(c[1]);
      rgb.at(i * 3 + 2) = T(c[2]);
    }
    return {sigma, rgb};
  }

 private:
  SigmaFn sigma_;
  RgbFn rgb_;
};

// ---------------------------------------------------------------------------
// Rendering

struct RenderConfig {
  int n_samples = 64;
  bool stratified = false;
  std::array<double, 3> background{1, 1, 1};  // white for synthetic scenes
};

template <typename T>
struct RenderRowsT {
  TensorT<T> rgb;    // [N,3]
  TensorT<T> depth;  // [N]
  TensorT<T> acc;    // [N]
};

// Quadrature along each ray: t_i sampled at bin midpoints (jittered within
// bins when stratified), alpha_i = 1 - exp(-sigma_i d_i), weights
// w_i = alpha_i prod_{j<i}(1 - alpha_j) via exclusive cumulative sums.
template <typename T>
RenderRowsT<T> render_rays(FieldT<T>& field, const RayTensors<T>& rays,
                           const RenderConfig& cfg, Rng* rng = nullptr) {
  if (cfg.n_samples < 2) throw DataError("render_rays: need >= 2 samples");
  if (!(rays.near < rays.far)) throw DataError("render_rays: near must be < far");
  const std::int64_t n = rays.origins.dim(0);
  const std::int64_t s = cfg.n_samples;
  const T bin = (rays.far - rays.near) / T(s);

  TensorT<T> tvals({n, s});
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t i = 0; i < s; ++i) {
      const T u = (cfg.stratified && rng) ? T(rng->uniform()) : T(0.5);
      tvals.at(r * s + i) = rays.near + (T(i) + u) * bin;
    }
  TensorT<T> delta({n, s});
  for (std::int64_t r = 0; r < n; ++r) {
    for (std::int64_t i = 0; i + 1 < s; ++i)
      delta.at(r * s + i) = tvals[r * s + i + 1] - tvals[r * s + i];
    // The last sample stands in for its whole bin; this keeps the total
    // optical depth at sigma*(far-near) for homogeneous media regardless of
    // sample count.
    delta.at(r * s + s - 1) = rays.far - tvals[r * s + s - 1] + bin / T(2);
  }

  auto o3 = reshape(rays.origins, {n, 1, 3});
  auto d3 = reshape(rays.directions, {n, 1, 3});
  auto t3 = reshape(tvals, {n, s, 1});
  auto pts = reshape(add(o3, mul(d3, t3)), {n * s, 3});

  TensorT<T> dirs_flat;
  const TensorT<T>* dirs_ptr = nullptr;
  if (field.wants_dirs()) {
    // repeat each ray direction across its samples
    dirs_flat = reshape(broadcast_to(d3, {n, s, 3}), {n * s, 3});
    dirs_ptr = &dirs_flat;
  }
  auto [sigma_flat, rgb_flat] = field.eval(pts, dirs_ptr);

  auto sigma = reshape(sigma_flat, {n, s});
  auto sdelta = mul(sigma, delta);
  auto trans = exp(neg(cumsum_exclusive(sdelta)));
  auto alpha = add_scalar(neg(exp(neg(sdelta))), T(1));
  auto w = mul(trans, alpha);  // [n,s]

  auto acc = reduce_sum(w, 1);  // [n]
  auto w3 = reshape(w, {n, s, 1});
  auto rgb = reduce_sum(mul(reshape(rgb_flat, {n, s, 3}), w3), 1);  // [n,3]
  TensorT<T> bg({3}, {T(cfg.background[0]), T(cfg.background[1]),
                      T(cfg.background[2])});
  auto residual = add_scalar(neg(acc), T(1));  // 1 - acc
  rgb = add(rgb, mul(reshape(residual, {n, 1}), bg));
  auto depth = reduce_sum(mul(w, tvals), 1);
  return {rgb, depth, acc};
}

template <typename T>
struct ImageT {
  int width = 0, height = 0;
  std::vector<T> rgb;    // h*w*3, row-major, [0,1]
  std::vector<T> depth;  // h*w
  std::vector<T> acc;    // h*w
};
using Image = ImageT<real>;

template <typename T>
RayTensors<T> rays_to_tensors(const RayBatchT<T>& rays) {
  const std::int64_t n = rays.count();
  return {TensorT<T>({n, 3}, rays.origins), TensorT<T>({n, 3}, rays.directions),
          rays.near, rays.far};
}

// Full-frame render with a fixed (non-differentiable) pose, chunked so big
// frames do not blow up memory. Deterministic for fixed rng seed.
template <typename T>
ImageT<T> render_image(FieldT<T>& field, const CameraPoseT<T>& pose,
                       const Intrinsics& intr, T near, T far,
                       const RenderConfig& cfg, Rng* rng = nullptr,
                       std::int64_t chunk = 8192) {
  NoTapeScopeT<T> guard;
  ImageT<T> img;
  img.width = intr.width;
  img.height = intr.height;
  const std::int64_t total = std::int64_t(intr.width) * intr.height;
  img.rgb.resize(total * 3);
  img.depth.resize(total);
  img.acc.resize(total);
  auto rays = generate_rays(pose, intr, near, far);
  for (std::int64_t off = 0; off < total; off += chunk) {
    const std::int64_t n = std::min(chunk, total - off);
    RayTensors<T> rt{
        TensorT<T>({n, 3}, std::vector<T>(rays.origins.begin() + off * 3,
                                          rays.origins.begin() + (off + n) * 3)),
        TensorT<T>({n, 3},
                   std::vector<T>(rays.directions.begin() + off * 3,
                                  rays.directions.begin() + (off + n) * 3)),
        near, far};
    auto rows = render_rays(field, rt, cfg, rng);
    std::copy(rows.rgb.data(), rows.rgb.data() + n * 3, img.rgb.begin() + off * 3);
    std::copy(rows.depth.data(), rows.depth.data() + n, img.depth.begin() + off);
    std::copy(rows.acc.data(), rows.acc.data() + n, img.acc.begin() + off);
  }
  return img;
}

// ---------------------------------------------------------------------------
// Point-cloud export

template <typename T>
struct CloudPoint {
  T x, y, z;
  T r, g, b;
  T sigma;
};

template <typename T>
std::vector<CloudPoint<T>> export_pointcloud(FieldT<T>& field, double extent,
                                             int resolution,
                                             double sigma_threshold) {
  if (resolution < 2) throw DataError("export_pointcloud: resolution must be >= 2");
  NoTapeScopeT<T> guard;
  std::vector<CloudPoint<T>> out;
  const double step = 2.0 * extent / (resolution - 1);
  // Evaluate plane-by-plane to bound peak memory.
  for (int ix = 0; ix < resolution; ++ix) {
    const double x = -extent + ix * step;
    std::vector<T> pts;
    pts.reserve(std::size_t(resolution) * resolution * 3);
    for (int iy = 0; iy < resolution; ++iy)
      for (int iz = 0; iz < resolution; ++iz) {
        pts.push_back(T(x));
        pts.push_back(T(-extent + iy * step));
        pts.push_back(T(-extent + iz * step));
      }
    const std::int64_t n = std::int64_t(resolution) * resolution;
    TensorT<T> p({n, 3}, std::move(pts));
    auto [sigma, rgb] = field.eval(p, nullptr);
    for (std::int64_t i = 0; i < n; ++i) {
      if (double(sigma[i]) > sigma_threshold)
        out.push_back({p[i * 3], p[i * 3 + 1], p[i * 3 + 2], rgb[i * 3],
                       rgb[i * 3 + 1], rgb[i * 3 + 2], sigma[i]});
    }
  }
  return out;
}

}  // namespace udnf
