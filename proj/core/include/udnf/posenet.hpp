#pragma once

// Pose-prediction encoder: a timestep-conditioned convolutional downsampling
// trunk (residual blocks + stride-2 convs), pooled to a latent vector, with a
// single-pose head (omega, ts) and a multi-pose head (3K parameters + K score
// logits).

#include <string>
#include <vector>

#include "udnf/geometry.hpp"
#include "udnf/tensor.hpp"

namespace udnf {

struct EncoderConfig {
  int base_channels = 16;            // C
  int downsamplings = 3;             // D
  int blocks_per_step = 2;
  std::vector<int> multipliers{1, 1, 2};  // per-stage channel multipliers
  int resolution = 32;
  int max_timestep = 100;            // embeddings cover t in [0, max_timestep]

  // The configuration used in the reference experiments; heavier than the
  // default but selectable for scale-up.
  static EncoderConfig large() {
    EncoderConfig cfg;
    cfg.base_channels = 64;
    cfg.downsamplings = 5;
    cfg.multipliers = {1, 1, 2, 2, 4};
    cfg.resolution = 128;
    return cfg;
  }

  void validate() const {
    if (downsamplings < 1)
      throw DataError("encoder: need at least one downsampling step");
    if (int(multipliers.size()) != downsamplings)
      throw DataError("encoder: multipliers length must equal downsamplings");
    if (resolution % (1 << downsamplings))
      throw DataError("encoder: resolution " + std::to_string(resolution) +
                      " not divisible by 2^" + std::to_string(downsamplings));
    if (base_channels < 1) throw DataError("encoder: base channels must be >= 1");
  }

  int stage_channels(int d) const { return base_channels * multipliers[d]; }
  int latent_dim() const { return stage_channels(downsamplings - 1); }
  int temb_dim() const { return 4 * base_channels; }
};

// Deterministic sinusoidal features of the step index, dimension 4C
// (half sines, half cosines over a geometric frequency ladder).
template <typename T>
TensorT<T> time_embedding(int t, int dim) {
  if (dim < 2 || dim % 2) throw DataError("time_embedding: dim must be even and >= 2");
  TensorT<T> out({1, dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * double(i) / double(std::max(half - 1, 1)));
    out.at(i) = T(std::sin(t * freq));
    out.at(half + i) = T(std::cos(t * freq));
  }
  return out;
}

template <typename T>
class PoseEncoderT {
 public:
  PoseEncoderT(const EncoderConfig& cfg, int num_candidates, Rng& rng)
      : cfg_(cfg), k_(num_candidates) {
    cfg.validate();
    if (k_ < 1) throw DataError("encoder: need at least one candidate");
    const int td = cfg.temb_dim();

    // timestep projection: two affine layers around a SiLU
    add_linear("temb.proj0", td, td, rng);
    add_linear("temb.proj1", td, td, rng);

    add_conv("stem", 3, cfg.stage_channels(0), rng);
    for (int d = 0; d < cfg.downsamplings; ++d) {
      const int ch = cfg.stage_channels(d);
      for (int b = 0; b < cfg.blocks_per_step; ++b) {
        const std::string p = "stage" + std::to_string(d) + ".block" +
                              std::to_string(b) + ".";
        add_norm(p + "norm0", ch);
        add_conv(p + "conv0", ch, ch, rng);
        add_linear(p + "temb", td, ch, rng);
        add_norm(p + "norm1", ch);
        add_conv(p + "conv1", ch, ch, rng);
      }
      // stride-2 downsample; the last stage keeps its channel count
      const int next = cfg.stage_channels(std::min(d + 1, cfg.downsamplings - 1));
      add_conv("down" + std::to_string(d), ch, next, rng);
    }

    const int latent = cfg.latent_dim();
    // final normalization keeps the pooled latent at unit scale so the
    // pose/score heads cannot be blown up by trunk activation drift
    add_norm("out", latent);
    add_linear("head.omega", latent, 3, rng);
    add_linear("head.ts", latent, 3, rng);
    add_linear("head.h1", latent, 3 * k_, rng);
    // score head zero-initialized: initial candidate distribution is uniform
    add_linear("head.score", latent, k_, rng, /*zero=*/true);
  }

  // x: image [N,3,R,R] -> latent [N, latent_dim]
  TensorT<T> encode(const TensorT<T>& x, int t) {
    if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.resolution ||
        x.dim(3) != cfg_.resolution)
      throw DataError("encoder: expected [N,3," + std::to_string(cfg_.resolution) +
                      "," + std::to_string(cfg_.resolution) + "] input, got " +
                      shape_str(x.shape()));
    if (t < 0 || t > cfg_.max_timestep)
      throw DataError("encoder: step index " + std::to_string(t) +
                      " outside [0," + std::to_string(cfg_.max_timestep) + "]");

    auto temb = time_embedding<T>(t, cfg_.temb_dim());
    temb = linear(temb, p("temb.proj0.weight"), p("temb.proj0.bias"));
    temb = linear(silu(temb), p("temb.proj1.weight"), p("temb.proj1.bias"));

    auto h = conv2d(x, p("stem.weight"), p("stem.bias"));
    for (int d = 0; d < cfg_.downsamplings; ++d) {
      for (int b = 0; b < cfg_.blocks_per_step; ++b) {
        const std::string pre =
            "stage" + std::to_string(d) + ".block" + std::to_string(b) + ".";
        h = res_block(h, temb, pre);
      }
      h = conv2d(h, p("down" + std::to_string(d) + ".weight"),
                 p("down" + std::to_string(d) + ".bias"), /*stride=*/2);
    }
    const int last = cfg_.latent_dim();
    h = group_norm(h, p("out.gamma"), p("out.beta"), last % 8 == 0 ? 8 : 1);
    return global_avg_pool(silu(h));  // [N, latent_dim]
  }

  struct SingleHead {
    TensorT<T> omega;  // [N,3]
    TensorT<T> ts;     // [N,3]
  };
  SingleHead head_single(const TensorT<T>& latent) {
    return {linear(latent, p("head.omega.weight"), p("head.omega.bias")),
            linear(latent, p("head.ts.weight"), p("head.ts.bias"))};
  }

  struct MultiHead {
    TensorT<T> h1;      // [N, 3K]
    TensorT<T> scores;  // [N, K], logits
  };
  MultiHead head_multi(const TensorT<T>& latent) {
    return {linear(latent, p("head.h1.weight"), p("head.h1.bias")),
            linear(latent, p("head.score.weight"), p("head.score.bias"))};
  }

  int num_candidates() const { return k_; }
  const EncoderConfig& config() const { return cfg_; }
  std::vector<TensorT<T>>& parameters() { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }

  TensorT<T>& p(const std::string& name) {
    for (size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return params_[i];
    throw DataError("encoder: no parameter named " + name);
  }

 private:
  TensorT<T> res_block(const TensorT<T>& x, const TensorT<T>& temb,
                       const std::string& pre) {
    const int ch = int(x.dim(1));
    const int groups = ch % 8 == 0 ? 8 : 1;
    auto h = group_norm(x, p(pre + "norm0.gamma"), p(pre + "norm0.beta"), groups);
    h = conv2d(silu(h), p(pre + "conv0.weight"), p(pre + "conv0.bias"));
    auto emb = linear(temb, p(pre + "temb.weight"), p(pre + "temb.bias"));
    h = add(h, reshape(emb, {emb.dim(0), emb.dim(1), 1, 1}));
    h = group_norm(h, p(pre + "norm1.gamma"), p(pre + "norm1.beta"), groups);
    h = conv2d(silu(h), p(pre + "conv1.weight"), p(pre + "conv1.bias"));
    return add(x, h);
  }

  void track(const std::string& name, TensorT<T> t) {
    t.set_requires_grad(true);
    params_.push_back(t);
    names_.push_back(name);
  }

  void add_conv(const std::string& name, int in, int out, Rng& rng,
                bool zero = false) {
    TensorT<T> w({out, in, 3, 3});
    if (!zero) {
      const double bound = std::sqrt(6.0 / (in * 9));
      for (std::int64_t i = 0; i < w.numel(); ++i)
        w.at(i) = T(rng.uniform(-bound, bound));
    }
    track(name + ".weight", w);
    track(name + ".bias", TensorT<T>({out}, T(0)));
  }

  void add_linear(const std::string& name, int in, int out, Rng& rng,
                  bool zero = false) {
    TensorT<T> w({in, out});
    if (!zero) {
      const double bound = std::sqrt(6.0 / in);
      for (std::int64_t i = 0; i < w.numel(); ++i)
        w.at(i) = T(rng.uniform(-bound, bound));
    }
    track(name + ".weight", w);
    track(name + ".bias", TensorT<T>({out}, T(0)));
  }

  void add_norm(const std::string& name, int ch) {
    track(name + ".gamma", TensorT<T>({ch}, T(1)));
    track(name + ".beta", TensorT<T>({ch}, T(0)));
  }

  EncoderConfig cfg_;
  int k_;
  std::vector<TensorT<T>> params_;
  std::vector<std::string> names_;
};

using PoseEncoder = PoseEncoderT<real>;

}  // namespace udnf
