#pragma once

// Training loops: supervised NeRF fitting, single-pose denoising training,
// the clean-image autoencoder ablation, and the multi-candidate mode with
// min-loss branch selection and classifier co-training. Also evaluation
// (PSNR/SSIM, classifier accuracy, gauge-aligned pose errors) and checkpoint
// assembly.

#include <optional>
#include <string>
#include <vector>

#include "udnf/adam.hpp"
#include "udnf/checkpoint.hpp"
#include "udnf/config.hpp"
#include "udnf/diffusion.hpp"
#include "udnf/metrics.hpp"
#include "udnf/nerf.hpp"
#include "udnf/posenet.hpp"
#include "udnf/scenegen.hpp"

namespace udnf {

struct TrainConfig {
  std::string mode = "multi";  // multi | single | ae | supervised
  std::string candidate_mode = "semi12";
  double lambda_score = 0.1;  // weight of the classifier cross-entropy
  double lr_field = 1e-4;
  double lr_pose = 2e-5;
  double beta1 = 0.9, beta2 = 0.999;
  int iterations = 20000;
  int t_max = 100;
  double beta_start = 1e-3, beta_end = 0.2;
  int n_samples = 32;       // quadrature samples per ray during training
  int rays_per_step = 256;  // pixels rendered per step; 0 = full image
  int eval_t = 1;           // noising level used at evaluation time
  std::uint64_t seed = 1;
  int log_every = 100;
  int checkpoint_every = 0;  // 0 = final only
  FieldConfig field;
  EncoderConfig encoder;

  void validate() const {
    if (mode != "multi" && mode != "single" && mode != "ae" &&
        mode != "supervised")
      throw DataError("train: unknown mode '" + mode + "'");
    if (lambda_score < 0) throw DataError("train: lambda must be >= 0");
    if (lr_field <= 0 || lr_pose < 0)
      throw DataError("train: learning rates must be positive");
    if (iterations < 1) throw DataError("train: iterations must be >= 1");
    if (t_max < 1) throw DataError("train: need at least one diffusion step");
    if (eval_t < 1 || eval_t > t_max)
      throw DataError("train: eval_t outside [1, t_max]");
    if (rays_per_step < 0) throw DataError("train: rays_per_step must be >= 0");
    encoder.validate();
  }
};

inline void train_config_to_kv(const TrainConfig& c, KeyValueConfig& kv) {
  kv.set("mode", c.mode);
  kv.set("candidate_mode", c.candidate_mode);
  kv.set("lambda", std::to_string(c.lambda_score));
  kv.set("lr_field", std::to_string(c.lr_field));
  kv.set("lr_pose", std::to_string(c.lr_pose));
  kv.set("beta1", std::to_string(c.beta1));
  kv.set("beta2", std::to_string(c.beta2));
  kv.set("iterations", std::to_string(c.iterations));
  kv.set("t_max", std::to_string(c.t_max));
  kv.set("beta_start", std::to_string(c.beta_start));
  kv.set("beta_end", std::to_string(c.beta_end));
  kv.set("n_samples", std::to_string(c.n_samples));
  kv.set("rays_per_step", std::to_string(c.rays_per_step));
  kv.set("eval_t", std::to_string(c.eval_t));
  kv.set("seed", std::to_string(c.seed));
  kv.set("log_every", std::to_string(c.log_every));
  kv.set("checkpoint_every", std::to_string(c.checkpoint_every));
  kv.set("field_width", std::to_string(c.field.width));
  kv.set("field_layers", std::to_string(c.field.hidden_layers));
  kv.set("field_l_pos", std::to_string(c.field.l_pos));
  kv.set("field_sigma_bias", std::to_string(c.field.sigma_bias));
  kv.set("enc_channels", std::to_string(c.encoder.base_channels));
  kv.set("enc_downsamplings", std::to_string(c.encoder.downsamplings));
  kv.set("enc_blocks", std::to_string(c.encoder.blocks_per_step));
  kv.set("enc_resolution", std::to_string(c.encoder.resolution));
}

inline TrainConfig train_config_from_kv(KeyValueConfig& kv) {
  TrainConfig c;
  c.mode = kv.get_string("mode", c.mode);
  c.candidate_mode = kv.get_string("candidate_mode", c.candidate_mode);
  c.lambda_score = kv.get_double("lambda", c.lambda_score);
  c.lr_field = kv.get_double("lr_field", c.lr_field);
  c.lr_pose = kv.get_double("lr_pose", c.lr_pose);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.iterations = kv.get_int("iterations", c.iterations);
  c.t_max = kv.get_int("t_max", c.t_max);
  c.beta_start = kv.get_double("beta_start", c.beta_start);
  c.beta_end = kv.get_double("beta_end", c.beta_end);
  c.n_samples = kv.get_int("n_samples", c.n_samples);
  c.rays_per_step = kv.get_int("rays_per_step", c.rays_per_step);
  c.eval_t = kv.get_int("eval_t", c.eval_t);
  c.seed = std::uint64_t(kv.get_double("seed", double(c.seed)));
  c.log_every = kv.get_int("log_every", c.log_every);
  c.checkpoint_every = kv.get_int("checkpoint_every", c.checkpoint_every);
  c.field.width = kv.get_int("field_width", c.field.width);
  c.field.hidden_layers = kv.get_int("field_layers", c.field.hidden_layers);
  c.field.l_pos = kv.get_int("field_l_pos", c.field.l_pos);
  c.field.sigma_bias = kv.get_double("field_sigma_bias", c.field.sigma_bias);
  c.encoder.base_channels = kv.get_int("enc_channels", c.encoder.base_channels);
  c.encoder.downsamplings =
      kv.get_int("enc_downsamplings", c.encoder.downsamplings);
  c.encoder.blocks_per_step = kv.get_int("enc_blocks", c.encoder.blocks_per_step);
  c.encoder.resolution = kv.get_int("enc_resolution", c.encoder.resolution);
  if (int(c.encoder.multipliers.size()) != c.encoder.downsamplings) {
    c.encoder.multipliers.assign(c.encoder.downsamplings, 1);
    if (c.encoder.downsamplings >= 1)
      c.encoder.multipliers.back() = 2;  // default ladder: [1,...,1,2]
  }
  return c;
}

// ---------------------------------------------------------------------------
// Image layout conversions

// h*w*3 interleaved [0,1] pixels -> [1,3,h,w] tensor in [-1,1]
inline Tensor image_to_input(const std::vector<real>& hwc, int width,
                             int height) {
  if (std::int64_t(hwc.size()) != std::int64_t(width) * height * 3)
    throw DataError("image_to_input: buffer does not match dimensions");
  Tensor out({1, 3, height, width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        out.at((c * height + y) * width + x) =
            real(2) * hwc[(std::int64_t(y) * width + x) * 3 + c] - real(1);
  return out;
}

// [1,3,h,w] in [-1,1] -> h*w*3 interleaved clamped to [0,1]
inline std::vector<real> input_to_image(const Tensor& nchw) {
  if (nchw.rank() != 4 || nchw.dim(0) != 1 || nchw.dim(1) != 3)
    throw DataError("input_to_image: expected [1,3,h,w]");
  const int h = int(nchw.dim(2)), w = int(nchw.dim(3));
  std::vector<real> out(std::size_t(h) * w * 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out[(std::int64_t(y) * w + x) * 3 + c] = std::clamp(
            real(0.5) * nchw[(c * h + y) * std::int64_t(w) + x] + real(0.5),
            real(0), real(1));
  return out;
}

// Selected pixels of an interleaved [0,1] image as a [R,3] tensor in [-1,1].
inline Tensor gather_pixels(const std::vector<real>& hwc,
                            const std::vector<std::int64_t>& pixels) {
  const std::int64_t n =
      pixels.empty() ? std::int64_t(hwc.size() / 3) : std::int64_t(pixels.size());
  Tensor out({n, 3});
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t p = pixels.empty() ? i : pixels[i];
    for (int c = 0; c < 3; ++c)
      out.at(i * 3 + c) = real(2) * hwc[p * 3 + c] - real(1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model bundle

struct Model {
  RadianceFieldT<real> field;
  PoseEncoderT<real> encoder;
  CandidateSpec candidates;
  DiffusionSchedule schedule;
  Intrinsics intr;
  real near = 2, far = 6;
  RenderConfig render;

  Model(const TrainConfig& cfg, const DatasetManifest& m, Rng& rng)
      : field(cfg.field, rng),
        encoder(make_encoder_cfg(cfg, m), candidate_count(cfg.candidate_mode),
                rng),
        candidates(init_candidates(cfg.candidate_mode)),
        schedule(make_schedule(cfg.t_max, cfg.beta_start, cfg.beta_end)),
        intr(Intrinsics::centered(m.width, m.height, m.focal)),
        near(real(m.near)),
        far(real(m.far)) {
    candidates.radius = m.radius;
    render.n_samples = cfg.n_samples;
  }

  static int candidate_count(const std::string& mode) {
    return init_candidates(mode).k;
  }

  static EncoderConfig make_encoder_cfg(const TrainConfig& cfg,
                                        const DatasetManifest& m) {
    if (m.width != m.height)
      throw DataError("train: encoder needs square images");
    EncoderConfig e = cfg.encoder;
    e.resolution = m.width;
    e.max_timestep = cfg.t_max;
    return e;
  }
};

// One-step denoiser: encoder -> pose head -> full-frame render of the
// highest-scoring candidate (multi) or the single predicted pose. Input and
// output images are [1,3,h,w] tensors in [-1,1].
struct DenoiseResult {
  Tensor x0_hat;
  CameraPose pose;
  int selected = 0;
  std::vector<double> score_logits;
};

inline DenoiseResult denoise_once(Model& m, const std::string& mode,
                                  const Tensor& x_t, int t) {
  NoTapeScope guard;
  DenoiseResult res;
  auto latent = m.encoder.encode(x_t, t);
  if (mode == "multi") {
    auto heads = m.encoder.head_multi(latent);
    const int k = m.encoder.num_candidates();
    res.score_logits.resize(k);
    for (int i = 0; i < k; ++i) {
      res.score_logits[i] = heads.scores[i];
      if (heads.scores[i] > heads.scores[res.selected]) res.selected = i;
    }
    res.pose = pose_from_tensors(
        candidate_pose(reshape(heads.h1, {3 * k}), res.selected, m.candidates));
  } else {
    auto heads = m.encoder.head_single(latent);
    PoseTensors<real> pt{rodrigues(reshape(heads.omega, {3})),
                         reshape(heads.ts, {3})};
    res.pose = pose_from_tensors(pt);
  }
  auto img =
      render_image(m.field, res.pose, m.intr, m.near, m.far, m.render);
  res.x0_hat = image_to_input(img.rgb, m.intr.width, m.intr.height);
  return res;
}

// argmin with ties broken toward the lowest index; selection carries no
// gradient by construction (indices are plain ints).
inline int select_branch(const std::vector<double>& losses) {
  if (losses.empty()) throw DataError("select_branch: empty loss vector");
  int best = 0;
  for (int i = 0; i < int(losses.size()); ++i) {
    if (!std::isfinite(losses[i]))
      throw NumericError("select_branch: non-finite loss in branch " +
                         std::to_string(i));
    if (losses[i] < losses[best]) best = i;
  }
  return best;
}

struct StepLog {
  std::int64_t iter = 0;
  double recon_loss = 0;
  double ce_loss = 0;
  int selected_idx = -1;
  double psnr_train = 0;  // from recon_loss, [-1,1] range folded out
  std::vector<double> candidate_losses;  // multi mode only
};

struct MetricsReport {
  std::vector<double> psnr_per_image, ssim_per_image;
  double mean_psnr = 0, mean_ssim = 0;
  double accuracy = 1.0;  // classifier vs argmin pseudo-labels (multi mode)
  bool has_pose_errors = false;
  PoseErrors pose_errors;
};

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, LoadedDataset data)
      : cfg_(cfg),
        data_(std::move(data)),
        rng_(cfg.seed),
        model_(cfg, data_.manifest, rng_),
        opt_field_(real(cfg.lr_field), real(cfg.beta1), real(cfg.beta2)),
        opt_pose_(real(cfg.lr_pose), real(cfg.beta1), real(cfg.beta2)) {
    cfg_.validate();
    if (cfg_.mode == "supervised" && !data_.has_poses)
      throw DataError("train: supervised mode needs ground-truth poses "
                      "(load the dataset in evaluation mode)");
  }

  StepLog step() {
    ++iter_;
    const int view =
        data_.train_indices[size_t(rng_.randint(0, std::int64_t(data_.train_indices.size()) - 1))];
    const auto pixels = sample_pixels();
    StepLog log;
    log.iter = iter_;
    if (cfg_.mode == "multi")
      step_multi(view, pixels, log);
    else if (cfg_.mode == "supervised")
      step_supervised(view, pixels, log);
    else
      step_single(view, pixels, log);  // single and ae
    const double mse01 = log.recon_loss / 4.0;  // loss lives in [-1,1]
    log.psnr_train = mse01 <= 0 ? 99.0 : std::min(99.0, 10 * std::log10(1 / mse01));
    return log;
  }

  MetricsReport evaluate() {
    NoTapeScope guard;
    MetricsReport rep;
    Rng eval_rng(cfg_.seed * 7919 + 17);
    std::vector<CameraPose> pred_poses, gt_poses;
    int correct = 0, judged = 0;
    for (const int idx : data_.test_indices) {
      const auto& gt01 = data_.images[idx];
      auto x0 = image_to_input(gt01, model_.intr.width, model_.intr.height);
      auto eps = gaussian_like(x0, eval_rng);
      Tensor x_in = cfg_.mode == "ae"
                        ? x0
                        : forward_diffuse(x0, cfg_.eval_t, eps, model_.schedule);
      const int t_in = cfg_.mode == "ae" ? 0 : cfg_.eval_t;

      std::vector<real> recon01;
      if (cfg_.mode == "supervised") {
        auto img = render_image(model_.field, data_.poses[idx], model_.intr,
                                model_.near, model_.far, model_.render);
        recon01 = img.rgb;
      } else if (cfg_.mode == "multi") {
        auto latent = model_.encoder.encode(x_in, t_in);
        auto heads = model_.encoder.head_multi(latent);
        const int k = model_.encoder.num_candidates();
        auto h1 = reshape(heads.h1, {3 * k});
        auto target = gather_pixels(gt01, {});
        int argmax = 0, argmin = 0;
        double best_loss = 0;
        for (int i = 0; i < k; ++i) {
          auto pose = pose_from_tensors(candidate_pose(h1, i, model_.candidates));
          auto img = render_image(model_.field, pose, model_.intr, model_.near,
                                  model_.far, model_.render);
          const double loss =
              mse(gather_pixels(img.rgb, {}), target).item();
          if (i == 0 || loss < best_loss) {
            argmin = i;
            best_loss = loss;
          }
          if (heads.scores[i] > heads.scores[argmax]) argmax = i;
        }
        auto sel_pose =
            pose_from_tensors(candidate_pose(h1, argmax, model_.candidates));
        recon01 = render_image(model_.field, sel_pose, model_.intr, model_.near,
                               model_.far, model_.render)
                      .rgb;
        ++judged;
        if (argmax == argmin) ++correct;
        if (data_.has_poses) {
          pred_poses.push_back(sel_pose);
          gt_poses.push_back(data_.poses[idx]);
        }
      } else {  // single / ae
        auto out = denoise_once(model_, cfg_.mode, x_in, t_in);
        recon01 = input_to_image(out.x0_hat);
        if (data_.has_poses) {
          pred_poses.push_back(out.pose);
          gt_poses.push_back(data_.poses[idx]);
        }
      }
      rep.psnr_per_image.push_back(psnr(recon01, gt01));
      rep.ssim_per_image.push_back(
          model_.intr.width >= 11 && model_.intr.height >= 11
              ? ssim(recon01, gt01, model_.intr.width, model_.intr.height)
              : 1.0);
      rep.mean_psnr += rep.psnr_per_image.back();
      rep.mean_ssim += rep.ssim_per_image.back();
    }
    const double n = double(rep.psnr_per_image.size());
    if (n > 0) {
      rep.mean_psnr /= n;
      rep.mean_ssim /= n;
    }
    if (judged > 0) rep.accuracy = double(correct) / judged;
    if (pred_poses.size() >= 3) {
      try {
        rep.pose_errors = pose_eval(pred_poses, gt_poses);
        rep.has_pose_errors = true;
      } catch (const DataError&) {
        rep.has_pose_errors = false;
      }
    }
    return rep;
  }

  // Gauge-aligned camera-center error across every view in the dataset,
  // using each view's highest-scoring candidate. Needs ground-truth poses.
  std::optional<PoseErrors> pose_error_all_views() {
    if (!data_.has_poses || cfg_.mode != "multi") return std::nullopt;
    NoTapeScope guard;
    Rng eval_rng(cfg_.seed * 104729 + 3);
    std::vector<CameraPose> pred, gt;
    for (size_t idx = 0; idx < data_.images.size(); ++idx) {
      auto x0 =
          image_to_input(data_.images[idx], model_.intr.width, model_.intr.height);
      auto eps = gaussian_like(x0, eval_rng);
      auto x_in = forward_diffuse(x0, cfg_.eval_t, eps, model_.schedule);
      auto latent = model_.encoder.encode(x_in, cfg_.eval_t);
      auto heads = model_.encoder.head_multi(latent);
      const int k = model_.encoder.num_candidates();
      int argmax = 0;
      for (int i = 1; i < k; ++i)
        if (heads.scores[i] > heads.scores[argmax]) argmax = i;
      pred.push_back(pose_from_tensors(
          candidate_pose(reshape(heads.h1, {3 * k}), argmax, model_.candidates)));
      gt.push_back(data_.poses[idx]);
    }
    try {
      return pose_eval(pred, gt);
    } catch (const DataError&) {
      return std::nullopt;
    }
  }

  Checkpoint make_checkpoint() {
    Checkpoint ck;
    KeyValueConfig kv;
    train_config_to_kv(cfg_, kv);
    ck.config_text = kv.to_string();
    add_group(ck, "field.", model_.field.parameters(),
              model_.field.parameter_names());
    add_group(ck, "enc.", model_.encoder.parameters(),
              model_.encoder.parameter_names());
    add_moments(ck, "adam_field.", opt_field_, model_.field.parameter_names());
    add_moments(ck, "adam_pose.", opt_pose_, model_.encoder.parameter_names());
    ck.counters["iteration"] = iter_;
    ck.counters["adam_field.t"] = opt_field_.step_count();
    ck.counters["adam_pose.t"] = opt_pose_.step_count();
    ck.rng_state = rng_.serialize();
    return ck;
  }

  void restore(const Checkpoint& ck) {
    load_group(ck, "field.", model_.field.parameters(),
               model_.field.parameter_names());
    load_group(ck, "enc.", model_.encoder.parameters(),
               model_.encoder.parameter_names());
    load_moments(ck, "adam_field.", opt_field_, model_.field.parameters(),
                 model_.field.parameter_names());
    load_moments(ck, "adam_pose.", opt_pose_, model_.encoder.parameters(),
                 model_.encoder.parameter_names());
    iter_ = ck.counters.at("iteration");
    opt_field_.set_step_count(ck.counters.at("adam_field.t"));
    opt_pose_.set_step_count(ck.counters.at("adam_pose.t"));
    rng_.deserialize(ck.rng_state);
  }

  const TrainConfig& config() const { return cfg_; }
  Model& model() { return model_; }
  const LoadedDataset& dataset() const { return data_; }
  std::int64_t iteration() const { return iter_; }
  Rng& rng() { return rng_; }

 private:
  std::vector<std::int64_t> sample_pixels() {
    const std::int64_t total =
        std::int64_t(model_.intr.width) * model_.intr.height;
    if (cfg_.rays_per_step <= 0 || cfg_.rays_per_step >= total) return {};
    std::vector<std::int64_t> pixels(size_t(cfg_.rays_per_step));
    for (auto& p : pixels) p = rng_.randint(0, total - 1);
    return pixels;
  }

  void zero_all_grads() {
    for (auto& p : model_.field.parameters()) p.zero_grad();
    for (auto& p : model_.encoder.parameters()) p.zero_grad();
  }

  void optimizer_steps() {
    opt_field_.step(model_.field.parameters(), /*checked=*/true);
    if (cfg_.lr_pose > 0)
      opt_pose_.step(model_.encoder.parameters(), /*checked=*/true);
  }

  void step_supervised(int view, const std::vector<std::int64_t>& pixels,
                       StepLog& log) {
    auto target = gather_pixels(data_.images[view], pixels);
    auto rays = rays_to_tensors(generate_rays(data_.poses[view], model_.intr,
                                              model_.near, model_.far, pixels));
    zero_all_grads();
    Tape tape;
    {
      TapeScope scope(tape);
      auto out = render_rays(model_.field, rays, model_.render);
      auto recon = mse(to_diffusion_range(out.rgb), target);
      log.recon_loss = recon.item();
      require_finite(log.recon_loss);
      tape.backward(recon);
    }
    opt_field_.step(model_.field.parameters(), /*checked=*/true);
  }

  void step_single(int view, const std::vector<std::int64_t>& pixels,
                   StepLog& log) {
    const bool ae = cfg_.mode == "ae";
    const int t = ae ? 0 : int(rng_.randint(1, cfg_.t_max));
    auto x0 = image_to_input(data_.images[view], model_.intr.width,
                             model_.intr.height);
    Tensor x_in = x0;
    if (!ae) {
      auto eps = gaussian_like(x0, rng_);
      x_in = forward_diffuse(x0, t, eps, model_.schedule);
    }
    auto target = gather_pixels(data_.images[view], pixels);
    zero_all_grads();
    Tape tape;
    {
      TapeScope scope(tape);
      auto latent = model_.encoder.encode(x_in, t);
      auto heads = model_.encoder.head_single(latent);
      PoseTensors<real> pose{rodrigues(reshape(heads.omega, {3})),
                             reshape(heads.ts, {3})};
      auto rays =
          generate_rays_diff(pose, model_.intr, model_.near, model_.far, pixels);
      auto out = render_rays(model_.field, rays, model_.render);
      auto recon = mse(to_diffusion_range(out.rgb), target);
      log.recon_loss = recon.item();
      require_finite(log.recon_loss);
      tape.backward(recon);
    }
    optimizer_steps();
  }

  void step_multi(int view, const std::vector<std::int64_t>& pixels,
                  StepLog& log) {
    const int t = int(rng_.randint(1, cfg_.t_max));
    auto x0 = image_to_input(data_.images[view], model_.intr.width,
                             model_.intr.height);
    auto eps = gaussian_like(x0, rng_);
    auto x_in = forward_diffuse(x0, t, eps, model_.schedule);
    auto target = gather_pixels(data_.images[view], pixels);
    const int k = model_.encoder.num_candidates();

    // Selection pass: render every candidate without building a graph. The
    // winner is re-rendered below with identical numerics, so the re-render's
    // loss equals the winning selection loss bit for bit and non-selected
    // branches never enter the tape.
    std::vector<double> losses(static_cast<size_t>(k), 0.0);
    {
      NoTapeScope guard;
      auto latent = model_.encoder.encode(x_in, t);
      auto heads = model_.encoder.head_multi(latent);
      auto h1 = reshape(heads.h1, {3 * k});
      for (int i = 0; i < k; ++i) {
        auto pose = candidate_pose(h1, i, model_.candidates);
        auto rays = generate_rays_diff(pose, model_.intr, model_.near,
                                       model_.far, pixels);
        auto out = render_rays(model_.field, rays, model_.render);
        losses[size_t(i)] = mse(to_diffusion_range(out.rgb), target).item();
      }
    }
    const int selected = select_branch(losses);
    log.selected_idx = selected;
    log.candidate_losses = losses;

    zero_all_grads();
    Tape tape;
    {
      TapeScope scope(tape);
      auto latent = model_.encoder.encode(x_in, t);
      auto heads = model_.encoder.head_multi(latent);
      auto pose = candidate_pose(reshape(heads.h1, {3 * k}), selected,
                                 model_.candidates);
      auto rays = generate_rays_diff(pose, model_.intr, model_.near, model_.far,
                                     pixels);
      auto out = render_rays(model_.field, rays, model_.render);
      auto recon = mse(to_diffusion_range(out.rgb), target);
      auto ce = cross_entropy_with_logits(reshape(heads.scores, {k}), selected);
      log.recon_loss = recon.item();
      log.ce_loss = ce.item();
      require_finite(log.recon_loss);
      require_finite(log.ce_loss);
      auto total = cfg_.lambda_score > 0
                       ? add(recon, mul_scalar(ce, real(cfg_.lambda_score)))
                       : recon;
      tape.backward(total);
    }
    optimizer_steps();
  }

  static void require_finite(double v) {
    if (!std::isfinite(v))
      throw NumericError("train: non-finite loss, aborting");
  }

  static void add_group(Checkpoint& ck, const std::string& prefix,
                        const std::vector<Tensor>& params,
                        const std::vector<std::string>& names) {
    for (size_t i = 0; i < params.size(); ++i)
      ck.add_tensor(prefix + names[i], params[i]);
  }

  static void load_group(const Checkpoint& ck, const std::string& prefix,
                         std::vector<Tensor>& params,
                         const std::vector<std::string>& names) {
    for (size_t i = 0; i < params.size(); ++i)
      ck.load_into(prefix + names[i], params[i]);
  }

  static void add_moments(Checkpoint& ck, const std::string& prefix,
                          const AdamT<real>& opt,
                          const std::vector<std::string>& names) {
    auto& o = const_cast<AdamT<real>&>(opt);
    for (size_t i = 0; i < o.moment1().size(); ++i) {
      ck.add_tensor(prefix + "m." + names[i], o.moment1()[i]);
      ck.add_tensor(prefix + "v." + names[i], o.moment2()[i]);
    }
  }

  static void load_moments(const Checkpoint& ck, const std::string& prefix,
                           AdamT<real>& opt, const std::vector<Tensor>& params,
                           const std::vector<std::string>& names) {
    if (!ck.find(prefix + "m." + names[0])) return;  // optimizer never stepped
    if (opt.moment1().empty())
      for (const auto& p : params) {
        opt.moment1().emplace_back(p.shape(), real(0));
        opt.moment2().emplace_back(p.shape(), real(0));
      }
    for (size_t i = 0; i < params.size(); ++i) {
      ck.load_into(prefix + "m." + names[i], opt.moment1()[i]);
      ck.load_into(prefix + "v." + names[i], opt.moment2()[i]);
    }
  }

  TrainConfig cfg_;
  LoadedDataset data_;
  Rng rng_;
  Model model_;
  AdamT<real> opt_field_, opt_pose_;
  std::int64_t iter_ = 0;
};

}  // namespace udnf
