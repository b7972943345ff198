// Command-line surface: dataset generation, training, reconstruction,
// path rendering, noise sampling, evaluation, pose dumps, point clouds.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "udnf/trainer.hpp"

using namespace udnf;
namespace fs = std::filesystem;

namespace {

TrainConfig load_train_config(const std::string& config_path,
                              const std::vector<std::string>& overrides) {
  KeyValueConfig kv = config_path.empty() ? KeyValueConfig()
                                          : KeyValueConfig::from_file(config_path);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw UsageError("override must look like key=value: " + ov);
    kv.set(ov.substr(0, eq), ov.substr(eq + 1));
  }
  auto cfg = train_config_from_kv(kv);
  kv.reject_unknown_keys();
  cfg.validate();
  return cfg;
}

struct RestoredRun {
  TrainConfig cfg;
  Trainer trainer;
};

RestoredRun restore_run(const std::string& ckpt_path, const std::string& data_dir) {
  auto ck = load_checkpoint(ckpt_path);
  auto kv = KeyValueConfig::from_string(ck.config_text, ckpt_path);
  auto cfg = train_config_from_kv(kv);
  RestoredRun run{cfg, Trainer(cfg, load_dataset(data_dir, LoadMode::evaluation))};
  run.trainer.restore(ck);
  return run;
}

void write_frame(const fs::path& path, const std::vector<real>& rgb01, int w,
                 int h) {
  const auto tmp = path.string() + ".tmp";
  write_image(tmp, quantize(rgb01, w, h));
  fs::rename(tmp, path);
}

nlohmann::json pose_json(const CameraPose& p) {
  return nlohmann::json(pose_to_rows(p));
}

int cmd_scenegen(int views, const std::string& mode, std::uint64_t seed,
                 const std::string& out, int size, int n_samples) {
  DatasetOptions opts;
  opts.width = opts.height = size;
  opts.n_samples = n_samples;
  auto manifest = generate_dataset(SceneSpec::default_scene(), views, mode,
                                   seed, out, opts);
  std::cout << "wrote " << manifest.views.size() << " views to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides,
              const std::string& data_dir, const std::string& out_dir) {
  auto cfg = load_train_config(config_path, overrides);
  const auto load_mode =
      cfg.mode == "supervised" ? LoadMode::evaluation : LoadMode::training;
  Trainer trainer(cfg, load_dataset(data_dir, load_mode));
  fs::create_directories(out_dir);

  std::ofstream csv(fs::path(out_dir) / "train_log.csv");
  csv << "iter,recon_loss,ce_loss,selected_idx,accuracy,psnr_train\n";

  double accuracy = -1;
  for (int i = 0; i < cfg.iterations; ++i) {
    StepLog log;
    try {
      log = trainer.step();
    } catch (const NumericError& e) {
      save_checkpoint((fs::path(out_dir) / "diagnostic.ckpt").string(),
                      trainer.make_checkpoint());
      std::cerr << "aborting at iteration " << trainer.iteration() << ": "
                << e.what() << " (diagnostic checkpoint written)\n";
      throw;
    }
    if (log.iter % cfg.log_every == 0 || log.iter == cfg.iterations) {
      csv << log.iter << ',' << log.recon_loss << ',' << log.ce_loss << ','
          << log.selected_idx << ',' << accuracy << ',' << log.psnr_train
          << '\n';
      csv.flush();
      std::cout << "iter " << log.iter << " recon " << log.recon_loss
                << " ce " << log.ce_loss << " psnr " << log.psnr_train << "\n";
    }
    if (cfg.checkpoint_every > 0 && log.iter % cfg.checkpoint_every == 0)
      save_checkpoint((fs::path(out_dir) / ("ckpt_" + std::to_string(log.iter) +
                                            ".ckpt"))
                          .string(),
                      trainer.make_checkpoint());
  }
  save_checkpoint((fs::path(out_dir) / "final.ckpt").string(),
                  trainer.make_checkpoint());
  std::cout << "final checkpoint written to " << out_dir << "/final.ckpt\n";
  return 0;
}

int cmd_reconstruct(const std::string& ckpt, const std::string& data_dir,
                    const std::string& out_dir, std::uint64_t seed) {
  auto run = restore_run(ckpt, data_dir);
  auto& tr = run.trainer;
  const auto& data = tr.dataset();
  fs::create_directories(out_dir);
  Rng rng(seed);
  nlohmann::json poses = nlohmann::json::array();
  const int w = tr.model().intr.width, h = tr.model().intr.height;
  for (const int idx : data.test_indices) {
    auto x0 = image_to_input(data.images[size_t(idx)], w, h);
    auto eps = gaussian_like(x0, rng);
    const int t = run.cfg.mode == "ae" ? 0 : run.cfg.eval_t;
    Tensor x_in = run.cfg.mode == "ae"
                      ? x0
                      : forward_diffuse(x0, t, eps, tr.model().schedule);
    auto res = denoise_once(tr.model(), run.cfg.mode, x_in, t);
    auto rgb = input_to_image(res.x0_hat);
    char name[32];
    std::snprintf(name, sizeof(name), "recon_%03d.png", idx);
    write_frame(fs::path(out_dir) / name, rgb, w, h);
    const double p = psnr(rgb, data.images[size_t(idx)]);
    poses.push_back({{"view", idx},
                     {"file", name},
                     {"pose", pose_json(res.pose)},
                     {"selected", res.selected},
                     {"psnr", p}});
    std::cout << name << " psnr " << p << "\n";
  }
  detail::atomic_write_text(fs::path(out_dir) / "poses.json", poses.dump(2));
  return 0;
}

int cmd_render_path(const std::string& ckpt, const std::string& data_dir,
                    const std::string& out_dir, int frames, double turns,
                    double z0, double z1, const std::string& pose_list) {
  auto run = restore_run(ckpt, data_dir);
  auto& m = run.trainer.model();
  fs::create_directories(out_dir);
  std::vector<CameraPose> poses;
  if (!pose_list.empty()) {
    std::ifstream in(pose_list);
    if (!in) throw DataError("cannot open pose list " + pose_list);
    nlohmann::json j;
    in >> j;
    for (const auto& e : j)
      poses.push_back(pose_from_rows<real>(e.get<std::array<double, 12>>()));
  } else {
    if (frames < 1) throw UsageError("render-path: need frames >= 1");
    const double r = m.candidates.radius;
    for (int i = 0; i < frames; ++i) {
      const double s = frames == 1 ? 0.0 : double(i) / (frames - 1);
      const double z = (z0 + (z1 - z0) * s) * r;
      const double rho = std::sqrt(std::max(0.0, r * r - z * z));
      const double theta = 2.0 * M_PI * turns * s;
      poses.push_back(pose_lookat<real>({real(rho * std::cos(theta)),
                                         real(rho * std::sin(theta)), real(z)},
                                        {0, 0, 0}, {0, 1, 0}));
    }
  }
  for (size_t i = 0; i < poses.size(); ++i) {
    auto img = render_image(m.field, poses[i], m.intr, m.near, m.far, m.render);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.png", int(i));
    write_frame(fs::path(out_dir) / name, img.rgb, m.intr.width, m.intr.height);
  }
  std::cout << "rendered " << poses.size() << " frames to " << out_dir << "\n";
  return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& data_dir,
               const std::string& out_dir, std::uint64_t seed,
               bool stochastic) {
  auto run = restore_run(ckpt, data_dir);
  auto& m = run.trainer.model();
  fs::create_directories(out_dir);
  const int w = m.intr.width, h = m.intr.height;

  std::ofstream csv(fs::path(out_dir) / "poses.csv");
  csv << "t,selected,cx,cy,cz\n";
  DenoiserFn<real> denoiser = [&](const Tensor& x_t, int t) {
    auto res = denoise_once(m, run.cfg.mode, x_t, t);
    csv << t << ',' << res.selected << ',' << res.pose.t[0] << ','
        << res.pose.t[1] << ',' << res.pose.t[2] << '\n';
    return res.x0_hat;
  };
  Rng rng(seed);
  auto traj = sample_from_noise(denoiser, m.schedule, Shape{1, 3, h, w}, rng,
                                stochastic);
  for (const auto& step : traj) {
    char name[48];
    std::snprintf(name, sizeof(name), "x0hat_t%03d.png", step.t);
    write_frame(fs::path(out_dir) / name, input_to_image(step.x0_hat), w, h);
    std::snprintf(name, sizeof(name), "xprev_t%03d.png", step.t);
    write_frame(fs::path(out_dir) / name, input_to_image(step.x_prev), w, h);
  }
  std::cout << "wrote " << traj.size() << " denoising steps to " << out_dir
            << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir,
             const std::string& out_path) {
  auto run = restore_run(ckpt, data_dir);
  auto rep = run.trainer.evaluate();
  nlohmann::json j;
  j["mean_psnr"] = rep.mean_psnr;
  j["mean_ssim"] = rep.mean_ssim;
  j["accuracy"] = rep.accuracy;
  j["psnr_per_image"] = rep.psnr_per_image;
  j["ssim_per_image"] = rep.ssim_per_image;
  if (auto pe = run.trainer.pose_error_all_views()) {
    j["mean_rotation_deg"] = pe->mean_rotation_deg;
    j["mean_center_error"] = pe->mean_translation;
    j["center_error_fraction_of_r"] =
        pe->mean_translation / run.trainer.model().candidates.radius;
  }
  detail::atomic_write_text(out_path, j.dump(2));
  std::cout << "psnr " << rep.mean_psnr << " dB  ssim " << rep.mean_ssim
            << "  accuracy " << rep.accuracy << "\n";
  if (j.contains("mean_center_error"))
    std::cout << "pose: center err " << j["mean_center_error"]
              << " (" << j["center_error_fraction_of_r"] << " of r), rot "
              << j["mean_rotation_deg"] << " deg\n";
  std::cout << "report written to " << out_path << "\n";
  return 0;
}

int cmd_dump_poses(const std::vector<std::string>& ckpts,
                   const std::string& data_dir, const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (const auto& ckpt : ckpts) {
    auto run = restore_run(ckpt, data_dir);
    auto& tr = run.trainer;
    auto& m = tr.model();
    const auto& data = tr.dataset();
    const auto csv_path =
        fs::path(out_dir) / (fs::path(ckpt).stem().string() + "_poses.csv");
    std::ofstream csv(csv_path);
    csv << "view,candidate,cx,cy,cz,score,selected\n";
    NoTapeScope guard;
    Rng rng(run.cfg.seed + 1);
    const int k = m.encoder.num_candidates();
    for (size_t v = 0; v < data.images.size(); ++v) {
      auto x0 = image_to_input(data.images[v], m.intr.width, m.intr.height);
      auto eps = gaussian_like(x0, rng);
      auto x_in = forward_diffuse(x0, run.cfg.eval_t, eps, m.schedule);
      auto latent = m.encoder.encode(x_in, run.cfg.eval_t);
      auto heads = m.encoder.head_multi(latent);
      auto h1 = reshape(heads.h1, {3 * k});
      int argmax = 0;
      for (int i = 1; i < k; ++i)
        if (heads.scores[i] > heads.scores[argmax]) argmax = i;
      for (int i = 0; i < k; ++i) {
        auto pose = pose_from_tensors(candidate_pose(h1, i, m.candidates));
        csv << v << ',' << i << ',' << pose.t[0] << ',' << pose.t[1] << ','
            << pose.t[2] << ',' << heads.scores[i] << ','
            << (i == argmax ? 1 : 0) << '\n';
      }
    }
    std::cout << "wrote " << csv_path.string() << "\n";
  }
  return 0;
}

int cmd_pointcloud(const std::string& ckpt, const std::string& data_dir,
                   const std::string& out_path, double threshold,
                   int resolution, double extent) {
  auto run = restore_run(ckpt, data_dir);
  auto pts =
      export_pointcloud(run.trainer.model().field, extent, resolution, threshold);
  std::ostringstream ply;
  ply << "ply\nformat ascii 1.0\nelement vertex " << pts.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\n"
         "end_header\n";
  for (const auto& p : pts) {
    auto byte = [](real v) {
      return int(std::lround(std::clamp(double(v), 0.0, 1.0) * 255));
    };
    ply << p.x << ' ' << p.y << ' ' << p.z << ' ' << byte(p.r) << ' '
        << byte(p.g) << ' ' << byte(p.b) << '\n';
  }
  detail::atomic_write_text(out_path, ply.str());
  std::cout << "wrote " << pts.size() << " points to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unposed diffusion NeRF: training and inference tools"};
  app.require_subcommand(1);

  // scenegen
  auto* sg = app.add_subcommand("scenegen", "generate a synthetic dataset");
  int sg_views = 24, sg_size = 32, sg_samples = 128;
  std::string sg_mode = "semisphere", sg_out;
  std::uint64_t sg_seed = 7;
  sg->add_option("--views", sg_views, "number of views");
  sg->add_option("--mode", sg_mode, "semisphere | sphere | forward_facing");
  sg->add_option("--seed", sg_seed, "rng seed");
  sg->add_option("--size", sg_size, "image side length");
  sg->add_option("--samples", sg_samples, "ray samples for ground truth");
  sg->add_option("--out", sg_out, "output directory")->required();

  // train
  auto* tn = app.add_subcommand("train", "run a training loop");
  std::string tn_config, tn_data, tn_out = "run";
  std::vector<std::string> tn_set;
  tn->add_option("--config", tn_config, "key = value config file");
  tn->add_option("--set", tn_set, "config overrides, key=value");
  tn->add_option("--data", tn_data, "dataset directory")->required();
  tn->add_option("--out", tn_out, "output directory");

  // reconstruct
  auto* rc = app.add_subcommand("reconstruct", "denoise held-out views once");
  std::string rc_ckpt, rc_data, rc_out = "recon";
  std::uint64_t rc_seed = 1;
  rc->add_option("--checkpoint", rc_ckpt)->required();
  rc->add_option("--data", rc_data)->required();
  rc->add_option("--out", rc_out);
  rc->add_option("--seed", rc_seed);

  // render-path
  auto* rp = app.add_subcommand("render-path", "render a camera trajectory");
  std::string rp_ckpt, rp_data, rp_out = "path", rp_poses;
  int rp_frames = 16;
  double rp_turns = 1.0, rp_z0 = 0.25, rp_z1 = 0.75;
  rp->add_option("--checkpoint", rp_ckpt)->required();
  rp->add_option("--data", rp_data)->required();
  rp->add_option("--out", rp_out);
  rp->add_option("--frames", rp_frames);
  rp->add_option("--turns", rp_turns, "spiral turns");
  rp->add_option("--z0", rp_z0, "start height, fraction of radius");
  rp->add_option("--z1", rp_z1, "end height, fraction of radius");
  rp->add_option("--poses", rp_poses, "JSON pose list instead of a spiral");

  // sample
  auto* sm = app.add_subcommand("sample", "reverse-diffuse from pure noise");
  std::string sm_ckpt, sm_data, sm_out = "samples";
  std::uint64_t sm_seed = 1;
  bool sm_stochastic = false;
  sm->add_option("--checkpoint", sm_ckpt)->required();
  sm->add_option("--data", sm_data)->required();
  sm->add_option("--out", sm_out);
  sm->add_option("--seed", sm_seed);
  sm->add_flag("--stochastic", sm_stochastic, "add posterior noise");

  // eval
  auto* ev = app.add_subcommand("eval", "held-out metrics report");
  std::string ev_ckpt, ev_data, ev_out = "metrics.json";
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--out", ev_out);

  // dump-poses
  auto* dp = app.add_subcommand("dump-poses", "candidate pose CSVs");
  std::vector<std::string> dp_ckpts;
  std::string dp_data, dp_out = "poses";
  dp->add_option("--checkpoint", dp_ckpts)->required();
  dp->add_option("--data", dp_data)->required();
  dp->add_option("--out", dp_out);

  // pointcloud
  auto* pc = app.add_subcommand("pointcloud", "density point cloud as PLY");
  std::string pc_ckpt, pc_data, pc_out = "cloud.ply";
  double pc_threshold = 1.0, pc_extent = 1.2;
  int pc_resolution = 64;
  pc->add_option("--checkpoint", pc_ckpt)->required();
  pc->add_option("--data", pc_data)->required();
  pc->add_option("--out", pc_out);
  pc->add_option("--threshold", pc_threshold, "density cutoff");
  pc->add_option("--resolution", pc_resolution, "grid points per axis");
  pc->add_option("--extent", pc_extent, "half side of the sampled cube");

  try {
    app.parse(argc, argv);
    if (sg->parsed())
      return cmd_scenegen(sg_views, sg_mode, sg_seed, sg_out, sg_size,
                          sg_samples);
    if (tn->parsed()) return cmd_train(tn_config, tn_set, tn_data, tn_out);
    if (rc->parsed()) return cmd_reconstruct(rc_ckpt, rc_data, rc_out, rc_seed);
    if (rp->parsed())
      return cmd_render_path(rp_ckpt, rp_data, rp_out, rp_frames, rp_turns,
                             rp_z0, rp_z1, rp_poses);
    if (sm->parsed())
      return cmd_sample(sm_ckpt, sm_data, sm_out, sm_seed, sm_stochastic);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_out);
    if (dp->parsed()) return cmd_dump_poses(dp_ckpts, dp_data, dp_out);
    if (pc->parsed())
      return cmd_pointcloud(pc_ckpt, pc_data, pc_out, pc_threshold,
                            pc_resolution, pc_extent);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int rc2 = app.exit(e);
    return rc2 == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
