// Microbenchmarks for the hot paths: dense matmul, volume rendering, and a
// full multi-candidate training step.

#include <benchmark/benchmark.h>

#include "udnf/trainer.hpp"

using namespace udnf;

static void BM_Matmul(benchmark::State& state) {
  const int n = int(state.range(0));
  Rng rng(1);
  NoTapeScope guard;
  auto a = gaussian_like(Tensor({n, n}), rng);
  auto b = gaussian_like(Tensor({n, n}), rng);
  for (auto _ : state) {
    auto c = matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512);

static void BM_RenderRays(benchmark::State& state) {
  const int rays = int(state.range(0));
  Rng rng(1);
  NoTapeScope guard;
  FieldConfig fc;
  RadianceFieldT<real> field(fc, rng);
  auto pose = pose_lookat<real>({0, 0, 4}, {0, 0, 0}, {0, 1, 0});
  Intrinsics intr;
  intr.width = intr.height = 32;
  intr.focal = 48.0;
  std::vector<long> pixels;
  for (int i = 0; i < rays; ++i) pixels.push_back(i % (32 * 32));
  auto batch = generate_rays(pose, intr, real(2), real(6), pixels);
  auto rt = rays_to_tensors(batch);
  RenderConfig rc;
  rc.n_samples = 32;
  for (auto _ : state) {
    auto out = render_rays(field, rt, rc);
    benchmark::DoNotOptimize(out.rgb.data());
  }
  state.SetItemsProcessed(state.iterations() * rays);
}
BENCHMARK(BM_RenderRays)->Arg(64)->Arg(256);

static void BM_TrainStep(benchmark::State& state) {
  DatasetOptions opts;
  opts.width = opts.height = 16;
  opts.n_samples = 32;
  const std::string dir = "/tmp/udnf_bench_data";
  generate_dataset(SceneSpec::default_scene(), 6, "semisphere", 3, dir, opts);
  auto data = load_dataset(dir, LoadMode::evaluation);
  TrainConfig cfg;
  cfg.mode = "multi";
  cfg.n_samples = 16;
  cfg.rays_per_step = 64;
  cfg.encoder.base_channels = 8;
  cfg.encoder.downsamplings = 2;
  cfg.encoder.blocks_per_step = 1;
  cfg.encoder.multipliers = {1, 2};
  cfg.encoder.resolution = 16;
  cfg.field.width = 32;
  cfg.field.hidden_layers = 2;
  Trainer trainer(cfg, data);
  for (auto _ : state) {
    auto log = trainer.step();
    benchmark::DoNotOptimize(log.recon_loss);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
