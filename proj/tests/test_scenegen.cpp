#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "udnf/scenegen.hpp"

using namespace udnf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("udnf_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("build_scene: point lookups and the overlap rule") {
  SceneSpec one;
  one.spheres = {{{0, 0, 0}, 1.0, {1, 0, 0}, 10.0}};
  auto f = build_scene<real>(one);
  Tensor pts({3, 3}, {0.f, 0.f, 0.f, 2.f, 0.f, 0.f, 0.f, 0.9f, 0.f});
  auto [sigma, rgb] = f.eval(pts, nullptr);
  CHECK(sigma[0] == 10.0f);
  CHECK(sigma[1] == 0.0f);
  CHECK(sigma[2] == 10.0f);
  CHECK(rgb[0] == 1.0f);
  CHECK(rgb[3] == 1.0f);  // outside: white background

  SceneSpec empty;
  auto g = build_scene<real>(empty);
  auto [s2, r2] = g.eval(pts, nullptr);
  for (int i = 0; i < 3; ++i) CHECK(s2[i] == 0.0f);

  // overlapping spheres: the nearer center wins at the probe point
  SceneSpec both;
  both.spheres = {{{-0.2, 0, 0}, 0.5, {1, 0, 0}, 5.0},
                  {{0.2, 0, 0}, 0.5, {0, 1, 0}, 7.0}};
  auto h = build_scene<real>(both);
  Tensor probes({2, 3}, {-0.1f, 0.f, 0.f, 0.1f, 0.f, 0.f});
  auto [s3, r3] = h.eval(probes, nullptr);
  CHECK(s3[0] == 5.0f);
  CHECK(s3[1] == 7.0f);
  CHECK(r3[1] == 0.0f);  // first probe red
  CHECK(r3[4] == 1.0f);  // second probe green

  SceneSpec bad;
  bad.spheres = {{{0.9, 0, 0}, 0.5, {1, 1, 1}, 10.0}};  // escapes extent
  CHECK_THROWS_AS(build_scene<real>(bad), DataError);
}

TEST_CASE("default scene looks different from every candidate viewpoint") {
  auto field = build_scene<real>(SceneSpec::default_scene());
  auto spec = init_candidates_semi12();
  auto intr = Intrinsics::centered(16, 16, 24.0);
  RenderConfig rc;
  rc.n_samples = 48;
  Tensor h1({36}, 0.0f);
  NoTapeScope guard;
  std::vector<std::vector<real>> renders;
  // the 12 rows repeat 4 sign patterns, so keep the 4 distinct ones
  for (int i = 0; i < 4; ++i) {
    auto pose = pose_from_tensors(candidate_pose(h1, i, spec));
    renders.push_back(render_image(field, pose, intr, 2.0f, 6.0f, rc).rgb);
  }
  for (size_t a = 0; a < renders.size(); ++a)
    for (size_t b = a + 1; b < renders.size(); ++b) {
      double mse = 0;
      for (size_t i = 0; i < renders[a].size(); ++i) {
        const double d = renders[a][i] - renders[b][i];
        mse += d * d;
      }
      CHECK(mse / renders[a].size() > 1e-4);
    }
}

TEST_CASE("generate_dataset: counts, radius, hemisphere, split, round trip") {
  TempDir dir("dataset");
  DatasetOptions opts;
  opts.width = opts.height = 16;
  opts.n_samples = 32;
  auto m = generate_dataset(SceneSpec::default_scene(), 24, "semisphere", 7,
                            dir.path.string(), opts);
  REQUIRE(m.views.size() == 24);
  int n_test = 0;
  for (const auto& v : m.views) {
    CHECK(fs::exists(dir.path / v.file));
    const double x = v.pose[3], y = v.pose[7], z = v.pose[11];
    CHECK(std::sqrt(x * x + y * y + z * z) == doctest::Approx(4.0).epsilon(1e-6));
    CHECK(z > 0.0);  // the reachable hemisphere for the candidate poses
    if (v.split == "test") ++n_test;
  }
  CHECK(n_test >= 3);  // at least 10%
  CHECK(n_test < 24);

  auto loaded = load_dataset(dir.path.string(), LoadMode::evaluation);
  CHECK(loaded.manifest.views.size() == 24);
  CHECK(loaded.has_poses);
  CHECK(loaded.poses.size() == 24);
  CHECK(loaded.images.size() == 24);
  CHECK(loaded.images[0].size() == 16 * 16 * 3);
  CHECK(int(loaded.test_indices.size()) == n_test);
  for (size_t i = 0; i < loaded.manifest.views.size(); ++i)
    for (int k = 0; k < 12; ++k)
      CHECK(loaded.manifest.views[i].pose[k] == m.views[i].pose[k]);

  auto stripped = load_dataset(dir.path.string(), LoadMode::training);
  CHECK(!stripped.has_poses);
  CHECK(stripped.poses.empty());
}

TEST_CASE("generate_dataset: same seed reproduces byte-identical output") {
  TempDir a("dataset_a"), b("dataset_b");
  DatasetOptions opts;
  opts.width = opts.height = 8;
  opts.n_samples = 16;
  generate_dataset(SceneSpec::default_scene(), 6, "sphere", 99, a.path.string(),
                   opts);
  generate_dataset(SceneSpec::default_scene(), 6, "sphere", 99, b.path.string(),
                   opts);
  for (const auto& entry : fs::recursive_directory_iterator(a.path)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path);
    CHECK(slurp(entry.path()) == slurp(b.path / rel));
  }
}

TEST_CASE("generate_dataset: input validation") {
  TempDir dir("dataset_bad");
  CHECK_THROWS_AS(generate_dataset(SceneSpec::default_scene(), 1, "sphere", 1,
                                   dir.path.string()),
                  DataError);
  CHECK_THROWS_AS(generate_dataset(SceneSpec::default_scene(), 4, "orbit", 1,
                                   dir.path.string()),
                  DataError);
  CHECK_THROWS_AS(load_dataset((dir.path / "missing").string(),
                               LoadMode::training),
                  DataError);
}
