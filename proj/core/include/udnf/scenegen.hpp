#pragma once

// Procedural ground-truth scenes and dataset generation: analytic sphere
// scenes rendered through the standard renderer from known camera poses,
// written as images + a JSON manifest with a train/test split.

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "udnf/image_io.hpp"
#include "udnf/nerf.hpp"

namespace udnf {

struct ScenePrimitive {
  std::array<double, 3> center{0, 0, 0};
  double radius = 0.5;
  std::array<double, 3> rgb{1, 1, 1};
  double sigma = 20.0;
};

struct SceneSpec {
  std::vector<ScenePrimitive> spheres;
  std::array<double, 3> background{1, 1, 1};
  double extent = 1.0;  // all primitives must fit in [-extent, extent]^3

  // Three spheres with distinct radii and colors, centers non-coplanar with
  // the origin: no rotational symmetry, so camera pose is identifiable up to
  // the global gauge.
  static SceneSpec default_scene() {
    SceneSpec s;
    s.spheres = {{{0.35, 0.10, 0.15}, 0.40, {0.85, 0.15, 0.15}, 20.0},
                 {{-0.40, -0.15, 0.30}, 0.30, {0.15, 0.75, 0.20}, 20.0},
                 {{0.05, 0.45, -0.40}, 0.25, {0.15, 0.25, 0.90}, 20.0}};
    return s;
  }

  void validate() const {
    for (const auto& p : spheres) {
      if (p.sigma <= 0) throw DataError("scene: primitive sigma must be > 0");
      if (p.radius <= 0) throw DataError("scene: primitive radius must be > 0");
      for (int i = 0; i < 3; ++i)
        if (std::abs(p.center[i]) + p.radius > extent)
          throw DataError("scene: primitive escapes the world extent");
    }
  }
};

// Analytic field: inside any sphere, sigma and color come from the sphere
// whose center is nearest (documented overlap rule); elsewhere sigma = 0.
template <typename T>
FunctionFieldT<T> build_scene(const SceneSpec& spec) {
  spec.validate();
  auto pick = [spheres = spec.spheres](double x, double y,
                                       double z) -> const ScenePrimitive* {
    const ScenePrimitive* best = nullptr;
    double best_d = 0;
    for (const auto& p : spheres) {
      const double dx = x - p.center[0], dy = y - p.center[1],
                   dz = z - p.center[2];
      const double d = dx * dx + dy * dy + dz * dz;
      if (d <= p.radius * p.radius && (!best || d < best_d)) {
        best = &p;
        best_d = d;
      }
    }
    return best;
  };
  return FunctionFieldT<T>(
      [pick](double x, double y, double z) {
        const auto* p = pick(x, y, z);
        return p ? p->sigma : 0.0;
      },
      [pick, bg = spec.background](double x, double y, double z, double* out) {
        const auto* p = pick(x, y, z);
        const auto& c = p ? p->rgb : bg;
        out[0] = c[0];
        out[1] = c[1];
        out[2] = c[2];
      });
}

struct DatasetView {
  std::string file;
  std::array<double, 12> pose{};  // camera-to-world, 3x4 row-major [R | t]
  std::string split = "train";    // "train" or "test"
};

struct DatasetManifest {
  int width = 32, height = 32;
  double focal = 48.0;
  double radius = 4.0;
  double near = 2.0, far = 6.0;
  std::string pose_mode = "semisphere";
  std::string candidate_mode = "semi12";
  std::vector<DatasetView> views;
};

struct DatasetOptions {
  int width = 32, height = 32;
  double focal = 0;  // 0 -> 1.5 * width
  double radius = 4.0;
  double near = 2.0, far = 6.0;
  int n_samples = 128;  // quadrature density for ground-truth renders
  std::string candidate_mode = "semi12";
};

namespace detail {

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["width"] = m.width;
  j["height"] = m.height;
  j["focal"] = m.focal;
  j["radius"] = m.radius;
  j["near"] = m.near;
  j["far"] = m.far;
  j["pose_mode"] = m.pose_mode;
  j["candidate_mode"] = m.candidate_mode;
  j["views"] = nlohmann::json::array();
  for (const auto& v : m.views)
    j["views"].push_back({{"file", v.file}, {"pose", v.pose}, {"split", v.split}});
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.width = j.at("width").get<int>();
  m.height = j.at("height").get<int>();
  m.focal = j.at("focal").get<double>();
  m.radius = j.at("radius").get<double>();
  m.near = j.at("near").get<double>();
  m.far = j.at("far").get<double>();
  m.pose_mode = j.at("pose_mode").get<std::string>();
  m.candidate_mode = j.at("candidate_mode").get<std::string>();
  for (const auto& jv : j.at("views")) {
    DatasetView v;
    v.file = jv.at("file").get<std::string>();
    v.pose = jv.at("pose").get<std::array<double, 12>>();
    v.split = jv.at("split").get<std::string>();
    m.views.push_back(v);
  }
  return m;
}

inline void atomic_write_text(const std::filesystem::path& path,
                              const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp);
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

// Uniform-in-solid-angle camera center at the given radius; `mode` picks the
// region. "semisphere" is the z > 0 hemisphere: that is the half-space the
// candidate-pose construction can reach, so training viewpoints must live
// there. Samples whose direction runs (nearly) parallel to the +y camera-up
// are rejected and redrawn.
inline std::array<double, 3> sample_center(const std::string& mode,
                                           double radius, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    double z;
    if (mode == "sphere")
      z = rng.uniform(-1.0, 1.0);
    else if (mode == "semisphere")
      z = rng.uniform(0.05, 1.0);
    else if (mode == "forward_facing")
      z = rng.uniform(std::cos(25.0 * M_PI / 180.0), 1.0);  // cone around +z
    else
      throw DataError("dataset: unknown pose mode '" + mode + "'");
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    const std::array<double, 3> dir{s * std::cos(phi), s * std::sin(phi), z};
    if (std::abs(dir[1]) > 0.995) continue;  // too close to the up axis
    return {radius * dir[0], radius * dir[1], radius * dir[2]};
  }
  throw DataError("dataset: failed to sample a valid camera center");
}

}  // namespace detail

template <typename T>
std::array<double, 12> pose_to_rows(const CameraPoseT<T>& p) {
  std::array<double, 12> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[r * 4 + c] = double(p.R[r * 3 + c]);
    out[r * 4 + 3] = double(p.t[r]);
  }
  return out;
}

template <typename T>
CameraPoseT<T> pose_from_rows(const std::array<double, 12>& rows) {
  CameraPoseT<T> p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.R[r * 3 + c] = T(rows[r * 4 + c]);
    p.t[r] = T(rows[r * 4 + 3]);
  }
  return p;
}

// Renders `n_views` seeded ground-truth views of the scene into
// out_dir/images/view_###.png plus out_dir/manifest.json. At least 10% of the
// views are reserved for the test split (evenly spaced).
inline DatasetManifest generate_dataset(const SceneSpec& spec, int n_views,
                                        const std::string& pose_mode,
                                        std::uint64_t seed,
                                        const std::string& out_dir,
                                        const DatasetOptions& opts = {}) {
  if (n_views < 2) throw DataError("dataset: need at least 2 views");
  namespace fs = std::filesystem;
  auto field = build_scene<real>(spec);

  DatasetManifest m;
  m.width = opts.width;
  m.height = opts.height;
  m.focal = opts.focal > 0 ? opts.focal : 1.5 * opts.width;
  m.radius = opts.radius;
  m.near = opts.near;
  m.far = opts.far;
  m.pose_mode = pose_mode;
  m.candidate_mode = opts.candidate_mode;

  fs::create_directories(fs::path(out_dir) / "images");
  const auto intr = Intrinsics::centered(m.width, m.height, m.focal);
  RenderConfig rc;
  rc.n_samples = opts.n_samples;
  rc.background = spec.background;

  const int n_test = std::max(1, (n_views + 9) / 10);
  const double stride = double(n_views) / n_test;

  Rng rng(seed);
  for (int i = 0; i < n_views; ++i) {
    const auto eye = detail::sample_center(pose_mode, m.radius, rng);
    const auto pose = pose_lookat<real>(
        {real(eye[0]), real(eye[1]), real(eye[2])}, {0, 0, 0}, {0, 1, 0});
    auto img = render_image(field, pose, intr, real(m.near), real(m.far), rc);

    char name[32];
    std::snprintf(name, sizeof(name), "images/view_%03d.png", i);
    const auto path = fs::path(out_dir) / name;
    const auto tmp = path.string() + ".tmp";
    write_image(tmp, quantize(img.rgb, m.width, m.height));
    fs::rename(tmp, path);

    DatasetView v;
    v.file = name;
    v.pose = pose_to_rows(pose);
    v.split = (int(std::floor(i / stride)) != int(std::floor((i + 1) / stride)))
                  ? "test"
                  : "train";
    m.views.push_back(v);
  }
  detail::atomic_write_text(fs::path(out_dir) / "manifest.json",
                            detail::manifest_to_json(m).dump(2));
  return m;
}

// A dataset in memory. Ground-truth poses are only populated when loaded in
// evaluation mode; the training loader strips them so the unposed pipeline
// cannot touch them.
struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<std::vector<real>> images;     // [0,1] rgb, h*w*3, all views
  std::vector<CameraPose> poses;             // empty when stripped
  std::vector<int> train_indices, test_indices;
  bool has_poses = false;
};

enum class LoadMode { training /* poses stripped */, evaluation };

inline LoadedDataset load_dataset(const std::string& dir, LoadMode mode) {
  namespace fs = std::filesystem;
  const auto manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("dataset: cannot open " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset: bad manifest: " + std::string(e.what()));
  }
  LoadedDataset d;
  try {
    d.manifest = detail::manifest_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset: bad manifest: " + std::string(e.what()));
  }
  d.has_poses = mode == LoadMode::evaluation;
  for (size_t i = 0; i < d.manifest.views.size(); ++i) {
    const auto& v = d.manifest.views[i];
    auto img = read_image((fs::path(dir) / v.file).string());
    if (img.width != d.manifest.width || img.height != d.manifest.height)
      throw DataError("dataset: image size mismatch in " + v.file);
    d.images.push_back(dequantize(img));
    if (d.has_poses) d.poses.push_back(pose_from_rows<real>(v.pose));
    (v.split == "test" ? d.test_indices : d.train_indices).push_back(int(i));
  }
  if (d.train_indices.empty() || d.test_indices.empty())
    throw DataError("dataset: need both train and test views");
  return d;
}

}  // namespace udnf
