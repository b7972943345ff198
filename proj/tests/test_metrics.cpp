#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "udnf/metrics.hpp"

using namespace udnf;

namespace {

std::vector<CameraPose> ring_poses(int n, double radius) {
  std::vector<CameraPose> out;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * M_PI * i / n;
    const real y = real(0.4 * std::sin(3 * a));  // off-plane, non-collinear
    out.push_back(pose_lookat<real>({real(radius * std::cos(a)), y,
                                     real(radius * std::sin(a))},
                                    {0, 0, 0}, {0, 1, 0}));
  }
  return out;
}

}  // namespace

TEST_CASE("psnr: cap, reference values, validation") {
  std::vector<float> a(300, 0.5f), b(300, 0.5f);
  CHECK(psnr(a, b) == 99.0);
  for (auto& v : b) v = 0.6f;  // MSE = 0.01
  CHECK(psnr(a, b) == doctest::Approx(20.0));
  for (auto& v : b) v = 0.51f;  // MSE = 1e-4
  CHECK(psnr(a, b) == doctest::Approx(40.0));
  CHECK(psnr(a, b) == psnr(b, a));
  std::vector<float> c(299, 0.0f);
  CHECK_THROWS_AS(psnr(a, c), DataError);
}

TEST_CASE("ssim: identity, constants case, small perturbation, symmetry") {
  const int w = 16, h = 16;
  std::vector<float> a(w * h * 3);
  Rng rng(4);
  for (auto& v : a) v = float(rng.uniform());
  CHECK(ssim(a, a, w, h) == doctest::Approx(1.0));

  std::vector<float> zeros(w * h * 3, 0.0f), ones(w * h * 3, 1.0f);
  // mu=0 vs mu=1, all variances 0: value collapses to C1/(1+C1)
  const double c1 = 0.01 * 0.01;
  CHECK(ssim(zeros, ones, w, h) == doctest::Approx(c1 / (1.0 + c1)));

  auto b = a;
  Rng noise(9);
  for (auto& v : b) v = std::clamp(v + 0.005f * float(noise.normal()), 0.0f, 1.0f);
  const double s = ssim(a, b, w, h);
  CHECK(s < 1.0);
  CHECK(s > 0.9);
  CHECK(ssim(a, b, w, h) == doctest::Approx(ssim(b, a, w, h)));

  std::vector<float> tiny(10 * 10 * 3, 0.0f);
  CHECK_THROWS_AS(ssim(tiny, tiny, 10, 10), DataError);
}

TEST_CASE("pose_eval: exact predictions give zero errors") {
  auto poses = ring_poses(6, 4.0);
  auto err = pose_eval(poses, poses);
  // float32 pose storage puts ~0.01 deg of acos noise on exact inputs
  CHECK(err.mean_rotation_deg < 0.05);
  CHECK(err.mean_translation == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("pose_eval: invariant to a global similarity transform") {
  auto gt = ring_poses(8, 4.0);
  // apply scale 0.5 and a fixed rotation about a skew axis to every pose
  Eigen::Matrix3d g =
      Eigen::AngleAxisd(0.8, Eigen::Vector3d(1, 2, 0.5).normalized())
          .toRotationMatrix();
  const double scale = 0.5;
  std::vector<CameraPose> pred;
  for (const auto& p : gt) {
    Eigen::Matrix3d r;
    Eigen::Vector3d t;
    for (int i = 0; i < 3; ++i) {
      t(i) = p.t[i];
      for (int j = 0; j < 3; ++j) r(i, j) = p.R[i * 3 + j];
    }
    const Eigen::Matrix3d r2 = g * r;
    const Eigen::Vector3d t2 = scale * (g * t);
    CameraPose q;
    for (int i = 0; i < 3; ++i) {
      q.t[i] = real(t2(i));
      for (int j = 0; j < 3; ++j) q.R[i * 3 + j] = real(r2(i, j));
    }
    pred.push_back(q);
  }
  auto err = pose_eval(pred, gt);
  CHECK(err.mean_rotation_deg < 0.05);
  CHECK(err.mean_translation < 1e-4);
}

TEST_CASE("pose_eval: an antipodal camera shows up as ~180 degrees") {
  auto gt = ring_poses(8, 4.0);
  auto pred = gt;
  // flip one camera to the opposite side of the sphere
  pred[3] = pose_lookat<real>({-gt[3].t[0], -gt[3].t[1], -gt[3].t[2]},
                              {0, 0, 0}, {0, 1, 0});
  auto err = pose_eval(pred, gt);
  CHECK(err.rotation_deg[3] > 150.0);
  CHECK(err.translation[3] > 1.0);
}

TEST_CASE("pose_eval: rejects tiny or collinear configurations") {
  auto poses = ring_poses(6, 4.0);
  std::vector<CameraPose> two(poses.begin(), poses.begin() + 2);
  CHECK_THROWS_AS(pose_eval(two, two), DataError);
  CHECK_THROWS_AS(pose_eval(poses, two), DataError);

  std::vector<CameraPose> line;
  for (int i = 0; i < 5; ++i) {
    CameraPose p = poses[0];
    p.t = {real(i), 0, 0};
    line.push_back(p);
  }
  CHECK_THROWS_AS(pose_eval(line, line), DataError);
}
