#pragma once

// Camera parameterizations and ray generation. The differentiable paths
// (rodrigues, look-at, candidate poses) are built on tensor primitives so
// pose gradients flow back into whatever produced the inputs.

#include <array>
#include <cmath>
#include <vector>

#include "udnf/tensor.hpp"

namespace udnf {

template <typename T>
struct CameraPoseT {
  // camera-to-world: world = R * cam + t
  std::array<T, 9> R{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<T, 3> t{0, 0, 0};
};
using CameraPose = CameraPoseT<real>;

struct Intrinsics {
  double focal = 0;  // pixels
  int width = 0, height = 0;
  double cx = 0, cy = 0;  // principal point, pixels

  static Intrinsics centered(int w, int h, double focal_px) {
    if (focal_px <= 0) throw DataError("intrinsics: focal must be positive");
    if (w < 2 || h < 2) throw DataError("intrinsics: image must be >= 2x2");
    return {focal_px, w, h, 0.5 * w, 0.5 * h};
  }
};

template <typename T>
struct RayBatchT {
  std::vector<T> origins;     // N*3
  std::vector<T> directions;  // N*3, unit
  T near = 0, far = 0;
  std::int64_t count() const { return static_cast<std::int64_t>(origins.size()) / 3; }
};
using RayBatch = RayBatchT<real>;

struct CandidateSpec {
  int k = 0;
  std::vector<std::array<double, 3>> eye_candidates;  // sign/direction seeds
  double radius = 4.0;
  std::array<double, 3> up{0, 1, 0};
  std::array<double, 3> target{0, 0, 0};
};

inline CandidateSpec init_candidates_sphere8() {
  CandidateSpec s;
  s.k = 8;
  for (int i = 0; i < 8; ++i)
    s.eye_candidates.push_back({i & 4 ? -1.0 : 1.0, i & 2 ? -1.0 : 1.0,
                                i & 1 ? -1.0 : 1.0});
  return s;
}

// Three repetitions of the four semi-sphere quadrants (z > 0).
inline CandidateSpec init_candidates_semi12() {
  CandidateSpec s;
  s.k = 12;
  const std::array<std::array<double, 3>, 4> quad = {
      {{1, 1, 1}, {1, -1, 1}, {-1, 1, 1}, {-1, -1, 1}}};
  for (int rep = 0; rep < 3; ++rep)
    for (const auto& q : quad) s.eye_candidates.push_back(q);
  return s;
}

inline CandidateSpec init_candidates_custom(
    const std::vector<std::array<double, 3>>& table) {
  if (table.empty()) throw DataError("init_candidates: empty candidate table");
  for (const auto& row : table)
    if (row[0] == 0 && row[1] == 0 && row[2] == 0)
      throw DataError("init_candidates: zero candidate seed");
  CandidateSpec s;
  s.k = static_cast<int>(table.size());
  s.eye_candidates = table;
  return s;
}

// One repetition of the four semi-sphere quadrants (z > 0).
inline CandidateSpec init_candidates_semi4() {
  auto s = init_candidates_semi12();
  s.k = 4;
  s.eye_candidates.resize(4);
  return s;
}

inline CandidateSpec init_candidates(const std::string& mode) {
  if (mode == "sphere8") return init_candidates_sphere8();
  if (mode == "semi12") return init_candidates_semi12();
  if (mode == "semi4") return init_candidates_semi4();
  throw DataError("init_candidates: unknown mode '" + mode + "'");
}

// ---------------------------------------------------------------------------
// Differentiable small-vector helpers ([3] tensors)

template <typename T>
TensorT<T> tvec3(T x, T y, T z) {
  return TensorT<T>({3}, {x, y, z});
}

template <typename T>
TensorT<T> tcross(const TensorT<T>& a, const TensorT<T>& b) {
  auto ax = slice(a, 0, 0, 1), ay = slice(a, 0, 1, 1), az = slice(a, 0, 2, 1);
  auto bx = slice(b, 0, 0, 1), by = slice(b, 0, 1, 1), bz = slice(b, 0, 2, 1);
  return concat<T>({sub(mul(ay, bz), mul(az, by)),
                    sub(mul(az, bx), mul(ax, bz)),
                    sub(mul(ax, by), mul(ay, bx))},
                   0);
}

template <typename T>
TensorT<T> tdot(const TensorT<T>& a, const TensorT<T>& b) {
  return sum_all(mul(a, b));
}

template <typename T>
TensorT<T> tnorm(const TensorT<T>& v) {
  return sqrt(sum_all(mul(v, v)));
}

template <typename T>
TensorT<T> tnormalize(const TensorT<T>& v) {
  return divide(v, tnorm(v));
}

// ---------------------------------------------------------------------------
// Rodrigues: R = I + sin(phi) [w]x + (1 - cos(phi)) [w]x^2,
// phi = |omega|, w = omega / phi; first-order fallback below 1e-8.

template <typename T>
TensorT<T> skew3(const TensorT<T>& v) {
  auto x = slice(v, 0, 0, 1), y = slice(v, 0, 1, 1), z = slice(v, 0, 2, 1);
  auto zero = TensorT<T>::scalar(T(0));
  auto row0 = concat<T>({zero, neg(z), y}, 0);
  auto row1 = concat<T>({z, zero, neg(x)}, 0);
  auto row2 = concat<T>({neg(y), x, zero}, 0);
  return reshape(concat<T>({row0, row1, row2}, 0), {3, 3});
}

template <typename T>
TensorT<T> identity3() {
  return TensorT<T>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
}

template <typename T>
TensorT<T> rodrigues(const TensorT<T>& omega) {
  if (omega.numel() != 3)
    throw ShapeError("rodrigues: expected 3-vector, got " + shape_str(omega.shape()));
  T nx = omega[0], ny = omega[1], nz = omega[2];
  const double phi_val = std::sqrt(double(nx) * nx + double(ny) * ny + double(nz) * nz);
  if (phi_val < 1e-8) {
    return add(identity3<T>(), skew3(omega));
  }
  auto phi = tnorm(omega);
  auto axis = divide(omega, phi);
  auto k = skew3(axis);
  auto k2 = matmul(k, k);
  auto s = sin(phi);
  auto c = add_scalar(neg(cos(phi)), T(1));  // 1 - cos(phi)
  return add(identity3<T>(), add(mul(k, s), mul(k2, c)));
}

// ---------------------------------------------------------------------------
// Rotation from camera position (rows [right, up, forward]); the camera
// forward axis points along normalize(xyz) and up is derived from +y.

template <typename T>
TensorT<T> rotation_from_position(const TensorT<T>& xyz,
                                  const std::array<double, 3>& in_plane = {0, 0, 0}) {
  if (xyz.numel() != 3)
    throw ShapeError("rotation_from_position: expected 3-vector");
  auto forward = tnormalize(xyz);
  auto tmp = tvec3<T>(0, 1, 0);
  auto crossed = tcross(tmp, forward);
  const double cn = std::sqrt(double(crossed[0]) * crossed[0] +
                              double(crossed[1]) * crossed[1] +
                              double(crossed[2]) * crossed[2]);
  if (cn < 1e-9)
    throw NumericError("rotation_from_position: direction parallel to (0,1,0)");
  auto right = tnormalize(crossed);
  auto up = tcross(forward, right);
  auto r = reshape(concat<T>({right, up, forward}, 0), {3, 3});
  if (in_plane[0] == 0 && in_plane[1] == 0 && in_plane[2] == 0) return r;
  // Euler XYZ in-plane premultiplication
  const double cx = std::cos(in_plane[0]), sx = std::sin(in_plane[0]);
  const double cy = std::cos(in_plane[1]), sy = std::sin(in_plane[1]);
  const double cz = std::cos(in_plane[2]), sz = std::sin(in_plane[2]);
  // Rx * Ry * Rz
  const std::vector<T> e = {
      T(cy * cz), T(-cy * sz), T(sy),
      T(cx * sz + sx * sy * cz), T(cx * cz - sx * sy * sz), T(-sx * cy),
      T(sx * sz - cx * sy * cz), T(sx * cz + cx * sy * sz), T(cx * cy)};
  return matmul(TensorT<T>({3, 3}, e), r);
}

// ---------------------------------------------------------------------------
// Look-at (row-stacked 4x4, columns [side, up', -forward], camera center in
// the last row) and its inversion into a camera-to-world pose.

template <typename T>
TensorT<T> lookat(const TensorT<T>& eye, const TensorT<T>& target,
                  const TensorT<T>& up_hint) {
  auto diff = sub(target, eye);
  const double dn = std::sqrt(double(diff[0]) * diff[0] + double(diff[1]) * diff[1] +
                              double(diff[2]) * diff[2]);
  if (dn < 1e-12) throw NumericError("lookat: eye equals target");
  auto forward = tnormalize(diff);
  auto crossed = tcross(forward, up_hint);
  const double cn = std::sqrt(double(crossed[0]) * crossed[0] +
                              double(crossed[1]) * crossed[1] +
                              double(crossed[2]) * crossed[2]);
  if (cn < 1e-9) throw NumericError("lookat: view direction parallel to up");
  auto side = tnormalize(crossed);
  auto up = tnormalize(tcross(side, forward));
  auto zero = TensorT<T>::scalar(T(0));
  auto one = TensorT<T>::scalar(T(1));
  std::vector<TensorT<T>> rows;
  for (int i = 0; i < 3; ++i)
    rows.push_back(concat<T>({slice(side, 0, i, 1), slice(up, 0, i, 1),
                              neg(slice(forward, 0, i, 1)), zero},
                             0));
  rows.push_back(concat<T>({neg(tdot(side, eye)), neg(tdot(up, eye)),
                            tdot(forward, eye), one},
                           0));
  return reshape(concat<T>(rows, 0), {4, 4});
}

template <typename T>
struct PoseTensors {
  TensorT<T> R;  // [3,3] camera-to-world
  TensorT<T> t;  // [3]
};

template <typename T>
PoseTensors<T> c2w_from_lookat(const TensorT<T>& look_at, bool checked = false) {
  if (look_at.shape() != Shape{4, 4})
    throw ShapeError("c2w_from_lookat: expected 4x4, got " + shape_str(look_at.shape()));
  auto r = slice(slice(look_at, 0, 0, 3), 1, 0, 3);
  if (checked) {
    // R^T R = I within 1e-5
    double err = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0;
        for (int k = 0; k < 3; ++k) acc += double(r[k * 3 + i]) * r[k * 3 + j];
        err = std::max(err, std::abs(acc - (i == j ? 1.0 : 0.0)));
      }
    if (err > 1e-5)
      throw NumericError("c2w_from_lookat: upper 3x3 not orthonormal");
  }
  auto last = slice(slice(look_at, 0, 3, 1), 1, 0, 3);  // [1,3]
  auto ts = neg(matmul(r, transpose2d(last)));          // [3,1]
  return {r, reshape(ts, {3})};
}

// Code-3 candidate pose: sigmoid slice of the head output, pushed into the
// candidate's octant, mapped through rotation-from-position and look-at.
template <typename T>
PoseTensors<T> candidate_pose(const TensorT<T>& h1, int index,
                              const CandidateSpec& spec) {
  if (index < 0 || index >= spec.k)
    throw DataError("candidate_pose: index " + std::to_string(index) +
                    " out of range for K=" + std::to_string(spec.k));
  if (h1.numel() != 3 * spec.k)
    throw ShapeError("candidate_pose: head output length " +
                     std::to_string(h1.numel()) + " != 3K=" +
                     std::to_string(3 * spec.k));
  auto v = sigmoid(slice(h1, 0, 3 * index, 3));
  const auto& e = spec.eye_candidates[index];
  v = mul(v, tvec3<T>(T(e[0]), T(e[1]), T(e[2])));
  v = tnormalize(v);
  auto r1 = rotation_from_position(v);
  auto init_pos = TensorT<T>({3, 1}, {T(0), T(0), T(spec.radius)});
  auto eye = reshape(matmul(r1, init_pos), {3});
  auto target = tvec3<T>(T(spec.target[0]), T(spec.target[1]), T(spec.target[2]));
  auto up = tvec3<T>(T(spec.up[0]), T(spec.up[1]), T(spec.up[2]));
  return c2w_from_lookat(lookat(eye, target, up));
}

// ---------------------------------------------------------------------------
// Plain pose helpers

template <typename T>
CameraPoseT<T> pose_from_tensors(const PoseTensors<T>& p) {
  CameraPoseT<T> out;
  for (int i = 0; i < 9; ++i) out.R[i] = p.R[i];
  for (int i = 0; i < 3; ++i) out.t[i] = p.t[i];
  return out;
}

template <typename T>
PoseTensors<T> pose_to_tensors(const CameraPoseT<T>& p) {
  return {TensorT<T>({3, 3}, std::vector<T>(p.R.begin(), p.R.end())),
          TensorT<T>({3}, std::vector<T>(p.t.begin(), p.t.end()))};
}

template <typename T>
double orthonormality_error(const CameraPoseT<T>& p) {
  double err = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += double(p.R[k * 3 + i]) * p.R[k * 3 + j];
      err = std::max(err, std::abs(acc - (i == j ? 1.0 : 0.0)));
    }
  return err;
}

template <typename T>
double rotation_det(const CameraPoseT<T>& p) {
  const auto& m = p.R;
  return double(m[0]) * (double(m[4]) * m[8] - double(m[5]) * m[7]) -
         double(m[1]) * (double(m[3]) * m[8] - double(m[5]) * m[6]) +
         double(m[2]) * (double(m[3]) * m[7] - double(m[4]) * m[6]);
}

// Non-differentiable convenience: camera looking at `target` from `eye`.
template <typename T>
CameraPoseT<T> pose_lookat(const std::array<T, 3>& eye,
                           const std::array<T, 3>& target,
                           const std::array<T, 3>& up) {
  NoTapeScopeT<T> guard;
  auto la = lookat(TensorT<T>({3}, {eye[0], eye[1], eye[2]}),
                   TensorT<T>({3}, {target[0], target[1], target[2]}),
                   TensorT<T>({3}, {up[0], up[1], up[2]}));
  return pose_from_tensors(c2w_from_lookat(la));
}

// ---------------------------------------------------------------------------
// Pinhole ray generation. Camera-space direction of pixel (row v, col u) is
// ((u+0.5-cx)/f, -(v+0.5-cy)/f, -1), rotated into world space and normalized.
// `pixels` selects a subset of pixel indices (row-major); empty = all.

template <typename T>
RayBatchT<T> generate_rays(const CameraPoseT<T>& pose, const Intrinsics& intr,
                           T near, T far,
                           const std::vector<std::int64_t>& pixels = {}) {
  if (!(near < far)) throw DataError("generate_rays: near must be < far");
  const std::int64_t total = std::int64_t(intr.width) * intr.height;
  std::int64_t n = pixels.empty() ? total : static_cast<std::int64_t>(pixels.size());
  RayBatchT<T> rays;
  rays.near = near;
  rays.far = far;
  rays.origins.resize(n * 3);
  rays.directions.resize(n * 3);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t p = pixels.empty() ? i : pixels[i];
    const std::int64_t v = p / intr.width;
    const std::int64_t u = p % intr.width;
    const double dx = (u + 0.5 - intr.cx) / intr.focal;
    const double dy = -(v + 0.5 - intr.cy) / intr.focal;
    const double dz = -1.0;
    double wx = double(pose.R[0]) * dx + double(pose.R[1]) * dy + double(pose.R[2]) * dz;
    double wy = double(pose.R[3]) * dx + double(pose.R[4]) * dy + double(pose.R[5]) * dz;
    double wz = double(pose.R[6]) * dx + double(pose.R[7]) * dy + double(pose.R[8]) * dz;
    const double len = std::sqrt(wx * wx + wy * wy + wz * wz);
    rays.directions[i * 3 + 0] = T(wx / len);
    rays.directions[i * 3 + 1] = T(wy / len);
    rays.directions[i * 3 + 2] = T(wz / len);
    rays.origins[i * 3 + 0] = pose.t[0];
    rays.origins[i * 3 + 1] = pose.t[1];
    rays.origins[i * 3 + 2] = pose.t[2];
  }
  return rays;
}

// Differentiable ray generation from pose tensors; origins [N,3], unit
// directions [N,3] with gradients flowing into R and t.
template <typename T>
struct RayTensors {
  TensorT<T> origins;     // [N,3]
  TensorT<T> directions;  // [N,3]
  T near, far;
};

template <typename T>
RayTensors<T> generate_rays_diff(const PoseTensors<T>& pose,
                                 const Intrinsics& intr, T near, T far,
                                 const std::vector<std::int64_t>& pixels = {}) {
  if (!(near < far)) throw DataError("generate_rays: near must be < far");
  const std::int64_t total = std::int64_t(intr.width) * intr.height;
  const std::int64_t n =
      pixels.empty() ? total : static_cast<std::int64_t>(pixels.size());
  std::vector<T> cam(n * 3);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t p = pixels.empty() ? i : pixels[i];
    const std::int64_t v = p / intr.width;
    const std::int64_t u = p % intr.width;
    cam[i * 3 + 0] = T((u + 0.5 - intr.cx) / intr.focal);
    cam[i * 3 + 1] = T(-(v + 0.5 - intr.cy) / intr.focal);
    cam[i * 3 + 2] = T(-1);
  }
  TensorT<T> cam_dirs({n, 3}, std::move(cam));
  auto world = matmul(cam_dirs, transpose2d(pose.R));  // rows: R * d
  auto len = sqrt(reduce_sum(mul(world, world), 1, true));
  auto dirs = divide(world, len);
  auto origins = broadcast_to(reshape(pose.t, {1, 3}), {n, 3});
  return {origins, dirs, near, far};
}

}  // namespace udnf
