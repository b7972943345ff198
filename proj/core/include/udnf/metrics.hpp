#pragma once

// Image-quality metrics (PSNR, SSIM) and gauge-invariant pose evaluation
// (similarity alignment of camera centers, then residual rotation angles).

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <vector>

#include "udnf/geometry.hpp"

namespace udnf {

// 10 log10(1 / MSE) for images in [0,1]; identical images capped at 99 dB.
template <typename T>
double psnr(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() != b.size() || a.empty())
    throw DataError("psnr: size mismatch or empty input");
  double mse = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    mse += d * d;
  }
  mse /= double(a.size());
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5), standard
// constants C1=0.01^2, C2=0.03^2, computed on the channel-mean luminance.
template <typename T>
double ssim(const std::vector<T>& a, const std::vector<T>& b, int width,
            int height, int channels = 3) {
  if (width < 11 || height < 11)
    throw DataError("ssim: image sides must be >= 11, got " +
                    std::to_string(width) + "x" + std::to_string(height));
  const size_t n = size_t(width) * height;
  if (a.size() != n * channels || b.size() != n * channels)
    throw DataError("ssim: buffer size does not match dimensions");

  auto luminance = [&](const std::vector<T>& img) {
    std::vector<double> y(n, 0.0);
    for (size_t p = 0; p < n; ++p) {
      double s = 0;
      for (int c = 0; c < channels; ++c) s += double(img[p * channels + c]);
      y[p] = s / channels;
    }
    return y;
  };
  const auto ya = luminance(a), yb = luminance(b);

  double kernel[11];
  double ksum = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    kernel[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  // separable Gaussian filter, 'valid' region only
  auto blur = [&](const std::vector<double>& img) {
    std::vector<double> tmp(n, 0.0), out(n, 0.0);
    for (int y = 0; y < height; ++y)
      for (int x = 5; x < width - 5; ++x) {
        double s = 0;
        for (int k = 0; k < 11; ++k) s += kernel[k] * img[y * width + x - 5 + k];
        tmp[y * width + x] = s;
      }
    for (int y = 5; y < height - 5; ++y)
      for (int x = 5; x < width - 5; ++x) {
        double s = 0;
        for (int k = 0; k < 11; ++k) s += kernel[k] * tmp[(y - 5 + k) * width + x];
        out[y * width + x] = s;
      }
    return out;
  };

  std::vector<double> aa(n), bb(n), ab(n);
  for (size_t i = 0; i < n; ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  const auto mu_a = blur(ya), mu_b = blur(yb);
  const auto m_aa = blur(aa), m_bb = blur(bb), m_ab = blur(ab);

  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  std::int64_t count = 0;
  for (int y = 5; y < height - 5; ++y)
    for (int x = 5; x < width - 5; ++x) {
      const size_t i = size_t(y) * width + x;
      const double va = m_aa[i] - mu_a[i] * mu_a[i];
      const double vb = m_bb[i] - mu_b[i] * mu_b[i];
      const double cov = m_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
      total += num / den;
      ++count;
    }
  return total / double(count);
}

struct PoseErrors {
  std::vector<double> rotation_deg;  // per camera, after alignment
  std::vector<double> translation;   // per camera center, world units
  double mean_rotation_deg = 0;
  double mean_translation = 0;
};

// Aligns predicted camera centers to ground truth with a closed-form
// similarity (rotation + scale + translation), then reports residual
// per-camera center distances and rotation angles. Errors are invariant to a
// global similarity applied to the predictions.
template <typename T>
PoseErrors pose_eval(const std::vector<CameraPoseT<T>>& pred,
                     const std::vector<CameraPoseT<T>>& gt) {
  if (pred.size() != gt.size())
    throw DataError("pose_eval: prediction/ground-truth count mismatch");
  const int n = int(pred.size());
  if (n < 3) throw DataError("pose_eval: need at least 3 poses");

  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < 3; ++r) {
      src(r, i) = double(pred[i].t[r]);
      dst(r, i) = double(gt[i].t[r]);
    }
  // reject (near-)collinear center configurations: alignment is not unique
  Eigen::Matrix3Xd centered = src.colwise() - src.rowwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto& sv = svd.singularValues();
  if (sv(1) < 1e-9 * std::max(sv(0), 1.0))
    throw DataError("pose_eval: camera centers are collinear");

  const Eigen::Matrix4d sim = Eigen::umeyama(src, dst, /*with_scaling=*/true);
  const Eigen::Matrix3d sr = sim.topLeftCorner<3, 3>();  // scale * rotation
  const Eigen::Vector3d tr = sim.topRightCorner<3, 1>();
  const double scale = std::cbrt(std::abs(sr.determinant()));
  const Eigen::Matrix3d rot = sr / scale;

  PoseErrors out;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d aligned = sr * src.col(i) + tr;
    out.translation.push_back((aligned - dst.col(i)).norm());

    Eigen::Matrix3d rp, rg;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        rp(r, c) = double(pred[i].R[r * 3 + c]);
        rg(r, c) = double(gt[i].R[r * 3 + c]);
      }
    const Eigen::Matrix3d residual = rg.transpose() * rot * rp;
    const double cosang =
        std::clamp((residual.trace() - 1.0) / 2.0, -1.0, 1.0);
    out.rotation_deg.push_back(std::acos(cosang) * 180.0 / M_PI);
  }
  for (int i = 0; i < n; ++i) {
    out.mean_rotation_deg += out.rotation_deg[i] / n;
    out.mean_translation += out.translation[i] / n;
  }
  return out;
}

}  // namespace udnf
