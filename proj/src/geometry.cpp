#include "splatbridge/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace splatbridge {

Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

SE3Pose se3_exp(const Vec6& twist) {
  const Vec3 omega = twist.head<3>();
  const Vec3 v = twist.tail<3>();
  const double theta = omega.norm();
  const Mat3 W = skew(omega);
  const Mat3 W2 = W * W;

  double a, b, c;  // coefficients of sin/cos series for R and V
  if (theta < 1e-8) {
    // Taylor expansions around theta = 0
    a = 1.0 - theta * theta / 6.0;
    b = 0.5 - theta * theta / 24.0;
    c = 1.0 / 6.0 - theta * theta / 120.0;
  } else {
    const double t2 = theta * theta;
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / t2;
    c = (theta - std::sin(theta)) / (t2 * theta);
  }

  SE3Pose out;
  out.rotation = Mat3::Identity() + a * W + b * W2;
  const Mat3 V = Mat3::Identity() + b * W + c * W2;
  out.translation = V * v;
  return out;
}

Vec6 se3_log(const SE3Pose& pose) {
  // Quaternion extraction is well conditioned for every angle < pi.
  Eigen::Quaterniond q(pose.rotation);
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  const Vec3 qv(q.x(), q.y(), q.z());
  const double sin_half = qv.norm();
  const double theta = 2.0 * std::atan2(sin_half, q.w());

  Vec3 omega;
  if (sin_half < 1e-9) {
    omega = 2.0 * qv;  // theta ~ 0: omega = 2 q_vec to first order
  } else {
    omega = (theta / sin_half) * qv;
  }

  const Mat3 W = skew(omega);
  const Mat3 W2 = W * W;
  Mat3 Vinv;
  if (theta < 1e-8) {
    Vinv = Mat3::Identity() - 0.5 * W + W2 / 12.0;
  } else {
    const double coef =
        (1.0 - 0.5 * theta * std::sin(theta) / (1.0 - std::cos(theta))) /
        (theta * theta);
    Vinv = Mat3::Identity() - 0.5 * W + coef * W2;
  }

  Vec6 twist;
  twist.head<3>() = omega;
  twist.tail<3>() = Vinv * pose.translation;
  return twist;
}

ProjectedPoint project_point(const CameraIntrinsics& K,
                             const SE3Pose& world_from_camera, const Vec3& p) {
  const Vec3 q = world_from_camera.rotation.transpose() *
                 (p - world_from_camera.translation);
  ProjectedPoint out;
  out.depth = q.z();
  if (q.z() <= 1e-9) {
    out.behind_camera = true;
    return out;
  }
  out.pixel.u = K.fx * q.x() / q.z() + K.cx;
  out.pixel.v = K.fy * q.y() / q.z() + K.cy;
  return out;
}

Vec3 backproject(const CameraIntrinsics& K, const SE3Pose& world_from_camera,
                 const PixelCoord& pixel, double depth) {
  if (!(depth > 0))
    throw std::invalid_argument("backproject: depth must be > 0");
  const Vec3 q((pixel.u - K.cx) * depth / K.fx, (pixel.v - K.cy) * depth / K.fy,
               depth);
  return world_from_camera * q;
}

}  // namespace splatbridge
