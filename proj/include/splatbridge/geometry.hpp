#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace splatbridge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;  // twist [omega; v]

// Rigid camera-to-world transform. Stored as rotation matrix + translation;
// quaternions appear only at file-format boundaries.
struct SE3Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  SE3Pose() = default;
  SE3Pose(const Mat3& R, const Vec3& t) : rotation(R), translation(t) {}

  SE3Pose inverse() const {
    return SE3Pose(rotation.transpose(), -(rotation.transpose() * translation));
  }

  SE3Pose operator*(const SE3Pose& other) const {
    return SE3Pose(rotation * other.rotation,
                   rotation * other.translation + translation);
  }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  bool is_valid_rotation(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Mat3::Identity()).norm() < tol &&
           rotation.determinant() > 0.0;
  }
};

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && cx > 0 && cx < width && cy > 0 && cy < height;
  }
};

struct PixelCoord {
  double u = 0, v = 0;
};

Mat3 skew(const Vec3& w);

// Exponential map of se(3); total function of a finite twist.
SE3Pose se3_exp(const Vec6& twist);

// Inverse of se3_exp for rotations with angle < pi.
Vec6 se3_log(const SE3Pose& pose);

struct ProjectedPoint {
  PixelCoord pixel;
  double depth = 0;       // camera-frame z
  bool behind_camera = false;  // z <= 1e-9, pixel undefined
};

ProjectedPoint project_point(const CameraIntrinsics& K,
                             const SE3Pose& world_from_camera, const Vec3& p);

// Inverse of project_point on the valid domain; throws on depth <= 0.
Vec3 backproject(const CameraIntrinsics& K, const SE3Pose& world_from_camera,
                 const PixelCoord& pixel, double depth);

}  // namespace splatbridge
