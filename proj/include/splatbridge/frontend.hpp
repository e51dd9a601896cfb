#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "splatbridge/geometry.hpp"
#include "splatbridge/image.hpp"

namespace splatbridge {

using Descriptor = std::array<uint64_t, 4>;  // 256-bit binary descriptor

struct Feature {
  PixelCoord pixel;
  Descriptor descriptor{};
  double depth = 0;       // meters; <= 0 means absent
  int landmark_id = -1;   // -1 = not linked
  double score = 0;
};

struct LandmarkObservation {
  int keyframe_id = 0;
  int feature_index = 0;
};

struct Landmark {
  int id = 0;
  Vec3 position = Vec3::Zero();  // world, meters
  std::vector<LandmarkObservation> observations;
};

struct Keyframe {
  int id = 0;
  int frame_index = 0;
  double timestamp = 0;
  SE3Pose pose;
  std::vector<Feature> features;
  std::map<int, int> covisibility;  // keyframe_id -> shared-landmark count
};

struct TrackState {
  int matched_count = 0;   // M
  int previous_total = 0;  // T
  SE3Pose last_pose;
  Vec6 velocity = Vec6::Zero();  // motion-model twist
  int frames_since_keyframe = 0;
};

// Corner detection with a min-eigenvalue score, grid-bucketed for spatial
// uniformity; each feature carries a 256-bit intensity-comparison
// descriptor sampled from a fixed pattern.
std::vector<Feature> detect_features(const ImageF& gray, int target_count,
                                     int grid_x, int grid_y);

int hamming_distance(const Descriptor& a, const Descriptor& b);

// Mutual-nearest-neighbor matching with a Hamming threshold and a
// best/second-best ratio test; result is one-to-one.
std::vector<std::pair<int, int>> match_features(
    const std::vector<Feature>& a, const std::vector<Feature>& b,
    int max_hamming, double ratio);

// Reprojection residual r = observed - projected, with analytic Jacobians
// against a left-multiplicative pose twist [omega; v] and the world point.
struct ReprojectionJacobian {
  Vec2 residual = Vec2::Zero();
  Eigen::Matrix<double, 2, 6> d_twist = Eigen::Matrix<double, 2, 6>::Zero();
  Eigen::Matrix<double, 2, 3> d_point = Eigen::Matrix<double, 2, 3>::Zero();
  bool behind_camera = false;
};
ReprojectionJacobian reprojection_jacobian(const CameraIntrinsics& K,
                                           const SE3Pose& world_from_camera,
                                           const Vec3& point,
                                           const PixelCoord& observed);

struct PointPixelMatch {
  Vec3 point = Vec3::Zero();
  PixelCoord pixel;
};

struct TrackResult {
  SE3Pose pose;
  std::vector<bool> inlier_mask;
  double final_cost = 0;
  int iterations = 0;
};

// Levenberg-Marquardt over a 6-dof twist minimizing the Huber-robustified
// reprojection cost. Throws "insufficient-matches" (< 6) and "diverged".
TrackResult track_pose(const std::vector<PointPixelMatch>& matches,
                       const CameraIntrinsics& K, const SE3Pose& initial,
                       double huber_delta, int max_iters = 50);

bool select_keyframe(const TrackState& state, double min_tracked_ratio,
                     int min_frames_gap);

// Spawns a landmark for every feature with valid depth and no landmark link,
// back-projected through the keyframe pose. Links the features in place.
std::vector<Landmark> create_landmarks(Keyframe& kf, const CameraIntrinsics& K,
                                       int first_landmark_id);

// Symmetric covisibility update for a newly linked keyframe.
void add_keyframe_covisibility(std::vector<Keyframe>& keyframes,
                               const std::vector<Landmark>& landmarks,
                               int keyframe_id);

struct BundleAdjustResult {
  double final_cost = 0;
  int iterations = 0;
};

// Joint LM refinement of poses and points (Schur complement on landmarks).
// Preconditions: >= 2 keyframes, every landmark >= 2 observations.
BundleAdjustResult bundle_adjust(std::vector<Keyframe>& keyframes,
                                 std::vector<Landmark>& landmarks,
                                 const CameraIntrinsics& K, bool fix_first,
                                 int max_iters, double huber_delta = 2.0);

}  // namespace splatbridge
