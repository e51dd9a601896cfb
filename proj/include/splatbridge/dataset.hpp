#pragma once

#include <optional>
#include <string>
#include <vector>

#include "splatbridge/geometry.hpp"
#include "splatbridge/image.hpp"
#include "splatbridge/splat_map.hpp"

namespace splatbridge {

// Timestamped RGB-D pair, the pipeline's input unit.
struct Frame {
  double timestamp = 0;        // seconds
  ImageRGB color;              // [0,1]^3
  ImageF depth;                // meters, 0 = invalid
  CameraIntrinsics intrinsics;
};

// Exact landmark observation for oracle-association runs.
struct OracleObservation {
  int landmark_id = 0;
  PixelCoord pixel;
  double depth = 0;  // camera-frame depth at the true pose
};

struct GroundTruth {
  std::vector<std::pair<double, SE3Pose>> trajectory;  // strictly increasing t
  std::optional<GaussianMap> scene;
  std::vector<Vec3> landmarks;
  // per frame: which landmarks project inside the image, with exact pixels
  std::vector<std::vector<OracleObservation>> frame_observations;
};

struct TumSequence {
  std::vector<Frame> frames;
  GroundTruth ground_truth;
  int dropped_rgb = 0;
  int dropped_depth = 0;
};

// Reads a TUM-layout directory (rgb.txt, depth.txt, optional groundtruth.txt).
// Greedy nearest-timestamp association with difference <= max_time_diff;
// depth images decoded as 16-bit / 5000 meters. Intrinsics come from an
// optional camera.txt in the directory, else from the fallback argument.
TumSequence load_tum_sequence(
    const std::string& directory, double max_time_diff = 0.02,
    const CameraIntrinsics& fallback = {517.3, 516.5, 318.6, 255.3, 640, 480});

enum class TrajectoryKind { kOrbit, kLine };

struct SyntheticSpec {
  int gaussian_count = 250;
  double extent = 1.1;          // scene box half-width, meters
  TrajectoryKind trajectory = TrajectoryKind::kOrbit;
  double orbit_radius = 2.2;
  double orbit_arc_deg = 160.0;
  double line_length = 1.5;
  int frame_count = 50;
  CameraIntrinsics intrinsics{110.0, 110.0, 32.0, 32.0, 64, 64};
  int landmark_count = 200;
  uint64_t seed = 1;
};

struct SyntheticResult {
  std::vector<Frame> frames;
  GroundTruth ground_truth;
};

// Renders a deterministic ground-truth sequence from a random Gaussian
// scene. Frame depth comes from the rendered depth buffer so the map's
// model class can represent the scene exactly.
SyntheticResult generate_synthetic(const SyntheticSpec& spec);

struct NoiseParams {
  double depth_sigma = 0;      // meters
  double depth_dropout = 0;    // fraction in [0,1]
  double color_sigma = 0;
  int blur_kernel = 0;         // odd box-blur width, 0 = none
  uint64_t seed = 0;
};

Frame add_noise(const Frame& frame, const NoiseParams& params);

// Writes frames + ground truth as a TUM-layout directory.
void export_tum_sequence(const std::string& directory,
                         const std::vector<Frame>& frames,
                         const GroundTruth& gt);

// Greedy two-pointer nearest-timestamp association; one-to-one pairs with
// |ta - tb| <= max_diff. Returns index pairs (a, b).
std::vector<std::pair<int, int>> associate_timestamps(
    const std::vector<double>& a, const std::vector<double>& b,
    double max_diff);

using Trajectory = std::vector<std::pair<double, SE3Pose>>;

// TUM trajectory format: "timestamp tx ty tz qx qy qz qw" per line.
void save_tum_trajectory(const std::string& path, const Trajectory& traj);
Trajectory load_tum_trajectory(const std::string& path);

}  // namespace splatbridge
