#pragma once

#include <vector>

#include "splatbridge/dataset.hpp"
#include "splatbridge/frontend.hpp"
#include "splatbridge/rasterizer.hpp"

namespace splatbridge {

struct BridgeConfig {
  double alpha = 0.75;   // covisibility upper bound, fraction of T
  int beta = 20;         // minimum matches
  double gamma = 0.99;   // border-mask gate threshold
  double w1 = 1.5;       // reprojection weight
  double w2 = 0.5;       // color rendering weight
  double w3 = 1.0;       // depth rendering weight
  int iterations = 10;   // alternating optimization cycles
  double huber_delta = 2.0;
  // D_c interpretation: true = frame sensor depth, false = projected sparse
  // landmark raster.
  bool dense_cloud_depth = true;
};

// Reconstruction viewpoint rule: beta <= M < alpha * T.
bool select_viewpoint(int matched, int total, const BridgeConfig& cfg);

// G(p) = [cloud_depth > 0] and [rendered depth > 0] and [border mask > gamma].
ImageB compute_gate(const ImageF& cloud_depth, const RenderOutput& rendered,
                    double gamma);

struct JointOptimizeResult {
  SE3Pose pose;
  struct TraceEntry {
    double total = 0, reprojection = 0, color = 0, depth = 0;
    int gated_pixels = 0;
  };
  std::vector<TraceEntry> trace;  // per evaluated iterate
  bool no_gated_pixels = false;   // gate was empty at some iterate
  bool insufficient_matches = false;  // < 6 landmark matches
};

// Alternating optimization of the rendering pose: per cycle one LM step on
// the reprojection term, then one damped gradient step on the gated
// color+depth rendering term. Returns the iterate with the lowest total
// loss w1*L_rpj + w2*L_c + w3*L_d.
JointOptimizeResult joint_optimize_pose(
    const Frame& frame, const std::vector<PointPixelMatch>& visible_landmarks,
    const GaussianMap& map, const CameraIntrinsics& K, const SE3Pose& init,
    const BridgeConfig& cfg, const RenderOptions& render_options);

}  // namespace splatbridge
