#pragma once

#include <cstdint>
#include <vector>

#include "splatbridge/geometry.hpp"
#include "splatbridge/image.hpp"
#include "splatbridge/splat_map.hpp"

namespace splatbridge {

struct RenderOptions {
  double near_clip = 0.01;
  double alpha_cutoff = 1.0 / 255.0;
  double transmittance_stop = 1e-4;
  double sigma_extent = 3.0;      // footprint cutoff, in units of r2d
  double r2d_min = 0.3;           // pixels
  Vec3 background = Vec3::Zero();
  bool keep_cache = true;         // retain blend state for backward
};

struct ProjectedGaussian {
  uint32_t source = 0;   // index into the map snapshot
  double u2d = 0, v2d = 0;
  double r2d = 0;        // pixels
  double depth = 0;      // camera-frame z, > near_clip
  Vec3 color = Vec3::Zero();
  double opacity = 0;
  bool r2d_clamped = false;  // r2d hit r2d_min; radius gradient is zero
};

// One blended term: alpha and the transmittance *before* this term.
struct BlendEntry {
  uint32_t proj_index = 0;
  double alpha = 0;
  double trans = 0;
};

struct RenderOutput {
  ImageRGB color;
  ImageF depth;                // 0 where nothing rendered
  ImageF border_mask;          // accumulated blend weight, in [0,1]
  ImageF final_transmittance;

  // Blend cache for the backward pass (keep_cache only).
  std::vector<ProjectedGaussian> projected;  // sorted front-to-back
  std::vector<uint32_t> cache_offset;        // per pixel, into cache
  std::vector<uint32_t> cache_count;
  std::vector<BlendEntry> cache;

  uint64_t map_generation = 0;
  size_t map_size = 0;
  RenderOptions options;
  CameraIntrinsics intrinsics;
  SE3Pose pose;
};

struct GaussianGrads {
  std::vector<Vec3> center;
  std::vector<double> radius;
  std::vector<Vec3> color;
  std::vector<double> opacity;

  void resize_zero(size_t n) {
    center.assign(n, Vec3::Zero());
    radius.assign(n, 0.0);
    color.assign(n, Vec3::Zero());
    opacity.assign(n, 0.0);
  }
};

// Perspective-projects every Gaussian with camera depth > near_clip:
// mu2d = pinhole projection of the center, r2d = max(fx*r/d, r2d_min).
// Sorted by ascending depth, ties broken by insertion id.
std::vector<ProjectedGaussian> project_gaussians(const GaussianMap& map,
                                                 const CameraIntrinsics& K,
                                                 const SE3Pose& world_from_camera,
                                                 const RenderOptions& options);

// Front-to-back alpha blend of color, depth and border mask over 16x16
// pixel tiles. Deterministic for a fixed snapshot/pose/options.
RenderOutput render(const GaussianMap& map, const CameraIntrinsics& K,
                    const SE3Pose& world_from_camera,
                    const RenderOptions& options);

// Analytic gradients of sum_p(grad_color*C + grad_depth*D + grad_mask*M_b)
// with respect to every Gaussian parameter. Throws "stale-cache" if the map
// changed since the forward pass.
GaussianGrads backward_gaussians(const GaussianMap& map, const RenderOutput& out,
                                 const ImageRGB& grad_color,
                                 const ImageF& grad_depth,
                                 const ImageF& grad_mask);

// Gradient of the same scalar with respect to a left-multiplicative twist
// [omega; v] on the camera pose.
Vec6 backward_pose(const GaussianMap& map, const RenderOutput& out,
                   const ImageRGB& grad_color, const ImageF& grad_depth,
                   const ImageF& grad_mask);

// Both gradients from one traversal of the blend cache.
void backward_full(const GaussianMap& map, const RenderOutput& out,
                   const ImageRGB& grad_color, const ImageF& grad_depth,
                   const ImageF& grad_mask, GaussianGrads* gaussian_grads,
                   Vec6* pose_grad);

}  // namespace splatbridge
