#pragma once

// Shared random fixtures for rasterizer/mapper/bridge tests.

#include "splatbridge/geometry.hpp"
#include "splatbridge/random.hpp"
#include "splatbridge/rasterizer.hpp"
#include "splatbridge/splat_map.hpp"

namespace splatbridge::testing {

inline CameraIntrinsics small_camera(int size = 16, double f = 20.0) {
  return {f, f, size / 2.0, size / 2.0, size, size};
}

// Random scene in front of the camera. Opacities stay below 0.95 and radii
// keep r2d above the clamp so gradients are smooth for finite differences.
inline GaussianMap random_scene(Rng& rng, int count,
                                const CameraIntrinsics& K,
                                double min_opacity = 0.1,
                                double max_opacity = 0.9) {
  GaussianMap map;
  for (int i = 0; i < count; ++i) {
    Gaussian g;
    const double depth = rng.uniform(1.2, 3.0);
    const double u = rng.uniform(1.0, K.width - 1.0);
    const double v = rng.uniform(1.0, K.height - 1.0);
    g.center = Vec3((u - K.cx) * depth / K.fx, (v - K.cy) * depth / K.fy,
                    depth);
    g.radius = rng.uniform(0.05, 0.25);  // r2d in [fx*0.05/3, ...] > r2d_min
    g.color = Vec3(rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0),
                   rng.uniform(0.05, 1.0));
    g.opacity = rng.uniform(min_opacity, max_opacity);
    map.add(g);
  }
  return map;
}

inline SE3Pose random_pose_near_identity(Rng& rng, double magnitude) {
  Vec6 twist;
  for (int i = 0; i < 6; ++i) twist[i] = rng.uniform(-magnitude, magnitude);
  return se3_exp(twist);
}

inline bool same_vec3(const Vec3& a, const Vec3& b) {
  return a.x() == b.x() && a.y() == b.y() && a.z() == b.z();
}

inline bool same_rgb(const Image<Vec3>& a, const Image<Vec3>& b) {
  if (!a.same_size(b)) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (!same_vec3(a[i], b[i])) return false;
  return true;
}

// Cutoff-free options for gradient checks (smooth everywhere).
inline RenderOptions relaxed_options() {
  RenderOptions opts;
  opts.alpha_cutoff = 0.0;
  opts.transmittance_stop = 0.0;
  opts.sigma_extent = 1e9;
  opts.r2d_min = 0.0;
  opts.near_clip = 0.01;
  opts.background = Vec3(0.1, 0.2, 0.3);
  return opts;
}

}  // namespace splatbridge::testing
