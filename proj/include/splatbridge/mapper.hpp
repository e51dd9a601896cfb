#pragma once

#include <vector>

#include "splatbridge/dataset.hpp"
#include "splatbridge/rasterizer.hpp"
#include "splatbridge/splat_map.hpp"

namespace splatbridge {

struct MapperConfig {
  double zeta = 0.3;           // SSIM mix
  double w4 = 0.5;             // depth L1 weight
  double w5 = 1.0;             // color L1 weight
  double tau = 0.005;          // prune threshold
  // Prune upper cutoff. Opacity is box-projected to [0, 1] each step, so a
  // cutoff below 1 would remove every fully converged splat; the default
  // disables the upper prune and leaves it available for exotic configs.
  double max_opacity = 1.0;
  int map_iters = 60;
  double lr_center_scale = 1e-4;  // times median frame depth
  double lr_radius = 1e-3;
  double lr_color = 2.5e-3;
  double lr_opacity = 5e-2;
  double min_radius = 1e-6;
};

// Windowed SSIM (11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03,
// dynamic range 1) averaged over channels and valid pixels, with the
// analytic gradient of the mean with respect to the first image.
struct SsimResult {
  double mean = 0;
  ImageF map;       // per-pixel channel-mean SSIM; zero outside valid region
  ImageRGB grad_a;  // d(mean)/d(a)
};
SsimResult ssim(const ImageRGB& a, const ImageRGB& b);

struct MapFrameSummary {
  int added = 0;
  int pruned = 0;
  double final_loss = 0;
};

// Fixed-pose Gaussian optimization. Holds the per-parameter RMS scaling
// state between steps; state resets whenever the map's structure changes.
class Mapper {
 public:
  explicit Mapper(const MapperConfig& cfg, const RenderOptions& render_options)
      : cfg_(cfg), render_options_(render_options) {
    render_options_.keep_cache = true;
  }

  const MapperConfig& config() const { return cfg_; }

  // Renders, evaluates L_m, backpropagates and applies one gradient step
  // per parameter group. Returns the loss before the step. Throws
  // "empty-overlap" when no pixel has valid frame depth and coverage.
  double mapping_step(GaussianMap& map, const Frame& frame,
                      const SE3Pose& pose);

  // Densify -> map_iters mapping steps -> prune.
  MapFrameSummary map_frame(GaussianMap& map, const Frame& frame,
                            const SE3Pose& pose, double densify_threshold,
                            double init_opacity);

 private:
  void ensure_state(const GaussianMap& map);

  MapperConfig cfg_;
  RenderOptions render_options_;

  uint64_t state_generation_ = ~uint64_t(0);
  int state_step_ = 0;
  std::vector<Vec3> rms_center_;
  std::vector<double> rms_radius_;
  std::vector<Vec3> rms_color_;
  std::vector<double> rms_opacity_;
};

}  // namespace splatbridge
