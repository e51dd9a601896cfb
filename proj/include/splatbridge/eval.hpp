#pragma once

#include <map>
#include <string>
#include <vector>

#include "splatbridge/dataset.hpp"
#include "splatbridge/geometry.hpp"
#include "splatbridge/image.hpp"

namespace splatbridge {

// Closed-form rigid alignment (cross-covariance SVD, reflection-corrected,
// no scale) minimizing sum |G*t_est - t_gt|^2 over associated pairs.
SE3Pose align_rigid(const Trajectory& est, const Trajectory& gt,
                    double max_time_diff = 0.02);

// RMSE of translation residuals after align_rigid, in centimeters.
double ate_rmse_cm(const Trajectory& est, const Trajectory& gt,
                   double max_time_diff = 0.02);

// 10*log10(1/MSE) over all channels; identical images report the 99 dB cap.
double psnr(const ImageRGB& a, const ImageRGB& b);

struct FrameTiming {
  double track_ms = 0;
  double bridge_ms = 0;
  double map_ms = 0;
  double total_ms = 0;
};

struct FpsReport {
  double fps = 0;
  double total_seconds = 0;
  int frames = 0;
  std::map<std::string, double> stage_seconds;
};

FpsReport measure_fps(const std::vector<FrameTiming>& timings);

struct FrameMetrics {
  int frame_index = 0;
  double timestamp = 0;
  double psnr = 0;
  double ssim = 0;
  bool reconstruction = false;
};

struct MetricsReport {
  double ate_rmse_cm = 0;
  double psnr = 0;   // mean of per-frame values
  double ssim = 0;
  double fps = 0;
  double psnr_heldout = 0;  // frames that were not reconstruction frames
  double ssim_heldout = 0;
  int frame_count = 0;
  int keyframe_count = 0;
  int reconstruction_count = 0;
  size_t map_size = 0;
  std::vector<FrameMetrics> per_frame;

  // Deterministic metrics only; timing lives in save_timings.
  void save(const std::string& path) const;
  void save_timings(const std::string& path,
                    const FpsReport& fps_report) const;
};

}  // namespace splatbridge
