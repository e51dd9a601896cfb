#pragma once

#include <string>
#include <vector>

#include "splatbridge/config.hpp"
#include "splatbridge/eval.hpp"
#include "splatbridge/frontend.hpp"

namespace splatbridge {

struct FrameLog {
  int frame = 0;
  double timestamp = 0;
  bool keyframe = false;
  bool reconstruction = false;
  bool bootstrap = false;      // first reconstruction frame
  bool track_fallback = false;  // motion model used (too few matches)
  int covis_m = 0, covis_t = 0;
  int track_matches = 0, track_inliers = 0;
  double joint_initial = 0, joint_final = 0;
  int map_added = 0, map_pruned = 0;
  double map_loss = 0;
  FrameTiming timing;
  double psnr = 0, ssim = 0;
};

struct PipelineResult {
  Trajectory trajectory;  // per input frame, after global-BA correction
  MetricsReport metrics;
  FpsReport fps;
  GaussianMap map;
  std::vector<Keyframe> keyframes;
  std::vector<FrameLog> log;
  GroundTruth ground_truth;
  std::vector<Frame> frames;
};

// Full pipeline: track -> keyframes -> viewpoint selection -> joint pose
// optimization -> mapping, then global bundle adjustment and the offline
// evaluation pass. Throws "no-reconstruction-frames" when nothing maps.
PipelineResult run_pipeline(const RunConfig& cfg);

// trajectory.txt, metrics.txt, timings.txt, frames.csv, map checkpoint,
// effective config and sampled renders under cfg.output_dir.
void write_artifacts(const RunConfig& cfg, const PipelineResult& result);

struct SweepRow {
  int iterations = 0;
  double alpha = 0;
  bool failed = false;
  std::string error;
  double fps = 0, psnr = 0, ssim = 0, rmse_cm = 0;
};

std::vector<SweepRow> run_sweep(const RunConfig& base,
                                const std::vector<int>& t_values,
                                const std::vector<double>& alpha_values);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace splatbridge
