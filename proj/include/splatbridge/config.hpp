#pragma once

#include <string>

#include "splatbridge/dataset.hpp"
#include "splatbridge/fusion_bridge.hpp"
#include "splatbridge/mapper.hpp"
#include "splatbridge/rasterizer.hpp"

namespace splatbridge {

// Flat key-value run configuration; defaults follow the system's reference
// hyper-parameter table where one exists.
struct RunConfig {
  // dataset
  std::string dataset = "synthetic";  // "synthetic" or TUM directory path
  double max_time_diff = 0.02;
  SyntheticSpec synthetic;
  NoiseParams noise;
  CameraIntrinsics tum_intrinsics{517.3, 516.5, 318.6, 255.3, 640, 480};

  // frontend
  int target_features = 500;
  int feature_grid = 8;
  int max_hamming = 64;
  double match_ratio = 0.8;
  double huber_delta = 2.0;
  double min_tracked_ratio = 0.7;
  int min_keyframe_gap = 2;
  int oracle_associations = -1;  // -1 auto (synthetic on, tum off), 0, 1
  bool oracle_loop_closure = false;
  int local_ba_window = 5;
  int local_ba_iters = 10;
  int global_ba_iters = 30;
  int track_max_iters = 50;

  BridgeConfig bridge;
  MapperConfig mapper;
  double densify_threshold = 0.5;
  double init_opacity = 0.5;
  RenderOptions raster;

  uint64_t seed = 0;
  std::string output_dir = "out";
  int sample_renders = 5;

  bool use_oracle_associations() const {
    if (oracle_associations >= 0) return oracle_associations != 0;
    return dataset == "synthetic";
  }

  // Applies a "namespace.key=value" override; throws on unknown keys.
  void set(const std::string& key, const std::string& value);

  static RunConfig from_file(const std::string& path);
  void load_overrides_file(const std::string& path);
  void dump(const std::string& path) const;
};

}  // namespace splatbridge
