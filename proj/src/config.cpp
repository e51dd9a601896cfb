#include "splatbridge/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace splatbridge {

namespace {

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto d = [&] { return std::stod(value); };
  auto i = [&] { return std::stoi(value); };
  auto u = [&] { return std::stoull(value); };
  auto b = [&] { return parse_bool(value); };

  if (key == "dataset.source") dataset = value;
  else if (key == "dataset.max_time_diff") max_time_diff = d();
  else if (key == "camera.fx") tum_intrinsics.fx = d();
  else if (key == "camera.fy") tum_intrinsics.fy = d();
  else if (key == "camera.cx") tum_intrinsics.cx = d();
  else if (key == "camera.cy") tum_intrinsics.cy = d();
  else if (key == "camera.width") tum_intrinsics.width = i();
  else if (key == "camera.height") tum_intrinsics.height = i();

  else if (key == "synthetic.gaussian_count") synthetic.gaussian_count = i();
  else if (key == "synthetic.extent") synthetic.extent = d();
  else if (key == "synthetic.trajectory")
    synthetic.trajectory =
        value == "line" ? TrajectoryKind::kLine : TrajectoryKind::kOrbit;
  else if (key == "synthetic.orbit_radius") synthetic.orbit_radius = d();
  else if (key == "synthetic.orbit_arc_deg") synthetic.orbit_arc_deg = d();
  else if (key == "synthetic.line_length") synthetic.line_length = d();
  else if (key == "synthetic.frame_count") synthetic.frame_count = i();
  else if (key == "synthetic.landmark_count") synthetic.landmark_count = i();
  else if (key == "synthetic.seed") synthetic.seed = u();
  else if (key == "synthetic.fx") synthetic.intrinsics.fx = d();
  else if (key == "synthetic.fy") synthetic.intrinsics.fy = d();
  else if (key == "synthetic.cx") synthetic.intrinsics.cx = d();
  else if (key == "synthetic.cy") synthetic.intrinsics.cy = d();
  else if (key == "synthetic.width") synthetic.intrinsics.width = i();
  else if (key == "synthetic.height") synthetic.intrinsics.height = i();

  else if (key == "noise.depth_sigma") noise.depth_sigma = d();
  else if (key == "noise.depth_dropout") noise.depth_dropout = d();
  else if (key == "noise.color_sigma") noise.color_sigma = d();
  else if (key == "noise.blur_kernel") noise.blur_kernel = i();
  else if (key == "noise.seed") noise.seed = u();

  else if (key == "frontend.target_features") target_features = i();
  else if (key == "frontend.grid") feature_grid = i();
  else if (key == "frontend.max_hamming") max_hamming = i();
  else if (key == "frontend.match_ratio") match_ratio = d();
  else if (key == "frontend.huber_delta") huber_delta = d();
  else if (key == "frontend.min_tracked_ratio") min_tracked_ratio = d();
  else if (key == "frontend.min_keyframe_gap") min_keyframe_gap = i();
  else if (key == "frontend.oracle_associations")
    oracle_associations = value == "auto" ? -1 : (parse_bool(value) ? 1 : 0);
  else if (key == "frontend.oracle_loop_closure") oracle_loop_closure = b();
  else if (key == "frontend.local_ba_window") local_ba_window = i();
  else if (key == "frontend.local_ba_iters") local_ba_iters = i();
  else if (key == "frontend.global_ba_iters") global_ba_iters = i();
  else if (key == "frontend.track_max_iters") track_max_iters = i();

  else if (key == "bridge.alpha") bridge.alpha = d();
  else if (key == "bridge.beta") bridge.beta = i();
  else if (key == "bridge.gamma") bridge.gamma = d();
  else if (key == "bridge.w1") bridge.w1 = d();
  else if (key == "bridge.w2") bridge.w2 = d();
  else if (key == "bridge.w3") bridge.w3 = d();
  else if (key == "bridge.iterations") bridge.iterations = i();
  else if (key == "bridge.huber_delta") bridge.huber_delta = d();
  else if (key == "bridge.dense_cloud_depth") bridge.dense_cloud_depth = b();

  else if (key == "mapper.zeta") mapper.zeta = d();
  else if (key == "mapper.w4") mapper.w4 = d();
  else if (key == "mapper.w5") mapper.w5 = d();
  else if (key == "mapper.tau") mapper.tau = d();
  else if (key == "mapper.max_opacity") mapper.max_opacity = d();
  else if (key == "mapper.map_iters") mapper.map_iters = i();
  else if (key == "mapper.lr_center_scale") mapper.lr_center_scale = d();
  else if (key == "mapper.lr_radius") mapper.lr_radius = d();
  else if (key == "mapper.lr_color") mapper.lr_color = d();
  else if (key == "mapper.lr_opacity") mapper.lr_opacity = d();

  else if (key == "map.densify_threshold") densify_threshold = d();
  else if (key == "map.init_opacity") init_opacity = d();

  else if (key == "raster.near_clip") raster.near_clip = d();
  else if (key == "raster.alpha_cutoff") raster.alpha_cutoff = d();
  else if (key == "raster.transmittance_stop") raster.transmittance_stop = d();
  else if (key == "raster.sigma_extent") raster.sigma_extent = d();
  else if (key == "raster.r2d_min") raster.r2d_min = d();
  else if (key == "raster.background") {
    std::istringstream ss(value);
    char comma;
    ss >> raster.background.x() >> comma >> raster.background.y() >> comma >>
        raster.background.z();
  }

  else if (key == "run.seed") {
    seed = u();
    synthetic.seed = seed + 1;
    noise.seed = seed + 2;
  }
  else if (key == "run.output") output_dir = value;
  else if (key == "run.sample_renders") sample_renders = i();
  else
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  cfg.load_overrides_file(path);
  return cfg;
}

void RunConfig::load_overrides_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string key, value;
    const auto eq = line.find('=');
    if (eq != std::string::npos) {
      key = line.substr(0, eq);
      value = line.substr(eq + 1);
    } else {
      std::istringstream ss(line);
      ss >> key >> value;
    }
    auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    if (key.empty()) continue;
    try {
      set(key, value);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
}

void RunConfig::dump(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot open " + path);
  char buf[160];
  auto putd = [&](const char* k, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", k, v);
    out << buf;
  };
  auto puti = [&](const char* k, long long v) {
    out << k << " = " << v << "\n";
  };
  auto puts = [&](const char* k, const std::string& v) {
    out << k << " = " << v << "\n";
  };

  puts("dataset.source", dataset);
  putd("dataset.max_time_diff", max_time_diff);
  puti("synthetic.gaussian_count", synthetic.gaussian_count);
  putd("synthetic.extent", synthetic.extent);
  puts("synthetic.trajectory",
       synthetic.trajectory == TrajectoryKind::kLine ? "line" : "orbit");
  putd("synthetic.orbit_radius", synthetic.orbit_radius);
  putd("synthetic.orbit_arc_deg", synthetic.orbit_arc_deg);
  puti("synthetic.frame_count", synthetic.frame_count);
  puti("synthetic.landmark_count", synthetic.landmark_count);
  puti("synthetic.seed", static_cast<long long>(synthetic.seed));
  putd("synthetic.fx", synthetic.intrinsics.fx);
  putd("synthetic.fy", synthetic.intrinsics.fy);
  putd("synthetic.cx", synthetic.intrinsics.cx);
  putd("synthetic.cy", synthetic.intrinsics.cy);
  puti("synthetic.width", synthetic.intrinsics.width);
  puti("synthetic.height", synthetic.intrinsics.height);
  putd("noise.depth_sigma", noise.depth_sigma);
  putd("noise.depth_dropout", noise.depth_dropout);
  putd("noise.color_sigma", noise.color_sigma);
  puti("noise.blur_kernel", noise.blur_kernel);
  puti("frontend.target_features", target_features);
  puti("frontend.grid", feature_grid);
  puti("frontend.max_hamming", max_hamming);
  putd("frontend.match_ratio", match_ratio);
  putd("frontend.huber_delta", huber_delta);
  putd("frontend.min_tracked_ratio", min_tracked_ratio);
  puti("frontend.min_keyframe_gap", min_keyframe_gap);
  puti("frontend.oracle_associations", oracle_associations);
  puti("frontend.oracle_loop_closure", oracle_loop_closure ? 1 : 0);
  puti("frontend.local_ba_window", local_ba_window);
  puti("frontend.local_ba_iters", local_ba_iters);
  puti("frontend.global_ba_iters", global_ba_iters);
  putd("bridge.alpha", bridge.alpha);
  puti("bridge.beta", bridge.beta);
  putd("bridge.gamma", bridge.gamma);
  putd("bridge.w1", bridge.w1);
  putd("bridge.w2", bridge.w2);
  putd("bridge.w3", bridge.w3);
  puti("bridge.iterations", bridge.iterations);
  puti("bridge.dense_cloud_depth", bridge.dense_cloud_depth ? 1 : 0);
  putd("mapper.zeta", mapper.zeta);
  putd("mapper.w4", mapper.w4);
  putd("mapper.w5", mapper.w5);
  putd("mapper.tau", mapper.tau);
  putd("mapper.max_opacity", mapper.max_opacity);
  puti("mapper.map_iters", mapper.map_iters);
  putd("mapper.lr_center_scale", mapper.lr_center_scale);
  putd("mapper.lr_radius", mapper.lr_radius);
  putd("mapper.lr_color", mapper.lr_color);
  putd("mapper.lr_opacity", mapper.lr_opacity);
  putd("map.densify_threshold", densify_threshold);
  putd("map.init_opacity", init_opacity);
  putd("raster.near_clip", raster.near_clip);
  putd("raster.alpha_cutoff", raster.alpha_cutoff);
  putd("raster.transmittance_stop", raster.transmittance_stop);
  putd("raster.sigma_extent", raster.sigma_extent);
  putd("raster.r2d_min", raster.r2d_min);
  puti("run.seed", static_cast<long long>(seed));
  puts("run.output", output_dir);
  puti("run.sample_renders", sample_renders);
}

}  // namespace splatbridge
