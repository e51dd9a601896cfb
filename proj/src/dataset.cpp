#include "splatbridge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "splatbridge/image_io.hpp"
#include "splatbridge/random.hpp"
#include "splatbridge/rasterizer.hpp"

namespace fs = std::filesystem;

namespace splatbridge {

std::vector<std::pair<int, int>> associate_timestamps(
    const std::vector<double>& a, const std::vector<double>& b,
    double max_diff) {
  std::vector<std::pair<int, int>> pairs;
  size_t i = 0, j = 0;
  const double inf = std::numeric_limits<double>::infinity();
  while (i < a.size() && j < b.size()) {
    const double dt = a[i] - b[j];
    if (dt < -max_diff) {
      ++i;
      continue;
    }
    if (dt > max_diff) {
      ++j;
      continue;
    }
    const double cur = std::abs(dt);
    const double skip_a = i + 1 < a.size() ? std::abs(a[i + 1] - b[j]) : inf;
    const double skip_b = j + 1 < b.size() ? std::abs(a[i] - b[j + 1]) : inf;
    if (cur <= skip_a && cur <= skip_b) {
      pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
      ++i;
      ++j;
    } else if (skip_a < skip_b) {
      ++i;
    } else if (skip_b < skip_a) {
      ++j;
    } else {
      // exact tie; drop the earlier-stamped entry so the rule is symmetric
      if (a[i] < b[j])
        ++i;
      else
        ++j;
    }
  }
  return pairs;
}

namespace {

struct StampedPath {
  double t;
  std::string path;
};

std::vector<StampedPath> read_index_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("missing-index-file: " + path);
  std::vector<StampedPath> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    StampedPath e;
    if (ss >> e.t >> e.path) out.push_back(e);
  }
  return out;
}

SE3Pose pose_from_tum(double tx, double ty, double tz, double qx, double qy,
                      double qz, double qw) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  q.normalize();
  return SE3Pose(q.toRotationMatrix(), Vec3(tx, ty, tz));
}

Trajectory read_groundtruth_file(const std::string& path) {
  std::ifstream in(path);
  Trajectory traj;
  if (!in) return traj;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)
      traj.emplace_back(t, pose_from_tum(tx, ty, tz, qx, qy, qz, qw));
  }
  return traj;
}

}  // namespace

TumSequence load_tum_sequence(const std::string& directory,
                              double max_time_diff,
                              const CameraIntrinsics& fallback) {
  const fs::path dir(directory);
  const auto rgb = read_index_file((dir / "rgb.txt").string());
  const auto depth = read_index_file((dir / "depth.txt").string());

  CameraIntrinsics K = fallback;
  {
    std::ifstream cam(dir / "camera.txt");
    if (cam) cam >> K.fx >> K.fy >> K.cx >> K.cy >> K.width >> K.height;
  }

  std::vector<double> rgb_t(rgb.size()), depth_t(depth.size());
  for (size_t i = 0; i < rgb.size(); ++i) rgb_t[i] = rgb[i].t;
  for (size_t i = 0; i < depth.size(); ++i) depth_t[i] = depth[i].t;
  const auto pairs = associate_timestamps(rgb_t, depth_t, max_time_diff);
  if (pairs.empty())
    throw std::runtime_error("no-pairs: rgb/depth association yielded zero frames");

  TumSequence seq;
  seq.dropped_rgb = static_cast<int>(rgb.size() - pairs.size());
  seq.dropped_depth = static_cast<int>(depth.size() - pairs.size());
  seq.frames.reserve(pairs.size());
  for (const auto& [ri, di] : pairs) {
    Frame f;
    f.timestamp = rgb[ri].t;
    f.color = load_color_image((dir / rgb[ri].path).string());
    f.depth = load_depth_image((dir / depth[di].path).string());
    f.intrinsics = K;
    if (K.width == 0) {
      f.intrinsics.width = f.color.width();
      f.intrinsics.height = f.color.height();
    }
    seq.frames.push_back(std::move(f));
  }
  seq.ground_truth.trajectory =
      read_groundtruth_file((dir / "groundtruth.txt").string());
  return seq;
}

namespace {

SE3Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = up.cross(forward);
  if (right.norm() < 1e-12) right = Vec3(1, 0, 0);
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 R;
  R.col(0) = right;
  R.col(1) = down;
  R.col(2) = forward;
  return SE3Pose(R, eye);
}

}  // namespace

SyntheticResult generate_synthetic(const SyntheticSpec& spec) {
  if (spec.gaussian_count < 1 || spec.frame_count < 2)
    throw std::invalid_argument("generate_synthetic: degenerate spec");
  if (!(spec.extent > 0))
    throw std::invalid_argument("generate_synthetic: zero extent");

  Rng rng(spec.seed);
  SyntheticResult result;
  GaussianMap scene;
  // Scene lives in a thin spherical shell inside the box: an inward-facing
  // "room" so orbiting viewpoints see a wall, not a see-through cloud, and
  // the visible set actually turns over along the trajectory. Near-opaque
  // blobs keep the rendered depth close to a real surface depth, matching
  // the opaque desk scenes the pipeline targets.
  for (int i = 0; i < spec.gaussian_count; ++i) {
    Gaussian g;
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    const double n = dir.norm();
    dir = n > 1e-12 ? Vec3(dir / n) : Vec3(1, 0, 0);
    g.center = dir * (spec.extent * rng.uniform(0.75, 1.0));
    g.radius = rng.uniform(0.10, 0.22) * std::max(1.0, spec.extent);
    g.color = Vec3(rng.uniform(0.25, 0.9), rng.uniform(0.25, 0.9),
                   rng.uniform(0.25, 0.9));
    g.opacity = rng.uniform(0.85, 0.98);
    scene.add(g);
  }

  // Ground-truth poses from the closed-form trajectory.
  const Vec3 up(0, 0, 1);
  std::vector<SE3Pose> poses(spec.frame_count);
  for (int k = 0; k < spec.frame_count; ++k) {
    if (spec.trajectory == TrajectoryKind::kOrbit) {
      const double phi =
          spec.orbit_arc_deg * M_PI / 180.0 * k / spec.frame_count;
      const Vec3 eye(spec.orbit_radius * std::cos(phi),
                     spec.orbit_radius * std::sin(phi), 0.0);
      poses[k] = look_at(eye, Vec3::Zero(), up);
    } else {
      const double s = double(k) / (spec.frame_count - 1) - 0.5;
      const Vec3 eye(s * spec.line_length, -spec.orbit_radius, 0.0);
      poses[k] = look_at(eye, Vec3::Zero(), up);
    }
  }

  // Landmarks sampled from Gaussian centers (deterministic shuffle).
  const int n_lm = std::min(spec.landmark_count, spec.gaussian_count);
  std::vector<int> idx(spec.gaussian_count);
  for (int i = 0; i < spec.gaussian_count; ++i) idx[i] = i;
  for (int i = spec.gaussian_count - 1; i > 0; --i)
    std::swap(idx[i], idx[rng.uniform_int(0, i)]);
  idx.resize(n_lm);
  std::sort(idx.begin(), idx.end());
  for (int i : idx) result.ground_truth.landmarks.push_back(scene[i].center);

  RenderOptions opts;
  opts.keep_cache = false;
  result.frames.reserve(spec.frame_count);
  result.ground_truth.frame_observations.resize(spec.frame_count);
  for (int k = 0; k < spec.frame_count; ++k) {
    RenderOutput r = render(scene, spec.intrinsics, poses[k], opts);
    Frame f;
    f.timestamp = k / 30.0;  // nominal 30 Hz stamps
    f.color = std::move(r.color);
    f.depth = std::move(r.depth);
    f.intrinsics = spec.intrinsics;
    result.frames.push_back(std::move(f));
    result.ground_truth.trajectory.emplace_back(k / 30.0, poses[k]);

    auto& obs = result.ground_truth.frame_observations[k];
    for (size_t l = 0; l < result.ground_truth.landmarks.size(); ++l) {
      const auto proj =
          project_point(spec.intrinsics, poses[k], result.ground_truth.landmarks[l]);
      if (proj.behind_camera || proj.depth <= opts.near_clip) continue;
      if (proj.pixel.u < 0 || proj.pixel.u > spec.intrinsics.width - 1 ||
          proj.pixel.v < 0 || proj.pixel.v > spec.intrinsics.height - 1)
        continue;
      obs.push_back({static_cast<int>(l), proj.pixel, proj.depth});
    }
  }
  result.ground_truth.scene = std::move(scene);
  return result;
}

Frame add_noise(const Frame& frame, const NoiseParams& params) {
  Frame out = frame;
  Rng rng(params.seed);

  if (params.depth_sigma > 0) {
    for (size_t i = 0; i < out.depth.size(); ++i)
      if (out.depth[i] > 0)
        out.depth[i] = std::max(0.0, out.depth[i] + params.depth_sigma * rng.normal());
  }
  if (params.depth_dropout > 0) {
    for (size_t i = 0; i < out.depth.size(); ++i)
      if (out.depth[i] > 0 && rng.uniform() < params.depth_dropout)
        out.depth[i] = 0;
  }
  if (params.color_sigma > 0) {
    for (size_t i = 0; i < out.color.size(); ++i)
      for (int c = 0; c < 3; ++c)
        out.color[i][c] = std::clamp(
            out.color[i][c] + params.color_sigma * rng.normal(), 0.0, 1.0);
  }
  if (params.blur_kernel >= 3) {
    if (params.blur_kernel % 2 == 0)
      throw std::invalid_argument("add_noise: blur_kernel must be odd or 0");
    const int half = params.blur_kernel / 2;
    const ImageRGB& src = out.color;
    ImageRGB dst(src.width(), src.height());
    for (int y = 0; y < src.height(); ++y) {
      for (int x = 0; x < src.width(); ++x) {
        Vec3 acc = Vec3::Zero();
        int n = 0;
        for (int dy = -half; dy <= half; ++dy) {
          for (int dx = -half; dx <= half; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || xx >= src.width() || yy < 0 || yy >= src.height())
              continue;
            acc += src(xx, yy);
            ++n;
          }
        }
        dst(x, y) = acc / n;
      }
    }
    out.color = std::move(dst);
  }
  return out;
}

void export_tum_sequence(const std::string& directory,
                         const std::vector<Frame>& frames,
                         const GroundTruth& gt) {
  const fs::path dir(directory);
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");

  std::ofstream rgb_index(dir / "rgb.txt");
  std::ofstream depth_index(dir / "depth.txt");
  rgb_index << "# color images\n# timestamp filename\n";
  depth_index << "# depth images\n# timestamp filename\n";
  char name[64];
  for (const Frame& f : frames) {
    std::snprintf(name, sizeof(name), "%.6f.png", f.timestamp);
    save_color_image((dir / "rgb" / name).string(), f.color);
    save_depth_image((dir / "depth" / name).string(), f.depth);
    char stamp[32];
    std::snprintf(stamp, sizeof(stamp), "%.6f", f.timestamp);
    rgb_index << stamp << " rgb/" << name << "\n";
    depth_index << stamp << " depth/" << name << "\n";
  }
  if (!gt.trajectory.empty())
    save_tum_trajectory((dir / "groundtruth.txt").string(), gt.trajectory);
  if (!frames.empty()) {
    const CameraIntrinsics& K = frames.front().intrinsics;
    std::ofstream cam(dir / "camera.txt");
    char line[160];
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g %.17g %d %d\n", K.fx,
                  K.fy, K.cx, K.cy, K.width, K.height);
    cam << line;
  }
}

void save_tum_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("trajectory: cannot open " + path);
  out << "# timestamp tx ty tz qx qy qz qw\n";
  char line[320];
  for (const auto& [t, pose] : traj) {
    const Eigen::Quaterniond q(pose.rotation);
    std::snprintf(line, sizeof(line),
                  "%.6f %.9f %.9f %.9f %.12f %.12f %.12f %.12f\n", t,
                  pose.translation.x(), pose.translation.y(),
                  pose.translation.z(), q.x(), q.y(), q.z(), q.w());
    out << line;
  }
}

Trajectory load_tum_trajectory(const std::string& path) {
  Trajectory traj = read_groundtruth_file(path);
  if (traj.empty())
    throw std::runtime_error("trajectory: no poses in " + path);
  return traj;
}

}  // namespace splatbridge
