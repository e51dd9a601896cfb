#include "splatbridge/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace splatbridge {

namespace {
constexpr int kTileSize = 16;
constexpr double kAlphaMax = 0.999;
}  // namespace

std::vector<ProjectedGaussian> project_gaussians(const GaussianMap& map,
                                                 const CameraIntrinsics& K,
                                                 const SE3Pose& world_from_camera,
                                                 const RenderOptions& options) {
  const Mat3 R_cw = world_from_camera.rotation.transpose();
  const Vec3 t = world_from_camera.translation;

  std::vector<ProjectedGaussian> out;
  out.reserve(map.size());
  for (size_t i = 0; i < map.size(); ++i) {
    const Gaussian& g = map[i];
    const Vec3 q = R_cw * (g.center - t);
    if (!(q.z() > options.near_clip)) continue;
    ProjectedGaussian p;
    p.source = static_cast<uint32_t>(i);
    p.u2d = K.fx * q.x() / q.z() + K.cx;
    p.v2d = K.fy * q.y() / q.z() + K.cy;
    p.depth = q.z();
    const double r2d = K.fx * g.radius / q.z();
    p.r2d_clamped = r2d < options.r2d_min;
    p.r2d = p.r2d_clamped ? options.r2d_min : r2d;
    p.color = g.color;
    p.opacity = g.opacity;
    out.push_back(p);
  }
  std::sort(out.begin(), out.end(),
            [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
              if (a.depth != b.depth) return a.depth < b.depth;
              return a.source < b.source;
            });
  return out;
}

RenderOutput render(const GaussianMap& map, const CameraIntrinsics& K,
                    const SE3Pose& world_from_camera,
                    const RenderOptions& options) {
  const int W = K.width, H = K.height;
  RenderOutput out;
  out.color = ImageRGB(W, H, options.background);
  out.depth = ImageF(W, H, 0.0);
  out.border_mask = ImageF(W, H, 0.0);
  out.final_transmittance = ImageF(W, H, 1.0);
  out.map_generation = map.generation();
  out.map_size = map.size();
  out.options = options;
  out.intrinsics = K;
  out.pose = world_from_camera;
  out.projected = project_gaussians(map, K, world_from_camera, options);

  const int tiles_x = (W + kTileSize - 1) / kTileSize;
  const int tiles_y = (H + kTileSize - 1) / kTileSize;
  std::vector<std::vector<uint32_t>> tile_lists(
      static_cast<size_t>(tiles_x) * tiles_y);

  for (uint32_t i = 0; i < out.projected.size(); ++i) {
    const ProjectedGaussian& g = out.projected[i];
    const double e = options.sigma_extent * g.r2d;
    // clamp in double space; the raw bounds can exceed the int range
    const int x0 = int(std::max(0.0, std::floor(g.u2d - e)));
    const int x1 = int(std::min(double(W - 1), std::ceil(g.u2d + e)));
    const int y0 = int(std::max(0.0, std::floor(g.v2d - e)));
    const int y1 = int(std::min(double(H - 1), std::ceil(g.v2d + e)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty)
      for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx)
        tile_lists[static_cast<size_t>(ty) * tiles_x + tx].push_back(i);
  }

  if (options.keep_cache) {
    out.cache_offset.assign(static_cast<size_t>(W) * H, 0);
    out.cache_count.assign(static_cast<size_t>(W) * H, 0);
  }

  // Tiles are independent work units; fixed traversal order keeps the
  // cache layout and any future reduction deterministic.
  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      const auto& list = tile_lists[static_cast<size_t>(ty) * tiles_x + tx];
      if (list.empty()) continue;
      const int px0 = tx * kTileSize, px1 = std::min(W, px0 + kTileSize);
      const int py0 = ty * kTileSize, py1 = std::min(H, py0 + kTileSize);
      for (int y = py0; y < py1; ++y) {
        for (int x = px0; x < px1; ++x) {
          double T = 1.0;
          Vec3 c_acc = Vec3::Zero();
          double d_acc = 0.0, m_acc = 0.0;
          const size_t pix = static_cast<size_t>(y) * W + x;
          if (options.keep_cache)
            out.cache_offset[pix] = static_cast<uint32_t>(out.cache.size());
          for (uint32_t idx : list) {
            const ProjectedGaussian& g = out.projected[idx];
            const double dx = x - g.u2d, dy = y - g.v2d;
            const double n2 = dx * dx + dy * dy;
            const double extent = options.sigma_extent * g.r2d;
            if (n2 > extent * extent) continue;
            double alpha = g.opacity * std::exp(-n2 / (2.0 * g.r2d * g.r2d));
            if (alpha > kAlphaMax) alpha = kAlphaMax;
            if (alpha < options.alpha_cutoff) continue;
            if (options.keep_cache) {
              out.cache.push_back({idx, alpha, T});
              ++out.cache_count[pix];
            }
            const double w = alpha * T;
            c_acc += w * g.color;
            d_acc += w * g.depth;
            m_acc += w;
            T *= (1.0 - alpha);
            if (T < options.transmittance_stop) break;
          }
          out.color(x, y) = c_acc + T * options.background;
          out.depth(x, y) = d_acc;
          out.border_mask(x, y) = m_acc;
          out.final_transmittance(x, y) = T;
        }
      }
    }
  }
  return out;
}

void backward_full(const GaussianMap& map, const RenderOutput& out,
                   const ImageRGB& grad_color, const ImageF& grad_depth,
                   const ImageF& grad_mask, GaussianGrads* gaussian_grads,
                   Vec6* pose_grad) {
  if (map.generation() != out.map_generation || map.size() != out.map_size)
    throw std::runtime_error("stale-cache: map changed since forward pass");
  if (!out.options.keep_cache)
    throw std::runtime_error("stale-cache: render was made without keep_cache");

  const int W = out.intrinsics.width, H = out.intrinsics.height;
  const size_t np = out.projected.size();

  // Gradients in projected/2D space, accumulated over pixels.
  std::vector<double> g_u2d(np, 0.0), g_v2d(np, 0.0), g_r2d(np, 0.0);
  std::vector<double> g_dcam(np, 0.0), g_op(np, 0.0);
  std::vector<Vec3> g_col(np, Vec3::Zero());

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const size_t pix = static_cast<size_t>(y) * W + x;
      const uint32_t count = out.cache_count.empty() ? 0 : out.cache_count[pix];
      if (count == 0) continue;
      const uint32_t off = out.cache_offset[pix];
      const Vec3 gc = grad_color.empty() ? Vec3::Zero() : grad_color(x, y);
      const double gd = grad_depth.empty() ? 0.0 : grad_depth(x, y);
      const double gm = grad_mask.empty() ? 0.0 : grad_mask(x, y);
      if (gc.isZero(0.0) && gd == 0.0 && gm == 0.0) continue;

      // Suffix accumulator: sum_{j>k} alpha_j T_j s_j + T_end * (gc . bg).
      double suffix = out.final_transmittance(x, y) * gc.dot(out.options.background);
      for (int k = static_cast<int>(count) - 1; k >= 0; --k) {
        const BlendEntry& e = out.cache[off + k];
        const ProjectedGaussian& g = out.projected[e.proj_index];
        const double s = gc.dot(g.color) + gd * g.depth + gm;
        const double w = e.alpha * e.trans;

        g_col[e.proj_index] += gc * w;
        g_dcam[e.proj_index] += gd * w;

        const double d_alpha = e.trans * s - suffix / (1.0 - e.alpha);
        suffix += w * s;

        if (e.alpha >= kAlphaMax) continue;  // clamped: d alpha / d params = 0
        const double G = e.alpha / g.opacity;
        g_op[e.proj_index] += d_alpha * G;
        const double dG = d_alpha * g.opacity;
        const double dx = x - g.u2d, dy = y - g.v2d;
        const double inv_r2 = 1.0 / (g.r2d * g.r2d);
        g_u2d[e.proj_index] += dG * G * dx * inv_r2;
        g_v2d[e.proj_index] += dG * G * dy * inv_r2;
        g_r2d[e.proj_index] += dG * G * (dx * dx + dy * dy) * inv_r2 / g.r2d;
      }
    }
  }

  // Chain 2D gradients back to camera-frame points, then to world space.
  const CameraIntrinsics& K = out.intrinsics;
  const Mat3& R = out.pose.rotation;
  if (gaussian_grads) gaussian_grads->resize_zero(map.size());
  Vec6 pg = Vec6::Zero();

  for (size_t i = 0; i < np; ++i) {
    const ProjectedGaussian& g = out.projected[i];
    if (g_u2d[i] == 0 && g_v2d[i] == 0 && g_r2d[i] == 0 && g_dcam[i] == 0 &&
        g_op[i] == 0 && g_col[i].isZero(0.0))
      continue;

    const double qz = g.depth;
    const double qx = (g.u2d - K.cx) * qz / K.fx;
    const double qy = (g.v2d - K.cy) * qz / K.fy;
    const double world_r = map[g.source].radius;

    Vec3 g_q;
    g_q.x() = g_u2d[i] * K.fx / qz;
    g_q.y() = g_v2d[i] * K.fy / qz;
    g_q.z() = -g_u2d[i] * K.fx * qx / (qz * qz) -
              g_v2d[i] * K.fy * qy / (qz * qz) + g_dcam[i];
    if (!g.r2d_clamped) g_q.z() += g_r2d[i] * (-K.fx * world_r / (qz * qz));

    if (gaussian_grads) {
      gaussian_grads->center[g.source] += R * g_q;
      gaussian_grads->radius[g.source] +=
          g.r2d_clamped ? 0.0 : g_r2d[i] * K.fx / qz;
      gaussian_grads->color[g.source] += g_col[i];
      gaussian_grads->opacity[g.source] += g_op[i];
    }
    if (pose_grad) {
      const Vec3 rq = R * g_q;
      const Vec3 mu = map[g.source].center;
      pg.tail<3>() += -rq;
      pg.head<3>() += -mu.cross(rq);
    }
  }
  if (pose_grad) *pose_grad = pg;
}

GaussianGrads backward_gaussians(const GaussianMap& map, const RenderOutput& out,
                                 const ImageRGB& grad_color,
                                 const ImageF& grad_depth,
                                 const ImageF& grad_mask) {
  GaussianGrads grads;
  backward_full(map, out, grad_color, grad_depth, grad_mask, &grads, nullptr);
  return grads;
}

Vec6 backward_pose(const GaussianMap& map, const RenderOutput& out,
                   const ImageRGB& grad_color, const ImageF& grad_depth,
                   const ImageF& grad_mask) {
  Vec6 grad;
  backward_full(map, out, grad_color, grad_depth, grad_mask, nullptr, &grad);
  return grad;
}

}  // namespace splatbridge
