#include "splatbridge/fusion_bridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splatbridge {

bool select_viewpoint(int matched, int total, const BridgeConfig& cfg) {
  return cfg.beta <= matched && matched < cfg.alpha * total;
}

ImageB compute_gate(const ImageF& cloud_depth, const RenderOutput& rendered,
                    double gamma) {
  const int W = rendered.depth.width(), H = rendered.depth.height();
  ImageB gate(W, H, 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      gate(x, y) = cloud_depth(x, y) > 0 && rendered.depth(x, y) > 0 &&
                   rendered.border_mask(x, y) > gamma;
  return gate;
}

namespace {

// Sparse D_c: depth of each projected landmark at its pixel, nearest wins.
ImageF rasterize_cloud_depth(const std::vector<PointPixelMatch>& landmarks,
                             const CameraIntrinsics& K, const SE3Pose& pose) {
  ImageF out(K.width, K.height, 0.0);
  for (const auto& m : landmarks) {
    const auto proj = project_point(K, pose, m.point);
    if (proj.behind_camera) continue;
    const int x = static_cast<int>(std::lround(proj.pixel.u));
    const int y = static_cast<int>(std::lround(proj.pixel.v));
    if (x < 0 || x >= K.width || y < 0 || y >= K.height) continue;
    if (out(x, y) == 0 || proj.depth < out(x, y)) out(x, y) = proj.depth;
  }
  return out;
}

struct RenderLosses {
  double color = 0, depth = 0;
  int gated = 0;
};

RenderLosses gated_losses(const Frame& frame, const RenderOutput& rendered,
                          const ImageB& gate) {
  RenderLosses out;
  double c_acc = 0, d_acc = 0;
  for (int y = 0; y < gate.height(); ++y) {
    for (int x = 0; x < gate.width(); ++x) {
      if (!gate(x, y)) continue;
      ++out.gated;
      const Vec3 dc = rendered.color(x, y) - frame.color(x, y);
      c_acc += dc.cwiseAbs().sum();
      d_acc += std::abs(rendered.depth(x, y) - frame.depth(x, y));
    }
  }
  if (out.gated > 0) {
    out.color = c_acc / (3.0 * out.gated);
    out.depth = d_acc / out.gated;
  }
  return out;
}

double mean_reprojection_residual(const std::vector<PointPixelMatch>& matches,
                                  const CameraIntrinsics& K,
                                  const SE3Pose& pose) {
  if (matches.empty()) return 0;
  double acc = 0;
  for (const auto& m : matches) {
    const auto proj = project_point(K, pose, m.point);
    if (proj.behind_camera) {
      acc += 1e6;
      continue;
    }
    acc += std::hypot(proj.pixel.u - m.pixel.u, proj.pixel.v - m.pixel.v);
  }
  return acc / matches.size();
}

// Single damped LM step on the Huber reprojection cost; lambda persists
// across calls via reference.
bool reprojection_lm_step(const std::vector<PointPixelMatch>& matches,
                          const CameraIntrinsics& K, SE3Pose* pose,
                          double huber_delta, double* lambda) {
  auto robust_cost = [&](const SE3Pose& p) {
    double cost = 0;
    for (const auto& m : matches) {
      const auto j = reprojection_jacobian(K, p, m.point, m.pixel);
      if (j.behind_camera) {
        cost += 1e12;
        continue;
      }
      const double e = j.residual.norm();
      cost += e <= huber_delta ? 0.5 * e * e
                               : huber_delta * (e - 0.5 * huber_delta);
    }
    return cost;
  };

  Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
  Vec6 g = Vec6::Zero();
  for (const auto& m : matches) {
    const auto j = reprojection_jacobian(K, *pose, m.point, m.pixel);
    if (j.behind_camera) continue;
    const double e = j.residual.norm();
    const double w = e <= huber_delta ? 1.0 : huber_delta / e;
    H += w * j.d_twist.transpose() * j.d_twist;
    g += w * j.d_twist.transpose() * j.residual;
  }
  const double cost = robust_cost(*pose);
  for (int tries = 0; tries < 8; ++tries) {
    Eigen::Matrix<double, 6, 6> Hd = H;
    for (int k = 0; k < 6; ++k) Hd(k, k) += *lambda * std::max(H(k, k), 1e-12);
    const Vec6 delta = Hd.ldlt().solve(-g);
    if (delta.allFinite()) {
      const SE3Pose candidate = se3_exp(delta) * (*pose);
      if (robust_cost(candidate) < cost) {
        *pose = candidate;
        *lambda = std::max(*lambda * 0.1, 1e-12);
        return true;
      }
    }
    *lambda *= 10;
  }
  return false;
}

}  // namespace

JointOptimizeResult joint_optimize_pose(
    const Frame& frame, const std::vector<PointPixelMatch>& visible_landmarks,
    const GaussianMap& map, const CameraIntrinsics& K, const SE3Pose& init,
    const BridgeConfig& cfg, const RenderOptions& render_options) {
  JointOptimizeResult result;
  result.insufficient_matches = visible_landmarks.size() < 6;

  // Degenerate rendering weights reduce to the frontend's reprojection
  // solver exactly.
  if (cfg.w2 == 0 && cfg.w3 == 0) {
    if (result.insufficient_matches) {
      result.pose = init;  // nothing to optimize
      return result;
    }
    const TrackResult tr =
        track_pose(visible_landmarks, K, init, cfg.huber_delta,
                   std::max(50, cfg.iterations));
    result.pose = tr.pose;
    result.trace.push_back({tr.final_cost, tr.final_cost, 0, 0, 0});
    return result;
  }

  RenderOptions ropt = render_options;
  ropt.keep_cache = true;

  const bool use_rpj = !result.insufficient_matches;

  auto evaluate = [&](const SE3Pose& pose, RenderOutput* out_render,
                      ImageB* out_gate) {
    RenderOutput rendered = render(map, K, pose, ropt);
    const ImageF cloud =
        cfg.dense_cloud_depth
            ? frame.depth
            : rasterize_cloud_depth(visible_landmarks, K, pose);
    ImageB gate = compute_gate(cloud, rendered, cfg.gamma);
    const RenderLosses rl = gated_losses(frame, rendered, gate);
    JointOptimizeResult::TraceEntry e;
    e.reprojection = mean_reprojection_residual(visible_landmarks, K, pose);
    e.color = rl.color;
    e.depth = rl.depth;
    e.gated_pixels = rl.gated;
    e.total = cfg.w1 * e.reprojection + cfg.w2 * e.color + cfg.w3 * e.depth;
    if (out_render) *out_render = std::move(rendered);
    if (out_gate) *out_gate = std::move(gate);
    return e;
  };

  SE3Pose pose = init;
  SE3Pose best_pose = init;
  RenderOutput rendered;
  ImageB gate;
  JointOptimizeResult::TraceEntry cur = evaluate(pose, &rendered, &gate);
  double best_total = cur.total;
  result.trace.push_back(cur);
  if (cur.gated_pixels == 0) result.no_gated_pixels = true;

  double lm_lambda = 1e-3;
  double grad_step = 1e-3;

  for (int it = 0; it < cfg.iterations; ++it) {
    if (use_rpj) {
      if (reprojection_lm_step(visible_landmarks, K, &pose, cfg.huber_delta,
                               &lm_lambda)) {
        cur = evaluate(pose, &rendered, &gate);
        result.trace.push_back(cur);
        if (cur.total < best_total) {
          best_total = cur.total;
          best_pose = pose;
        }
      }
    }

    if (cur.gated_pixels == 0) {
      result.no_gated_pixels = true;
      continue;  // rendering term unavailable at this iterate
    }

    // Gradient of w2*L_c + w3*L_d over the gate through the rasterizer.
    const int n = cur.gated_pixels;
    ImageRGB grad_color(K.width, K.height, Vec3::Zero());
    ImageF grad_depth(K.width, K.height, 0.0);
    ImageF grad_mask;  // empty: no mask term in Eq. 6
    for (int y = 0; y < K.height; ++y) {
      for (int x = 0; x < K.width; ++x) {
        if (!gate(x, y)) continue;
        const Vec3 dc = rendered.color(x, y) - frame.color(x, y);
        for (int c = 0; c < 3; ++c)
          grad_color(x, y)[c] =
              cfg.w2 * (dc[c] > 0 ? 1.0 : (dc[c] < 0 ? -1.0 : 0.0)) / (3.0 * n);
        const double dd = rendered.depth(x, y) - frame.depth(x, y);
        grad_depth(x, y) =
            cfg.w3 * (dd > 0 ? 1.0 : (dd < 0 ? -1.0 : 0.0)) / n;
      }
    }
    const Vec6 g = backward_pose(map, rendered, grad_color, grad_depth,
                                 grad_mask);
    const double gnorm = g.norm();
    if (gnorm > 1e-14) {
      const double render_loss = cfg.w2 * cur.color + cfg.w3 * cur.depth;
      RenderOptions probe = render_options;
      probe.keep_cache = false;
      bool improved = false;
      for (int tries = 0; tries < 6 && !improved; ++tries) {
        const Vec6 delta = -(grad_step / gnorm) * g;
        const SE3Pose candidate = se3_exp(delta) * pose;
        RenderOutput cr = render(map, K, candidate, probe);
        const ImageF cloud =
            cfg.dense_cloud_depth
                ? frame.depth
                : rasterize_cloud_depth(visible_landmarks, K, candidate);
        const ImageB cg = compute_gate(cloud, cr, cfg.gamma);
        const RenderLosses rl = gated_losses(frame, cr, cg);
        const double cand_loss = cfg.w2 * rl.color + cfg.w3 * rl.depth;
        if (rl.gated > 0 && cand_loss < render_loss) {
          pose = candidate;
          grad_step = std::min(grad_step * 1.5, 0.05);
          improved = true;
        } else {
          grad_step = std::max(grad_step * 0.5, 1e-8);
        }
      }
      if (improved) {
        cur = evaluate(pose, &rendered, &gate);
        result.trace.push_back(cur);
        if (cur.total < best_total) {
          best_total = cur.total;
          best_pose = pose;
        }
      }
    }
  }

  result.pose = best_pose;
  return result;
}

}  // namespace splatbridge
