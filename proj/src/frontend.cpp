#include "splatbridge/frontend.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "splatbridge/random.hpp"

namespace splatbridge {

namespace {

constexpr int kPatchRadius = 7;
constexpr int kMargin = kPatchRadius + 2;
constexpr double kScoreThreshold = 1e-7;

// Fixed sampling pattern for the 256 intensity comparisons; offsets are
// Gaussian-concentrated around the corner like BRIEF's recommended layout.
struct DescriptorPattern {
  std::array<std::array<int8_t, 4>, 256> pairs;
  DescriptorPattern() {
    Rng rng(0xB51EFull);
    for (auto& p : pairs)
      for (auto& v : p) {
        const double g = rng.normal() * (kPatchRadius / 2.5);
        v = static_cast<int8_t>(std::clamp(
            int(std::lround(g)), -kPatchRadius, kPatchRadius));
      }
  }
};
const DescriptorPattern& pattern() {
  static const DescriptorPattern p;
  return p;
}

ImageF box_smooth3(const ImageF& img) {
  ImageF out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || xx >= img.width() || yy < 0 || yy >= img.height())
            continue;
          acc += img(xx, yy);
          ++n;
        }
      out(x, y) = acc / n;
    }
  }
  return out;
}

Descriptor make_descriptor(const ImageF& smooth, int x, int y) {
  Descriptor d{};
  const auto& pat = pattern().pairs;
  for (int bit = 0; bit < 256; ++bit) {
    const auto& p = pat[bit];
    const double a = smooth(x + p[0], y + p[1]);
    const double b = smooth(x + p[2], y + p[3]);
    if (a < b) d[bit >> 6] |= (uint64_t(1) << (bit & 63));
  }
  return d;
}

}  // namespace

std::vector<Feature> detect_features(const ImageF& gray, int target_count,
                                     int grid_x, int grid_y) {
  if (gray.empty() || target_count <= 0) return {};
  const int W = gray.width(), H = gray.height();
  if (W < 2 * kMargin + 2 || H < 2 * kMargin + 2) return {};
  grid_x = std::max(1, grid_x);
  grid_y = std::max(1, grid_y);

  const ImageF smooth = box_smooth3(gray);
  // descriptors sample a heavier-smoothed image for bit stability
  const ImageF smooth2 = box_smooth3(box_smooth3(smooth));

  // Min-eigenvalue corner score from a 3x3 structure tensor.
  ImageF score(W, H, 0.0);
  ImageF ix(W, H, 0.0), iy(W, H, 0.0);
  for (int y = 1; y < H - 1; ++y) {
    for (int x = 1; x < W - 1; ++x) {
      ix(x, y) = 0.5 * (smooth(x + 1, y) - smooth(x - 1, y));
      iy(x, y) = 0.5 * (smooth(x, y + 1) - smooth(x, y - 1));
    }
  }
  for (int y = kMargin; y < H - kMargin; ++y) {
    for (int x = kMargin; x < W - kMargin; ++x) {
      double sxx = 0, sxy = 0, syy = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const double gx = ix(x + dx, y + dy), gy = iy(x + dx, y + dy);
          sxx += gx * gx;
          sxy += gx * gy;
          syy += gy * gy;
        }
      const double tr = sxx + syy;
      const double det = std::sqrt((sxx - syy) * (sxx - syy) + 4 * sxy * sxy);
      score(x, y) = 0.5 * (tr - det);
    }
  }

  // 3x3 non-max suppression, bucketed into grid cells.
  struct Candidate {
    int x, y;
    double s;
  };
  std::vector<std::vector<Candidate>> cells(
      static_cast<size_t>(grid_x) * grid_y);
  for (int y = kMargin; y < H - kMargin; ++y) {
    for (int x = kMargin; x < W - kMargin; ++x) {
      const double s = score(x, y);
      if (s <= kScoreThreshold) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (score(x + dx, y + dy) > s ||
              (score(x + dx, y + dy) == s && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      if (!is_max) continue;
      const int cx = std::min(grid_x - 1, x * grid_x / W);
      const int cy = std::min(grid_y - 1, y * grid_y / H);
      cells[static_cast<size_t>(cy) * grid_x + cx].push_back({x, y, s});
    }
  }

  auto by_score = [](const Candidate& a, const Candidate& b) {
    if (a.s != b.s) return a.s > b.s;
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  };

  // Per-cell quota first, then fill the remainder by global score.
  const int quota =
      (target_count + grid_x * grid_y - 1) / (grid_x * grid_y);
  std::vector<Candidate> picked, leftovers;
  for (auto& cell : cells) {
    std::sort(cell.begin(), cell.end(), by_score);
    const int take = std::min<int>(quota, static_cast<int>(cell.size()));
    picked.insert(picked.end(), cell.begin(), cell.begin() + take);
    leftovers.insert(leftovers.end(), cell.begin() + take, cell.end());
  }
  if (static_cast<int>(picked.size()) < target_count) {
    std::sort(leftovers.begin(), leftovers.end(), by_score);
    const int need = target_count - static_cast<int>(picked.size());
    const int take = std::min<int>(need, static_cast<int>(leftovers.size()));
    picked.insert(picked.end(), leftovers.begin(), leftovers.begin() + take);
  }
  std::sort(picked.begin(), picked.end(), by_score);
  if (static_cast<int>(picked.size()) > target_count)
    picked.resize(target_count);

  std::vector<Feature> out;
  out.reserve(picked.size());
  for (const Candidate& c : picked) {
    Feature f;
    f.pixel = {double(c.x), double(c.y)};
    f.score = c.s;
    f.descriptor = make_descriptor(smooth2, c.x, c.y);
    out.push_back(f);
  }
  return out;
}

int hamming_distance(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += std::popcount(a[i] ^ b[i]);
  return d;
}

std::vector<std::pair<int, int>> match_features(
    const std::vector<Feature>& a, const std::vector<Feature>& b,
    int max_hamming, double ratio) {
  const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
  std::vector<std::pair<int, int>> out;
  if (na == 0 || nb == 0) return out;

  std::vector<int> best_b(na, -1), best_b_dist(na, 1 << 20),
      second_b_dist(na, 1 << 20);
  std::vector<int> best_a(nb, -1), best_a_dist(nb, 1 << 20);
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) {
      const int d = hamming_distance(a[i].descriptor, b[j].descriptor);
      if (d < best_b_dist[i]) {
        second_b_dist[i] = best_b_dist[i];
        best_b_dist[i] = d;
        best_b[i] = j;
      } else if (d < second_b_dist[i]) {
        second_b_dist[i] = d;
      }
      if (d < best_a_dist[j]) {
        best_a_dist[j] = d;
        best_a[j] = i;
      }
    }
  }
  for (int i = 0; i < na; ++i) {
    const int j = best_b[i];
    if (j < 0 || best_a[j] != i) continue;
    if (best_b_dist[i] > max_hamming) continue;
    if (second_b_dist[i] < (1 << 20) &&
        best_b_dist[i] > ratio * second_b_dist[i])
      continue;
    out.emplace_back(i, j);
  }
  return out;
}

ReprojectionJacobian reprojection_jacobian(const CameraIntrinsics& K,
                                           const SE3Pose& world_from_camera,
                                           const Vec3& point,
                                           const PixelCoord& observed) {
  ReprojectionJacobian out;
  const Mat3 Rt = world_from_camera.rotation.transpose();
  const Vec3 q = Rt * (point - world_from_camera.translation);
  if (q.z() <= 1e-9) {
    out.behind_camera = true;
    return out;
  }
  const double iz = 1.0 / q.z();
  out.residual.x() = observed.u - (K.fx * q.x() * iz + K.cx);
  out.residual.y() = observed.v - (K.fy * q.y() * iz + K.cy);

  Eigen::Matrix<double, 2, 3> dpi;
  dpi << K.fx * iz, 0, -K.fx * q.x() * iz * iz, 0, K.fy * iz,
      -K.fy * q.y() * iz * iz;

  // q(eps) = q - R^T (omega x P + v) for a left twist on the pose
  Eigen::Matrix<double, 3, 6> dq;
  dq.leftCols<3>() = Rt * skew(point);
  dq.rightCols<3>() = -Rt;

  out.d_twist = -dpi * dq;
  out.d_point = -dpi * Rt;
  return out;
}

namespace {

struct HuberWeight {
  double cost;    // rho(e)
  double weight;  // IRLS weight for sqrt scaling
};

HuberWeight huber(double e, double delta) {
  if (!(e > delta)) return {0.5 * e * e, 1.0};
  return {delta * (e - 0.5 * delta), delta / e};
}

}  // namespace

TrackResult track_pose(const std::vector<PointPixelMatch>& matches,
                       const CameraIntrinsics& K, const SE3Pose& initial,
                       double huber_delta, int max_iters) {
  if (matches.size() < 6)
    throw std::runtime_error("insufficient-matches: track_pose needs >= 6");

  auto eval_cost = [&](const SE3Pose& pose) {
    double cost = 0;
    for (const auto& m : matches) {
      const auto j = reprojection_jacobian(K, pose, m.point, m.pixel);
      if (j.behind_camera) {
        cost += huber(1e6, huber_delta).cost;  // heavy penalty, keeps LM away
        continue;
      }
      cost += huber(j.residual.norm(), huber_delta).cost;
    }
    return cost;
  };

  SE3Pose pose = initial;
  double cost = eval_cost(pose);
  if (!std::isfinite(cost)) throw std::runtime_error("diverged: non-finite cost");
  double lambda = 1e-3;
  int iters = 0;

  for (; iters < max_iters; ++iters) {
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Vec6 g = Vec6::Zero();
    for (const auto& m : matches) {
      const auto j = reprojection_jacobian(K, pose, m.point, m.pixel);
      if (j.behind_camera) continue;
      const double w = huber(j.residual.norm(), huber_delta).weight;
      H += w * j.d_twist.transpose() * j.d_twist;
      g += w * j.d_twist.transpose() * j.residual;
    }

    bool accepted = false;
    for (int tries = 0; tries < 10; ++tries) {
      Eigen::Matrix<double, 6, 6> Hd = H;
      for (int k = 0; k < 6; ++k)
        Hd(k, k) += lambda * std::max(H(k, k), 1e-12);
      const Vec6 delta = Hd.ldlt().solve(-g);
      if (!delta.allFinite()) {
        lambda *= 10;
        continue;
      }
      const SE3Pose candidate = se3_exp(delta) * pose;
      const double new_cost = eval_cost(candidate);
      if (!std::isfinite(new_cost))
        throw std::runtime_error("diverged: non-finite cost");
      if (new_cost < cost) {
        const double rel = (cost - new_cost) / std::max(cost, 1e-300);
        pose = candidate;
        cost = new_cost;
        lambda = std::max(lambda * 0.1, 1e-8);
        accepted = true;
        if (rel < 1e-8) iters = max_iters;  // converged
        break;
      }
      lambda *= 10;
    }
    if (!accepted) break;  // damping exhausted at a (local) minimum
  }

  TrackResult result;
  result.pose = pose;
  result.final_cost = cost;
  result.iterations = iters;
  result.inlier_mask.resize(matches.size(), false);
  for (size_t i = 0; i < matches.size(); ++i) {
    const auto j = reprojection_jacobian(K, pose, matches[i].point,
                                         matches[i].pixel);
    result.inlier_mask[i] =
        !j.behind_camera && j.residual.norm() < 2.0 * huber_delta;
  }
  return result;
}

bool select_keyframe(const TrackState& state, double min_tracked_ratio,
                     int min_frames_gap) {
  const double ratio =
      state.previous_total > 0
          ? double(state.matched_count) / state.previous_total
          : 0.0;
  return ratio < min_tracked_ratio &&
         state.frames_since_keyframe >= min_frames_gap;
}

std::vector<Landmark> create_landmarks(Keyframe& kf, const CameraIntrinsics& K,
                                       int first_landmark_id) {
  std::vector<Landmark> out;
  int next_id = first_landmark_id;
  for (size_t i = 0; i < kf.features.size(); ++i) {
    Feature& f = kf.features[i];
    if (f.landmark_id >= 0 || !(f.depth > 0)) continue;
    Landmark lm;
    lm.id = next_id++;
    lm.position = backproject(K, kf.pose, f.pixel, f.depth);
    lm.observations.push_back({kf.id, static_cast<int>(i)});
    f.landmark_id = lm.id;
    out.push_back(std::move(lm));
  }
  return out;
}

void add_keyframe_covisibility(std::vector<Keyframe>& keyframes,
                               const std::vector<Landmark>& landmarks,
                               int keyframe_id) {
  Keyframe* kf = nullptr;
  for (auto& k : keyframes)
    if (k.id == keyframe_id) kf = &k;
  if (!kf) return;
  std::map<int, int> shared;
  for (const Feature& f : kf->features) {
    if (f.landmark_id < 0 ||
        f.landmark_id >= static_cast<int>(landmarks.size()))
      continue;
    for (const auto& obs : landmarks[f.landmark_id].observations)
      if (obs.keyframe_id != keyframe_id) shared[obs.keyframe_id]++;
  }
  for (auto& k : keyframes) {
    auto it = shared.find(k.id);
    if (it == shared.end()) continue;
    k.covisibility[keyframe_id] = it->second;
    kf->covisibility[k.id] = it->second;
  }
}

BundleAdjustResult bundle_adjust(std::vector<Keyframe>& keyframes,
                                 std::vector<Landmark>& landmarks,
                                 const CameraIntrinsics& K, bool fix_first,
                                 int max_iters, double huber_delta) {
  if (keyframes.size() < 2)
    throw std::runtime_error("insufficient-keyframes: bundle_adjust needs >= 2");
  if (!fix_first)
    throw std::runtime_error(
        "gauge-unfixed: bundle_adjust requires fix_first or another prior");
  for (const Landmark& lm : landmarks)
    if (lm.observations.size() < 2)
      throw std::runtime_error(
          "unconstrained-landmark: every landmark needs >= 2 observations");

  // pose index: keyframe order; first pose fixed (index -1)
  std::map<int, int> kf_slot;  // keyframe id -> index into keyframes
  for (size_t i = 0; i < keyframes.size(); ++i)
    kf_slot[keyframes[i].id] = static_cast<int>(i);
  const int n_pose = static_cast<int>(keyframes.size()) - 1;  // free poses
  const int n_lm = static_cast<int>(landmarks.size());

  struct Obs {
    int pose;  // -1 = fixed first keyframe
    int lm;
    PixelCoord pixel;
  };
  std::vector<Obs> observations;
  for (int l = 0; l < n_lm; ++l) {
    for (const auto& o : landmarks[l].observations) {
      auto it = kf_slot.find(o.keyframe_id);
      if (it == kf_slot.end())
        throw std::runtime_error("bundle_adjust: observation of unknown keyframe");
      const Keyframe& kf = keyframes[it->second];
      observations.push_back(
          {it->second - 1, l, kf.features[o.feature_index].pixel});
    }
  }

  auto eval_cost = [&](const std::vector<SE3Pose>& poses,
                       const std::vector<Vec3>& points) {
    double cost = 0;
    for (const Obs& o : observations) {
      const SE3Pose& pose = poses[o.pose + 1];
      const auto j = reprojection_jacobian(K, pose, points[o.lm], o.pixel);
      cost += j.behind_camera ? huber(1e6, huber_delta).cost
                              : huber(j.residual.norm(), huber_delta).cost;
    }
    return cost;
  };

  std::vector<SE3Pose> poses(keyframes.size());
  for (size_t i = 0; i < keyframes.size(); ++i) poses[i] = keyframes[i].pose;
  std::vector<Vec3> points(n_lm);
  for (int l = 0; l < n_lm; ++l) points[l] = landmarks[l].position;

  double cost = eval_cost(poses, points);
  if (!std::isfinite(cost)) throw std::runtime_error("diverged: non-finite cost");
  double lambda = 1e-3;
  int iters = 0;

  // Reprojection-only BA has an exact similarity gauge; fixing the first
  // pose leaves scale free. Pin it by renormalizing accepted iterates about
  // the fixed camera center (an exact symmetry, so the cost is unchanged).
  const Vec3 anchor = poses[0].translation;
  double scale_ref = 0;
  for (const Vec3& p : points) scale_ref += (p - anchor).norm();
  auto normalize_scale = [&](std::vector<SE3Pose>& ps, std::vector<Vec3>& pts) {
    if (!(scale_ref > 0)) return;
    double now = 0;
    for (const Vec3& p : pts) now += (p - anchor).norm();
    if (!(now > 0)) return;
    const double f = scale_ref / now;
    for (Vec3& p : pts) p = anchor + f * (p - anchor);
    for (size_t k = 1; k < ps.size(); ++k)
      ps[k].translation = anchor + f * (ps[k].translation - anchor);
  };

  using Mat63 = Eigen::Matrix<double, 6, 3>;

  for (; iters < max_iters; ++iters) {
    Eigen::MatrixXd Hpp = Eigen::MatrixXd::Zero(6 * n_pose, 6 * n_pose);
    Eigen::VectorXd gp = Eigen::VectorXd::Zero(6 * n_pose);
    std::vector<Mat3> Hll(n_lm, Mat3::Zero());
    std::vector<Vec3> gl(n_lm, Vec3::Zero());
    // W blocks: per landmark, the pose couplings
    std::vector<std::vector<std::pair<int, Mat63>>> W(n_lm);

    for (const Obs& o : observations) {
      const SE3Pose& pose = poses[o.pose + 1];
      const auto j = reprojection_jacobian(K, pose, points[o.lm], o.pixel);
      if (j.behind_camera) continue;
      const double w = huber(j.residual.norm(), huber_delta).weight;
      Hll[o.lm] += w * j.d_point.transpose() * j.d_point;
      gl[o.lm] += w * j.d_point.transpose() * j.residual;
      if (o.pose >= 0) {
        Hpp.block<6, 6>(6 * o.pose, 6 * o.pose) +=
            w * j.d_twist.transpose() * j.d_twist;
        gp.segment<6>(6 * o.pose) += w * j.d_twist.transpose() * j.residual;
        W[o.lm].emplace_back(o.pose, w * j.d_twist.transpose() * j.d_point);
      }
    }

    bool accepted = false;
    for (int tries = 0; tries < 10; ++tries) {
      // damping
      Eigen::MatrixXd S = Hpp;
      for (int k = 0; k < 6 * n_pose; ++k)
        S(k, k) += lambda * std::max(Hpp(k, k), 1e-12);
      Eigen::VectorXd rhs = -gp;
      std::vector<Mat3> Hll_inv(n_lm);
      bool ok = true;
      for (int l = 0; l < n_lm; ++l) {
        Mat3 Hd = Hll[l];
        for (int k = 0; k < 3; ++k)
          Hd(k, k) += lambda * std::max(Hll[l](k, k), 1e-12);
        const double det = Hd.determinant();
        if (!(std::abs(det) > 1e-300)) {
          ok = false;
          break;
        }
        Hll_inv[l] = Hd.inverse();
        // Schur complement: S -= W Hll^-1 W^T, rhs += W Hll^-1 gl
        for (const auto& [pa, Wa] : W[l]) {
          const Mat63 WaHinv = Wa * Hll_inv[l];
          rhs.segment<6>(6 * pa) += WaHinv * gl[l];
          for (const auto& [pb, Wb] : W[l])
            S.block<6, 6>(6 * pa, 6 * pb) -= WaHinv * Wb.transpose();
        }
      }
      if (!ok) {
        lambda *= 10;
        continue;
      }

      Eigen::VectorXd dp(0);
      if (n_pose > 0) {
        dp = S.ldlt().solve(rhs);
        if (!dp.allFinite()) {
          lambda *= 10;
          continue;
        }
      }

      std::vector<SE3Pose> new_poses = poses;
      for (int p = 0; p < n_pose; ++p)
        new_poses[p + 1] = se3_exp(dp.segment<6>(6 * p)) * poses[p + 1];
      std::vector<Vec3> new_points = points;
      for (int l = 0; l < n_lm; ++l) {
        Vec3 coupled = gl[l];
        for (const auto& [pa, Wa] : W[l])
          coupled += Wa.transpose() * dp.segment<6>(6 * pa);
        new_points[l] = points[l] - Hll_inv[l] * coupled;
      }
      normalize_scale(new_poses, new_points);

      const double new_cost = eval_cost(new_poses, new_points);
      if (!std::isfinite(new_cost))
        throw std::runtime_error("diverged: non-finite cost");
      if (new_cost < cost) {
        const double rel = (cost - new_cost) / std::max(cost, 1e-300);
        poses = std::move(new_poses);
        points = std::move(new_points);
        cost = new_cost;
        lambda = std::max(lambda * 0.1, 1e-8);
        accepted = true;
        if (rel < 1e-8) iters = max_iters;
        break;
      }
      lambda *= 10;
    }
    if (!accepted) break;
  }

  for (size_t i = 0; i < keyframes.size(); ++i) keyframes[i].pose = poses[i];
  for (int l = 0; l < n_lm; ++l) landmarks[l].position = points[l];
  return {cost, iters};
}

}  // namespace splatbridge
