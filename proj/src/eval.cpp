#include "splatbridge/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <Eigen/SVD>

namespace splatbridge {

SE3Pose align_rigid(const Trajectory& est, const Trajectory& gt,
                    double max_time_diff) {
  std::vector<double> te(est.size()), tg(gt.size());
  for (size_t i = 0; i < est.size(); ++i) te[i] = est[i].first;
  for (size_t i = 0; i < gt.size(); ++i) tg[i] = gt[i].first;
  const auto pairs = associate_timestamps(te, tg, max_time_diff);
  if (pairs.size() < 3)
    throw std::runtime_error("insufficient-pairs: align_rigid needs >= 3");

  Vec3 mean_e = Vec3::Zero(), mean_g = Vec3::Zero();
  for (const auto& [i, j] : pairs) {
    mean_e += est[i].second.translation;
    mean_g += gt[j].second.translation;
  }
  mean_e /= double(pairs.size());
  mean_g /= double(pairs.size());

  Mat3 sigma = Mat3::Zero();
  for (const auto& [i, j] : pairs)
    sigma += (gt[j].second.translation - mean_g) *
             (est[i].second.translation - mean_e).transpose();

  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 S = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0)
    S(2, 2) = -1;
  const Mat3 R = svd.matrixU() * S * svd.matrixV().transpose();
  return SE3Pose(R, mean_g - R * mean_e);
}

double ate_rmse_cm(const Trajectory& est, const Trajectory& gt,
                   double max_time_diff) {
  const SE3Pose G = align_rigid(est, gt, max_time_diff);
  std::vector<double> te(est.size()), tg(gt.size());
  for (size_t i = 0; i < est.size(); ++i) te[i] = est[i].first;
  for (size_t i = 0; i < gt.size(); ++i) tg[i] = gt[i].first;
  const auto pairs = associate_timestamps(te, tg, max_time_diff);
  double acc = 0;
  for (const auto& [i, j] : pairs)
    acc += (G * est[i].second.translation - gt[j].second.translation)
               .squaredNorm();
  return 100.0 * std::sqrt(acc / pairs.size());
}

double psnr(const ImageRGB& a, const ImageRGB& b) {
  if (!a.same_size(b)) throw std::invalid_argument("psnr: size mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]).squaredNorm();
  mse /= 3.0 * a.size();
  if (mse <= 0) return 99.0;  // documented cap for identical images
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

FpsReport measure_fps(const std::vector<FrameTiming>& timings) {
  if (timings.empty()) throw std::runtime_error("no-frames: empty run");
  FpsReport r;
  r.frames = static_cast<int>(timings.size());
  double track = 0, bridge = 0, map = 0, total = 0;
  for (const FrameTiming& t : timings) {
    track += t.track_ms;
    bridge += t.bridge_ms;
    map += t.map_ms;
    total += t.total_ms;
  }
  r.total_seconds = total / 1000.0;
  r.fps = r.total_seconds > 0 ? r.frames / r.total_seconds : 0.0;
  r.stage_seconds["track"] = track / 1000.0;
  r.stage_seconds["bridge"] = bridge / 1000.0;
  r.stage_seconds["map"] = map / 1000.0;
  r.stage_seconds["other"] = std::max(0.0, (total - track - bridge - map)) / 1000.0;
  return r;
}

void MetricsReport::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("metrics: cannot open " + path);
  char line[160];
  auto put = [&](const char* key, double v) {
    std::snprintf(line, sizeof(line), "%s %.9f\n", key, v);
    out << line;
  };
  put("ate_rmse_cm", ate_rmse_cm);
  put("psnr_db", psnr);
  put("ssim", ssim);
  put("psnr_heldout_db", psnr_heldout);
  put("ssim_heldout", ssim_heldout);
  out << "frames " << frame_count << "\n";
  out << "keyframes " << keyframe_count << "\n";
  out << "reconstruction_frames " << reconstruction_count << "\n";
  out << "map_gaussians " << map_size << "\n";
  // PSNR/SSIM are per-frame averages over every input frame.
  out << "psnr_averaging per-frame\n";
}

void MetricsReport::save_timings(const std::string& path,
                                 const FpsReport& fps_report) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("metrics: cannot open " + path);
  char line[160];
  std::snprintf(line, sizeof(line), "fps %.4f\n", fps_report.fps);
  out << line;
  std::snprintf(line, sizeof(line), "total_seconds %.4f\n",
                fps_report.total_seconds);
  out << line;
  for (const auto& [stage, sec] : fps_report.stage_seconds) {
    std::snprintf(line, sizeof(line), "stage_%s_seconds %.4f\n", stage.c_str(),
                  sec);
    out << line;
  }
}

}  // namespace splatbridge
