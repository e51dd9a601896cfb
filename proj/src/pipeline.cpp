#include "splatbridge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "splatbridge/fusion_bridge.hpp"
#include "splatbridge/image_io.hpp"
#include "splatbridge/mapper.hpp"
#include "splatbridge/rasterizer.hpp"

namespace fs = std::filesystem;

namespace splatbridge {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double depth_at(const ImageF& depth, const PixelCoord& p) {
  const int x = static_cast<int>(std::lround(p.u));
  const int y = static_cast<int>(std::lround(p.v));
  if (x < 0 || x >= depth.width() || y < 0 || y >= depth.height()) return 0;
  return depth(x, y);
}

struct FrontendState {
  std::vector<Keyframe> keyframes;
  std::vector<Landmark> landmarks;
  std::vector<std::vector<int>> kf_gt_ids;  // per keyframe, per feature
  std::vector<int> gt_to_landmark;          // oracle: gt landmark -> id
  int reference_kf = -1;                    // index into keyframes
};

// Builds keyframe features for oracle-association mode: exact pixels and
// camera depths from the generator's observations.
std::vector<Feature> oracle_features(const std::vector<OracleObservation>& obs,
                                     const FrontendState& fe) {
  std::vector<Feature> out;
  out.reserve(obs.size());
  for (const auto& o : obs) {
    Feature f;
    f.pixel = o.pixel;
    f.depth = o.depth;
    f.landmark_id = o.landmark_id < int(fe.gt_to_landmark.size())
                        ? fe.gt_to_landmark[o.landmark_id]
                        : -1;
    out.push_back(f);
  }
  return out;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg) {
  PipelineResult result;

  // --- dataset ---
  if (cfg.dataset == "synthetic") {
    SyntheticResult synth = generate_synthetic(cfg.synthetic);
    result.frames = std::move(synth.frames);
    result.ground_truth = std::move(synth.ground_truth);
    if (cfg.noise.depth_sigma > 0 || cfg.noise.depth_dropout > 0 ||
        cfg.noise.color_sigma > 0 || cfg.noise.blur_kernel >= 3) {
      NoiseParams np = cfg.noise;
      for (size_t i = 0; i < result.frames.size(); ++i) {
        np.seed = cfg.noise.seed + i;
        result.frames[i] = add_noise(result.frames[i], np);
      }
    }
  } else {
    TumSequence seq =
        load_tum_sequence(cfg.dataset, cfg.max_time_diff, cfg.tum_intrinsics);
    result.frames = std::move(seq.frames);
    result.ground_truth = std::move(seq.ground_truth);
  }
  const std::vector<Frame>& frames = result.frames;
  if (frames.empty()) throw std::runtime_error("no-pairs: empty dataset");
  const CameraIntrinsics K = frames.front().intrinsics;
  const bool oracle = cfg.use_oracle_associations();
  if (oracle && result.ground_truth.frame_observations.size() < frames.size())
    throw std::runtime_error(
        "oracle-associations requested but dataset has no oracle observations");

  // --- online loop state ---
  FrontendState fe;
  fe.gt_to_landmark.assign(result.ground_truth.landmarks.size(), -1);
  GaussianMap map;
  Mapper mapper(cfg.mapper, cfg.raster);
  TrackState track_state;
  std::vector<Feature> last_features;  // feature mode: previous frame
  Trajectory raw_trajectory;
  std::vector<int> anchor_kf(frames.size(), -1);
  std::vector<SE3Pose> anchor_pose(frames.size());
  std::vector<FrameTiming> timings;
  int reconstruction_count = 0;
  int next_landmark_id = 0;

  auto link_keyframe = [&](Keyframe& kf, const std::vector<int>& gt_ids) {
    // existing landmark observations
    for (size_t i = 0; i < kf.features.size(); ++i) {
      const int lm = kf.features[i].landmark_id;
      if (lm >= 0)
        fe.landmarks[lm].observations.push_back({kf.id, int(i)});
    }
    // new landmarks from depth
    std::vector<Landmark> fresh = create_landmarks(kf, K, next_landmark_id);
    next_landmark_id += static_cast<int>(fresh.size());
    for (auto& lm : fresh) fe.landmarks.push_back(std::move(lm));
    if (oracle) {
      for (size_t i = 0; i < kf.features.size(); ++i) {
        const int gt = gt_ids[i];
        if (gt >= 0 && fe.gt_to_landmark[gt] < 0 &&
            kf.features[i].landmark_id >= 0)
          fe.gt_to_landmark[gt] = kf.features[i].landmark_id;
      }
    }
  };

  auto run_local_ba = [&]() {
    if (cfg.local_ba_window < 2 || fe.keyframes.size() < 2) return;
    const int w = std::min<int>(cfg.local_ba_window, fe.keyframes.size());
    std::vector<Keyframe> window(fe.keyframes.end() - w, fe.keyframes.end());
    std::set<int> ids;
    for (const auto& kf : window) ids.insert(kf.id);
    std::vector<Landmark> subset;
    for (const Landmark& lm : fe.landmarks) {
      Landmark copy = lm;
      std::erase_if(copy.observations, [&](const LandmarkObservation& o) {
        return !ids.count(o.keyframe_id);
      });
      if (copy.observations.size() >= 2) subset.push_back(std::move(copy));
    }
    if (subset.empty()) return;
    bundle_adjust(window, subset, K, true, cfg.local_ba_iters,
                  cfg.huber_delta);
    for (const Keyframe& kf : window)
      for (auto& orig : fe.keyframes)
        if (orig.id == kf.id) orig.pose = kf.pose;
    for (const Landmark& lm : subset) fe.landmarks[lm.id].position = lm.position;
  };

  // --- per-frame loop ---
  for (size_t i = 0; i < frames.size(); ++i) {
    const Frame& frame = frames[i];
    FrameLog log;
    log.frame = static_cast<int>(i);
    log.timestamp = frame.timestamp;
    const auto t_frame = Clock::now();

    SE3Pose pose;
    std::vector<PointPixelMatch> matches;
    std::vector<Feature> cur_features;
    std::vector<int> cur_gt_ids;
    int matched_vs_ref = 0;  // Eq. 3's M: overlap with the reference keyframe

    const auto t_track = Clock::now();
    if (i == 0) {
      pose = result.ground_truth.trajectory.empty()
                 ? SE3Pose{}
                 : result.ground_truth.trajectory.front().second;
    } else {
      const SE3Pose predicted = se3_exp(track_state.velocity) * track_state.last_pose;
      if (oracle) {
        std::set<int> ref_ids(fe.kf_gt_ids[fe.reference_kf].begin(),
                              fe.kf_gt_ids[fe.reference_kf].end());
        for (const auto& o : result.ground_truth.frame_observations[i]) {
          if (ref_ids.count(o.landmark_id)) ++matched_vs_ref;
          const int lm = fe.gt_to_landmark[o.landmark_id];
          if (lm >= 0)
            matches.push_back({fe.landmarks[lm].position, o.pixel});
        }
      } else {
        // Correspondences from consecutive frames; landmark links propagate
        // along the frame chain.
        cur_features =
            detect_features(rgb_to_gray(frame.color), cfg.target_features,
                            cfg.feature_grid, cfg.feature_grid);
        for (auto& f : cur_features) f.depth = depth_at(frame.depth, f.pixel);
        const auto pairs = match_features(cur_features, last_features,
                                          cfg.max_hamming, cfg.match_ratio);
        const int ref_id = fe.keyframes[fe.reference_kf].id;
        for (const auto& [ci, pi] : pairs) {
          const int lm = last_features[pi].landmark_id;
          if (lm < 0) continue;
          cur_features[ci].landmark_id = lm;
          matches.push_back({fe.landmarks[lm].position, cur_features[ci].pixel});
          for (const auto& obs : fe.landmarks[lm].observations)
            if (obs.keyframe_id == ref_id) {
              ++matched_vs_ref;
              break;
            }
        }
      }
      log.track_matches = static_cast<int>(matches.size());
      if (matches.size() >= 6) {
        const TrackResult tr = track_pose(matches, K, predicted,
                                          cfg.huber_delta, cfg.track_max_iters);
        pose = tr.pose;
        log.track_inliers =
            static_cast<int>(std::count(tr.inlier_mask.begin(),
                                        tr.inlier_mask.end(), true));
      } else {
        pose = predicted;
        log.track_fallback = true;
      }
    }
    log.timing.track_ms = ms_since(t_track);

    raw_trajectory.emplace_back(frame.timestamp, pose);

    // keyframe decision
    bool make_keyframe = false;
    if (i == 0) {
      make_keyframe = true;
    } else {
      const Keyframe& ref = fe.keyframes[fe.reference_kf];
      int linked = 0;
      for (const Feature& f : ref.features)
        if (f.landmark_id >= 0) ++linked;
      track_state.matched_count = matched_vs_ref;
      track_state.previous_total = oracle
                                       ? int(fe.kf_gt_ids[fe.reference_kf].size())
                                       : linked;
      make_keyframe = select_keyframe(track_state, cfg.min_tracked_ratio,
                                      cfg.min_keyframe_gap);
    }

    bool selected = false;
    const auto t_keyframe = Clock::now();
    if (make_keyframe) {
      log.keyframe = true;
      Keyframe kf;
      kf.id = static_cast<int>(fe.keyframes.size());
      kf.frame_index = static_cast<int>(i);
      kf.timestamp = frame.timestamp;
      kf.pose = pose;
      if (oracle) {
        const auto& obs = result.ground_truth.frame_observations[i];
        kf.features = oracle_features(obs, fe);
        cur_gt_ids.clear();
        for (const auto& o : obs) cur_gt_ids.push_back(o.landmark_id);
      } else {
        if (i == 0) {
          cur_features =
              detect_features(rgb_to_gray(frame.color), cfg.target_features,
                              cfg.feature_grid, cfg.feature_grid);
          for (auto& f : cur_features) f.depth = depth_at(frame.depth, f.pixel);
        }
        // landmark links already propagated from the previous frame
        kf.features = cur_features;
        cur_gt_ids.assign(kf.features.size(), -1);
      }
      fe.keyframes.push_back(std::move(kf));
      Keyframe& stored = fe.keyframes.back();
      link_keyframe(stored, cur_gt_ids);
      fe.kf_gt_ids.push_back(cur_gt_ids);
      add_keyframe_covisibility(fe.keyframes, fe.landmarks, stored.id);
      run_local_ba();
      raw_trajectory.back().second = fe.keyframes.back().pose;
      pose = fe.keyframes.back().pose;
      track_state.frames_since_keyframe = 0;

      // Viewpoint selection against the previous keyframe.
      const int kf_count = static_cast<int>(fe.keyframes.size());
      if (kf_count == 1) {
        log.bootstrap = cfg.bridge.alpha > 0;
        selected = log.bootstrap;
      } else {
        const Keyframe& prev = fe.keyframes[kf_count - 2];
        const Keyframe& curr = fe.keyframes[kf_count - 1];
        auto it = curr.covisibility.find(prev.id);
        log.covis_m = it == curr.covisibility.end() ? 0 : it->second;
        int linked = 0;
        for (const Feature& f : prev.features)
          if (f.landmark_id >= 0) ++linked;
        log.covis_t = linked;
        selected = select_viewpoint(log.covis_m, log.covis_t, cfg.bridge);
      }
      fe.reference_kf = static_cast<int>(fe.keyframes.size()) - 1;
      if (!oracle) last_features = fe.keyframes.back().features;
    } else if (!oracle && i > 0) {
      last_features = cur_features;
    }
    // keyframe management and local BA count as frontend work
    log.timing.track_ms += ms_since(t_keyframe);

    if (selected) {
      log.reconstruction = true;
      ++reconstruction_count;
      SE3Pose render_pose = pose;
      const auto t_bridge = Clock::now();
      if (!map.empty()) {
        const JointOptimizeResult jr = joint_optimize_pose(
            frame, matches, map, K, pose, cfg.bridge, cfg.raster);
        render_pose = jr.pose;
        if (!jr.trace.empty()) {
          log.joint_initial = jr.trace.front().total;
          log.joint_final = jr.trace.back().total;
        }
      }
      log.timing.bridge_ms = ms_since(t_bridge);

      const auto t_map = Clock::now();
      const MapFrameSummary ms = mapper.map_frame(
          map, frame, render_pose, cfg.densify_threshold, cfg.init_opacity);
      log.map_added = ms.added;
      log.map_pruned = ms.pruned;
      log.map_loss = ms.final_loss;
      log.timing.map_ms = ms_since(t_map);
    }

    if (i > 0) {
      const SE3Pose delta = pose * track_state.last_pose.inverse();
      track_state.velocity = se3_log(delta);
    }
    ++track_state.frames_since_keyframe;
    track_state.last_pose = pose;
    anchor_kf[i] = fe.reference_kf;
    anchor_pose[i] = fe.keyframes[fe.reference_kf].pose;

    log.timing.total_ms = ms_since(t_frame);
    timings.push_back(log.timing);
    result.log.push_back(log);
  }

  if (reconstruction_count == 0)
    throw std::runtime_error(
        "no-reconstruction-frames: viewpoint selection accepted nothing");

  // --- oracle loop constraints, then global bundle adjustment ---
  if (oracle && cfg.oracle_loop_closure) {
    for (size_t k = 0; k < fe.keyframes.size(); ++k) {
      Keyframe& kf = fe.keyframes[k];
      std::set<int> seen(fe.kf_gt_ids[k].begin(), fe.kf_gt_ids[k].end());
      for (const auto& o :
           result.ground_truth.frame_observations[kf.frame_index]) {
        const int lm = fe.gt_to_landmark[o.landmark_id];
        if (lm < 0 || seen.count(o.landmark_id)) continue;
        Feature f;
        f.pixel = o.pixel;
        f.depth = o.depth;
        f.landmark_id = lm;
        kf.features.push_back(f);
        fe.landmarks[lm].observations.push_back(
            {kf.id, static_cast<int>(kf.features.size()) - 1});
        fe.kf_gt_ids[k].push_back(o.landmark_id);
      }
      add_keyframe_covisibility(fe.keyframes, fe.landmarks, kf.id);
    }
  }

  if (fe.keyframes.size() >= 2 && cfg.global_ba_iters > 0) {
    std::vector<Landmark> subset;
    for (const Landmark& lm : fe.landmarks)
      if (lm.observations.size() >= 2) subset.push_back(lm);
    if (!subset.empty()) {
      bundle_adjust(fe.keyframes, subset, K, true, cfg.global_ba_iters,
                    cfg.huber_delta);
      for (const Landmark& lm : subset)
        fe.landmarks[lm.id].position = lm.position;
    }
  }

  // --- pose correction of non-keyframe frames via their anchor keyframe ---
  result.trajectory = raw_trajectory;
  for (size_t i = 0; i < frames.size(); ++i) {
    const SE3Pose& now = fe.keyframes[anchor_kf[i]].pose;
    const SE3Pose correction = now * anchor_pose[i].inverse();
    result.trajectory[i].second = correction * raw_trajectory[i].second;
  }

  // --- evaluation pass over every frame at the estimated pose ---
  RenderOptions eval_opts = cfg.raster;
  eval_opts.keep_cache = false;
  double psnr_acc = 0, ssim_acc = 0;
  double psnr_h = 0, ssim_h = 0;
  int held_out = 0;
  const bool ssim_ok = K.width >= 11 && K.height >= 11;
  for (size_t i = 0; i < frames.size(); ++i) {
    const RenderOutput r =
        render(map, K, result.trajectory[i].second, eval_opts);
    const double p = psnr(r.color, frames[i].color);
    const double s = ssim_ok ? ssim(r.color, frames[i].color).mean : 0.0;
    result.log[i].psnr = p;
    result.log[i].ssim = s;
    psnr_acc += p;
    ssim_acc += s;
    if (!result.log[i].reconstruction) {
      psnr_h += p;
      ssim_h += s;
      ++held_out;
    }
    FrameMetrics fm;
    fm.frame_index = static_cast<int>(i);
    fm.timestamp = frames[i].timestamp;
    fm.psnr = p;
    fm.ssim = s;
    fm.reconstruction = result.log[i].reconstruction;
    result.metrics.per_frame.push_back(fm);
  }

  result.fps = measure_fps(timings);
  result.metrics.fps = result.fps.fps;
  result.metrics.psnr = psnr_acc / frames.size();
  result.metrics.ssim = ssim_acc / frames.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  result.metrics.psnr_heldout = held_out > 0 ? psnr_h / held_out : nan;
  result.metrics.ssim_heldout = held_out > 0 ? ssim_h / held_out : nan;
  result.metrics.frame_count = static_cast<int>(frames.size());
  result.metrics.keyframe_count = static_cast<int>(fe.keyframes.size());
  result.metrics.reconstruction_count = reconstruction_count;
  result.metrics.map_size = map.size();
  if (result.ground_truth.trajectory.size() >= 3) {
    result.metrics.ate_rmse_cm = ate_rmse_cm(
        result.trajectory, result.ground_truth.trajectory, cfg.max_time_diff);
  } else {
    result.metrics.ate_rmse_cm = nan;
  }

  result.map = std::move(map);
  result.keyframes = std::move(fe.keyframes);
  return result;
}

void write_artifacts(const RunConfig& cfg, const PipelineResult& result) {
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  save_tum_trajectory((dir / "trajectory.txt").string(), result.trajectory);
  result.metrics.save((dir / "metrics.txt").string());
  result.metrics.save_timings((dir / "timings.txt").string(), result.fps);
  result.map.save_checkpoint((dir / "map.txt").string());
  cfg.dump((dir / "config.txt").string());

  std::ofstream csv(dir / "frames.csv");
  csv << "frame,timestamp,keyframe,reconstruction,bootstrap,track_fallback,"
         "covis_m,covis_t,track_matches,track_inliers,joint_initial,"
         "joint_final,map_added,map_pruned,map_loss,t_track_ms,t_bridge_ms,"
         "t_map_ms,t_total_ms,psnr,ssim\n";
  char line[512];
  for (const FrameLog& l : result.log) {
    std::snprintf(line, sizeof(line),
                  "%d,%.6f,%d,%d,%d,%d,%d,%d,%d,%d,%.9g,%.9g,%d,%d,%.9g,"
                  "%.3f,%.3f,%.3f,%.3f,%.9g,%.9g\n",
                  l.frame, l.timestamp, l.keyframe ? 1 : 0,
                  l.reconstruction ? 1 : 0, l.bootstrap ? 1 : 0,
                  l.track_fallback ? 1 : 0, l.covis_m, l.covis_t,
                  l.track_matches, l.track_inliers, l.joint_initial,
                  l.joint_final, l.map_added, l.map_pruned, l.map_loss,
                  l.timing.track_ms, l.timing.bridge_ms, l.timing.map_ms,
                  l.timing.total_ms, l.psnr, l.ssim);
    csv << line;
  }

  if (cfg.sample_renders > 0 && !result.frames.empty()) {
    fs::create_directories(dir / "renders");
    RenderOptions opts = cfg.raster;
    opts.keep_cache = false;
    const int n = static_cast<int>(result.frames.size());
    const int samples = std::min(cfg.sample_renders, n);
    int last = -1;
    for (int k = 0; k < samples; ++k) {
      const int idx =
          samples == 1 ? 0 : static_cast<int>(std::lround(double(k) * (n - 1) /
                                                          (samples - 1)));
      if (idx == last) continue;
      last = idx;
      const RenderOutput r =
          render(result.map, result.frames[idx].intrinsics,
                 result.trajectory[idx].second, opts);
      char name[64];
      std::snprintf(name, sizeof(name), "render_%04d.png", idx);
      save_color_image((dir / "renders" / name).string(), r.color);
      std::snprintf(name, sizeof(name), "depth_%04d.png", idx);
      save_depth_image((dir / "renders" / name).string(), r.depth);
    }
  }
}

std::vector<SweepRow> run_sweep(const RunConfig& base,
                                const std::vector<int>& t_values,
                                const std::vector<double>& alpha_values) {
  if (t_values.empty() || alpha_values.empty())
    throw std::invalid_argument("sweep: empty grid");
  std::vector<SweepRow> rows;
  for (int t : t_values) {
    for (double a : alpha_values) {
      RunConfig cfg = base;
      cfg.bridge.iterations = t;
      cfg.bridge.alpha = a;
      SweepRow row;
      row.iterations = t;
      row.alpha = a;
      try {
        const PipelineResult r = run_pipeline(cfg);
        row.fps = r.metrics.fps;
        row.psnr = r.metrics.psnr;
        row.ssim = r.metrics.ssim;
        row.rmse_cm = r.metrics.ate_rmse_cm;
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_sweep_csv(const std::string& path,
                     const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("sweep: cannot open " + path);
  out << "t,alpha,fps,psnr,ssim,lpips,rmse_cm,status\n";
  char line[320];
  for (const SweepRow& r : rows) {
    if (r.failed) {
      std::snprintf(line, sizeof(line), "%d,%.6g,,,,,,failed:%s\n",
                    r.iterations, r.alpha, r.error.c_str());
    } else {
      std::snprintf(line, sizeof(line), "%d,%.6g,%.4f,%.6f,%.6f,,%.6f,ok\n",
                    r.iterations, r.alpha, r.fps, r.psnr, r.ssim, r.rmse_cm);
    }
    out << line;
  }
}

}  // namespace splatbridge
