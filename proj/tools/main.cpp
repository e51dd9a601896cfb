#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splatbridge/config.hpp"
#include "splatbridge/image_io.hpp"
#include "splatbridge/pipeline.hpp"
#include "splatbridge/rasterizer.hpp"

namespace fs = std::filesystem;
using namespace splatbridge;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string dataset;
  std::string output;
  long long seed = -1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "configuration file");
  cmd->add_option("--dataset", args->dataset,
                  "'synthetic' or a TUM sequence directory");
  cmd->add_option("--output", args->output, "output directory");
  cmd->add_option("--seed", args->seed, "run seed");
  cmd->add_option("--set", args->overrides, "override key=value (repeatable)");
}

RunConfig build_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg.load_overrides_file(args.config_path);
  if (!args.dataset.empty()) cfg.set("dataset.source", args.dataset);
  if (!args.output.empty()) cfg.set("run.output", args.output);
  if (args.seed >= 0) cfg.set("run.seed", std::to_string(args.seed));
  for (const std::string& ov : args.overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + ov + "'");
    cfg.set(ov.substr(0, eq), ov.substr(eq + 1));
  }
  return cfg;
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  size_t pos = 0;
  while (pos < csv.size()) {
    const auto comma = csv.find(',', pos);
    out.push_back(std::stod(csv.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splatbridge: RGB-D SLAM with sparse tracking and an online "
               "Gaussian-splatting mapper"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, eval_args, synth_args;

  auto* cmd_run = app.add_subcommand("run", "run the full pipeline");
  add_common(cmd_run, &run_args);

  auto* cmd_sweep =
      app.add_subcommand("sweep", "grid sweep over joint-optimization "
                                  "iterations t and viewpoint alpha");
  add_common(cmd_sweep, &sweep_args);
  std::string t_csv = "5,10,20", alpha_csv = "0.75";
  cmd_sweep->add_option("--t-values", t_csv, "comma-separated t values");
  cmd_sweep->add_option("--alpha-values", alpha_csv,
                        "comma-separated alpha values");

  auto* cmd_render =
      app.add_subcommand("render", "re-render a frame from a map checkpoint");
  std::string ckpt_path, traj_path, render_out = "render.png";
  int render_index = 0;
  CommonArgs render_args;
  add_common(cmd_render, &render_args);
  cmd_render->add_option("--checkpoint", ckpt_path, "map checkpoint")
      ->required();
  cmd_render->add_option("--trajectory", traj_path, "TUM trajectory file")
      ->required();
  cmd_render->add_option("--index", render_index, "pose index in trajectory");
  cmd_render->add_option("--out", render_out, "output image path");

  auto* cmd_eval = app.add_subcommand(
      "eval", "metrics from a saved trajectory and checkpoint");
  add_common(cmd_eval, &eval_args);
  std::string eval_traj, eval_ckpt;
  cmd_eval->add_option("--trajectory", eval_traj, "estimated trajectory")
      ->required();
  cmd_eval->add_option("--checkpoint", eval_ckpt, "map checkpoint");

  auto* cmd_synth = app.add_subcommand(
      "synth", "emit a synthetic dataset in TUM layout");
  add_common(cmd_synth, &synth_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_run->parsed()) {
      RunConfig cfg = build_config(run_args);
      const PipelineResult result = run_pipeline(cfg);
      write_artifacts(cfg, result);
      std::printf("frames %d keyframes %d reconstruction %d map %zu\n",
                  result.metrics.frame_count, result.metrics.keyframe_count,
                  result.metrics.reconstruction_count, result.metrics.map_size);
      std::printf("ate_rmse_cm %.6f psnr %.3f ssim %.4f fps %.2f\n",
                  result.metrics.ate_rmse_cm, result.metrics.psnr,
                  result.metrics.ssim, result.metrics.fps);
      std::printf("artifacts in %s\n", cfg.output_dir.c_str());
    } else if (cmd_sweep->parsed()) {
      RunConfig cfg = build_config(sweep_args);
      std::vector<int> ts;
      for (double v : parse_doubles(t_csv)) ts.push_back(int(v));
      const auto rows = run_sweep(cfg, ts, parse_doubles(alpha_csv));
      fs::create_directories(cfg.output_dir);
      const std::string path =
          (fs::path(cfg.output_dir) / "sweep.csv").string();
      write_sweep_csv(path, rows);
      std::printf("sweep rows %zu -> %s\n", rows.size(), path.c_str());
    } else if (cmd_render->parsed()) {
      RunConfig cfg = build_config(render_args);
      const GaussianMap map = GaussianMap::load_checkpoint(ckpt_path);
      const Trajectory traj = load_tum_trajectory(traj_path);
      if (render_index < 0 || render_index >= int(traj.size()))
        throw std::runtime_error("render: index out of range");
      CameraIntrinsics K = cfg.dataset == "synthetic" ? cfg.synthetic.intrinsics
                                                      : cfg.tum_intrinsics;
      RenderOptions opts = cfg.raster;
      opts.keep_cache = false;
      const RenderOutput r = render(map, K, traj[render_index].second, opts);
      save_color_image(render_out, r.color);
      std::printf("wrote %s (%dx%d, %zu gaussians)\n", render_out.c_str(),
                  K.width, K.height, map.size());
    } else if (cmd_eval->parsed()) {
      RunConfig cfg = build_config(eval_args);
      const Trajectory est = load_tum_trajectory(eval_traj);
      Trajectory gt;
      if (cfg.dataset == "synthetic") {
        gt = generate_synthetic(cfg.synthetic).ground_truth.trajectory;
      } else {
        gt = load_tum_trajectory(
            (fs::path(cfg.dataset) / "groundtruth.txt").string());
      }
      const double rmse = ate_rmse_cm(est, gt, cfg.max_time_diff);
      std::printf("ate_rmse_cm %.6f over %zu poses\n", rmse, est.size());
      if (!eval_ckpt.empty()) {
        const GaussianMap map = GaussianMap::load_checkpoint(eval_ckpt);
        std::printf("map_gaussians %zu\n", map.size());
      }
    } else if (cmd_synth->parsed()) {
      RunConfig cfg = build_config(synth_args);
      SyntheticResult synth = generate_synthetic(cfg.synthetic);
      export_tum_sequence(cfg.output_dir, synth.frames, synth.ground_truth);
      std::printf("wrote %d frames to %s\n", int(synth.frames.size()),
                  cfg.output_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
