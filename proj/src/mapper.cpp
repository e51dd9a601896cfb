#include "splatbridge/mapper.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace splatbridge {

namespace {

constexpr int kWin = 11;
constexpr int kHalf = kWin / 2;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin>& ssim_window() {
  static const std::array<double, kWin> w = [] {
    std::array<double, kWin> out{};
    double sum = 0;
    for (int i = 0; i < kWin; ++i) {
      const double d = i - kHalf;
      out[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
  }();
  return w;
}

// Separable zero-padded convolution with the (symmetric) SSIM window.
ImageF conv_window(const ImageF& img) {
  const auto& w = ssim_window();
  const int W = img.width(), H = img.height();
  ImageF tmp(W, H, 0.0), out(W, H, 0.0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double acc = 0;
      for (int k = -kHalf; k <= kHalf; ++k) {
        const int xx = x + k;
        if (xx < 0 || xx >= W) continue;
        acc += w[k + kHalf] * img(xx, y);
      }
      tmp(x, y) = acc;
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double acc = 0;
      for (int k = -kHalf; k <= kHalf; ++k) {
        const int yy = y + k;
        if (yy < 0 || yy >= H) continue;
        acc += w[k + kHalf] * tmp(x, yy);
      }
      out(x, y) = acc;
    }
  }
  return out;
}

ImageF channel(const ImageRGB& img, int c) {
  ImageF out(img.width(), img.height());
  for (size_t i = 0; i < img.size(); ++i) out[i] = img[i][c];
  return out;
}

ImageF product(const ImageF& a, const ImageF& b) {
  ImageF out(a.width(), a.height());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace

SsimResult ssim(const ImageRGB& a, const ImageRGB& b) {
  if (!a.same_size(b)) throw std::invalid_argument("ssim: size mismatch");
  const int W = a.width(), H = a.height();
  if (W < kWin || H < kWin)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  const int x0 = kHalf, x1 = W - kHalf;  // valid region [x0, x1)
  const int y0 = kHalf, y1 = H - kHalf;
  const int n_valid = (x1 - x0) * (y1 - y0);

  SsimResult result;
  result.map = ImageF(W, H, 0.0);
  result.grad_a = ImageRGB(W, H, Vec3::Zero());
  double mean_acc = 0;

  for (int c = 0; c < 3; ++c) {
    const ImageF xc = channel(a, c), yc = channel(b, c);
    const ImageF mu_x = conv_window(xc), mu_y = conv_window(yc);
    const ImageF e_xx = conv_window(product(xc, xc));
    const ImageF e_yy = conv_window(product(yc, yc));
    const ImageF e_xy = conv_window(product(xc, yc));

    // Per-pixel SSIM and the partials needed for the backward scatter.
    ImageF g_mu(W, H, 0.0);    // dS/d mu_x
    ImageF g_var(W, H, 0.0);   // dS/d sigma_x^2
    ImageF g_cov(W, H, 0.0);   // dS/d sigma_xy
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const double mx = mu_x(x, y), my = mu_y(x, y);
        const double vx = e_xx(x, y) - mx * mx;
        const double vy = e_yy(x, y) - my * my;
        const double cxy = e_xy(x, y) - mx * my;
        const double a1 = 2 * mx * my + kC1, b1 = mx * mx + my * my + kC1;
        const double a2 = 2 * cxy + kC2, b2 = vx + vy + kC2;
        const double s = (a1 * a2) / (b1 * b2);
        result.map(x, y) += s / 3.0;
        mean_acc += s;
        g_mu(x, y) = (2 * my * b1 - 2 * mx * a1) / (b1 * b1) * (a2 / b2);
        g_var(x, y) = -a1 * a2 / (b1 * b2 * b2);
        g_cov(x, y) = (a1 / b1) * (2.0 / b2);
      }
    }

    // grad_a = conv(g_mu) + 2a*conv(g_var) - 2conv(g_var*mu_x)
    //          + b*conv(g_cov) - conv(g_cov*mu_y), scaled by 1/(3 n).
    const ImageF s_mu = conv_window(g_mu);
    const ImageF s_var = conv_window(g_var);
    const ImageF s_var_mu = conv_window(product(g_var, mu_x));
    const ImageF s_cov = conv_window(g_cov);
    const ImageF s_cov_mu = conv_window(product(g_cov, mu_y));
    const double scale = 1.0 / (3.0 * n_valid);
    for (size_t i = 0; i < result.grad_a.size(); ++i) {
      result.grad_a[i][c] =
          scale * (s_mu[i] + 2.0 * xc[i] * s_var[i] - 2.0 * s_var_mu[i] +
                   yc[i] * s_cov[i] - s_cov_mu[i]);
    }
  }
  result.mean = mean_acc / (3.0 * n_valid);
  return result;
}

void Mapper::ensure_state(const GaussianMap& map) {
  if (state_generation_ == map.generation() &&
      rms_center_.size() == map.size())
    return;
  state_generation_ = map.generation();
  state_step_ = 0;
  rms_center_.assign(map.size(), Vec3::Zero());
  rms_radius_.assign(map.size(), 0.0);
  rms_color_.assign(map.size(), Vec3::Zero());
  rms_opacity_.assign(map.size(), 0.0);
}

double Mapper::mapping_step(GaussianMap& map, const Frame& frame,
                            const SE3Pose& pose) {
  ensure_state(map);
  const CameraIntrinsics& K = frame.intrinsics;
  RenderOutput rendered = render(map, K, pose, render_options_);

  // L1 averaging domain: valid sensor depth and nonzero rendered coverage.
  int n = 0;
  double l1_color = 0, l1_depth = 0;
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      if (!(frame.depth(x, y) > 0) || !(rendered.border_mask(x, y) > 0))
        continue;
      ++n;
      l1_color += (rendered.color(x, y) - frame.color(x, y)).cwiseAbs().sum();
      l1_depth += std::abs(rendered.depth(x, y) - frame.depth(x, y));
    }
  }
  if (n == 0) throw std::runtime_error("empty-overlap: no pixel qualifies");
  l1_color /= 3.0 * n;
  l1_depth /= n;

  const double zeta = cfg_.zeta;
  double loss = (1.0 - zeta) * (cfg_.w4 * l1_depth + cfg_.w5 * l1_color);

  ImageRGB grad_color(K.width, K.height, Vec3::Zero());
  ImageF grad_depth(K.width, K.height, 0.0);
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      if (!(frame.depth(x, y) > 0) || !(rendered.border_mask(x, y) > 0))
        continue;
      const Vec3 dc = rendered.color(x, y) - frame.color(x, y);
      for (int c = 0; c < 3; ++c)
        grad_color(x, y)[c] = (1.0 - zeta) * cfg_.w5 *
                              (dc[c] > 0 ? 1.0 : (dc[c] < 0 ? -1.0 : 0.0)) /
                              (3.0 * n);
      const double dd = rendered.depth(x, y) - frame.depth(x, y);
      grad_depth(x, y) = (1.0 - zeta) * cfg_.w4 *
                         (dd > 0 ? 1.0 : (dd < 0 ? -1.0 : 0.0)) / n;
    }
  }

  if (zeta > 0) {
    const SsimResult sr = ssim(rendered.color, frame.color);
    loss += zeta * (1.0 - sr.mean);
    for (size_t i = 0; i < grad_color.size(); ++i)
      grad_color[i] -= zeta * sr.grad_a[i];
  }

  const GaussianGrads grads =
      backward_gaussians(map, rendered, grad_color, grad_depth, ImageF());

  // Median valid depth sets the center step scale.
  double median_depth = 1.0;
  {
    std::vector<double> depths;
    depths.reserve(frame.depth.size());
    for (size_t i = 0; i < frame.depth.size(); ++i)
      if (frame.depth[i] > 0) depths.push_back(frame.depth[i]);
    if (!depths.empty()) {
      std::nth_element(depths.begin(), depths.begin() + depths.size() / 2,
                       depths.end());
      median_depth = depths[depths.size() / 2];
    }
  }

  // RMS-scaled gradient step per parameter group, then box projection.
  ++state_step_;
  const double correction = 1.0 - std::pow(0.9, state_step_);
  const double eps = 1e-12;
  const double lr_center = cfg_.lr_center_scale * median_depth;
  for (size_t i = 0; i < map.size(); ++i) {
    Gaussian& g = map[i];
    for (int k = 0; k < 3; ++k) {
      double& v = rms_center_[i][k];
      v = 0.9 * v + 0.1 * grads.center[i][k] * grads.center[i][k];
      g.center[k] -=
          lr_center * grads.center[i][k] / (std::sqrt(v / correction) + eps);
      double& vc = rms_color_[i][k];
      vc = 0.9 * vc + 0.1 * grads.color[i][k] * grads.color[i][k];
      g.color[k] -=
          cfg_.lr_color * grads.color[i][k] / (std::sqrt(vc / correction) + eps);
    }
    double& vr = rms_radius_[i];
    vr = 0.9 * vr + 0.1 * grads.radius[i] * grads.radius[i];
    g.radius -=
        cfg_.lr_radius * grads.radius[i] / (std::sqrt(vr / correction) + eps);
    double& vo = rms_opacity_[i];
    vo = 0.9 * vo + 0.1 * grads.opacity[i] * grads.opacity[i];
    g.opacity -=
        cfg_.lr_opacity * grads.opacity[i] / (std::sqrt(vo / correction) + eps);

    g.radius = std::max(g.radius, cfg_.min_radius);
    g.opacity = std::clamp(g.opacity, 0.0, 1.0);
    for (int k = 0; k < 3; ++k) g.color[k] = std::clamp(g.color[k], 0.0, 1.0);
  }

  return loss;
}

MapFrameSummary Mapper::map_frame(GaussianMap& map, const Frame& frame,
                                  const SE3Pose& pose,
                                  double densify_threshold,
                                  double init_opacity) {
  MapFrameSummary summary;
  RenderOptions probe = render_options_;
  probe.keep_cache = false;
  const RenderOutput rendered = render(map, frame.intrinsics, pose, probe);
  summary.added =
      map.densify(frame, pose, rendered.border_mask, densify_threshold,
                  init_opacity);
  for (int i = 0; i < cfg_.map_iters; ++i)
    summary.final_loss = mapping_step(map, frame, pose);
  summary.pruned = map.prune(cfg_.tau, cfg_.max_opacity);
  return summary;
}

}  // namespace splatbridge
