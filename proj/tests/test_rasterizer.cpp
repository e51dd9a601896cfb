#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers/fixtures.hpp"
#include "helpers/reference_blender.hpp"
#include "splatbridge/rasterizer.hpp"

using namespace splatbridge;
using namespace splatbridge::testing;

namespace {

double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

// Scalar loss over a render: sum of fixed random grad images dotted with
// the outputs. Linear in (C, D, M), so its gradient images are constants.
struct LinearLoss {
  ImageRGB gc;
  ImageF gd, gm;
  LinearLoss(int w, int h, uint64_t seed) {
    Rng rng(seed);
    gc = ImageRGB(w, h);
    gd = ImageF(w, h);
    gm = ImageF(w, h);
    for (size_t i = 0; i < gc.size(); ++i) {
      gc[i] = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      gd[i] = rng.uniform(-1, 1);
      gm[i] = rng.uniform(-1, 1);
    }
  }
  double eval(const RenderOutput& r) const {
    double acc = 0;
    for (size_t i = 0; i < gc.size(); ++i)
      acc += gc[i].dot(r.color[i]) + gd[i] * r.depth[i] + gm[i] * r.border_mask[i];
    return acc;
  }
};

}  // namespace

TEST_CASE("project_gaussians closed form, drop, and sort") {
  const CameraIntrinsics K{500, 500, 320, 240, 640, 480};
  GaussianMap map;
  Gaussian g;
  g.center = Vec3(0, 0, 2);
  g.radius = 0.004;
  g.opacity = 0.5;
  map.add(g);
  g.center = Vec3(0, 0, -1);  // behind camera
  map.add(g);
  g.center = Vec3(0, 0, 3);
  map.add(g);
  g.center = Vec3(0, 0, 1);
  map.add(g);

  RenderOptions opts;
  const auto proj = project_gaussians(map, K, SE3Pose{}, opts);
  REQUIRE(proj.size() == 3);
  CHECK(proj[0].depth == doctest::Approx(1.0));
  CHECK(proj[1].depth == doctest::Approx(2.0));
  CHECK(proj[2].depth == doctest::Approx(3.0));
  CHECK(proj[1].u2d == doctest::Approx(320.0));
  CHECK(proj[1].v2d == doctest::Approx(240.0));
  CHECK(proj[1].r2d == doctest::Approx(1.0));
  CHECK(proj[1].source == 0);
}

TEST_CASE("projected footprint radius is clamped at r2d_min") {
  const CameraIntrinsics K{100, 100, 8, 8, 16, 16};
  GaussianMap map;
  Gaussian g;
  g.center = Vec3(0, 0, 5);
  g.radius = 1e-4;  // fx*r/d = 0.002 px, far below the clamp
  g.opacity = 0.5;
  map.add(g);
  RenderOptions opts;  // r2d_min = 0.3
  const auto proj = project_gaussians(map, K, SE3Pose{}, opts);
  REQUIRE(proj.size() == 1);
  CHECK(proj[0].r2d == opts.r2d_min);
  CHECK(proj[0].r2d_clamped);
}

TEST_CASE("equal-depth ties break by insertion id") {
  const CameraIntrinsics K{100, 100, 8, 8, 16, 16};
  GaussianMap map;
  Gaussian g;
  g.center = Vec3(0.01, 0, 2);
  g.radius = 0.1;
  g.opacity = 0.5;
  map.add(g);
  g.center = Vec3(-0.01, 0, 2);
  map.add(g);
  RenderOptions opts;
  const auto proj = project_gaussians(map, K, SE3Pose{}, opts);
  REQUIRE(proj.size() == 2);
  CHECK(proj[0].source == 0);
  CHECK(proj[1].source == 1);
}

TEST_CASE("empty map renders background, zero depth, zero mask") {
  const CameraIntrinsics K{50, 50, 8, 8, 16, 16};
  GaussianMap map;
  RenderOptions opts;
  opts.background = Vec3(0.2, 0.4, 0.6);
  const RenderOutput r = render(map, K, SE3Pose{}, opts);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      CHECK(same_vec3(r.color(x, y), opts.background));
      CHECK(r.depth(x, y) == 0.0);
      CHECK(r.border_mask(x, y) == 0.0);
    }
}

TEST_CASE("single near-opaque gaussian dominates its center pixel") {
  const CameraIntrinsics K{100, 100, 8, 8, 16, 16};
  GaussianMap map;
  Gaussian g;
  g.center = Vec3(0, 0, 2);   // projects to (8, 8)
  g.radius = 1.0;             // r2d = 50 >> 1
  g.color = Vec3(0.9, 0.1, 0.4);
  g.opacity = 0.999;
  map.add(g);
  RenderOptions opts;
  const RenderOutput r = render(map, K, SE3Pose{}, opts);
  CHECK((r.color(8, 8) - g.color).norm() < 2e-3);
  CHECK(r.depth(8, 8) == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(r.border_mask(8, 8) == doctest::Approx(0.999));
}

TEST_CASE("two-gaussian hand-computed blend") {
  // front: opacity 0.6 red at depth 1; back: opacity 0.8 blue at depth 2,
  // both huge footprints centered on the same pixel.
  const CameraIntrinsics K{100, 100, 8, 8, 16, 16};
  GaussianMap map;
  Gaussian front;
  front.center = Vec3(0, 0, 1);
  front.radius = 2.0;
  front.color = Vec3(1, 0, 0);
  front.opacity = 0.6;
  map.add(front);
  Gaussian back;
  back.center = Vec3(0, 0, 2);
  back.radius = 4.0;
  back.color = Vec3(0, 0, 1);
  back.opacity = 0.8;
  map.add(back);

  RenderOptions opts;
  opts.alpha_cutoff = 0;
  opts.transmittance_stop = 0;
  const RenderOutput r = render(map, K, SE3Pose{}, opts);
  // At the shared center both alphas equal the opacities exactly.
  const Vec3 expected_color = 0.6 * Vec3(1, 0, 0) + 0.4 * 0.8 * Vec3(0, 0, 1);
  CHECK((r.color(8, 8) - expected_color).norm() < 1e-12);
  CHECK(r.border_mask(8, 8) == doctest::Approx(0.92).epsilon(1e-12));
  CHECK(r.depth(8, 8) == doctest::Approx(0.6 * 1 + 0.32 * 2).epsilon(1e-12));
}

TEST_CASE("blend weights conserve: sum w = M_b = 1 - T_end, monotone T") {
  Rng rng(101);
  const CameraIntrinsics K = small_camera(32);
  const GaussianMap map = random_scene(rng, 40, K);
  RenderOptions opts;  // production cutoffs
  const RenderOutput r = render(map, K, SE3Pose{}, opts);
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const size_t pix = size_t(y) * K.width + x;
      const uint32_t off = r.cache_offset[pix];
      const uint32_t count = r.cache_count[pix];
      double sum_w = 0, prev_T = 1.0 + 1e-15;
      for (uint32_t k = 0; k < count; ++k) {
        const BlendEntry& e = r.cache[off + k];
        CHECK(e.alpha >= 0.0);
        CHECK(e.trans < prev_T);
        prev_T = e.trans;
        sum_w += e.alpha * e.trans;
      }
      CHECK(sum_w == doctest::Approx(r.border_mask(x, y)).epsilon(1e-9));
      CHECK(r.border_mask(x, y) >= 0.0);
      CHECK(r.border_mask(x, y) <= 1.0);
      if (count > 0) {
        const double t_end = r.final_transmittance(x, y);
        // early termination leaves T slightly above the full product
        CHECK(r.border_mask(x, y) <= 1.0 - t_end + 1e-9);
      }
    }
  }
}

TEST_CASE("production rasterizer matches the scalar reference blender") {
  Rng rng(202);
  for (int scene = 0; scene < 20; ++scene) {
    const CameraIntrinsics K = small_camera(rng.uniform_int(12, 24));
    const GaussianMap map = random_scene(rng, rng.uniform_int(1, 30), K);
    const SE3Pose pose = random_pose_near_identity(rng, 0.05);
    RenderOptions opts;
    opts.alpha_cutoff = 0;         // reference has no cutoffs
    opts.transmittance_stop = 0;
    opts.sigma_extent = 1e9;
    opts.background = Vec3(0.3, 0.1, 0.2);
    const RenderOutput prod = render(map, K, pose, opts);
    const ReferenceRender ref = reference_render(
        map, K, pose, opts.near_clip, opts.r2d_min, opts.background);
    for (int y = 0; y < K.height; ++y)
      for (int x = 0; x < K.width; ++x) {
        CHECK((prod.color(x, y) - ref.color(x, y)).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(std::abs(prod.depth(x, y) - ref.depth(x, y)) < 1e-9);
        CHECK(std::abs(prod.border_mask(x, y) - ref.mask(x, y)) < 1e-9);
      }
  }
}

TEST_CASE("renders are deterministic") {
  Rng rng(303);
  const CameraIntrinsics K = small_camera(32);
  const GaussianMap map = random_scene(rng, 30, K);
  RenderOptions opts;
  const RenderOutput a = render(map, K, SE3Pose{}, opts);
  const RenderOutput b = render(map, K, SE3Pose{}, opts);
  for (size_t i = 0; i < a.color.size(); ++i) {
    CHECK(same_vec3(a.color[i], b.color[i]));
    CHECK(a.depth[i] == b.depth[i]);
    CHECK(a.border_mask[i] == b.border_mask[i]);
  }
}

TEST_CASE("zero grad images give zero gradients") {
  Rng rng(404);
  const CameraIntrinsics K = small_camera(16);
  const GaussianMap map = random_scene(rng, 10, K);
  const RenderOutput r = render(map, K, SE3Pose{}, relaxed_options());
  const ImageRGB gc(K.width, K.height, Vec3::Zero());
  const ImageF gd(K.width, K.height, 0.0);
  const ImageF gm(K.width, K.height, 0.0);
  const GaussianGrads grads = backward_gaussians(map, r, gc, gd, gm);
  const Vec6 pg = backward_pose(map, r, gc, gd, gm);
  CHECK(pg.norm() == 0.0);
  for (size_t i = 0; i < map.size(); ++i) {
    CHECK(grads.center[i].norm() == 0.0);
    CHECK(grads.radius[i] == 0.0);
    CHECK(grads.color[i].norm() == 0.0);
    CHECK(grads.opacity[i] == 0.0);
  }
}

TEST_CASE("single-gaussian color gradient equals the blend weight") {
  const CameraIntrinsics K{100, 100, 8, 8, 16, 16};
  GaussianMap map;
  Gaussian g;
  g.center = Vec3(0, 0, 2);
  g.radius = 0.5;
  g.color = Vec3(0.5, 0.5, 0.5);
  g.opacity = 0.7;
  map.add(g);
  const RenderOutput r = render(map, K, SE3Pose{}, relaxed_options());
  ImageRGB gc(16, 16, Vec3::Zero());
  gc(8, 8) = Vec3(1, 0, 0);  // dL/dC_red at one pixel
  const GaussianGrads grads =
      backward_gaussians(map, r, gc, ImageF(16, 16, 0.0), ImageF(16, 16, 0.0));
  // alpha at the center pixel is the opacity; transmittance before is 1
  CHECK(grads.color[0].x() == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(grads.color[0].y() == 0.0);
}

TEST_CASE("stale cache is rejected") {
  Rng rng(505);
  const CameraIntrinsics K = small_camera(16);
  GaussianMap map = random_scene(rng, 5, K);
  const RenderOutput r = render(map, K, SE3Pose{}, relaxed_options());
  map.add(map[0]);  // structural change
  const ImageRGB gc(16, 16, Vec3::Zero());
  CHECK_THROWS_WITH_AS(
      backward_gaussians(map, r, gc, ImageF(16, 16, 0.0), ImageF(16, 16, 0.0)),
      doctest::Contains("stale-cache"), std::runtime_error);
}

TEST_CASE("analytic gaussian gradients match central finite differences") {
  Rng rng(606);
  const double h = 1e-5;
  for (int trial = 0; trial < 4; ++trial) {
    const CameraIntrinsics K = small_camera(16);
    GaussianMap map = random_scene(rng, 8, K);
    const SE3Pose pose = random_pose_near_identity(rng, 0.03);
    const RenderOptions opts = relaxed_options();
    const LinearLoss loss(K.width, K.height, 700 + trial);

    const RenderOutput r = render(map, K, pose, opts);
    const GaussianGrads grads =
        backward_gaussians(map, r, loss.gc, loss.gd, loss.gm);

    auto numeric = [&](auto&& setter) {
      GaussianMap probe = map;
      setter(probe, +h);
      const double up = loss.eval(render(probe, K, pose, opts));
      probe = map;
      setter(probe, -h);
      const double dn = loss.eval(render(probe, K, pose, opts));
      return (up - dn) / (2 * h);
    };

    for (size_t i = 0; i < map.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        const double num = numeric(
            [&](GaussianMap& m, double d) { m[i].center[k] += d; });
        CHECK(rel_err(grads.center[i][k], num) < 1e-4);
        const double numc = numeric(
            [&](GaussianMap& m, double d) { m[i].color[k] += d; });
        CHECK(rel_err(grads.color[i][k], numc) < 1e-4);
      }
      const double numr =
          numeric([&](GaussianMap& m, double d) { m[i].radius += d; });
      CHECK(rel_err(grads.radius[i], numr) < 1e-4);
      const double numo =
          numeric([&](GaussianMap& m, double d) { m[i].opacity += d; });
      CHECK(rel_err(grads.opacity[i], numo) < 1e-4);
    }
  }
}

TEST_CASE("analytic pose gradient matches central finite differences") {
  Rng rng(707);
  const double h = 1e-5;
  for (int trial = 0; trial < 6; ++trial) {
    const CameraIntrinsics K = small_camera(16);
    const GaussianMap map = random_scene(rng, 10, K);
    const SE3Pose pose = random_pose_near_identity(rng, 0.03);
    const RenderOptions opts = relaxed_options();
    const LinearLoss loss(K.width, K.height, 800 + trial);

    const RenderOutput r = render(map, K, pose, opts);
    const Vec6 g = backward_pose(map, r, loss.gc, loss.gd, loss.gm);

    for (int k = 0; k < 6; ++k) {
      Vec6 delta = Vec6::Zero();
      delta[k] = h;
      const double up = loss.eval(render(map, K, se3_exp(delta) * pose, opts));
      delta[k] = -h;
      const double dn = loss.eval(render(map, K, se3_exp(delta) * pose, opts));
      const double num = (up - dn) / (2 * h);
      CHECK(rel_err(g[k], num) < 1e-4);
    }
  }
}
