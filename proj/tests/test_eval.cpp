#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers/fixtures.hpp"
#include "splatbridge/eval.hpp"
#include "splatbridge/random.hpp"

using namespace splatbridge;
using splatbridge::testing::random_pose_near_identity;

namespace {

Trajectory random_trajectory(Rng& rng, int n) {
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    Vec6 twist;
    for (int k = 0; k < 6; ++k) twist[k] = rng.uniform(-1, 1);
    t.emplace_back(i * 0.1, se3_exp(twist));
  }
  return t;
}

ImageRGB random_image(Rng& rng, int w, int h) {
  ImageRGB img(w, h);
  for (size_t i = 0; i < img.size(); ++i)
    img[i] = Vec3(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));
  return img;
}

}  // namespace

TEST_CASE("align_rigid of a trajectory with itself is identity") {
  Rng rng(3);
  const Trajectory t = random_trajectory(rng, 10);
  const SE3Pose G = align_rigid(t, t);
  CHECK((G.rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK(G.translation.norm() < 1e-12);
  CHECK(ate_rmse_cm(t, t) < 1e-9);
}

TEST_CASE("align_rigid recovers an injected rigid transform") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Trajectory gt = random_trajectory(rng, 12);
    const SE3Pose G0 = random_pose_near_identity(rng, 1.2);
    Trajectory est;
    for (const auto& [t, pose] : gt) est.emplace_back(t, G0 * pose);
    const SE3Pose G = align_rigid(est, gt);
    const SE3Pose recovered = G * G0;  // should be identity
    CHECK((recovered.rotation - Mat3::Identity()).norm() < 1e-9);
    CHECK(recovered.translation.norm() < 1e-9);
    CHECK(ate_rmse_cm(est, gt) < 1e-9);
  }
}

TEST_CASE("align_rigid needs at least three pairs") {
  Rng rng(7);
  const Trajectory t = random_trajectory(rng, 2);
  CHECK_THROWS_WITH_AS(align_rigid(t, t), doctest::Contains("insufficient-pairs"),
                       std::runtime_error);
}

TEST_CASE("ate_rmse hand-computed fixture where alignment is identity") {
  // gt square of 4 poses around the origin; est adds alternating +-2 cm z
  // offsets. Offsets are zero-mean and contribute nothing to the
  // cross-covariance (sum of delta_i * corner_i = 0), so the optimal
  // alignment is exactly identity and RMSE = 2 cm.
  Trajectory gt, est;
  const Vec3 corners[4] = {{1, 1, 0}, {-1, 1, 0}, {-1, -1, 0}, {1, -1, 0}};
  const double dz[4] = {0.02, -0.02, 0.02, -0.02};
  for (int i = 0; i < 4; ++i) {
    gt.emplace_back(i * 0.1, SE3Pose(Mat3::Identity(), corners[i]));
    est.emplace_back(i * 0.1,
                     SE3Pose(Mat3::Identity(), corners[i] + Vec3(0, 0, dz[i])));
  }
  const SE3Pose G = align_rigid(est, gt);
  CHECK((G.rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK(G.translation.norm() < 1e-12);
  CHECK(ate_rmse_cm(est, gt) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("ate_rmse is invariant to rigid disturbances of the estimate") {
  Rng rng(11);
  const Trajectory gt = random_trajectory(rng, 15);
  Trajectory est = gt;
  est[3].second.translation += Vec3(0.02, 0, 0);  // some real error
  const double base = ate_rmse_cm(est, gt);
  for (int trial = 0; trial < 5; ++trial) {
    const SE3Pose G = random_pose_near_identity(rng, 1.0);
    Trajectory moved;
    for (const auto& [t, pose] : est) moved.emplace_back(t, G * pose);
    CHECK(std::abs(ate_rmse_cm(moved, gt) - base) < 1e-9);
  }
}

TEST_CASE("psnr closed forms") {
  const ImageRGB a(8, 8, Vec3::Zero());
  CHECK(psnr(a, a) == 99.0);
  const ImageRGB b(8, 8, Vec3(0.5, 0.5, 0.5));
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));
}

TEST_CASE("psnr equals a brute-force recomputation and is symmetric") {
  Rng rng(13);
  const ImageRGB a = random_image(rng, 12, 9);
  const ImageRGB b = random_image(rng, 12, 9);
  double mse = 0;
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 12; ++x)
      for (int c = 0; c < 3; ++c) {
        const double d = a(x, y)[c] - b(x, y)[c];
        mse += d * d;
      }
  mse /= 12 * 9 * 3;
  CHECK(psnr(a, b) == doctest::Approx(10 * std::log10(1 / mse)).epsilon(1e-12));
  CHECK(psnr(a, b) == psnr(b, a));
}

TEST_CASE("psnr decreases monotonically with noise level") {
  Rng rng(17);
  const ImageRGB clean = random_image(rng, 32, 32);
  double prev = 100.0;
  for (const double sigma : {0.01, 0.02, 0.05}) {
    Rng noise_rng(99);
    ImageRGB noisy = clean;
    for (size_t i = 0; i < noisy.size(); ++i)
      for (int c = 0; c < 3; ++c)
        noisy[i][c] =
            std::clamp(noisy[i][c] + sigma * noise_rng.normal(), 0.0, 1.0);
    const double p = psnr(noisy, clean);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("measure_fps basics") {
  std::vector<FrameTiming> timings(100);
  for (auto& t : timings) {
    t.track_ms = 50;
    t.bridge_ms = 60;
    t.map_ms = 80;
    t.total_ms = 200;
  }
  const FpsReport r = measure_fps(timings);
  CHECK(r.frames == 100);
  CHECK(r.total_seconds == doctest::Approx(20.0));
  CHECK(r.fps == doctest::Approx(5.0));
  double stage_sum = 0;
  for (const auto& [name, sec] : r.stage_seconds) stage_sum += sec;
  CHECK(stage_sum == doctest::Approx(r.total_seconds).epsilon(0.05));
}

TEST_CASE("measure_fps rejects an empty run") {
  CHECK_THROWS_WITH_AS(measure_fps({}), doctest::Contains("no-frames"),
                       std::runtime_error);
}
