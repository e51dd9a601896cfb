#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers/fixtures.hpp"
#include "splatbridge/dataset.hpp"
#include "splatbridge/fusion_bridge.hpp"
#include "splatbridge/random.hpp"

using namespace splatbridge;
using namespace splatbridge::testing;

namespace {

// Dense opaque synthetic view: scene, a frame rendered from it at the true
// pose, and exact landmark observations.
struct BridgeFixture {
  GaussianMap map;
  Frame frame;
  SE3Pose truth;
  std::vector<PointPixelMatch> matches;
  RenderOptions ropt;
};

BridgeFixture make_fixture(uint64_t seed, int size = 48) {
  Rng rng(seed);
  BridgeFixture fx;
  fx.frame.intrinsics = {double(size), double(size), size / 2.0, size / 2.0,
                         size, size};
  const CameraIntrinsics& K = fx.frame.intrinsics;
  // layered opaque-ish blobs so the border mask saturates above 0.99
  for (int i = 0; i < 120; ++i) {
    Gaussian g;
    const double depth = rng.uniform(1.6, 2.6);
    g.center = Vec3((rng.uniform(2.0, K.width - 2.0) - K.cx) * depth / K.fx,
                    (rng.uniform(2.0, K.height - 2.0) - K.cy) * depth / K.fy,
                    depth);
    g.radius = rng.uniform(0.1, 0.3);
    g.color = Vec3(rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0),
                   rng.uniform(0.2, 1.0));
    g.opacity = rng.uniform(0.85, 0.98);
    fx.map.add(g);
  }
  fx.truth = random_pose_near_identity(rng, 0.02);
  fx.ropt.keep_cache = false;
  const RenderOutput r = render(fx.map, K, fx.truth, fx.ropt);
  fx.frame.color = r.color;
  fx.frame.depth = r.depth;
  fx.frame.timestamp = 0;
  // landmarks from gaussian centers with exact projections
  for (size_t i = 0; i < fx.map.size(); i += 3) {
    const auto proj = project_point(K, fx.truth, fx.map[i].center);
    if (proj.behind_camera) continue;
    if (proj.pixel.u < 0 || proj.pixel.u > K.width - 1 || proj.pixel.v < 0 ||
        proj.pixel.v > K.height - 1)
      continue;
    fx.matches.push_back({fx.map[i].center, proj.pixel});
  }
  return fx;
}

}  // namespace

TEST_CASE("select_viewpoint reference examples") {
  BridgeConfig cfg;  // alpha 0.75, beta 20
  CHECK(select_viewpoint(30, 100, cfg));
  CHECK_FALSE(select_viewpoint(80, 100, cfg));
  CHECK_FALSE(select_viewpoint(10, 100, cfg));
}

TEST_CASE("select_viewpoint boundary behavior") {
  BridgeConfig cfg;
  cfg.alpha = 0.75;
  cfg.beta = 20;
  for (int T : {100, 101, 31, 27}) {
    const int upper = int(std::ceil(cfg.alpha * T));
    CHECK(select_viewpoint(cfg.beta, T, cfg) == (cfg.beta < cfg.alpha * T));
    if (upper - 1 >= cfg.beta) CHECK(select_viewpoint(upper - 1, T, cfg));
    CHECK_FALSE(select_viewpoint(upper, T, cfg));
    CHECK_FALSE(select_viewpoint(cfg.beta - 1, T, cfg));
  }
  // alpha = 0 disables selection entirely
  cfg.alpha = 0;
  CHECK_FALSE(select_viewpoint(50, 100, cfg));
}

TEST_CASE("compute_gate truth table") {
  RenderOutput r;
  r.depth = ImageF(2, 4, 0.0);
  r.border_mask = ImageF(2, 4, 0.0);
  ImageF cloud(2, 4, 0.0);
  // all eight combinations of (cloud>0, depth>0, mask>gamma)
  int idx = 0;
  bool expect[8];
  for (int c = 0; c < 2; ++c)
    for (int d = 0; d < 2; ++d)
      for (int m = 0; m < 2; ++m) {
        const int x = idx % 2, y = idx / 2;
        cloud(x, y) = c ? 1.5 : 0.0;
        r.depth(x, y) = d ? 2.0 : 0.0;
        r.border_mask(x, y) = m ? 0.995 : 0.95;
        expect[idx] = c && d && m;
        ++idx;
      }
  const ImageB gate = compute_gate(cloud, r, 0.99);
  for (int i = 0; i < 8; ++i)
    CHECK(bool(gate(i % 2, i / 2)) == expect[i]);
}

TEST_CASE("compute_gate trivial all-true and all-false cases") {
  RenderOutput r;
  r.depth = ImageF(4, 4, 2.0);
  r.border_mask = ImageF(4, 4, 0.995);
  const ImageF cloud(4, 4, 1.0);
  const ImageB gate = compute_gate(cloud, r, 0.99);
  for (size_t i = 0; i < gate.size(); ++i) CHECK(gate[i] == 1);

  r.border_mask = ImageF(4, 4, 0.95);
  const ImageB closed = compute_gate(cloud, r, 0.99);
  for (size_t i = 0; i < closed.size(); ++i) CHECK(closed[i] == 0);

  const ImageF zero_cloud(4, 4, 0.0);
  r.border_mask = ImageF(4, 4, 0.995);
  const ImageB no_cloud = compute_gate(zero_cloud, r, 0.99);
  for (size_t i = 0; i < no_cloud.size(); ++i) CHECK(no_cloud[i] == 0);
}

TEST_CASE("fixture actually exercises the gate") {
  const BridgeFixture fx = make_fixture(61);
  const RenderOutput r =
      render(fx.map, fx.frame.intrinsics, fx.truth, fx.ropt);
  const ImageB gate = compute_gate(fx.frame.depth, r, 0.99);
  int open = 0;
  for (size_t i = 0; i < gate.size(); ++i) open += gate[i];
  CHECK(open > 100);  // the joint tests below must see a real gate
}

TEST_CASE("joint optimization is stationary at the ground truth") {
  const BridgeFixture fx = make_fixture(67);
  BridgeConfig cfg;
  cfg.iterations = 5;
  const JointOptimizeResult r =
      joint_optimize_pose(fx.frame, fx.matches, fx.map, fx.frame.intrinsics,
                          fx.truth, cfg, fx.ropt);
  const Vec6 err = se3_log(r.pose * fx.truth.inverse());
  CHECK(err.norm() < 1e-6);
  CHECK_FALSE(r.insufficient_matches);
}

TEST_CASE("joint optimization recovers a perturbed pose and lowers the loss") {
  Rng rng(71);
  int recovered = 0;
  const int trials = 5;
  for (int t = 0; t < trials; ++t) {
    const BridgeFixture fx = make_fixture(100 + t);
    Vec6 noise;
    for (int k = 0; k < 6; ++k) noise[k] = rng.uniform(-1, 1);
    noise *= 0.02 / noise.norm();
    const SE3Pose init = se3_exp(noise) * fx.truth;
    BridgeConfig cfg;
    cfg.iterations = 10;
    const JointOptimizeResult r =
        joint_optimize_pose(fx.frame, fx.matches, fx.map, fx.frame.intrinsics,
                            init, cfg, fx.ropt);
    REQUIRE_FALSE(r.trace.empty());
    CHECK(r.trace.front().total >= 0);
    // best-iterate selection: the returned pose's loss never exceeds init's
    double best = 1e300;
    for (const auto& e : r.trace) best = std::min(best, e.total);
    CHECK(best <= r.trace.front().total + 1e-12);
    const Vec6 err = se3_log(r.pose * fx.truth.inverse());
    if (err.norm() < 1e-3) ++recovered;
  }
  CHECK(recovered == trials);
}

TEST_CASE("zero rendering weights reduce to track_pose exactly") {
  const BridgeFixture fx = make_fixture(73);
  Vec6 noise = Vec6::Constant(0.008);
  const SE3Pose init = se3_exp(noise) * fx.truth;
  BridgeConfig cfg;
  cfg.w2 = 0;
  cfg.w3 = 0;
  cfg.iterations = 10;
  const JointOptimizeResult jr =
      joint_optimize_pose(fx.frame, fx.matches, fx.map, fx.frame.intrinsics,
                          init, cfg, fx.ropt);
  const TrackResult tr = track_pose(fx.matches, fx.frame.intrinsics, init,
                                    cfg.huber_delta, 50);
  CHECK((jr.pose.translation - tr.pose.translation).norm() < 1e-9);
  CHECK((jr.pose.rotation - tr.pose.rotation).norm() < 1e-9);
}

TEST_CASE("impossible gate degrades to reprojection-only but stays valid") {
  const BridgeFixture fx = make_fixture(79);
  BridgeConfig cfg;
  cfg.gamma = 1.0 + 1e-9;  // no pixel can pass
  cfg.iterations = 5;
  const SE3Pose init = se3_exp(Vec6::Constant(0.005)) * fx.truth;
  const JointOptimizeResult r =
      joint_optimize_pose(fx.frame, fx.matches, fx.map, fx.frame.intrinsics,
                          init, cfg, fx.ropt);
  CHECK(r.no_gated_pixels);
  CHECK(r.pose.is_valid_rotation());
  const Vec6 err = se3_log(r.pose * fx.truth.inverse());
  CHECK(err.norm() < 1e-5);  // reprojection still converges
}

TEST_CASE("fewer than six landmarks falls back to rendering-only steps") {
  const BridgeFixture full = make_fixture(83);
  BridgeFixture fx = full;
  fx.matches.resize(3);
  BridgeConfig cfg;
  cfg.iterations = 6;
  const SE3Pose init = se3_exp(Vec6::Constant(0.002)) * fx.truth;
  const JointOptimizeResult r =
      joint_optimize_pose(fx.frame, fx.matches, fx.map, fx.frame.intrinsics,
                          init, cfg, fx.ropt);
  CHECK(r.insufficient_matches);
  // rendering steps alone should not worsen the total loss
  REQUIRE(r.trace.size() >= 1);
  double best = 1e300;
  for (const auto& e : r.trace) best = std::min(best, e.total);
  CHECK(best <= r.trace.front().total + 1e-12);
}

TEST_CASE("gate soundness: gated pixels satisfy all three conditions") {
  const BridgeFixture fx = make_fixture(89);
  const RenderOutput r = render(fx.map, fx.frame.intrinsics, fx.truth, fx.ropt);
  const ImageB gate = compute_gate(fx.frame.depth, r, 0.99);
  for (int y = 0; y < gate.height(); ++y)
    for (int x = 0; x < gate.width(); ++x)
      if (gate(x, y)) {
        CHECK(fx.frame.depth(x, y) > 0);
        CHECK(r.depth(x, y) > 0);
        CHECK(r.border_mask(x, y) > 0.99);
      }
}
