#include "splatbridge/splat_map.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "splatbridge/dataset.hpp"

namespace splatbridge {

double gaussian_influence(const Gaussian& g, const Vec3& x) {
  const double d2 = (x - g.center).squaredNorm();
  return g.opacity * std::exp(-d2 / (2.0 * g.radius * g.radius));
}

int GaussianMap::densify(const Frame& frame, const SE3Pose& pose,
                         const ImageF& border_mask, double densify_threshold,
                         double init_opacity) {
  if (!border_mask.same_size(frame.depth))
    throw std::invalid_argument("densify: mask/frame size mismatch");

  const CameraIntrinsics& K = frame.intrinsics;
  int added = 0;
  for (int y = 0; y < frame.depth.height(); ++y) {
    for (int x = 0; x < frame.depth.width(); ++x) {
      const double d = frame.depth(x, y);
      if (!(d > 0)) continue;
      if (!(border_mask(x, y) < densify_threshold)) continue;
      Gaussian g;
      g.center = backproject(K, pose, {double(x), double(y)}, d);
      g.radius = d / K.fx;
      g.color = frame.color(x, y);
      g.opacity = init_opacity;
      gaussians_.push_back(g);
      ++added;
    }
  }
  if (added > 0) ++generation_;
  return added;
}

int GaussianMap::prune(double tau, double max_opacity) {
  const size_t before = gaussians_.size();
  std::erase_if(gaussians_, [&](const Gaussian& g) {
    return g.opacity < tau || g.opacity > max_opacity;
  });
  const int removed = static_cast<int>(before - gaussians_.size());
  if (removed > 0) ++generation_;
  return removed;
}

void GaussianMap::save_checkpoint(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out << "splatmap v1 " << gaussians_.size() << " " << generation_ << "\n";
  char line[256];
  for (const Gaussian& g : gaussians_) {
    std::snprintf(line, sizeof(line),
                  "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  g.center.x(), g.center.y(), g.center.z(), g.radius,
                  g.color.x(), g.color.y(), g.color.z(), g.opacity);
    out << line;
  }
}

GaussianMap GaussianMap::load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string magic, version;
  size_t count = 0;
  uint64_t generation = 0;
  in >> magic >> version >> count >> generation;
  if (magic != "splatmap" || version != "v1")
    throw std::runtime_error("checkpoint: bad header in " + path);
  GaussianMap map;
  map.gaussians_.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    Gaussian g;
    in >> g.center.x() >> g.center.y() >> g.center.z() >> g.radius >>
        g.color.x() >> g.color.y() >> g.color.z() >> g.opacity;
    if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
    map.gaussians_.push_back(g);
  }
  map.generation_ = generation;
  return map;
}

}  // namespace splatbridge
