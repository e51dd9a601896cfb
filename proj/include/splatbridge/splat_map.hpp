#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatbridge/geometry.hpp"
#include "splatbridge/image.hpp"

namespace splatbridge {

struct Frame;  // dataset.hpp

// One isotropic scene primitive.
struct Gaussian {
  Vec3 center = Vec3::Zero();   // world, meters
  double radius = 0;            // meters, > 0
  Vec3 color = Vec3::Zero();    // [0,1]^3
  double opacity = 0;           // [0,1]
};

// Global Gaussian scene store. Single writer; renders take the map as an
// immutable snapshot tagged with the generation counter.
class GaussianMap {
 public:
  const std::vector<Gaussian>& gaussians() const { return gaussians_; }
  std::vector<Gaussian>& gaussians() { return gaussians_; }
  size_t size() const { return gaussians_.size(); }
  bool empty() const { return gaussians_.empty(); }
  uint64_t generation() const { return generation_; }

  void add(const Gaussian& g) {
    gaussians_.push_back(g);
    ++generation_;
  }

  void bump_generation() { ++generation_; }

  const Gaussian& operator[](size_t i) const { return gaussians_[i]; }
  Gaussian& operator[](size_t i) { return gaussians_[i]; }

  // Appends one Gaussian per valid-depth pixel whose border-mask value is
  // below the threshold. Radius is depth / fx so the splat projects to one
  // pixel in the view that created it. Returns the number added.
  int densify(const Frame& frame, const SE3Pose& pose,
              const ImageF& border_mask, double densify_threshold,
              double init_opacity);

  // Removes Gaussians with opacity < tau or > max_opacity. Survivors keep
  // relative order. Returns the number removed.
  int prune(double tau, double max_opacity);

  void save_checkpoint(const std::string& path) const;
  static GaussianMap load_checkpoint(const std::string& path);

 private:
  std::vector<Gaussian> gaussians_;
  uint64_t generation_ = 0;
};

// o * exp(-|x - mu|^2 / (2 r^2)); in [0, o].
double gaussian_influence(const Gaussian& g, const Vec3& x);

}  // namespace splatbridge
