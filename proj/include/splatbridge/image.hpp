#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

#include "splatbridge/geometry.hpp"

namespace splatbridge {

template <typename T>
struct DefaultPixel {
  static T value() { return T{}; }
};
template <>
struct DefaultPixel<Vec3> {
  static Vec3 value() { return Vec3::Zero(); }  // Eigen does not zero-init
};

// Row-major dense image container.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, const T& fill = DefaultPixel<T>::value())
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  T& operator()(int x, int y) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return data_[static_cast<size_t>(y) * width_ + x];
  }
  const T& operator()(int x, int y) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return data_[static_cast<size_t>(y) * width_ + x];
  }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_size(int w, int h) const { return width_ == w && height_ == h; }
  template <typename U>
  bool same_size(const Image<U>& other) const {
    return same_size(other.width(), other.height());
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using ImageF = Image<double>;       // depth / gray / masks
using ImageRGB = Image<Vec3>;       // color in [0,1]^3
using ImageB = Image<uint8_t>;      // boolean masks

inline Image<Vec3> constant_rgb(int w, int h, const Vec3& c) {
  return Image<Vec3>(w, h, c);
}

inline ImageF rgb_to_gray(const ImageRGB& img) {
  ImageF out(img.width(), img.height());
  for (size_t i = 0; i < img.size(); ++i) {
    const Vec3& c = img[i];
    out[i] = 0.299 * c.x() + 0.587 * c.y() + 0.114 * c.z();
  }
  return out;
}

}  // namespace splatbridge
