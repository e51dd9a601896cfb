#include "splatbridge/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace splatbridge {

namespace {
uint8_t to_u8(double v) {
  const double s = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<uint8_t>(std::lround(s));
}
}  // namespace

void save_color_image(const std::string& path, const ImageRGB& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width(); ++x) {
      const Vec3& c = img(x, y);
      row[x] = cv::Vec3b(to_u8(c.z()), to_u8(c.y()), to_u8(c.x()));  // BGR
    }
  }
  if (!cv::imwrite(path, m))
    throw std::runtime_error("image_io: cannot write " + path);
}

ImageRGB load_color_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("image_io: cannot read " + path);
  ImageRGB img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x)
      img(x, y) = Vec3(row[x][2] / 255.0, row[x][1] / 255.0, row[x][0] / 255.0);
  }
  return img;
}

void save_depth_image(const std::string& path, const ImageF& depth_meters,
                      double scale) {
  cv::Mat m(depth_meters.height(), depth_meters.width(), CV_16UC1);
  for (int y = 0; y < depth_meters.height(); ++y) {
    auto* row = m.ptr<uint16_t>(y);
    for (int x = 0; x < depth_meters.width(); ++x) {
      const double raw = depth_meters(x, y) * scale;
      row[x] = static_cast<uint16_t>(
          std::clamp(std::lround(raw), 0l, 65535l));
    }
  }
  if (!cv::imwrite(path, m))
    throw std::runtime_error("image_io: cannot write " + path);
}

ImageF load_depth_image(const std::string& path, double scale) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw std::runtime_error("image_io: cannot read " + path);
  if (m.type() != CV_16UC1)
    throw std::runtime_error("image_io: expected 16-bit depth: " + path);
  ImageF img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<uint16_t>(y);
    for (int x = 0; x < m.cols; ++x) img(x, y) = row[x] / scale;
  }
  return img;
}

}  // namespace splatbridge
