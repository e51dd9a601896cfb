#pragma once

#include <string>

#include "splatbridge/image.hpp"

namespace splatbridge {

// 8-bit RGB image file (format from extension: .png, .ppm, ...).
void save_color_image(const std::string& path, const ImageRGB& img);
ImageRGB load_color_image(const std::string& path);

// 16-bit single-channel depth file, TUM convention: meters * 5000.
void save_depth_image(const std::string& path, const ImageF& depth_meters,
                      double scale = 5000.0);
ImageF load_depth_image(const std::string& path, double scale = 5000.0);

}  // namespace splatbridge
