#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "fseg/image.hpp"
#include "fseg/imagenorm.hpp"

namespace fixture {

inline fseg::Mask disc_mask(int w, int h, double radius) {
  fseg::Mask m(w, h);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, std::hypot(x - cx, y - cy) <= radius);
  return m;
}

/// Orange-ish disc darkening towards its rim.
inline fseg::Image vignetted(int side, double radius) {
  fseg::Image img(side, side, 3);
  const double c = (side - 1) / 2.0;
  const double base[3] = {0.7, 0.35, 0.15};
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double r = std::min(1.0, std::hypot(x - c, y - c) / radius);
      const double v = 1.0 - 0.55 * r * r;
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = base[ch] * v;
    }
  return img;
}

/// Standard deviation of L over the mask.
inline double masked_l_std(const fseg::Image& rgb, const fseg::Mask& mask) {
  const fseg::Image luv = fseg::rgb_to_luv(rgb);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      if (mask.at(x, y)) {
        sum += luv.at(x, y, 0);
        ++n;
      }
  const double mean = sum / n;
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      if (mask.at(x, y)) sq += (luv.at(x, y, 0) - mean) * (luv.at(x, y, 0) - mean);
  return std::sqrt(sq / n);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fseg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
