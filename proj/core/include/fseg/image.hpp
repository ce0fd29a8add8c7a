#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fseg/error.hpp"

namespace fseg {

/// Planar multi-channel raster of doubles. Plane c, row y, column x lives at
/// samples[(c * height + y) * width + x].
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0);
  Image(int width, int height, int channels, std::vector<double> samples);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return samples_.empty(); }

  double& at(int x, int y, int c = 0) { return samples_[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return samples_[index(x, y, c)]; }

  std::span<double> plane(int c) { return {samples_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const {
    return {samples_.data() + c * plane_size(), plane_size()};
  }

  /// Copy of one plane as a single-channel image.
  Image channel(int c) const;
  void set_channel(int c, const Image& src);

  std::span<double> samples() { return samples_; }
  std::span<const double> samples() const { return samples_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> samples_;
};

/// Field-of-view mask; true marks an effective fundus point.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, bool fill = false);

  int width() const { return width_; }
  int height() const { return height_; }

  bool at(int x, int y) const { return flags_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v) { flags_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  std::size_t count() const;

  std::span<const std::uint8_t> flags() const { return flags_; }

  bool operator==(const Mask&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> flags_;
};

/// Class ids in report order.
enum class Label : std::uint8_t { Background = 0, OpticDisc = 1, Fovea = 2, Vessel = 3 };
inline constexpr int kNumClasses = 4;

const char* label_name(int cls);

/// Per-pixel class ids in {0,1,2,3}.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int width, int height, Label fill = Label::Background);

  int width() const { return width_; }
  int height() const { return height_; }

  Label at(int x, int y) const {
    return static_cast<Label>(ids_[static_cast<std::size_t>(y) * width_ + x]);
  }
  void set(int x, int y, Label v) {
    ids_[static_cast<std::size_t>(y) * width_ + x] = static_cast<std::uint8_t>(v);
  }

  std::span<const std::uint8_t> ids() const { return ids_; }

  bool operator==(const LabelMap&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> ids_;
};

struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

template <typename A, typename B>
bool same_size(const A& a, const B& b) {
  return a.width() == b.width() && a.height() == b.height();
}

}  // namespace fseg
