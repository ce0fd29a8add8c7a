#include "fseg/image.hpp"

#include <algorithm>
#include <string>

namespace fseg {

namespace {

void check_dims(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw InvalidInput("raster dimensions must be positive, got " + std::to_string(width) + "x" +
                       std::to_string(height));
  }
}

}  // namespace

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  check_dims(width, height);
  if (channels <= 0) throw InvalidInput("image needs at least one channel");
  samples_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<double> samples)
    : width_(width), height_(height), channels_(channels), samples_(std::move(samples)) {
  check_dims(width, height);
  if (channels <= 0) throw InvalidInput("image needs at least one channel");
  if (samples_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw InvalidInput("sample count does not match width x height x channels");
  }
}

Image Image::channel(int c) const {
  if (c < 0 || c >= channels_) throw InvalidInput("channel index out of range");
  Image out(width_, height_, 1);
  std::ranges::copy(plane(c), out.plane(0).begin());
  return out;
}

void Image::set_channel(int c, const Image& src) {
  if (c < 0 || c >= channels_) throw InvalidInput("channel index out of range");
  if (!same_size(*this, src) || src.channels() != 1) {
    throw InvalidInput("replacement channel must be single-channel and the same size");
  }
  std::ranges::copy(src.plane(0), plane(c).begin());
}

Mask::Mask(int width, int height, bool fill) : width_(width), height_(height) {
  check_dims(width, height);
  flags_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::ranges::count(flags_, std::uint8_t{1}));
}

LabelMap::LabelMap(int width, int height, Label fill) : width_(width), height_(height) {
  check_dims(width, height);
  ids_.assign(static_cast<std::size_t>(width) * height, static_cast<std::uint8_t>(fill));
}

const char* label_name(int cls) {
  switch (cls) {
    case 0: return "background";
    case 1: return "optic_disc";
    case 2: return "fovea";
    case 3: return "vessel";
    default: return "unknown";
  }
}

}  // namespace fseg
