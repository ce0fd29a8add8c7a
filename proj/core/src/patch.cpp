#include "fseg/patch.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fseg {

int PatchGeometry::radius() const { return std::max({fine, mid, context}) / 2; }

void PatchGeometry::validate() const {
  for (int side : {fine, mid, context, out}) {
    if (side < 1 || side % 2 == 0) {
      throw InvalidInput("patch window sides must be odd and positive, got " +
                         std::to_string(side));
    }
  }
  if (fine < 2 || mid < 2 || context < 2) throw InvalidInput("patch windows must be at least 2x2");
}

std::vector<Point> effective_points(const Mask& mask) {
  std::vector<Point> pts;
  pts.reserve(mask.count());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(x, y)) pts.push_back({x, y});
    }
  }
  return pts;
}

int reflect_101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

namespace {

Image pad_unchecked(const Image& channel, int radius) {
  const int w = channel.width(), h = channel.height();
  Image out(w + 2 * radius, h + 2 * radius, 1);
  for (int y = 0; y < out.height(); ++y) {
    const int sy = reflect_101(y - radius, h);
    for (int x = 0; x < out.width(); ++x) {
      out.at(x, y) = channel.at(reflect_101(x - radius, w), sy);
    }
  }
  return out;
}

}  // namespace

Image mirror_pad(const Image& channel, int radius) {
  if (channel.channels() != 1) throw InvalidInput("mirror_pad: expected one channel");
  if (radius < 0) throw InvalidInput("mirror_pad: negative radius");
  for (int side : {channel.width(), channel.height()}) {
    if (side > 1 && radius >= side) {
      throw InvalidInput("mirror_pad: radius " + std::to_string(radius) +
                         " must be smaller than image side " + std::to_string(side));
    }
  }
  return pad_unchecked(channel, radius);
}

double keys_cubic(double x) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return (1.5 * ax - 2.5) * ax * ax + 1.0;
  if (ax < 2.0) return ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0;
  return 0.0;
}

ResizeAxis::ResizeAxis(int src, int dst) : src_(src), dst_(dst) {
  if (src < 2) throw InvalidInput("resize: source side must be at least 2");
  if (dst < 1) throw InvalidInput("resize: output side must be at least 1");
  const double scale = static_cast<double>(dst) / src;
  const double shrink = std::min(scale, 1.0);
  const double kernel_width = 4.0 / shrink;
  taps_ = static_cast<int>(std::ceil(kernel_width)) + 2;
  index_.resize(static_cast<std::size_t>(dst) * taps_);
  weight_.resize(static_cast<std::size_t>(dst) * taps_);
  for (int k = 0; k < dst; ++k) {
    const double u = (k + 0.5) * (static_cast<double>(src) / dst) - 0.5;
    const int left = static_cast<int>(std::floor(u - kernel_width / 2.0));
    double total = 0.0;
    for (int t = 0; t < taps_; ++t) {
      const int j = left + t;
      const double wgt = shrink * keys_cubic(shrink * (u - j));
      index_[k * taps_ + t] = std::clamp(j, 0, src - 1);
      weight_[k * taps_ + t] = wgt;
      total += wgt;
    }
    for (int t = 0; t < taps_; ++t) weight_[k * taps_ + t] /= total;
  }
}

void resize_bicubic(const double* src, std::size_t src_stride, const ResizeAxis& x_axis,
                    const ResizeAxis& y_axis, double* out, double* scratch) {
  const int sw = x_axis.src(), ow = x_axis.dst(), oh = y_axis.dst();
  const int tx = x_axis.taps(), ty = y_axis.taps();
  // Vertical pass over whole source rows, then horizontal taps per output row.
  for (int k = 0; k < oh; ++k) {
    const int* idx = y_axis.index(k);
    const double* wgt = y_axis.weight(k);
    double* dst = scratch + static_cast<std::size_t>(k) * sw;
    std::fill(dst, dst + sw, 0.0);
    for (int t = 0; t < ty; ++t) {
      const double* row = src + static_cast<std::size_t>(idx[t]) * src_stride;
      const double w = wgt[t];
      for (int x = 0; x < sw; ++x) dst[x] += w * row[x];
    }
  }
  for (int r = 0; r < oh; ++r) {
    const double* row = scratch + static_cast<std::size_t>(r) * sw;
    double* dst = out + static_cast<std::size_t>(r) * ow;
    for (int k = 0; k < ow; ++k) {
      const int* idx = x_axis.index(k);
      const double* wgt = x_axis.weight(k);
      double acc = 0.0;
      for (int t = 0; t < tx; ++t) acc += wgt[t] * row[idx[t]];
      dst[k] = acc;
    }
  }
}

Image resize_bicubic(const Image& src, int out_w, int out_h) {
  if (src.channels() != 1) throw InvalidInput("resize_bicubic: expected one channel");
  if (out_w < 1 || out_h < 1) throw InvalidInput("resize_bicubic: output dimensions must be >= 1");
  const ResizeAxis xa(src.width(), out_w), ya(src.height(), out_h);
  Image out(out_w, out_h, 1);
  std::vector<double> scratch(static_cast<std::size_t>(out_h) * src.width());
  resize_bicubic(src.plane(0).data(), src.width(), xa, ya, out.plane(0).data(), scratch.data());
  return out;
}

PatchSource::PatchSource(const Image& std_green, PatchGeometry geometry)
    : PatchSource(std_green, std_green, geometry) {}

PatchSource::PatchSource(const Image& std_green, const Image& context_green,
                         PatchGeometry geometry)
    : geometry_(geometry) {
  geometry_.validate();
  if (std_green.channels() != 1 || context_green.channels() != 1) {
    throw InvalidInput("PatchSource: expected single-channel rasters");
  }
  if (!same_size(std_green, context_green)) {
    throw InvalidInput("PatchSource: context raster size mismatch");
  }
  width_ = std_green.width();
  height_ = std_green.height();
  radius_ = geometry_.radius();
  padded_ = pad_unchecked(std_green, radius_);
  padded_context_ = &std_green == &context_green ? padded_ : pad_unchecked(context_green, radius_);
  fine_axis_ = ResizeAxis(geometry_.fine, geometry_.out);
  mid_axis_ = ResizeAxis(geometry_.mid, geometry_.out);
  context_axis_ = ResizeAxis(geometry_.context, geometry_.out);
}

void PatchSource::build(int x, int y, PatchInput& out) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) {
    throw InvalidInput("patch origin (" + std::to_string(x) + "," + std::to_string(y) +
                       ") outside image");
  }
  const int side = geometry_.out;
  if (out.size != side) out = PatchInput(side);
  out.origin = {x, y};
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  const std::size_t stride = padded_.width();
  auto window = [&](const Image& img, int win) {
    const int px = x + radius_ - win / 2, py = y + radius_ - win / 2;
    return img.plane(0).data() + py * stride + px;
  };
  // Scratch rows: output height times the widest source window.
  thread_local std::vector<double> scratch;
  scratch.resize(static_cast<std::size_t>(std::max({geometry_.fine, geometry_.mid,
                                                    geometry_.context})) * side);

  double* dst = out.samples.data();
  resize_bicubic(window(padded_, geometry_.fine), stride, fine_axis_, fine_axis_, dst,
                 scratch.data());
  if (geometry_.mid == side) {
    const double* src = window(padded_, side);
    for (int r = 0; r < side; ++r) {
      std::copy_n(src + r * stride, side, dst + plane + static_cast<std::size_t>(r) * side);
    }
  } else {
    resize_bicubic(window(padded_, geometry_.mid), stride, mid_axis_, mid_axis_, dst + plane,
                   scratch.data());
  }
  resize_bicubic(window(padded_context_, geometry_.context), stride, context_axis_,
                 context_axis_, dst + 2 * plane, scratch.data());
}

PatchInput PatchSource::build(int x, int y) const {
  PatchInput p(geometry_.out);
  build(x, y, p);
  return p;
}

PatchInput build_input(const Image& std_green, int x, int y, PatchGeometry geometry) {
  return PatchSource(std_green, geometry).build(x, y);
}

}  // namespace fseg
