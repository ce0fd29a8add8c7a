#pragma once

#include <vector>

#include "fseg/image.hpp"

namespace fseg {

/// Window sides used to assemble one network input. All must be odd.
struct PatchGeometry {
  int fine = 7;       // upscaled local detail
  int mid = 33;       // copied verbatim
  int context = 165;  // downscaled surroundings
  int out = 33;       // side of every input plane

  int radius() const;
  void validate() const;
};

/// The 3 x out x out network input for one pixel, planes in (fine, mid, context) order.
struct PatchInput {
  int size = 0;
  Point origin;
  std::vector<double> samples;

  PatchInput() = default;
  explicit PatchInput(int side) : size(side), samples(3 * static_cast<std::size_t>(side) * side) {}

  double at(int c, int x, int y) const {
    return samples[(static_cast<std::size_t>(c) * size + y) * size + x];
  }
};

/// Mask pixels that are set, in row-major order.
std::vector<Point> effective_points(const Mask& mask);

/// Reflect-101 index into [0, n), folding as often as needed.
int reflect_101(int i, int n);

/// Reflect-101 border of `radius` pixels on every side. Requires radius to be
/// smaller than every image side longer than one pixel; one-pixel sides repeat.
Image mirror_pad(const Image& channel, int radius);

/// Per-axis resampling weights for the Keys cubic (a = -0.5) on a
/// centre-aligned grid. On shrink the kernel is widened by the inverse scale;
/// weights are normalized to sum to one and source indices are clamped.
class ResizeAxis {
 public:
  ResizeAxis() = default;
  ResizeAxis(int src, int dst);

  int src() const { return src_; }
  int dst() const { return dst_; }
  int taps() const { return taps_; }
  const int* index(int k) const { return &index_[static_cast<std::size_t>(k) * taps_]; }
  const double* weight(int k) const { return &weight_[static_cast<std::size_t>(k) * taps_]; }

 private:
  int src_ = 0;
  int dst_ = 0;
  int taps_ = 0;
  std::vector<int> index_;
  std::vector<double> weight_;
};

/// Keys cubic kernel, a = -0.5.
double keys_cubic(double x);

/// Separable bicubic resize of a row-major src_w x src_h matrix into `out`
/// (out_w x out_h). `scratch` needs out_h * src_w entries.
void resize_bicubic(const double* src, std::size_t src_stride, const ResizeAxis& x_axis,
                    const ResizeAxis& y_axis, double* out, double* scratch);

/// Single-channel resize. Source must be at least 2x2; outputs at least 1x1.
Image resize_bicubic(const Image& src, int out_w, int out_h);

/// Padded view of a standardized green channel from which network inputs are
/// cut. The context plane may come from a different raster of the same size.
class PatchSource {
 public:
  explicit PatchSource(const Image& std_green, PatchGeometry geometry = {});
  PatchSource(const Image& std_green, const Image& context_green, PatchGeometry geometry = {});

  int width() const { return width_; }
  int height() const { return height_; }
  const PatchGeometry& geometry() const { return geometry_; }

  /// Writes the input for (x, y) into `out` (resized if needed).
  void build(int x, int y, PatchInput& out) const;
  PatchInput build(int x, int y) const;

 private:
  PatchGeometry geometry_;
  int width_ = 0;
  int height_ = 0;
  int radius_ = 0;
  Image padded_;
  Image padded_context_;
  ResizeAxis fine_axis_;
  ResizeAxis mid_axis_;
  ResizeAxis context_axis_;
};

/// One-shot input construction; pads `std_green` on every call.
PatchInput build_input(const Image& std_green, int x, int y, PatchGeometry geometry = {});

}  // namespace fseg
