#include "fseg/imagenorm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace fseg {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

// Linear sRGB primaries to XYZ, D65.
constexpr Mat3 kRgbToXyz = {{{0.4124564, 0.3575761, 0.1804375},
                             {0.2126729, 0.7151522, 0.0721750},
                             {0.0193339, 0.1191920, 0.9503041}}};

Vec3 mul(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

Mat3 inverse(const Mat3& m) {
  const double a = m[0][0], b = m[0][1], c = m[0][2];
  const double d = m[1][0], e = m[1][1], f = m[1][2];
  const double g = m[2][0], h = m[2][1], i = m[2][2];
  const double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  return {{{(e * i - f * h) / det, (c * h - b * i) / det, (b * f - c * e) / det},
           {(f * g - d * i) / det, (a * i - c * g) / det, (c * d - a * f) / det},
           {(d * h - e * g) / det, (b * g - a * h) / det, (a * e - b * d) / det}}};
}

struct WhitePoint {
  double y;
  double u_prime;
  double v_prime;
};

// The reference white is the image of RGB (1,1,1), so white maps to u* = v* = 0.
const WhitePoint& white() {
  static const WhitePoint w = [] {
    const Vec3 xyz = mul(kRgbToXyz, {1.0, 1.0, 1.0});
    const double den = xyz[0] + 15.0 * xyz[1] + 3.0 * xyz[2];
    return WhitePoint{xyz[1], 4.0 * xyz[0] / den, 9.0 * xyz[1] / den};
  }();
  return w;
}

const Mat3& xyz_to_rgb() {
  static const Mat3 m = inverse(kRgbToXyz);
  return m;
}

constexpr double kEpsilon = 216.0 / 24389.0;  // (6/29)^3
constexpr double kKappa = 24389.0 / 27.0;     // (29/3)^3
constexpr double kLinearKnee = 0.04045;
constexpr double kEncodedKnee = kLinearKnee / 12.92;

double srgb_to_linear(double c) {
  return c <= kLinearKnee ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
  c = std::clamp(c, 0.0, 1.0);
  return c <= kEncodedKnee ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

void require_three_channels(const Image& img, const char* op) {
  if (img.channels() != 3) {
    throw InvalidInput(std::string(op) + ": expected 3 channels, got " +
                       std::to_string(img.channels()));
  }
}

}  // namespace

Image rgb_to_luv(const Image& rgb) {
  require_three_channels(rgb, "rgb_to_luv");
  const WhitePoint& w = white();
  Image out(rgb.width(), rgb.height(), 3);
  const auto r = rgb.plane(0), g = rgb.plane(1), b = rgb.plane(2);
  auto lo = out.plane(0), uo = out.plane(1), vo = out.plane(2);
  for (std::size_t i = 0; i < rgb.plane_size(); ++i) {
    const Vec3 xyz =
        mul(kRgbToXyz, {srgb_to_linear(r[i]), srgb_to_linear(g[i]), srgb_to_linear(b[i])});
    const double yr = xyz[1] / w.y;
    const double l = yr > kEpsilon ? 116.0 * std::cbrt(yr) - 16.0 : kKappa * yr;
    const double den = xyz[0] + 15.0 * xyz[1] + 3.0 * xyz[2];
    lo[i] = l;
    if (den <= 0.0) {
      uo[i] = 0.0;
      vo[i] = 0.0;
    } else {
      uo[i] = 13.0 * l * (4.0 * xyz[0] / den - w.u_prime);
      vo[i] = 13.0 * l * (9.0 * xyz[1] / den - w.v_prime);
    }
  }
  return out;
}

Image luv_to_rgb(const Image& luv) {
  require_three_channels(luv, "luv_to_rgb");
  const WhitePoint& w = white();
  const Mat3& m = xyz_to_rgb();
  Image out(luv.width(), luv.height(), 3);
  const auto lp = luv.plane(0), up = luv.plane(1), vp = luv.plane(2);
  auto r = out.plane(0), g = out.plane(1), b = out.plane(2);
  for (std::size_t i = 0; i < luv.plane_size(); ++i) {
    const double l = lp[i];
    Vec3 xyz{0.0, 0.0, 0.0};
    if (l > 0.0) {
      const double u_prime = up[i] / (13.0 * l) + w.u_prime;
      const double v_prime = vp[i] / (13.0 * l) + w.v_prime;
      const double fy = (l + 16.0) / 116.0;
      const double y = w.y * (l > kKappa * kEpsilon ? fy * fy * fy : l / kKappa);
      if (v_prime != 0.0) {
        xyz = {y * 9.0 * u_prime / (4.0 * v_prime), y,
               y * (12.0 - 3.0 * u_prime - 20.0 * v_prime) / (4.0 * v_prime)};
      }
    }
    const Vec3 lin = mul(m, xyz);
    r[i] = linear_to_srgb(lin[0]);
    g[i] = linear_to_srgb(lin[1]);
    b[i] = linear_to_srgb(lin[2]);
  }
  return out;
}

Image normalize_background(const Image& channel, const Mask& mask, int window) {
  if (channel.channels() != 1) throw InvalidInput("normalize_background: expected one channel");
  if (!same_size(channel, mask)) throw InvalidInput("normalize_background: mask size mismatch");
  if (window < 3 || window % 2 == 0) {
    throw InvalidInput("normalize_background: window must be odd and >= 3, got " +
                       std::to_string(window));
  }
  const int w = channel.width(), h = channel.height();
  if (window > 2 * std::min(w, h)) {
    throw InvalidInput("normalize_background: window " + std::to_string(window) +
                       " exceeds twice the shorter image side");
  }

  // Summed-area tables over masked values and masked counts, (w+1)x(h+1).
  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  std::vector<double> sum(stride * (h + 1), 0.0);
  std::vector<double> cnt(stride * (h + 1), 0.0);
  double total = 0.0;
  std::size_t effective = 0;
  for (int y = 0; y < h; ++y) {
    double row_sum = 0.0, row_cnt = 0.0;
    for (int x = 0; x < w; ++x) {
      if (mask.at(x, y)) {
        row_sum += channel.at(x, y);
        row_cnt += 1.0;
        total += channel.at(x, y);
        ++effective;
      }
      const std::size_t i = (y + 1) * stride + (x + 1);
      sum[i] = sum[i - stride] + row_sum;
      cnt[i] = cnt[i - stride] + row_cnt;
    }
  }
  Image out = channel;
  if (effective == 0) return out;
  const double masked_mean = total / static_cast<double>(effective);

  const int half = window / 2;
  auto box = [stride](const std::vector<double>& t, int x0, int y0, int x1, int y1) {
    return t[y1 * stride + x1] - t[y0 * stride + x1] - t[y1 * stride + x0] + t[y0 * stride + x0];
  };
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - half), y1 = std::min(h, y + half + 1);
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      const int x0 = std::max(0, x - half), x1 = std::min(w, x + half + 1);
      const double background = box(sum, x0, y0, x1, y1) / box(cnt, x0, y0, x1, y1);
      out.at(x, y) = channel.at(x, y) - background + masked_mean;
    }
  }
  return out;
}

Image standardize_channel(const Image& channel, const Mask& mask) {
  if (channel.channels() != 1) throw InvalidInput("standardize_channel: expected one channel");
  if (!same_size(channel, mask)) throw InvalidInput("standardize_channel: mask size mismatch");
  const auto values = channel.plane(0);
  const auto flags = mask.flags();

  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (flags[i]) {
      sum += values[i];
      ++n;
    }
  }
  if (n < 2) throw DegenerateInput("standardize_channel: fewer than two effective points");
  // A constant channel must not slip through on rounding noise in the mean.
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!flags[i]) continue;
    lo = first ? values[i] : std::min(lo, values[i]);
    hi = first ? values[i] : std::max(hi, values[i]);
    first = false;
  }
  if (lo == hi) throw DegenerateInput("standardize_channel: zero variance over mask");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (flags[i]) ss += (values[i] - mean) * (values[i] - mean);
  }
  const double sigma = std::sqrt(ss / static_cast<double>(n));
  if (!(sigma > 0.0)) throw DegenerateInput("standardize_channel: zero variance over mask");

  Image out(channel.width(), channel.height(), 1);
  auto o = out.plane(0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    o[i] = flags[i] ? (values[i] - mean) / sigma : 0.0;
  }
  return out;
}

Image normalize_fundus(const Image& rgb, const Mask& mask, int window) {
  require_three_channels(rgb, "normalize_fundus");
  if (!same_size(rgb, mask)) throw InvalidInput("normalize_fundus: mask size mismatch");
  if (mask.count() == 0) return rgb;

  Image luv = rgb_to_luv(rgb);
  Image l = normalize_background(luv.channel(0), mask, window);
  for (double& v : l.samples()) v = std::clamp(v, 0.0, 100.0);
  luv.set_channel(0, l);
  Image out = luv_to_rgb(luv);

  const auto flags = mask.flags();
  for (int c = 0; c < 3; ++c) {
    auto dst = out.plane(c);
    const auto src = rgb.plane(c);
    for (std::size_t i = 0; i < flags.size(); ++i) {
      if (!flags[i]) dst[i] = src[i];
    }
  }
  return out;
}

}  // namespace fseg
