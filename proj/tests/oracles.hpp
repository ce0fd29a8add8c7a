#pragma once

// Slow reference implementations used to check the optimized code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "fseg/cnn.hpp"
#include "fseg/image.hpp"

namespace oracle {

inline double keys(double x) {
  const double a = -0.5;
  const double t = std::abs(x);
  if (t < 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
  if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
  return 0.0;
}

/// Weight of source index n for output coordinate k along one axis, unnormalized.
inline double axis_weight(int k, int n, int src, int dst) {
  const double s = std::min(static_cast<double>(dst) / src, 1.0);
  const double u = (k + 0.5) * src / dst - 0.5;
  return s * keys(s * (u - n));
}

/// Point-by-point 2-D bicubic evaluation with clamped edges.
inline std::vector<double> bicubic(const std::vector<double>& src, int sw, int sh, int ow, int oh) {
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  const int reach_x = static_cast<int>(std::ceil(2.0 * std::max(1.0, static_cast<double>(sw) / ow))) + 2;
  const int reach_y = static_cast<int>(std::ceil(2.0 * std::max(1.0, static_cast<double>(sh) / oh))) + 2;
  for (int j = 0; j < oh; ++j) {
    const int cy = static_cast<int>((j + 0.5) * sh / oh);
    for (int i = 0; i < ow; ++i) {
      const int cx = static_cast<int>((i + 0.5) * sw / ow);
      double acc = 0.0, wy_sum = 0.0, wx_sum = 0.0;
      for (int m = cy - reach_y; m <= cy + reach_y; ++m) wy_sum += axis_weight(j, m, sh, oh);
      for (int n = cx - reach_x; n <= cx + reach_x; ++n) wx_sum += axis_weight(i, n, sw, ow);
      for (int m = cy - reach_y; m <= cy + reach_y; ++m) {
        const double wy = axis_weight(j, m, sh, oh);
        if (wy == 0.0) continue;
        const int ym = std::clamp(m, 0, sh - 1);
        for (int n = cx - reach_x; n <= cx + reach_x; ++n) {
          const double wx = axis_weight(i, n, sw, ow);
          if (wx == 0.0) continue;
          acc += wy * wx * src[static_cast<std::size_t>(ym) * sw + std::clamp(n, 0, sw - 1)];
        }
      }
      out[static_cast<std::size_t>(j) * ow + i] = acc / (wy_sum * wx_sum);
    }
  }
  return out;
}

/// Reflect-101 by explicit walking: bounce off each border until inside.
inline int mirror_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

/// Direct-summation valid cross-correlation: input [d][h][w], kernels [o][d][k][k].
inline std::vector<double> conv(const std::vector<double>& in, int d, int h, int w,
                                const std::vector<double>& kernels, const std::vector<double>& bias,
                                int out, int k) {
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> res(static_cast<std::size_t>(out) * oh * ow);
  for (int o = 0; o < out; ++o)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = bias[o];
        for (int c = 0; c < d; ++c)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
              acc += in[(static_cast<std::size_t>(c) * h + y + ky) * w + x + kx] *
                     kernels[((static_cast<std::size_t>(o) * d + c) * k + ky) * k + kx];
        res[(static_cast<std::size_t>(o) * oh + y) * ow + x] = acc;
      }
  return res;
}

/// Masked mean filter by direct summation over the window.
inline fseg::Image masked_mean(const fseg::Image& ch, const fseg::Mask& mask, int window) {
  const int r = window / 2;
  fseg::Image out(ch.width(), ch.height(), 1);
  for (int y = 0; y < ch.height(); ++y)
    for (int x = 0; x < ch.width(); ++x) {
      double sum = 0.0;
      int n = 0;
      for (int v = std::max(0, y - r); v <= std::min(ch.height() - 1, y + r); ++v)
        for (int u = std::max(0, x - r); u <= std::min(ch.width() - 1, x + r); ++u)
          if (mask.at(u, v)) {
            sum += ch.at(u, v);
            ++n;
          }
      out.at(x, y) = n ? sum / n : 0.0;
    }
  return out;
}

/// Loss of a net on one input, used for finite differences.
inline double loss(const fseg::Cnn& net, const std::vector<double>& input, int label) {
  fseg::ForwardCache cache(net.geometry());
  const auto probs = fseg::forward(net, input, cache);
  return -std::log(probs[static_cast<std::size_t>(label)]);
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

/// Reduced geometry with the same layer types: 18 -> 14 -> 7 -> 3 -> 1.
inline fseg::Geometry small_geometry() {
  fseg::Geometry g;
  g.input = 18;
  g.maps1 = 3;
  g.maps2 = 4;
  g.hidden = 6;
  return g;
}

/// Randomizes every parameter so no activation sits exactly on a kink.
inline fseg::Cnn random_net(const fseg::Geometry& g, std::uint64_t seed) {
  fseg::Cnn net(g);
  fseg::init(net, seed);
  std::mt19937_64 rng(seed + 100);
  for (double& p : net.params()) p = p * 0.5 + std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  return net;
}

/// Loss of a net on one input, evaluated in extended precision by direct loops
/// over the parameter blocks. Central differences built on it keep their
/// rounding noise well below the gradients being checked.
inline long double extended_loss(const fseg::Cnn& net, const std::vector<double>& input, int label) {
  using Vec = std::vector<long double>;
  const fseg::Geometry& g = net.geometry();
  const auto& blocks = net.blocks();
  const auto p = net.params();
  const long double slope = net.slope();
  auto act = [&](long double x) { return x > 0 ? x : slope * x; };
  auto conv_pool = [&](const Vec& in, int d, int side, const fseg::ParamBlock& b, int out) {
    const int k = g.kernel, cs = side - k + 1, ps = cs / 2;
    Vec conv(static_cast<std::size_t>(out) * cs * cs);
    for (int o = 0; o < out; ++o)
      for (int y = 0; y < cs; ++y)
        for (int x = 0; x < cs; ++x) {
          long double acc = p[b.biases + o];
          for (int c = 0; c < d; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx)
                acc += in[(static_cast<std::size_t>(c) * side + y + ky) * side + x + kx] *
                       p[b.weights + ((static_cast<std::size_t>(o) * d + c) * k + ky) * k + kx];
          conv[(static_cast<std::size_t>(o) * cs + y) * cs + x] = acc;
        }
    Vec pooled(static_cast<std::size_t>(out) * ps * ps);
    for (int o = 0; o < out; ++o)
      for (int y = 0; y < ps; ++y)
        for (int x = 0; x < ps; ++x) {
          const auto at = [&](int v, int u) { return conv[(static_cast<std::size_t>(o) * cs + v) * cs + u]; };
          pooled[(static_cast<std::size_t>(o) * ps + y) * ps + x] =
              act(std::max({at(2 * y, 2 * x), at(2 * y, 2 * x + 1), at(2 * y + 1, 2 * x), at(2 * y + 1, 2 * x + 1)}));
        }
    return pooled;
  };

  Vec flat;
  const std::size_t area = static_cast<std::size_t>(g.input) * g.input;
  for (int t = 0; t < g.towers; ++t) {
    const Vec plane(input.begin() + t * area, input.begin() + (t + 1) * area);
    const Vec a = conv_pool(plane, 1, g.input, blocks[2 * t], g.maps1);
    const Vec b = conv_pool(a, g.maps1, g.pool1_side(), blocks[2 * t + 1], g.maps2);
    flat.insert(flat.end(), b.begin(), b.end());
  }
  const fseg::ParamBlock& f1 = blocks[2 * g.towers];
  const fseg::ParamBlock& f2 = blocks[2 * g.towers + 1];
  Vec hidden(g.hidden);
  for (int h = 0; h < g.hidden; ++h) {
    long double z = p[f1.biases + h];
    for (std::size_t i = 0; i < flat.size(); ++i) z += p[f1.weights + h * flat.size() + i] * flat[i];
    hidden[h] = act(z);
  }
  Vec logits(g.classes);
  for (int c = 0; c < g.classes; ++c) {
    long double z = p[f2.biases + c];
    for (int h = 0; h < g.hidden; ++h) z += p[f2.weights + static_cast<std::size_t>(c) * g.hidden + h] * hidden[h];
    logits[c] = z;
  }
  const long double top = *std::max_element(logits.begin(), logits.end());
  long double sum = 0;
  for (long double z : logits) sum += std::exp(z - top);
  return std::log(sum) + top - logits[label];
}

/// Largest relative gap between backprop and central differences (eps 1e-5)
/// over every parameter.
inline double max_gradient_error(const fseg::Cnn& net, const std::vector<double>& input, int label) {
  fseg::ForwardCache cache(net.geometry());
  fseg::forward(net, input, cache);
  std::vector<double> grad(net.param_count(), 0.0);
  fseg::backward(net, cache, label, grad);
  double worst = 0.0;
  for (std::size_t i = 0; i < net.param_count(); ++i) {
    const double eps = 1e-5;
    fseg::Cnn plus = net, minus = net;
    plus.params()[i] += eps;
    minus.params()[i] -= eps;
    const double fd = static_cast<double>((extended_loss(plus, input, label) - extended_loss(minus, input, label)) /
                                          (2 * eps));
    const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace oracle
