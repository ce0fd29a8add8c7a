#include "fseg/cnn.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <utility>

namespace fseg {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

constexpr std::size_t kLanes = 8;

std::size_t padded(std::size_t n) { return (n + kLanes - 1) / kLanes * kLanes; }

// col[(c*k + ky)*k + kx][y*o + x] = in[c][y+ky][x+kx], o = side - k + 1, rows
// `stride` apart. Entries past o*o in each row are left untouched (zero).
void im2col(const double* in, int depth, int h, int w, int k, double* col, std::size_t stride) {
  const int oh = h - k + 1, ow = w - k + 1;
  for (int c = 0; c < depth; ++c) {
    const double* plane = in + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = col + static_cast<std::size_t>((c * k + ky) * k + kx) * stride;
        for (int y = 0; y < oh; ++y) {
          std::copy_n(plane + (y + ky) * w + kx, ow, dst + y * ow);
        }
      }
    }
  }
}

void im2col(const double* in, int depth, int side, int k, double* col, std::size_t stride) {
  im2col(in, depth, side, side, k, col, stride);
}

// MB output maps over all positions, accumulating kLanes positions at a time
// in registers.
template <int MB>
void conv_block(const double* w, const double* bias, int taps, const double* col, std::size_t stride,
                double* out) {
  for (std::size_t p0 = 0; p0 < stride; p0 += kLanes) {
    double acc[MB][kLanes];
#pragma GCC unroll 16
    for (int m = 0; m < MB; ++m) {
      for (std::size_t j = 0; j < kLanes; ++j) acc[m][j] = bias[m];
    }
    for (int q = 0; q < taps; ++q) {
      const double* c = col + static_cast<std::size_t>(q) * stride + p0;
#pragma GCC unroll 16
      for (int m = 0; m < MB; ++m) {
        const double wm = w[static_cast<std::size_t>(m) * taps + q];
#pragma omp simd
        for (std::size_t j = 0; j < kLanes; ++j) acc[m][j] += wm * c[j];
      }
    }
#pragma GCC unroll 16
    for (int m = 0; m < MB; ++m) {
      std::copy_n(acc[m], kLanes, out + static_cast<std::size_t>(m) * stride + p0);
    }
  }
}

using ConvBlockFn = void (*)(const double*, const double*, int, const double*, std::size_t, double*);

template <std::size_t... I>
constexpr std::array<ConvBlockFn, sizeof...(I)> make_conv_blocks(std::index_sequence<I...>) {
  return {&conv_block<static_cast<int>(I) + 1>...};
}

constexpr int kMaxBlock = 16;
constexpr auto kConvBlocks = make_conv_blocks(std::make_index_sequence<kMaxBlock>{});

// out[m][p] = bias[m] + sum_q w[m][q] col[q][p]; col and out rows `stride` apart.
void conv_gemm(const double* w, const double* bias, int maps, int taps, const double* col,
               std::size_t stride, double* out) {
  for (int m = 0; m < maps; m += kMaxBlock) {
    const int n = std::min(kMaxBlock, maps - m);
    kConvBlocks[n - 1](w + static_cast<std::size_t>(m) * taps, bias + m, taps, col, stride,
                       out + static_cast<std::size_t>(m) * stride);
  }
}

// 2x2/2 max pooling of one side x side plane; ties keep the first sample.
void pool_plane(const double* in, int h, int w, double* out, int* arg) {
  const int oh = h / 2, ow = w / 2;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      int best = (2 * y) * w + 2 * x;
      for (int idx : {best + 1, best + w, best + w + 1}) {
        if (in[idx] > in[best]) best = idx;
      }
      out[y * ow + x] = in[best];
      arg[y * ow + x] = best;
    }
  }
}

void pool_plane(const double* in, int side, double* out, int* arg) { pool_plane(in, side, side, out, arg); }

void softmax_into(std::span<const double> z, std::span<double> p) {
  const double top = *std::ranges::max_element(z);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - top);
    total += p[i];
  }
  for (double& v : p) v /= total;
}

}  // namespace

// Tensor ---------------------------------------------------------------------

Tensor::Tensor(std::vector<int> dims, double fill) : dims_(std::move(dims)) {
  std::size_t n = 1;
  for (int d : dims_) {
    if (d < 0) throw ShapeError("negative tensor extent");
    n *= static_cast<std::size_t>(d);
  }
  samples_.assign(n, fill);
}

Tensor::Tensor(std::vector<int> dims, std::vector<double> samples)
    : dims_(std::move(dims)), samples_(std::move(samples)) {
  std::size_t n = 1;
  for (int d : dims_) n *= static_cast<std::size_t>(d);
  if (n != samples_.size()) throw ShapeError("tensor sample count does not match extents");
}

// Primitive layers -------------------------------------------------------------

Tensor conv_valid(const Tensor& input, const ConvLayerView& layer) {
  if (input.dims().size() != 3) throw ShapeError("conv_valid: input must be rank 3");
  const int depth = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (depth != layer.in_depth) {
    throw ShapeError("conv_valid: input depth " + std::to_string(depth) +
                     " does not match layer depth " + std::to_string(layer.in_depth));
  }
  const int k = layer.kernel;
  if (h < k || w < k) throw ShapeError("conv_valid: input smaller than kernel");
  if (layer.kernels.size() != static_cast<std::size_t>(layer.out_maps) * depth * k * k ||
      layer.biases.size() != static_cast<std::size_t>(layer.out_maps)) {
    throw ShapeError("conv_valid: layer parameter sizes inconsistent");
  }
  const int oh = h - k + 1, ow = w - k + 1;
  const std::size_t area = static_cast<std::size_t>(oh) * ow, stride = padded(area);
  std::vector<double> col(static_cast<std::size_t>(depth) * k * k * stride, 0.0);
  im2col(input.samples().data(), depth, h, w, k, col.data(), stride);
  std::vector<double> raw(layer.out_maps * stride);
  conv_gemm(layer.kernels.data(), layer.biases.data(), layer.out_maps, depth * k * k, col.data(),
            stride, raw.data());
  Tensor out({layer.out_maps, oh, ow});
  for (int m = 0; m < layer.out_maps; ++m) {
    std::copy_n(raw.data() + m * stride, area, out.samples().data() + m * area);
  }
  return out;
}

PoolResult maxpool_2x2(const Tensor& input) {
  if (input.dims().size() != 3) throw ShapeError("maxpool_2x2: input must be rank 3");
  const int d = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h < 2 || w < 2) throw ShapeError("maxpool_2x2: input smaller than 2x2");
  const int oh = h / 2, ow = w / 2;
  const std::size_t area = static_cast<std::size_t>(oh) * ow;
  PoolResult r{Tensor({d, oh, ow}), std::vector<int>(static_cast<std::size_t>(d) * area)};
  for (int c = 0; c < d; ++c) {
    pool_plane(input.samples().data() + static_cast<std::size_t>(c) * h * w, h, w,
               r.output.samples().data() + c * area, r.argmax.data() + c * area);
    for (std::size_t i = 0; i < area; ++i) r.argmax[c * area + i] += c * h * w;
  }
  return r;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  softmax_into(logits, p);
  return p;
}

Loss nll_loss(std::span<const double> probs, int label) {
  constexpr double kFloor = 1e-300;
  const double p = probs[static_cast<std::size_t>(label)];
  if (p < kFloor) return {-std::log(kFloor), true};
  return {-std::log(p), false};
}

int argmax_class(std::span<const double> probs) {
  return static_cast<int>(std::ranges::max_element(probs) - probs.begin());
}

// Geometry ---------------------------------------------------------------------

void Geometry::validate() const {
  if (towers < 1 || kernel < 1 || maps1 < 1 || maps2 < 1 || hidden < 1 || classes < 2) {
    throw ShapeError("network geometry has a non-positive extent");
  }
  if (conv1_side() < 2 || conv2_side() < 2) {
    throw ShapeError("input side " + std::to_string(input) + " too small for two conv/pool stages");
  }
}

std::vector<std::vector<int>> layer_extents(const Geometry& g) {
  const int c1 = g.conv1_side(), p1 = g.pool1_side(), c2 = g.conv2_side(), p2 = g.pool2_side();
  return {{c1, c1, g.towers * g.maps1}, {p1, p1, g.towers * g.maps1},
          {c2, c2, g.towers * g.maps2}, {p2, p2, g.towers * g.maps2},
          {g.hidden},                   {g.classes}};
}

// Cnn --------------------------------------------------------------------------

Cnn::Cnn(Geometry geometry, double slope) : geometry_(geometry), slope_(slope) {
  geometry_.validate();
  if (!(slope > 0.0 && slope < 1.0)) throw InvalidInput("LReLU slope must lie in (0,1)");
  const Geometry& g = geometry_;
  std::size_t offset = 0;
  auto add = [&](std::string name, bool conv, std::vector<int> dims, std::size_t nbias) {
    ParamBlock b{std::move(name), conv, std::move(dims)};
    b.weight_count = 1;
    for (int d : b.dims) b.weight_count *= static_cast<std::size_t>(d);
    b.bias_count = nbias;
    b.weights = offset;
    b.biases = offset + b.weight_count;
    offset = b.biases + nbias;
    blocks_.push_back(std::move(b));
  };
  for (int t = 0; t < g.towers; ++t) {
    const std::string tower = "tower" + std::to_string(t);
    add(tower + ".conv1", true, {g.maps1, 1, g.kernel, g.kernel}, g.maps1);
    add(tower + ".conv2", true, {g.maps2, g.maps1, g.kernel, g.kernel}, g.maps2);
  }
  add("fc1", false, {g.hidden, g.flat()}, g.hidden);
  add("fc2", false, {g.classes, g.hidden}, g.classes);
  params_.assign(offset, 0.0);
  weight_flags_.assign(offset, 0);
  for (const auto& b : blocks_) {
    std::fill_n(weight_flags_.begin() + static_cast<std::ptrdiff_t>(b.weights), b.weight_count, 1);
  }
}

ConvLayerView Cnn::conv_view(std::size_t block) const {
  const ParamBlock& b = blocks_[block];
  return {b.dims[0], b.dims[1], b.dims[2],
          std::span<const double>(params_).subspan(b.weights, b.weight_count),
          std::span<const double>(params_).subspan(b.biases, b.bias_count)};
}

FcLayerView Cnn::fc_view(std::size_t block) const {
  const ParamBlock& b = blocks_[block];
  return {b.dims[0], b.dims[1], std::span<const double>(params_).subspan(b.weights, b.weight_count),
          std::span<const double>(params_).subspan(b.biases, b.bias_count)};
}

ConvLayerView Cnn::conv1(int tower) const { return conv_view(2 * static_cast<std::size_t>(tower)); }
ConvLayerView Cnn::conv2(int tower) const { return conv_view(2 * static_cast<std::size_t>(tower) + 1); }
FcLayerView Cnn::fc1() const { return fc_view(blocks_.size() - 2); }
FcLayerView Cnn::fc2() const { return fc_view(blocks_.size() - 1); }

void init(Cnn& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto params = net.params();
  const auto& blocks = net.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const ParamBlock& b = blocks[i];
    double fan_in, fan_out;
    if (b.conv) {
      const double area = static_cast<double>(b.dims[2]) * b.dims[3];
      fan_in = b.dims[1] * area;
      fan_out = b.dims[0] * area;
    } else {
      fan_in = b.dims[1];
      fan_out = b.dims[0];
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (std::size_t j = 0; j < b.weight_count; ++j) params[b.weights + j] = uniform(rng);
    const bool output_layer = i + 1 == blocks.size();
    if (output_layer) {
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (std::size_t j = 0; j < b.bias_count; ++j) params[b.biases + j] = gauss(rng);
    } else {
      std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(b.biases), b.bias_count, 1.0);
    }
  }
}

ParamBreakdown param_breakdown(const Cnn& net) {
  ParamBreakdown r;
  const auto& blocks = net.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::size_t n = blocks[i].weight_count + blocks[i].bias_count;
    if (blocks[i].name.ends_with(".conv1")) r.conv1 += n;
    else if (blocks[i].name.ends_with(".conv2")) r.conv2 += n;
    else if (blocks[i].name == "fc1") r.fc1 += n;
    else r.fc2 += n;
  }
  return r;
}

// Forward / backward -------------------------------------------------------------

ForwardCache::ForwardCache(const Geometry& g) : geometry_(g) {
  g.validate();
  const std::size_t k2 = static_cast<std::size_t>(g.kernel) * g.kernel;
  const std::size_t c1 = static_cast<std::size_t>(g.conv1_side()) * g.conv1_side();
  const std::size_t p1 = static_cast<std::size_t>(g.pool1_side()) * g.pool1_side();
  const std::size_t c2 = static_cast<std::size_t>(g.conv2_side()) * g.conv2_side();
  const std::size_t p2 = static_cast<std::size_t>(g.pool2_side()) * g.pool2_side();
  col1_.resize(g.towers * k2 * padded(c1));
  pool1_.resize(g.towers * g.maps1 * p1);
  arg1_.resize(pool1_.size());
  col2_.resize(g.towers * g.maps1 * k2 * padded(c2));
  conv_.resize(std::max(g.maps1 * padded(c1), g.maps2 * padded(c2)));
  flat_.resize(g.towers * g.maps2 * p2);
  arg2_.resize(flat_.size());
  hidden_pre_.resize(g.hidden);
  hidden_.resize(g.hidden);
  logits_.resize(g.classes);
  probs_.resize(g.classes);
  d_flat_.resize(flat_.size());
  d_hidden_.resize(g.hidden);
  d_col2_.resize(g.maps1 * k2 * c2);
  d_pool1_.resize(g.maps1 * p1);
  input_.resize(g.input_size());
  partial_.resize(g.towers);
  col2t_.resize(g.maps1 * k2 * c2);
  touched_.resize(c2);
}

std::vector<std::vector<int>> ForwardCache::extents() const { return observed_; }

std::span<const double> forward(const Cnn& net, std::span<const double> input, ForwardCache& cache) {
  const Geometry& g = net.geometry();
  if (!(cache.geometry_ == g)) throw ShapeError("forward: cache built for a different geometry");
  if (input.size() != g.input_size()) {
    throw ShapeError("forward: expected " + std::to_string(g.input_size()) + " input samples, got " +
                     std::to_string(input.size()));
  }
  const double slope = net.slope();
  const int k = g.kernel, c1 = g.conv1_side(), p1 = g.pool1_side();
  const int c2 = g.conv2_side(), p2 = g.pool2_side();
  const std::size_t k2 = static_cast<std::size_t>(k) * k;
  const std::size_t c1a = static_cast<std::size_t>(c1) * c1, p1a = static_cast<std::size_t>(p1) * p1;
  const std::size_t c2a = static_cast<std::size_t>(c2) * c2, p2a = static_cast<std::size_t>(p2) * p2;
  const std::size_t s1 = padded(c1a), s2 = padded(c2a);
  const std::size_t in_area = static_cast<std::size_t>(g.input) * g.input;

  cache.valid_ = false;
  std::ranges::copy(input, cache.input_.begin());
  for (int t = 0; t < g.towers; ++t) {
    const ConvLayerView l1 = net.conv1(t);
    double* col1 = cache.col1_.data() + t * k2 * s1;
    im2col(input.data() + t * in_area, 1, g.input, k, col1, s1);
    conv_gemm(l1.kernels.data(), l1.biases.data(), g.maps1, static_cast<int>(k2), col1, s1,
              cache.conv_.data());
    double* pool1 = cache.pool1_.data() + t * g.maps1 * p1a;
    int* arg1 = cache.arg1_.data() + t * g.maps1 * p1a;
    for (int m = 0; m < g.maps1; ++m) {
      pool_plane(cache.conv_.data() + m * s1, c1, pool1 + m * p1a, arg1 + m * p1a);
    }
    for (std::size_t i = 0; i < g.maps1 * p1a; ++i) pool1[i] = lrelu(pool1[i], slope);

    const ConvLayerView l2 = net.conv2(t);
    const int taps2 = g.maps1 * static_cast<int>(k2);
    double* col2 = cache.col2_.data() + t * taps2 * s2;
    im2col(pool1, g.maps1, p1, k, col2, s2);
    conv_gemm(l2.kernels.data(), l2.biases.data(), g.maps2, taps2, col2, s2, cache.conv_.data());
    double* flat = cache.flat_.data() + t * g.maps2 * p2a;
    int* arg2 = cache.arg2_.data() + t * g.maps2 * p2a;
    for (int m = 0; m < g.maps2; ++m) {
      pool_plane(cache.conv_.data() + m * s2, c2, flat + m * p2a, arg2 + m * p2a);
    }
    for (std::size_t i = 0; i < g.maps2 * p2a; ++i) flat[i] = lrelu(flat[i], slope);
  }

  const FcLayerView f1 = net.fc1();
  const std::size_t nflat = cache.flat_.size();
  // Per-tower partial sums are added in ascending order, so permuting towers
  // together with their weights leaves the result bit-identical.
  const std::size_t tower_flat = nflat / static_cast<std::size_t>(g.towers);
  double* partial = cache.partial_.data();
  for (int h = 0; h < g.hidden; ++h) {
    const double* wh = f1.weights.data() + h * nflat;
    for (int t = 0; t < g.towers; ++t) {
      partial[t] = dot(wh + t * tower_flat, cache.flat_.data() + t * tower_flat, tower_flat);
    }
    std::sort(partial, partial + g.towers);
    double z = f1.biases[h];
    for (int t = 0; t < g.towers; ++t) z += partial[t];
    cache.hidden_pre_[h] = z;
    cache.hidden_[h] = lrelu(z, slope);
  }
  const FcLayerView f2 = net.fc2();
  for (int c = 0; c < g.classes; ++c) {
    cache.logits_[c] = f2.biases[c] + dot(f2.weights.data() + static_cast<std::size_t>(c) * g.hidden,
                                          cache.hidden_.data(), g.hidden);
  }
  softmax_into(cache.logits_, cache.probs_);
  if (cache.observed_.empty()) {
    const int depth1 = static_cast<int>(cache.pool1_.size() / p1a);
    const int depth2 = static_cast<int>(cache.flat_.size() / p2a);
    cache.observed_ = {{c1, c1, depth1}, {p1, p1, depth1}, {c2, c2, depth2}, {p2, p2, depth2},
                       {static_cast<int>(cache.hidden_.size())}, {static_cast<int>(cache.probs_.size())}};
  }
  cache.valid_ = true;
  return cache.probs_;
}

std::vector<double> forward(const Cnn& net, const PatchInput& input) {
  ForwardCache cache(net.geometry());
  const auto p = forward(net, input.samples, cache);
  return {p.begin(), p.end()};
}

void backward(const Cnn& net, const ForwardCache& cache, int label, std::span<double> grad) {
  const Geometry& g = net.geometry();
  if (!cache.valid_) throw UsageError("backward called without a completed forward pass");
  if (!(cache.geometry_ == g)) throw ShapeError("backward: cache built for a different geometry");
  if (grad.size() != net.param_count()) throw ShapeError("backward: gradient buffer size mismatch");
  if (label < 0 || label >= g.classes) throw InvalidInput("backward: label out of range");

  const double slope = net.slope();
  const auto& blocks = net.blocks();
  const int k = g.kernel, p1 = g.pool1_side(), c2 = g.conv2_side();
  const std::size_t k2 = static_cast<std::size_t>(k) * k;
  const std::size_t p1a = static_cast<std::size_t>(p1) * p1;
  const std::size_t c2a = static_cast<std::size_t>(c2) * c2;
  const std::size_t s2 = padded(c2a);
  const int c1 = g.conv1_side();
  const std::size_t in_area = static_cast<std::size_t>(g.input) * g.input;
  const std::size_t p2a = static_cast<std::size_t>(g.pool2_side()) * g.pool2_side();
  const std::size_t nflat = cache.flat_.size();

  // Output layer: d loss / d logits = probs - onehot.
  double d_logits[16];
  std::vector<double> d_logits_heap;
  double* dl = d_logits;
  if (g.classes > 16) {
    d_logits_heap.resize(g.classes);
    dl = d_logits_heap.data();
  }
  for (int c = 0; c < g.classes; ++c) dl[c] = cache.probs_[c] - (c == label ? 1.0 : 0.0);

  const ParamBlock& b2 = blocks.back();
  const FcLayerView f2 = net.fc2();
  std::ranges::fill(cache.d_hidden_, 0.0);
  for (int c = 0; c < g.classes; ++c) {
    axpy(dl[c], cache.hidden_.data(), grad.data() + b2.weights + static_cast<std::size_t>(c) * g.hidden, g.hidden);
    grad[b2.biases + c] += dl[c];
    axpy(dl[c], f2.weights.data() + static_cast<std::size_t>(c) * g.hidden, cache.d_hidden_.data(), g.hidden);
  }
  for (int h = 0; h < g.hidden; ++h) cache.d_hidden_[h] *= lrelu_derivative(cache.hidden_pre_[h], slope);

  const ParamBlock& b1 = blocks[blocks.size() - 2];
  const FcLayerView f1 = net.fc1();
  std::ranges::fill(cache.d_flat_, 0.0);
  for (int h = 0; h < g.hidden; ++h) {
    const double d = cache.d_hidden_[h];
    if (d == 0.0) continue;
    axpy(d, cache.flat_.data(), grad.data() + b1.weights + h * nflat, nflat);
    grad[b1.biases + h] += d;
    axpy(d, f1.weights.data() + h * nflat, cache.d_flat_.data(), nflat);
  }

  const std::size_t taps2 = g.maps1 * k2;
  for (int t = 0; t < g.towers; ++t) {
    // Second convolution, routed through the pooling winners.
    const ParamBlock& bc2 = blocks[2 * t + 1];
    const double* w2 = net.params().data() + bc2.weights;
    const double* col2 = cache.col2_.data() + t * taps2 * s2;
    const double* flat = cache.flat_.data() + t * g.maps2 * p2a;
    const double* d_flat = cache.d_flat_.data() + t * g.maps2 * p2a;
    const int* arg2 = cache.arg2_.data() + t * g.maps2 * p2a;
    // Position-major copy of the im2col rows so each winner's receptive
    // field is contiguous.
    double* col2t = cache.col2t_.data();
    for (std::size_t q = 0; q < taps2; ++q) {
      const double* row = col2 + q * s2;
      for (std::size_t p = 0; p < c2a; ++p) col2t[p * taps2 + q] = row[p];
    }
    std::ranges::fill(cache.d_col2_, 0.0);
    std::ranges::fill(cache.touched_, 0);
    for (int m = 0; m < g.maps2; ++m) {
      double* gw = grad.data() + bc2.weights + m * taps2;
      const double* wm = w2 + m * taps2;
      for (std::size_t j = 0; j < p2a; ++j) {
        const std::size_t i = m * p2a + j;
        const double d = d_flat[i] * (flat[i] > 0.0 ? 1.0 : slope);
        if (d == 0.0) continue;
        const std::size_t p = static_cast<std::size_t>(arg2[i]);
        grad[bc2.biases + m] += d;
        axpy(d, col2t + p * taps2, gw, taps2);
        axpy(d, wm, cache.d_col2_.data() + p * taps2, taps2);
        cache.touched_[p] = 1;
      }
    }
    // col2im onto the first pooling output.
    std::ranges::fill(cache.d_pool1_, 0.0);
    for (int y = 0; y < c2; ++y) {
      for (int x = 0; x < c2; ++x) {
        if (!cache.touched_[static_cast<std::size_t>(y * c2 + x)]) continue;
        const double* dc = cache.d_col2_.data() + static_cast<std::size_t>(y * c2 + x) * taps2;
        for (int c = 0; c < g.maps1; ++c) {
          double* dp = cache.d_pool1_.data() + c * p1a;
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              dp[(y + ky) * p1 + x + kx] += dc[(c * k + ky) * k + kx];
            }
          }
        }
      }
    }
    // First convolution.
    const ParamBlock& bc1 = blocks[2 * t];
    const double* in = cache.input_.data() + t * in_area;
    const double* pool1 = cache.pool1_.data() + t * g.maps1 * p1a;
    const int* arg1 = cache.arg1_.data() + t * g.maps1 * p1a;
    for (int m = 0; m < g.maps1; ++m) {
      double* gw = grad.data() + bc1.weights + m * k2;
      for (std::size_t j = 0; j < p1a; ++j) {
        const std::size_t i = m * p1a + j;
        const double d = cache.d_pool1_[i] * (pool1[i] > 0.0 ? 1.0 : slope);
        if (d == 0.0) continue;
        const int p = arg1[i];
        const int py = p / c1, px = p % c1;
        grad[bc1.biases + m] += d;
        for (int ky = 0; ky < k; ++ky) {
          const double* row = in + (py + ky) * g.input + px;
          double* gr = gw + ky * k;
          for (int kx = 0; kx < k; ++kx) gr[kx] += d * row[kx];
        }
      }
    }
  }
}

}  // namespace fseg
