#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fseg/patch.hpp"

namespace fseg {

/// Dense row-major tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims, double fill = 0.0);
  Tensor(std::vector<int> dims, std::vector<double> samples);

  const std::vector<int>& dims() const { return dims_; }
  int dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const { return samples_.size(); }

  std::span<double> samples() { return samples_; }
  std::span<const double> samples() const { return samples_; }
  double& operator[](std::size_t i) { return samples_[i]; }
  double operator[](std::size_t i) const { return samples_[i]; }

  /// Element of a rank-3 tensor.
  double& at(int d, int y, int x) { return samples_[(static_cast<std::size_t>(d) * dims_[1] + y) * dims_[2] + x]; }
  double at(int d, int y, int x) const { return samples_[(static_cast<std::size_t>(d) * dims_[1] + y) * dims_[2] + x]; }

 private:
  std::vector<int> dims_;
  std::vector<double> samples_;
};

/// Read-only view of one convolution layer: kernels [out][in][k][k], biases [out].
struct ConvLayerView {
  int out_maps = 0;
  int in_depth = 0;
  int kernel = 0;
  std::span<const double> kernels;
  std::span<const double> biases;
};

/// Read-only view of a fully connected layer: weights [out][in], biases [out].
struct FcLayerView {
  int out = 0;
  int in = 0;
  std::span<const double> weights;
  std::span<const double> biases;
};

/// Valid stride-1 cross-correlation plus per-map bias.
Tensor conv_valid(const Tensor& input, const ConvLayerView& layer);

struct PoolResult {
  Tensor output;
  std::vector<int> argmax;  // flat input index of the winner, per output sample
};

/// Non-overlapping 2x2 max pooling; a trailing odd row or column is dropped.
/// Ties go to the first sample in row-major order.
PoolResult maxpool_2x2(const Tensor& input);

inline double lrelu(double x, double slope) { return x > 0.0 ? x : slope * x; }
inline double lrelu_derivative(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

/// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> logits);

struct Loss {
  double value = 0.0;
  bool saturated = false;  // probability of the label underflowed to zero
};

/// Negative log-likelihood of `label`, clamped at -ln(1e-300).
Loss nll_loss(std::span<const double> probs, int label);

/// Hyper-shape of the network. Defaults give the 3 x 33 x 33 canonical net.
struct Geometry {
  int input = 33;
  int towers = 3;
  int kernel = 5;
  int maps1 = 10;
  int maps2 = 15;
  int hidden = 100;
  int classes = 4;

  int conv1_side() const { return input - kernel + 1; }
  int pool1_side() const { return conv1_side() / 2; }
  int conv2_side() const { return pool1_side() - kernel + 1; }
  int pool2_side() const { return conv2_side() / 2; }
  int flat() const { return towers * maps2 * pool2_side() * pool2_side(); }
  std::size_t input_size() const { return static_cast<std::size_t>(towers) * input * input; }

  void validate() const;
  bool operator==(const Geometry&) const = default;
};

/// Output extents of each stage (layers 1..6), towers folded into depth.
std::vector<std::vector<int>> layer_extents(const Geometry& g);

/// One block of trainable parameters inside Cnn::params().
struct ParamBlock {
  std::string name;        // e.g. "tower0.conv1", "fc2"
  bool conv = false;       // conv kernels vs fully connected weights
  std::vector<int> dims;   // weight dims
  std::size_t weights = 0; // offset of the weights
  std::size_t biases = 0;  // offset of the biases
  std::size_t weight_count = 0;
  std::size_t bias_count = 0;
};

/// Multi-tower convolutional classifier. Each input channel feeds its own
/// conv -> pool -> conv -> pool tower; the flattened tower outputs feed a
/// hidden fully connected layer and a softmax output layer. LReLU follows
/// both convolutions and the hidden layer.
class Cnn {
 public:
  explicit Cnn(Geometry geometry = {}, double slope = 0.01);

  const Geometry& geometry() const { return geometry_; }
  double slope() const { return slope_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  /// 1 for every weight, 0 for every bias, aligned with params().
  const std::vector<std::uint8_t>& weight_flags() const { return weight_flags_; }

  ConvLayerView conv1(int tower) const;
  ConvLayerView conv2(int tower) const;
  FcLayerView fc1() const;
  FcLayerView fc2() const;

  std::size_t param_count() const { return params_.size(); }

  bool operator==(const Cnn& o) const {
    return geometry_ == o.geometry_ && slope_ == o.slope_ && params_ == o.params_;
  }

 private:
  ConvLayerView conv_view(std::size_t block) const;
  FcLayerView fc_view(std::size_t block) const;

  Geometry geometry_;
  double slope_;
  std::vector<ParamBlock> blocks_;
  std::vector<double> params_;
  std::vector<std::uint8_t> weight_flags_;
};

/// Xavier-uniform weights, unit biases for the hidden layers and standard
/// Gaussian output biases. Deterministic in `seed`.
void init(Cnn& net, std::uint64_t seed);

/// Parameter totals per stage: conv1, conv2, fc1, fc2.
struct ParamBreakdown {
  std::size_t conv1 = 0;
  std::size_t conv2 = 0;
  std::size_t fc1 = 0;
  std::size_t fc2 = 0;
  std::size_t total() const { return conv1 + conv2 + fc1 + fc2; }
};
ParamBreakdown param_breakdown(const Cnn& net);

/// Activations of one forward pass, kept for backward. Reusable across calls.
class ForwardCache {
 public:
  explicit ForwardCache(const Geometry& g);

  std::span<const double> probs() const { return probs_; }
  std::span<const double> logits() const { return logits_; }
  bool valid() const { return valid_; }

  /// Stage extents produced by forward passes through this cache (empty before the first).
  std::vector<std::vector<int>> extents() const;

 private:
  friend std::span<const double> forward(const Cnn&, std::span<const double>, ForwardCache&);
  friend void backward(const Cnn&, const ForwardCache&, int, std::span<double>);

  Geometry geometry_;
  bool valid_ = false;
  std::vector<std::vector<int>> observed_;
  std::vector<double> input_;
  std::vector<double> col1_;   // [tower][k*k][c1*c1]
  std::vector<double> pool1_;  // [tower][maps1][p1*p1]
  std::vector<int> arg1_;
  std::vector<double> col2_;   // [tower][maps1*k*k][c2*c2]
  std::vector<double> conv_;   // scratch for one tower's conv output
  std::vector<double> flat_;   // [tower][maps2][p2*p2]
  std::vector<int> arg2_;
  std::vector<double> partial_;  // per-tower hidden-layer sums
  std::vector<double> hidden_pre_;
  std::vector<double> hidden_;
  std::vector<double> logits_;
  std::vector<double> probs_;
  // backward scratch
  mutable std::vector<double> d_flat_;
  mutable std::vector<double> d_hidden_;
  mutable std::vector<double> d_col2_;  // [c2*c2][maps1*k*k]
  mutable std::vector<double> d_pool1_;
  mutable std::vector<double> col2t_;        // [c2*c2][maps1*k*k]
  mutable std::vector<std::uint8_t> touched_;
};

/// Class probabilities for `input` (towers x input x input samples).
std::span<const double> forward(const Cnn& net, std::span<const double> input, ForwardCache& cache);
std::vector<double> forward(const Cnn& net, const PatchInput& input);

/// Adds the gradient of nll_loss(forward(input), label) w.r.t. every
/// parameter into `grad` (laid out like Cnn::params()).
void backward(const Cnn& net, const ForwardCache& cache, int label, std::span<double> grad);

/// Index of the largest probability; ties resolve to the lower class id.
int argmax_class(std::span<const double> probs);

}  // namespace fseg
