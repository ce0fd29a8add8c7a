#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fseg/cnn.hpp"
#include "fseg/parallel.hpp"
#include "fseg/patch.hpp"

namespace fseg {

/// SGD settings. `phi` is the number of selected training samples; 0 lets
/// train_select fill it from the sample list.
struct Hyperparams {
  double eta = 0.01;
  double lambda = 0.1;
  int batch = 10;
  std::size_t phi = 0;
  int epochs = 40;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainSample {
  int image = 0;
  Point pixel;
  Label label = Label::Background;
  bool operator==(const TrainSample&) const = default;
};

using ClassPools = std::array<std::vector<TrainSample>, kNumClasses>;

/// Per-class sample targets. A class whose pool is smaller than its target is
/// taken whole and topped up by drawing from the pool with replacement.
struct SamplePlan {
  std::array<std::size_t, kNumClasses> targets{};
};

std::vector<TrainSample> stratified_sample(const ClassPools& pools, const SamplePlan& plan,
                                           std::uint64_t seed);

/// Builds network inputs for samples that reference a set of images.
class SampleSource {
 public:
  explicit SampleSource(std::vector<PatchSource> images) : images_(std::move(images)) {}

  void build(const TrainSample& s, PatchInput& out) const;
  std::size_t size() const { return images_.size(); }
  const PatchSource& image(std::size_t i) const { return images_.at(i); }

 private:
  std::vector<PatchSource> images_;
};

/// Applies one parameter update from a summed batch gradient:
/// weights w <- (1 - eta*lambda/phi) w - (eta/n) g, biases b <- b - (eta/n) g,
/// with n the number of samples in the batch. Throws NumericError on a
/// non-finite gradient without touching the net.
void apply_update(Cnn& net, std::span<const double> grad_sum, std::size_t batch_size,
                  const Hyperparams& h);

struct LabeledInput {
  std::span<const double> input;
  int label = 0;
};

/// Per-sample gradients computed in parallel and reduced in index order, so
/// updates do not depend on the worker count.
class SgdEngine {
 public:
  SgdEngine(const Geometry& geometry, std::size_t max_batch, WorkerPool& pool);

  /// Gradient of one batch, summed over its samples. `fetch(slot, input)`
  /// fills the input for batch slot `slot` and returns its label. Returns the
  /// summed loss.
  double gradient(const Cnn& net, std::size_t count,
                  const std::function<int(std::size_t, PatchInput&)>& fetch);
  std::span<const double> summed_gradient() const { return sum_; }

  /// gradient() followed by apply_update(); returns the summed loss.
  double step(Cnn& net, std::size_t count, const std::function<int(std::size_t, PatchInput&)>& fetch,
              const Hyperparams& h);

  WorkerPool& pool() { return pool_; }

 private:
  struct Slot {
    PatchInput input;
    int label = 0;
    std::vector<double> grad;
    double loss = 0.0;
  };

  Geometry geometry_;
  WorkerPool& pool_;
  std::vector<Slot> slots_;
  std::vector<ForwardCache> caches_;
  std::vector<double> sum_;
};

/// One mini-batch step over explicit inputs.
double sgd_step(Cnn& net, std::span<const LabeledInput> batch, const Hyperparams& h, WorkerPool& pool);

/// Generator for the shuffle of a given epoch; independent of earlier epochs.
std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch);

/// Shuffles the samples with epoch_rng(h.seed, epoch) and runs consecutive
/// batches of h.batch (the last may be shorter). Returns the mean loss.
double run_epoch(Cnn& net, const std::vector<TrainSample>& samples, const Hyperparams& h, int epoch,
                 const SampleSource& source, SgdEngine& engine);

struct EvalResult {
  std::size_t evaluated = 0;
  std::size_t correct = 0;
  double accuracy() const { return evaluated ? static_cast<double>(correct) / evaluated : 0.0; }
};

/// Points 0, 4, 8, ... of each class pool.
std::vector<TrainSample> stride_subsample(const ClassPools& pools, std::size_t stride = 4);

/// Classifies every 4th point of each class pool.
EvalResult epoch_eval(const Cnn& net, const ClassPools& test_pools, const SampleSource& source,
                      WorkerPool& pool);

/// Predicted class for each sample, in order.
std::vector<int> classify(const Cnn& net, std::span<const TrainSample> samples,
                          const SampleSource& source, WorkerPool& pool);

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;
  double wall_seconds = 0.0;
};

struct TrainState {
  Cnn net;
  Cnn best;
  int best_epoch = 0;
  double best_accuracy = -1.0;
  int epochs_done = 0;
  std::vector<EpochRecord> log;
};

struct TrainingSetup {
  Hyperparams hyper;
  std::vector<TrainSample> samples;
  const SampleSource* source = nullptr;
  WorkerPool* pool = nullptr;
  /// Accuracy of a candidate after `epoch`.
  std::function<double(const Cnn&, int epoch)> evaluate;
  /// Called after every epoch, e.g. to write a checkpoint.
  std::function<void(const TrainState&)> on_epoch;
};

TrainState initial_state(const Cnn& net);

/// Trains from `state` up to hyper.epochs and keeps the most accurate epoch
/// (earliest on ties).
TrainState train_select(const TrainingSetup& setup, TrainState state);

/// epoch,mean_loss,eval_accuracy with round-trip precision.
std::string training_log_csv(const std::vector<EpochRecord>& log);
/// epoch,wall_seconds
std::string timing_log_csv(const std::vector<EpochRecord>& log);

}  // namespace fseg
