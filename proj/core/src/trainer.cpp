#include "fseg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace fseg {

void Hyperparams::validate() const {
  if (!(eta > 0.0)) throw InvalidInput("learning rate must be positive");
  if (lambda < 0.0) throw InvalidInput("regularization must be non-negative");
  if (batch < 1) throw InvalidInput("batch size must be at least 1");
  if (phi < static_cast<std::size_t>(batch)) throw InvalidInput("phi must be at least the batch size");
  if (epochs < 0) throw InvalidInput("epoch count must be non-negative");
}

std::vector<TrainSample> stratified_sample(const ClassPools& pools, const SamplePlan& plan,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TrainSample> out;
  out.reserve(std::accumulate(plan.targets.begin(), plan.targets.end(), std::size_t{0}));
  for (int c = 0; c < kNumClasses; ++c) {
    const std::size_t target = plan.targets[c];
    if (target == 0) continue;
    const auto& pool = pools[c];
    if (pool.empty()) {
      throw InvalidInput(std::string("stratified_sample: empty pool for class ") + label_name(c));
    }
    if (pool.size() >= target) {
      // Partial Fisher-Yates over indices: uniform without replacement.
      std::vector<std::size_t> idx(pool.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t i = 0; i < target; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
        out.push_back(pool[idx[i]]);
      }
    } else {
      out.insert(out.end(), pool.begin(), pool.end());
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (std::size_t i = pool.size(); i < target; ++i) out.push_back(pool[pick(rng)]);
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

void SampleSource::build(const TrainSample& s, PatchInput& out) const {
  images_.at(static_cast<std::size_t>(s.image)).build(s.pixel.x, s.pixel.y, out);
}

void apply_update(Cnn& net, std::span<const double> grad_sum, std::size_t batch_size,
                  const Hyperparams& h) {
  if (grad_sum.size() != net.param_count()) throw ShapeError("apply_update: gradient size mismatch");
  if (batch_size == 0) throw InvalidInput("apply_update: empty batch");
  if (h.phi == 0) throw InvalidInput("apply_update: phi must be positive");
  for (std::size_t i = 0; i < grad_sum.size(); ++i) {
    if (!std::isfinite(grad_sum[i])) {
      std::string where = "parameter " + std::to_string(i);
      for (const ParamBlock& b : net.blocks()) {
        if (i >= b.weights && i < b.biases + b.bias_count) {
          where = b.name + (i < b.biases ? " weight " + std::to_string(i - b.weights)
                                         : " bias " + std::to_string(i - b.biases));
        }
      }
      throw NumericError("non-finite gradient at " + where + " (value " + std::to_string(grad_sum[i]) + ")");
    }
  }
  const double decay = 1.0 - h.eta * h.lambda / static_cast<double>(h.phi);
  const double rate = h.eta / static_cast<double>(batch_size);
  auto params = net.params();
  const auto& is_weight = net.weight_flags();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (is_weight[i]) {
      params[i] = decay * params[i] - rate * grad_sum[i];
    } else {
      params[i] = params[i] - rate * grad_sum[i];
    }
  }
}

SgdEngine::SgdEngine(const Geometry& geometry, std::size_t max_batch, WorkerPool& pool)
    : geometry_(geometry), pool_(pool) {
  const Cnn probe(geometry);
  slots_.resize(max_batch);
  for (Slot& s : slots_) {
    s.input = PatchInput(geometry.input);
    s.grad.assign(probe.param_count(), 0.0);
  }
  for (int w = 0; w < pool.size(); ++w) caches_.emplace_back(geometry);
  sum_.assign(probe.param_count(), 0.0);
}

double SgdEngine::gradient(const Cnn& net, std::size_t count,
                           const std::function<int(std::size_t, PatchInput&)>& fetch) {
  if (count == 0 || count > slots_.size()) throw InvalidInput("SgdEngine: batch size out of range");
  if (!(net.geometry() == geometry_)) throw ShapeError("SgdEngine: net geometry mismatch");
  pool_.run(count, [&](std::size_t i, int worker) {
    Slot& s = slots_[i];
    s.label = fetch(i, s.input);
    ForwardCache& cache = caches_[static_cast<std::size_t>(worker)];
    const auto probs = forward(net, s.input.samples, cache);
    s.loss = nll_loss(probs, s.label).value;
    std::ranges::fill(s.grad, 0.0);
    backward(net, cache, s.label, s.grad);
  });
  std::ranges::copy(slots_[0].grad, sum_.begin());
  double loss = slots_[0].loss;
  for (std::size_t i = 1; i < count; ++i) {
    const auto& g = slots_[i].grad;
    for (std::size_t j = 0; j < sum_.size(); ++j) sum_[j] += g[j];
    loss += slots_[i].loss;
  }
  return loss;
}

double SgdEngine::step(Cnn& net, std::size_t count,
                       const std::function<int(std::size_t, PatchInput&)>& fetch, const Hyperparams& h) {
  const double loss = gradient(net, count, fetch);
  apply_update(net, sum_, count, h);
  return loss;
}

double sgd_step(Cnn& net, std::span<const LabeledInput> batch, const Hyperparams& h, WorkerPool& pool) {
  SgdEngine engine(net.geometry(), batch.size(), pool);
  return engine.step(net, batch.size(),
                     [&](std::size_t i, PatchInput& in) {
                       if (batch[i].input.size() != in.samples.size()) {
                         throw ShapeError("sgd_step: input size does not match the network");
                       }
                       std::ranges::copy(batch[i].input, in.samples.begin());
                       return batch[i].label;
                     },
                     h);
}

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  return std::mt19937_64(seq);
}

double run_epoch(Cnn& net, const std::vector<TrainSample>& samples, const Hyperparams& h, int epoch,
                 const SampleSource& source, SgdEngine& engine) {
  if (samples.empty()) throw InvalidInput("run_epoch: no samples");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = epoch_rng(h.seed, epoch);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t kappa = static_cast<std::size_t>(h.batch);
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += kappa) {
    const std::size_t n = std::min(kappa, order.size() - start);
    total += engine.step(net, n,
                         [&](std::size_t i, PatchInput& in) {
                           const TrainSample& s = samples[order[start + i]];
                           source.build(s, in);
                           return static_cast<int>(s.label);
                         },
                         h);
  }
  return total / static_cast<double>(samples.size());
}

std::vector<TrainSample> stride_subsample(const ClassPools& pools, std::size_t stride) {
  std::vector<TrainSample> out;
  for (const auto& pool : pools) {
    for (std::size_t i = 0; i < pool.size(); i += stride) out.push_back(pool[i]);
  }
  return out;
}

std::vector<int> classify(const Cnn& net, std::span<const TrainSample> samples,
                          const SampleSource& source, WorkerPool& pool) {
  std::vector<int> out(samples.size());
  constexpr std::size_t kChunk = 64;
  std::vector<ForwardCache> caches;
  std::vector<PatchInput> inputs;
  for (int w = 0; w < pool.size(); ++w) {
    caches.emplace_back(net.geometry());
    inputs.emplace_back(net.geometry().input);
  }
  const std::size_t chunks = (samples.size() + kChunk - 1) / kChunk;
  pool.run(chunks, [&](std::size_t chunk, int worker) {
    ForwardCache& cache = caches[static_cast<std::size_t>(worker)];
    PatchInput& in = inputs[static_cast<std::size_t>(worker)];
    const std::size_t end = std::min(samples.size(), (chunk + 1) * kChunk);
    for (std::size_t i = chunk * kChunk; i < end; ++i) {
      source.build(samples[i], in);
      out[i] = argmax_class(forward(net, in.samples, cache));
    }
  });
  return out;
}

EvalResult epoch_eval(const Cnn& net, const ClassPools& test_pools, const SampleSource& source,
                      WorkerPool& pool) {
  const std::vector<TrainSample> picked = stride_subsample(test_pools, 4);
  const std::vector<int> pred = classify(net, picked, source, pool);
  EvalResult r;
  r.evaluated = picked.size();
  for (std::size_t i = 0; i < picked.size(); ++i) {
    if (pred[i] == static_cast<int>(picked[i].label)) ++r.correct;
  }
  return r;
}

TrainState initial_state(const Cnn& net) {
  TrainState s;
  s.net = net;
  s.best = net;
  return s;
}

TrainState train_select(const TrainingSetup& setup, TrainState state) {
  Hyperparams h = setup.hyper;
  if (h.phi == 0) h.phi = setup.samples.size();
  h.validate();
  if (!setup.source || !setup.pool || !setup.evaluate) {
    throw InvalidInput("train_select: source, pool and evaluator are required");
  }
  SgdEngine engine(state.net.geometry(), static_cast<std::size_t>(h.batch), *setup.pool);
  for (int epoch = state.epochs_done + 1; epoch <= h.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double loss = run_epoch(state.net, setup.samples, h, epoch, *setup.source, engine);
    const double acc = setup.evaluate(state.net, epoch);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state.log.push_back({epoch, loss, acc, secs});
    state.epochs_done = epoch;
    if (acc > state.best_accuracy) {
      state.best_accuracy = acc;
      state.best_epoch = epoch;
      state.best = state.net;
    }
    if (setup.on_epoch) setup.on_epoch(state);
  }
  return state;
}

std::string training_log_csv(const std::vector<EpochRecord>& log) {
  std::ostringstream out;
  out << "epoch,mean_loss,eval_accuracy\n";
  char buf[128];
  for (const EpochRecord& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.epoch, r.mean_loss, r.accuracy);
    out << buf;
  }
  return out.str();
}

std::string timing_log_csv(const std::vector<EpochRecord>& log) {
  std::ostringstream out;
  out << "epoch,wall_seconds\n";
  char buf[64];
  for (const EpochRecord& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%.3f\n", r.epoch, r.wall_seconds);
    out << buf;
  }
  return out.str();
}

}  // namespace fseg
