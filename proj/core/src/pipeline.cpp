#include "fseg/pipeline.hpp"

#include <algorithm>
#include <optional>

namespace fseg {

PatchSource prepare(const Image& rgb, const Mask& mask, const PrepConfig& cfg) {
  const Image green = normalize_fundus(rgb, mask, cfg.norm_window).channel(1);
  const Image std_green = standardize_channel(green, mask);
  if (cfg.context == ContextSource::Original) {
    return PatchSource(std_green, standardize_channel(rgb.channel(1), mask), cfg.patch);
  }
  return PatchSource(std_green, cfg.patch);
}

SampleSource prepare_all(const std::vector<FundusRecord>& records, const PrepConfig& cfg,
                         WorkerPool& pool) {
  std::vector<std::optional<PatchSource>> slots(records.size());
  pool.run(records.size(), [&](std::size_t i, int) {
    slots[i].emplace(prepare(records[i].image, records[i].mask, cfg));
  });
  std::vector<PatchSource> sources;
  sources.reserve(slots.size());
  for (auto& s : slots) sources.push_back(std::move(*s));
  return SampleSource(std::move(sources));
}

ClassPools class_pools(const std::vector<FundusRecord>& records) {
  ClassPools pools;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const FundusRecord& rec = records[r];
    if (!rec.truth) throw InvalidInput("class_pools: record " + rec.id + " has no truth");
    for (const Point p : effective_points(rec.mask)) {
      const Label l = rec.truth->at(p.x, p.y);
      pools[static_cast<int>(l)].push_back({static_cast<int>(r), p, l});
    }
  }
  return pools;
}

LabelMap segment(const Cnn& net, const PatchSource& source, const Mask& mask, WorkerPool& pool) {
  if (!same_size(source, mask)) throw InvalidInput("segment: mask size mismatch");
  const std::vector<Point> points = effective_points(mask);
  std::vector<std::uint8_t> labels(points.size());
  std::vector<ForwardCache> caches;
  std::vector<PatchInput> inputs;
  for (int w = 0; w < pool.size(); ++w) {
    caches.emplace_back(net.geometry());
    inputs.emplace_back(net.geometry().input);
  }
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (points.size() + kChunk - 1) / kChunk;
  pool.run(chunks, [&](std::size_t chunk, int worker) {
    ForwardCache& cache = caches[static_cast<std::size_t>(worker)];
    PatchInput& in = inputs[static_cast<std::size_t>(worker)];
    const std::size_t end = std::min(points.size(), (chunk + 1) * kChunk);
    for (std::size_t i = chunk * kChunk; i < end; ++i) {
      source.build(points[i].x, points[i].y, in);
      labels[i] = static_cast<std::uint8_t>(argmax_class(forward(net, in.samples, cache)));
    }
  });
  LabelMap out(mask.width(), mask.height());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.set(points[i].x, points[i].y, static_cast<Label>(labels[i]));
  }
  return out;
}

Image overlay(const Image& rgb, const LabelMap& labels) {
  if (rgb.channels() != 3 || !same_size(rgb, labels)) throw InvalidInput("overlay: size mismatch");
  static constexpr double kTint[kNumClasses][3] = {
      {0, 0, 0}, {1.0, 1.0, 0.0}, {0.0, 1.0, 1.0}, {1.0, 0.0, 0.0}};
  constexpr double kAlpha = 0.6;
  Image out = rgb;
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      const int cls = static_cast<int>(labels.at(x, y));
      if (cls == 0) continue;
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = (1.0 - kAlpha) * rgb.at(x, y, c) + kAlpha * kTint[cls][c];
      }
    }
  }
  return out;
}

}  // namespace fseg
