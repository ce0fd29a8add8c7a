#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fseg/image.hpp"

namespace fseg {

/// 4x4 counts, rows = truth, columns = prediction, both in class id order.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t row_sum(int c) const;
  std::uint64_t col_sum(int c) const;
  std::uint64_t total() const;
  std::uint64_t trace() const;
  ConfusionMatrix transposed() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  friend ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) { return a += b; }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Counts effective points only.
ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& truth, const Mask& mask);

/// An empty optional marks a statistic whose denominator is zero.
using Stat = std::optional<double>;

struct ClassStats {
  Stat sensitivity;
  Stat specificity;
  Stat overlap;  // TP / (TP + FP + FN)
};

ClassStats class_stats(const ConfusionMatrix& cm, int cls);
Stat accuracy(const ConfusionMatrix& cm);

struct ImageRow {
  std::string id;
  std::uint64_t total = 0;
  std::uint64_t correct = 0;
  Stat percentage;
};

struct Report {
  std::vector<ImageRow> rows;
  ConfusionMatrix aggregate;
  std::uint64_t total = 0;
  std::uint64_t correct = 0;
  Stat mean_percentage;  // pooled correct / pooled total
};

Report per_image_report(const std::vector<std::pair<std::string, ConfusionMatrix>>& images);

/// "n/a" for undefined statistics, otherwise fixed with `digits` decimals.
std::string format_stat(const Stat& s, int digits);

std::string per_image_csv(const Report& r);
std::string confusion_csv(const ConfusionMatrix& cm);
std::string confusion_percent_csv(const ConfusionMatrix& cm);
std::string class_stats_csv(const ConfusionMatrix& cm);
std::string report_text(const Report& r);

}  // namespace fseg
