#include "fseg/metrics.hpp"

#include <cstdio>
#include <sstream>

namespace fseg {

std::uint64_t ConfusionMatrix::row_sum(int c) const {
  std::uint64_t s = 0;
  for (int p = 0; p < kNumClasses; ++p) s += counts[c][p];
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int c) const {
  std::uint64_t s = 0;
  for (int t = 0; t < kNumClasses; ++t) s += counts[t][c];
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (int t = 0; t < kNumClasses; ++t) s += row_sum(t);
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (int c = 0; c < kNumClasses; ++c) s += counts[c][c];
  return s;
}

ConfusionMatrix ConfusionMatrix::transposed() const {
  ConfusionMatrix t;
  for (int a = 0; a < kNumClasses; ++a) {
    for (int b = 0; b < kNumClasses; ++b) t.counts[b][a] = counts[a][b];
  }
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  for (int a = 0; a < kNumClasses; ++a) {
    for (int b = 0; b < kNumClasses; ++b) counts[a][b] += o.counts[a][b];
  }
  return *this;
}

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& truth, const Mask& mask) {
  if (!same_size(pred, truth) || !same_size(pred, mask)) {
    throw InvalidInput("confusion: prediction, truth and mask sizes differ");
  }
  ConfusionMatrix cm;
  const auto p = pred.ids(), t = truth.ids();
  const auto m = mask.flags();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) ++cm.counts[t[i]][p[i]];
  }
  return cm;
}

namespace {

Stat ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassStats class_stats(const ConfusionMatrix& cm, int cls) {
  if (cls < 0 || cls >= kNumClasses) throw InvalidInput("class_stats: class out of range");
  const std::uint64_t tp = cm.counts[cls][cls];
  std::uint64_t negatives = 0, true_negatives = 0;
  for (int t = 0; t < kNumClasses; ++t) {
    if (t == cls) continue;
    negatives += cm.row_sum(t);
    true_negatives += cm.row_sum(t) - cm.counts[t][cls];
  }
  return {ratio(tp, cm.row_sum(cls)), ratio(true_negatives, negatives),
          ratio(tp, cm.row_sum(cls) + cm.col_sum(cls) - tp)};
}

Stat accuracy(const ConfusionMatrix& cm) { return ratio(cm.trace(), cm.total()); }

Report per_image_report(const std::vector<std::pair<std::string, ConfusionMatrix>>& images) {
  Report r;
  for (const auto& [id, cm] : images) {
    ImageRow row{id, cm.total(), cm.trace(), std::nullopt};
    if (const Stat a = accuracy(cm)) row.percentage = 100.0 * *a;
    r.rows.push_back(row);
    r.aggregate += cm;
  }
  r.total = r.aggregate.total();
  r.correct = r.aggregate.trace();
  if (const Stat a = accuracy(r.aggregate)) r.mean_percentage = 100.0 * *a;
  return r;
}

std::string format_stat(const Stat& s, int digits) {
  if (!s) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *s);
  return buf;
}

std::string per_image_csv(const Report& r) {
  std::ostringstream out;
  out << "image,total_points,correct,percentage\n";
  for (const ImageRow& row : r.rows) {
    out << row.id << ',' << row.total << ',' << row.correct << ',' << format_stat(row.percentage, 2) << '\n';
  }
  out << "all," << r.total << ',' << r.correct << ',' << format_stat(r.mean_percentage, 2) << '\n';
  return out.str();
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "truth";
  for (int c = 0; c < kNumClasses; ++c) out << ',' << label_name(c);
  out << ",total\n";
  for (int t = 0; t < kNumClasses; ++t) {
    out << label_name(t);
    for (int p = 0; p < kNumClasses; ++p) out << ',' << cm.counts[t][p];
    out << ',' << cm.row_sum(t) << '\n';
  }
  return out.str();
}

std::string confusion_percent_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "truth";
  for (int c = 0; c < kNumClasses; ++c) out << ',' << label_name(c);
  out << '\n';
  for (int t = 0; t < kNumClasses; ++t) {
    out << label_name(t);
    for (int p = 0; p < kNumClasses; ++p) {
      const Stat s = ratio(cm.counts[t][p], cm.row_sum(t));
      out << ',' << format_stat(s ? Stat(100.0 * *s) : s, 2);
    }
    out << '\n';
  }
  return out.str();
}

std::string class_stats_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "class,sensitivity,specificity,overlap\n";
  for (int c = 0; c < kNumClasses; ++c) {
    const ClassStats s = class_stats(cm, c);
    out << label_name(c) << ',' << format_stat(s.sensitivity, 4) << ',' << format_stat(s.specificity, 4)
        << ',' << format_stat(s.overlap, 4) << '\n';
  }
  return out.str();
}

std::string report_text(const Report& r) {
  std::ostringstream out;
  char line[160];
  out << "Per-image results\n";
  std::snprintf(line, sizeof line, "%-12s %14s %14s %10s\n", "image", "effective", "correct", "percent");
  out << line;
  for (const ImageRow& row : r.rows) {
    std::snprintf(line, sizeof line, "%-12s %14llu %14llu %10s\n", row.id.c_str(),
                  static_cast<unsigned long long>(row.total), static_cast<unsigned long long>(row.correct),
                  format_stat(row.percentage, 2).c_str());
    out << line;
  }
  std::snprintf(line, sizeof line, "%-12s %14llu %14llu %10s\n\n", "(pooled)",
                static_cast<unsigned long long>(r.total), static_cast<unsigned long long>(r.correct),
                format_stat(r.mean_percentage, 2).c_str());
  out << line;

  out << "Confusion matrix (rows = truth, columns = prediction)\n";
  std::snprintf(line, sizeof line, "%-12s", "");
  out << line;
  for (int c = 0; c < kNumClasses; ++c) {
    std::snprintf(line, sizeof line, " %12s", label_name(c));
    out << line;
  }
  out << '\n';
  for (int t = 0; t < kNumClasses; ++t) {
    std::snprintf(line, sizeof line, "%-12s", label_name(t));
    out << line;
    for (int p = 0; p < kNumClasses; ++p) {
      std::snprintf(line, sizeof line, " %12llu", static_cast<unsigned long long>(r.aggregate.counts[t][p]));
      out << line;
    }
    out << '\n';
  }
  out << "\nConfusion matrix (percent of truth row)\n";
  for (int t = 0; t < kNumClasses; ++t) {
    std::snprintf(line, sizeof line, "%-12s", label_name(t));
    out << line;
    for (int p = 0; p < kNumClasses; ++p) {
      const Stat s = ratio(r.aggregate.counts[t][p], r.aggregate.row_sum(t));
      std::snprintf(line, sizeof line, " %11s%%", format_stat(s ? Stat(100.0 * *s) : s, 2).c_str());
      out << line;
    }
    out << '\n';
  }
  out << "\nPer-class statistics\n";
  std::snprintf(line, sizeof line, "%-12s %12s %12s %12s\n", "class", "sensitivity", "specificity", "overlap");
  out << line;
  for (int c = 0; c < kNumClasses; ++c) {
    const ClassStats s = class_stats(r.aggregate, c);
    std::snprintf(line, sizeof line, "%-12s %12s %12s %12s\n", label_name(c),
                  format_stat(s.sensitivity, 4).c_str(), format_stat(s.specificity, 4).c_str(),
                  format_stat(s.overlap, 4).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace fseg
