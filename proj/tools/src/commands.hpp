#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fseg/metrics.hpp"
#include "run_config.hpp"

namespace fseg::cli {

enum ExitCode { kExitOk = 0, kExitInternal = 1, kExitUsage = 2 };

/// Parses `args` (without the program name), runs the chosen command and
/// maps failures to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct NormalizeOptions {
  std::filesystem::path in;
  std::filesystem::path out;
  std::filesystem::path mask;  // empty: every pixel is effective
  int window = kDefaultNormWindow;
};
void cmd_normalize(const NormalizeOptions& o, std::ostream& log);

struct TrainOptions {
  RunConfig config;
  std::filesystem::path out;  // run directory
  bool resume = false;
};
struct TrainSummary {
  int best_epoch = 0;
  double best_accuracy = -1.0;
  std::vector<EpochRecord> log;
};
TrainSummary cmd_train(const TrainOptions& o, std::ostream& log);

struct SegmentOptions {
  RunConfig config;  // preprocessing settings and workers
  std::filesystem::path model;
  std::filesystem::path image;  // single image mode
  std::filesystem::path mask;   // optional in single image mode
  std::filesystem::path split;  // directory mode: images/ and mask/
  std::filesystem::path out;
};
struct SegmentSummary {
  std::size_t images = 0;
  std::size_t points = 0;
  double seconds = 0.0;
};
SegmentSummary cmd_segment(const SegmentOptions& o, std::ostream& log);

struct EvalOptions {
  std::filesystem::path pred;   // <id>_labels.pgm predictions
  std::filesystem::path truth;  // <id>_labels.pgm truths
  std::filesystem::path mask;   // <stem>_mask.pgm masks
  std::filesystem::path out;
};
Report cmd_eval(const EvalOptions& o, std::ostream& log);

struct SynthOptions {
  std::uint64_t seed = 1;
  int count = 1;
  int size = 256;
  std::filesystem::path out;
};
void cmd_synth(const SynthOptions& o, std::ostream& log);

/// Writes or extends `dir`/manifest.json with the config hash and the CRC-32
/// of each listed file (paths relative to `dir`).
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const std::string& config_text, const std::vector<std::filesystem::path>& files);

}  // namespace fseg::cli
