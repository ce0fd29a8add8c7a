#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fseg/pipeline.hpp"
#include "fseg/trainer.hpp"

namespace fseg::cli {

/// Bad arguments or configuration; reported with exit code 2.
class CliError : public Error {
 public:
  using Error::Error;
};

/// Every setting a run can carry. Defaults give the standard full-size protocol.
struct RunConfig {
  // data and output
  std::string data;       // root holding training/ and test/
  std::string train_dir;  // overrides data/training
  std::string test_dir;   // overrides data/test

  // optimisation
  double eta = 0.01;
  double lambda = 0.1;
  int batch = 10;
  std::size_t phi = 0;  // 0: number of selected samples
  int epochs = 40;
  std::uint64_t seed = 1;

  // per-class sample targets: background, optic disc, fovea, vessel
  std::size_t target_background = 300000;
  std::size_t target_optic_disc = 150000;
  std::size_t target_fovea = 150000;
  std::size_t target_vessel = 150000;

  // network input
  int fine_window = 7;
  int mid_window = 33;
  int context_window = 165;
  std::string context_source = "normalized";  // or "original"
  int norm_window = kDefaultNormWindow;
  double slope = 0.01;

  int workers = 0;  // 0: hardware concurrency

  Hyperparams hyper() const;
  SamplePlan plan() const;
  PrepConfig prep() const;
  std::filesystem::path train_path() const;
  std::filesystem::path test_path() const;

  /// Throws CliError on values no command can run with.
  void validate() const;
};

/// One named setting with string conversion in both directions.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool affects_model = true;  // false for settings that may change on resume
};

const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_key(const std::string& name);

/// Applies flat `key = value` lines; '#' and ';' start comments.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Canonical `key=value` text, one line per key in table order.
std::string to_config_text(const RunConfig& cfg, bool model_keys_only = false);

}  // namespace fseg::cli
