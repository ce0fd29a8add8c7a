#include "run_config.hpp"

#include <charconv>
#include <sstream>

#include "CLI11.hpp"

namespace fseg::cli {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw CliError("invalid value for " + key + ": '" + text + "'");
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);  // shortest exact round trip
  return {buf, r.ptr};
}

template <typename T>
ConfigKey number_key(std::string name, std::string help, T RunConfig::*field, bool affects_model = true) {
  ConfigKey k;
  k.name = name;
  k.help = std::move(help);
  k.set = [name, field](RunConfig& c, const std::string& v) { c.*field = parse_number<T>(name, v); };
  if constexpr (std::is_floating_point_v<T>) {
    k.get = [field](const RunConfig& c) { return format_double(c.*field); };
  } else {
    k.get = [field](const RunConfig& c) { return std::to_string(c.*field); };
  }
  k.affects_model = affects_model;
  return k;
}

ConfigKey string_key(std::string name, std::string help, std::string RunConfig::*field,
                     bool affects_model = true) {
  ConfigKey k;
  k.name = std::move(name);
  k.help = std::move(help);
  k.set = [field](RunConfig& c, const std::string& v) { c.*field = v; };
  k.get = [field](const RunConfig& c) { return '"' + c.*field + '"'; };
  k.affects_model = affects_model;
  return k;
}

}  // namespace

Hyperparams RunConfig::hyper() const {
  Hyperparams h;
  h.eta = eta;
  h.lambda = lambda;
  h.batch = batch;
  h.phi = phi;
  h.epochs = epochs;
  h.seed = seed;
  return h;
}

SamplePlan RunConfig::plan() const {
  return SamplePlan{{target_background, target_optic_disc, target_fovea, target_vessel}};
}

PrepConfig RunConfig::prep() const {
  PrepConfig p;
  p.norm_window = norm_window;
  p.patch.fine = fine_window;
  p.patch.mid = mid_window;
  p.patch.context = context_window;
  p.context = context_source == "original" ? ContextSource::Original : ContextSource::Normalized;
  return p;
}

std::filesystem::path RunConfig::train_path() const {
  if (!train_dir.empty()) return train_dir;
  if (data.empty()) throw CliError("no training data: set data or train_dir");
  return std::filesystem::path(data) / "training";
}

std::filesystem::path RunConfig::test_path() const {
  if (!test_dir.empty()) return test_dir;
  if (data.empty()) throw CliError("no test data: set data or test_dir");
  return std::filesystem::path(data) / "test";
}

void RunConfig::validate() const {
  if (!(eta > 0.0)) throw CliError("eta must be positive");
  if (lambda < 0.0) throw CliError("lambda must be non-negative");
  if (batch < 1) throw CliError("batch must be at least 1");
  if (epochs < 0) throw CliError("epochs must be non-negative");
  if (!(slope > 0.0 && slope < 1.0)) throw CliError("slope must lie in (0, 1)");
  if (context_source != "normalized" && context_source != "original") {
    throw CliError("context_source must be 'normalized' or 'original'");
  }
  if (norm_window < 3 || norm_window % 2 == 0) throw CliError("norm_window must be odd and at least 3");
  try {
    prep().patch.validate();
  } catch (const Error& e) {
    throw CliError(e.what());
  }
  if (workers < 0) throw CliError("workers must be non-negative");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      string_key("data", "dataset root with training/ and test/", &RunConfig::data, false),
      string_key("train_dir", "training split directory", &RunConfig::train_dir, false),
      string_key("test_dir", "test split directory", &RunConfig::test_dir, false),
      number_key("eta", "learning rate", &RunConfig::eta),
      number_key("lambda", "weight-decay regularization", &RunConfig::lambda),
      number_key("batch", "mini-batch size", &RunConfig::batch),
      number_key("phi", "decay denominator (0: number of selected samples)", &RunConfig::phi),
      number_key("epochs", "training epochs", &RunConfig::epochs, false),
      number_key("seed", "seed for initialization, sampling and shuffling", &RunConfig::seed),
      number_key("target_background", "background samples", &RunConfig::target_background),
      number_key("target_optic_disc", "optic disc samples", &RunConfig::target_optic_disc),
      number_key("target_fovea", "fovea samples", &RunConfig::target_fovea),
      number_key("target_vessel", "vessel samples", &RunConfig::target_vessel),
      number_key("fine_window", "side of the upscaled local window", &RunConfig::fine_window),
      number_key("mid_window", "side of the verbatim window", &RunConfig::mid_window),
      number_key("context_window", "side of the downscaled context window", &RunConfig::context_window),
      string_key("context_source", "context plane source: normalized|original", &RunConfig::context_source),
      number_key("norm_window", "background normalization window", &RunConfig::norm_window),
      number_key("slope", "LReLU slope", &RunConfig::slope),
      number_key("workers", "worker threads (0: all cores)", &RunConfig::workers, false),
  };
  return keys;
}

const ConfigKey* find_key(const std::string& name) {
  for (const ConfigKey& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw CliError("cannot read config file " + path.string());
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(path.string());
  } catch (const CLI::Error& e) {
    throw CliError("config file " + path.string() + ": " + e.what());
  }
  for (const CLI::ConfigItem& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    const std::string name = item.fullname();
    const ConfigKey* key = find_key(name);
    if (!key) throw CliError("config file " + path.string() + ": unknown key '" + name + "'");
    // Unquoted values containing spaces arrive split; rejoin them.
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? " " : "") + item.inputs[i];
    key->set(cfg, value);
  }
}

std::string to_config_text(const RunConfig& cfg, bool model_keys_only) {
  std::ostringstream out;
  for (const ConfigKey& k : config_keys()) {
    if (model_keys_only && !k.affects_model) continue;
    out << k.name << '=' << k.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace fseg::cli
