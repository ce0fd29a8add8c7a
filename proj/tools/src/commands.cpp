#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "fseg/dataset.hpp"
#include "fseg/model_io.hpp"
#include "fseg/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace fseg::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.fseg", epoch);
  return buf;
}

/// Independent 64-bit seed for item `index` of a seeded batch.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq)();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream s(line);
  std::string cell;
  while (std::getline(s, cell, ',')) cells.push_back(cell);
  return cells;
}

template <typename T>
T parse_cell(const std::string& text, const fs::path& file) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw LoadError("malformed value '" + text + "' in " + file.string());
  }
  return v;
}

/// Rebuilds the training state of an interrupted run from its log and checkpoints.
TrainState resume_state(const fs::path& dir, const Cnn& fresh) {
  const fs::path log_path = dir / "train_log.csv";
  TrainState state = initial_state(fresh);
  if (!fs::exists(log_path)) return state;

  std::istringstream lines(read_text(log_path));
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw LoadError("malformed row in " + log_path.string());
    EpochRecord r;
    r.epoch = parse_cell<int>(cells[0], log_path);
    r.mean_loss = parse_cell<double>(cells[1], log_path);
    r.accuracy = parse_cell<double>(cells[2], log_path);
    if (r.epoch != static_cast<int>(state.log.size()) + 1) {
      throw LoadError("non-consecutive epochs in " + log_path.string());
    }
    state.log.push_back(r);
  }
  if (state.log.empty()) return state;

  const fs::path timing_path = dir / "timing.csv";
  if (fs::exists(timing_path)) {
    std::istringstream t(read_text(timing_path));
    std::getline(t, line);
    while (std::getline(t, line)) {
      const auto cells = split_csv_line(line);
      if (cells.size() != 2) continue;
      const int epoch = parse_cell<int>(cells[0], timing_path);
      if (epoch >= 1 && epoch <= static_cast<int>(state.log.size())) {
        state.log[static_cast<std::size_t>(epoch - 1)].wall_seconds = parse_cell<double>(cells[1], timing_path);
      }
    }
  }

  for (const EpochRecord& r : state.log) {
    if (r.accuracy > state.best_accuracy) {
      state.best_accuracy = r.accuracy;
      state.best_epoch = r.epoch;
    }
  }
  state.epochs_done = state.log.back().epoch;
  state.net = load_model(dir / "checkpoints" / checkpoint_name(state.epochs_done));
  state.best = load_model(dir / "checkpoints" / checkpoint_name(state.best_epoch));
  if (!(state.net.geometry() == fresh.geometry()) || state.net.slope() != fresh.slope()) {
    throw CliError("checkpoint in " + dir.string() + " does not match the configured network");
  }
  return state;
}

FundusRecord single_record(const SegmentOptions& o) {
  FundusRecord rec;
  rec.id = record_id(o.image.stem().string());
  rec.image = read_ppm(o.image);
  if (o.mask.empty()) {
    rec.mask = Mask(rec.image.width(), rec.image.height(), true);
  } else {
    rec.mask = read_mask(o.mask);
    if (!same_size(rec.mask, rec.image)) throw ConsistencyError("mask " + o.mask.string() + " does not match image size");
  }
  return rec;
}

std::vector<fs::path> files_with_suffix(const fs::path& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) throw LoadError("missing directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      out.push_back(e.path());
    }
  }
  std::ranges::sort(out);
  return out;
}

std::string strip_suffix(const fs::path& p, const std::string& suffix) {
  const std::string name = p.filename().string();
  return name.substr(0, name.size() - suffix.size());
}

}  // namespace

void write_manifest(const fs::path& dir, const std::string& command, const std::string& config_text,
                    const std::vector<fs::path>& files) {
  const fs::path path = dir / "manifest.json";
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  if (fs::exists(path)) {
    m = nlohmann::ordered_json::parse(read_text(path), nullptr, false);
    if (m.is_discarded() || !m.is_object()) m = nlohmann::ordered_json::object();
  }
  m["command"] = command;
  m["config_crc32"] = hex32(crc32_of(reinterpret_cast<const std::uint8_t*>(config_text.data()), config_text.size()));
  auto& entries = m["files"];
  if (!entries.is_object()) entries = nlohmann::ordered_json::object();
  for (const fs::path& f : files) entries[f.generic_string()] = hex32(file_crc32(dir / f));
  write_text(path, m.dump(2) + "\n");
}

void cmd_normalize(const NormalizeOptions& o, std::ostream& log) {
  const Image rgb = read_ppm(o.in);
  Mask mask(rgb.width(), rgb.height(), true);
  if (!o.mask.empty()) {
    mask = read_mask(o.mask);
    if (!same_size(mask, rgb)) throw ConsistencyError("mask " + o.mask.string() + " does not match image size");
  }
  write_ppm(normalize_fundus(rgb, mask, o.window), o.out);
  log << "normalized " << o.in.string() << " -> " << o.out.string() << '\n';
}

TrainSummary cmd_train(const TrainOptions& o, std::ostream& log) {
  const RunConfig& cfg = o.config;
  cfg.validate();
  if (o.out.empty()) throw CliError("train: an output run directory is required");
  const std::string model_text = to_config_text(cfg, true);
  const fs::path cfg_path = o.out / "config.ini";
  if (o.resume && fs::exists(cfg_path)) {
    RunConfig stored;
    apply_config_file(stored, cfg_path);
    if (to_config_text(stored, true) != model_text) {
      throw CliError("resume: configuration differs from the run in " + o.out.string());
    }
  }
  fs::create_directories(o.out / "checkpoints");
  const std::string cfg_text = to_config_text(cfg);
  write_text(cfg_path, cfg_text);

  const auto t0 = Clock::now();
  const std::vector<FundusRecord> train = load_split(cfg.train_path());
  const std::vector<FundusRecord> test = load_split(cfg.test_path());
  if (train.empty()) throw LoadError("no training images in " + cfg.train_path().string());
  if (test.empty()) throw LoadError("no test images in " + cfg.test_path().string());

  WorkerPool pool(cfg.workers);
  const PrepConfig prep = cfg.prep();
  const SampleSource train_src = prepare_all(train, prep, pool);
  const SampleSource test_src = prepare_all(test, prep, pool);
  const ClassPools train_pools = class_pools(train);
  const ClassPools test_pools = class_pools(test);

  TrainingSetup setup;
  setup.hyper = cfg.hyper();
  setup.samples = stratified_sample(train_pools, cfg.plan(), derive_seed(cfg.seed, 1));
  setup.source = &train_src;
  setup.pool = &pool;
  setup.evaluate = [&](const Cnn& net, int) { return epoch_eval(net, test_pools, test_src, pool).accuracy(); };
  setup.on_epoch = [&](const TrainState& s) {
    const EpochRecord& r = s.log.back();
    save_model(s.net, o.out / "checkpoints" / checkpoint_name(r.epoch));
    write_text(o.out / "train_log.csv", training_log_csv(s.log));
    write_text(o.out / "timing.csv", timing_log_csv(s.log));
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %d  loss %.6f  accuracy %.4f  (%.1f s)\n", r.epoch, r.mean_loss,
                  r.accuracy, r.wall_seconds);
    log << buf << std::flush;
  };

  Cnn net(Geometry{}, cfg.slope);
  init(net, cfg.seed);
  TrainState state = o.resume ? resume_state(o.out, net) : initial_state(net);
  log << "training on " << setup.samples.size() << " samples from " << train.size() << " images, "
      << pool.size() << " worker(s)\n";
  if (state.epochs_done > 0) log << "resuming after epoch " << state.epochs_done << '\n';
  if (state.epochs_done > cfg.epochs) throw CliError("resume: run already has more epochs than requested");

  state = train_select(setup, std::move(state));
  save_model(state.best, o.out / "model.fseg");
  write_text(o.out / "train_log.csv", training_log_csv(state.log));
  write_text(o.out / "timing.csv", timing_log_csv(state.log));

  std::vector<fs::path> files{"config.ini", "model.fseg", "train_log.csv", "timing.csv"};
  for (const EpochRecord& r : state.log) files.push_back(fs::path("checkpoints") / checkpoint_name(r.epoch));
  write_manifest(o.out, "train", cfg_text, files);

  char buf[128];
  if (state.best_epoch > 0) {
    std::snprintf(buf, sizeof buf, "selected epoch %d accuracy %.4f (%.1f s total)\n", state.best_epoch,
                  state.best_accuracy, seconds_since(t0));
  } else {
    std::snprintf(buf, sizeof buf, "no epochs run; saved the initial network\n");
  }
  log << buf;
  return {state.best_epoch, state.best_accuracy, state.log};
}

SegmentSummary cmd_segment(const SegmentOptions& o, std::ostream& log) {
  const RunConfig& cfg = o.config;
  cfg.validate();
  if (o.out.empty()) throw CliError("segment: an output directory is required");
  if (o.image.empty() == o.split.empty()) throw CliError("segment: give exactly one of --image or --split");
  const Cnn net = load_model(o.model);
  const PrepConfig prep = cfg.prep();
  if (net.geometry().input != prep.patch.out || net.geometry().towers != 3) {
    throw CorruptModel(o.model.string() + ": network input does not match the patch geometry");
  }

  std::vector<FundusRecord> records;
  if (!o.image.empty()) {
    records.push_back(single_record(o));
  } else {
    records = load_split(o.split);
  }
  fs::create_directories(o.out);
  WorkerPool pool(cfg.workers);

  SegmentSummary summary;
  std::vector<fs::path> files;
  const auto t_all = Clock::now();
  for (const FundusRecord& rec : records) {
    const auto t0 = Clock::now();
    const std::size_t points = rec.mask.count();
    LabelMap labels(rec.image.width(), rec.image.height());
    if (points > 0) labels = segment(net, prepare(rec.image, rec.mask, prep), rec.mask, pool);
    const fs::path label_file = rec.id + "_labels.pgm";
    const fs::path overlay_file = rec.id + "_overlay.ppm";
    write_labels(labels, o.out / label_file);
    write_ppm(overlay(rec.image, labels), o.out / overlay_file);
    files.push_back(label_file);
    files.push_back(overlay_file);
    char buf[160];
    std::snprintf(buf, sizeof buf, "segmented %s: %zu points in %.2f s\n", rec.id.c_str(), points,
                  seconds_since(t0));
    log << buf << std::flush;
    summary.points += points;
    ++summary.images;
  }
  summary.seconds = seconds_since(t_all);
  write_manifest(o.out, "segment", to_config_text(cfg), files);
  return summary;
}

Report cmd_eval(const EvalOptions& o, std::ostream& log) {
  if (o.out.empty()) throw CliError("eval: an output directory is required");
  const std::string kLabels = "_labels.pgm";
  const std::string kMask = "_mask.pgm";
  const auto truths = files_with_suffix(o.truth, kLabels);
  const auto preds = files_with_suffix(o.pred, kLabels);
  const auto masks = files_with_suffix(o.mask, kMask);
  if (truths.empty()) throw LoadError("no truth label maps in " + o.truth.string());

  std::map<std::string, fs::path> mask_by_id;
  for (const fs::path& m : masks) mask_by_id.emplace(record_id(strip_suffix(m, kMask)), m);
  std::map<std::string, fs::path> pred_by_id;
  for (const fs::path& p : preds) pred_by_id.emplace(strip_suffix(p, kLabels), p);

  std::vector<std::pair<std::string, ConfusionMatrix>> images;
  for (const fs::path& t : truths) {
    const std::string id = strip_suffix(t, kLabels);
    const auto pred = pred_by_id.find(id);
    if (pred == pred_by_id.end()) throw LoadError("missing prediction for image " + id);
    const auto mask = mask_by_id.find(id);
    if (mask == mask_by_id.end()) throw LoadError("missing mask for image " + id);
    const LabelMap truth_map = read_labels(t);
    const LabelMap pred_map = read_labels(pred->second);
    const Mask m = read_mask(mask->second);
    if (!same_size(truth_map, pred_map) || !same_size(truth_map, m)) {
      throw ConsistencyError("image " + id + ": prediction, truth and mask sizes differ");
    }
    images.emplace_back(id, confusion(pred_map, truth_map, m));
    pred_by_id.erase(pred);
  }
  if (!pred_by_id.empty()) throw LoadError("prediction without truth for image " + pred_by_id.begin()->first);

  const Report report = per_image_report(images);
  fs::create_directories(o.out);
  const std::vector<std::pair<fs::path, std::string>> outputs = {
      {"per_image.csv", per_image_csv(report)},
      {"confusion.csv", confusion_csv(report.aggregate)},
      {"confusion_pct.csv", confusion_percent_csv(report.aggregate)},
      {"class_stats.csv", class_stats_csv(report.aggregate)},
      {"report.txt", report_text(report)},
  };
  std::vector<fs::path> files;
  for (const auto& [name, text] : outputs) {
    write_text(o.out / name, text);
    files.push_back(name);
  }
  write_manifest(o.out, "eval", "", files);
  log << report_text(report);
  return report;
}

void cmd_synth(const SynthOptions& o, std::ostream& log) {
  if (o.count < 1) throw CliError("synth: count must be at least 1");
  if (o.size < 128) throw CliError("synth: size must be at least 128");
  if (o.out.empty()) throw CliError("synth: an output directory is required");
  std::vector<fs::path> files;
  for (int i = 0; i < o.count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%02d_synth", i + 1);
    const FundusRecord rec = synth_fundus(derive_seed(o.seed, static_cast<std::uint64_t>(i)), o.size);
    for (const fs::path& f : save_record(rec, o.out, stem)) files.push_back(fs::relative(f, o.out));
  }
  std::ostringstream cfg;
  cfg << "seed=" << o.seed << "\ncount=" << o.count << "\nsize=" << o.size << '\n';
  write_manifest(o.out, "synth", cfg.str(), files);
  log << "wrote " << o.count << " synthetic record(s) to " << o.out.string() << '\n';
}

// Command line ------------------------------------------------------------------

namespace {

/// Registers every config key as --dashed-name on `sub`.
void add_config_options(CLI::App* sub, std::map<std::string, std::string>& given,
                        const std::vector<std::string>& only = {}) {
  for (const ConfigKey& k : config_keys()) {
    if (!only.empty() && std::ranges::find(only, k.name) == only.end()) continue;
    std::string flag = k.name;
    std::ranges::replace(flag, '_', '-');
    sub->add_option("--" + flag, given[k.name], k.help + " [" + k.get(RunConfig{}) + "]");
  }
}

RunConfig resolve_config(const CLI::App* sub, const std::string& config_file,
                         const std::map<std::string, std::string>& given) {
  RunConfig cfg;
  if (!config_file.empty()) apply_config_file(cfg, config_file);
  for (const auto& [name, value] : given) {
    std::string flag = name;
    std::ranges::replace(flag, '_', '-');
    const CLI::Option* opt = sub->get_option_no_throw("--" + flag);
    if (opt && opt->count() > 0) find_key(name)->set(cfg, value);
  }
  return cfg;
}

/// Errors the user can fix by changing arguments or files.
bool caused_by_input(const std::exception& e) {
  return dynamic_cast<const CliError*>(&e) || dynamic_cast<const LoadError*>(&e) ||
         dynamic_cast<const IoError*>(&e) || dynamic_cast<const CorruptModel*>(&e) ||
         dynamic_cast<const ConsistencyError*>(&e) || dynamic_cast<const InvalidInput*>(&e) ||
         dynamic_cast<const DegenerateInput*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fundus image segmentation: normalize, train, segment, evaluate, synthesize", "fseg"};
  app.require_subcommand(1);

  NormalizeOptions norm;
  auto* normalize = app.add_subcommand("normalize", "flatten background illumination of a colour image");
  normalize->add_option("--in", norm.in, "input PPM")->required();
  normalize->add_option("--out", norm.out, "output PPM")->required();
  normalize->add_option("--mask", norm.mask, "field-of-view PGM (default: whole image)");
  normalize->add_option("--window", norm.window, "normalization window");

  TrainOptions train;
  std::string train_config;
  std::map<std::string, std::string> train_given;
  auto* train_cmd = app.add_subcommand("train", "train a network and keep the best epoch");
  train_cmd->add_option("--config", train_config, "flat key=value config file");
  train_cmd->add_option("--out", train.out, "run directory")->required();
  train_cmd->add_flag("--resume", train.resume, "continue an interrupted run from its checkpoints");
  add_config_options(train_cmd, train_given);

  SegmentOptions seg;
  std::string seg_config;
  std::map<std::string, std::string> seg_given;
  auto* segment_cmd = app.add_subcommand("segment", "label every effective pixel of an image");
  segment_cmd->add_option("--config", seg_config, "config file (e.g. the run's config.ini)");
  segment_cmd->add_option("--model", seg.model, "model file")->required();
  segment_cmd->add_option("--image", seg.image, "input PPM");
  segment_cmd->add_option("--mask", seg.mask, "field-of-view PGM (default: whole image)");
  segment_cmd->add_option("--split", seg.split, "directory with images/ and mask/");
  segment_cmd->add_option("--out", seg.out, "output directory")->required();
  add_config_options(segment_cmd, seg_given,
                     {"fine_window", "mid_window", "context_window", "context_source", "norm_window", "workers"});

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "score predicted label maps against truth");
  eval_cmd->add_option("--pred", ev.pred, "directory of <id>_labels.pgm predictions")->required();
  eval_cmd->add_option("--truth", ev.truth, "directory of <id>_labels.pgm truths")->required();
  eval_cmd->add_option("--mask", ev.mask, "directory of <stem>_mask.pgm masks")->required();
  eval_cmd->add_option("--out", ev.out, "report directory")->required();

  SynthOptions syn;
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic fundus records");
  synth_cmd->add_option("--seed", syn.seed, "generator seed");
  synth_cmd->add_option("--count", syn.count, "number of records");
  synth_cmd->add_option("--size", syn.size, "image side in pixels (>= 128)");
  synth_cmd->add_option("--out", syn.out, "split directory to write")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (normalize->parsed()) {
      cmd_normalize(norm, out);
    } else if (train_cmd->parsed()) {
      train.config = resolve_config(train_cmd, train_config, train_given);
      cmd_train(train, out);
    } else if (segment_cmd->parsed()) {
      seg.config = resolve_config(segment_cmd, seg_config, seg_given);
      cmd_segment(seg, out);
    } else if (eval_cmd->parsed()) {
      cmd_eval(ev, out);
    } else if (synth_cmd->parsed()) {
      cmd_synth(syn, out);
    }
  } catch (const std::exception& e) {
    const bool usage = caused_by_input(e);
    err << (usage ? "error: " : "internal error: ") << e.what() << '\n';
    return usage ? kExitUsage : kExitInternal;
  }
  return kExitOk;
}

}  // namespace fseg::cli
