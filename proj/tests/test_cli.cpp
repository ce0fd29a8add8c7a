#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "fixtures.hpp"
#include "fseg/dataset.hpp"
#include "fseg/model_io.hpp"
#include "json.hpp"

using namespace fseg;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result fseg_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::vector<std::string> tiny_train_args(const fs::path& data, const fs::path& out, int workers) {
  return {"train",
          "--out", out.string(),
          "--data", data.string(),
          "--epochs", "2",
          "--target-background", "40",
          "--target-optic-disc", "20",
          "--target-fovea", "20",
          "--target-vessel", "20",
          "--seed", "5",
          "--workers", std::to_string(workers)};
}

/// Two training and one test record at 128 px, generated once per process.
const fs::path& tiny_dataset() {
  static const fs::path root = [] {
    const fs::path dir = fixture::temp_dir("cli_data");
    EXPECT_EQ(fseg_cli({"synth", "--seed", "1", "--count", "2", "--size", "128", "--out", (dir / "training").string()}).code, 0);
    EXPECT_EQ(fseg_cli({"synth", "--seed", "2", "--count", "1", "--size", "128", "--out", (dir / "test").string()}).code, 0);
    return dir;
  }();
  return root;
}

}  // namespace

TEST(CliNormalize, KeepsDimensionsAndFlattens) {
  const auto dir = fixture::temp_dir("cli_norm");
  const Image img = fixture::vignetted(96, 44.0);
  const Mask mask = fixture::disc_mask(96, 96, 44.0);
  write_ppm(img, dir / "in.ppm");
  write_mask(mask, dir / "mask.pgm");
  const Result r = fseg_cli({"normalize", "--in", (dir / "in.ppm").string(), "--out", (dir / "out.ppm").string(),
                             "--mask", (dir / "mask.pgm").string(), "--window", "31"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Image out = read_ppm(dir / "out.ppm");
  EXPECT_EQ(out.width(), 96);
  EXPECT_EQ(out.height(), 96);
  EXPECT_LT(fixture::masked_l_std(out, mask), fixture::masked_l_std(read_ppm(dir / "in.ppm"), mask));

  EXPECT_EQ(fseg_cli({"normalize", "--in", (dir / "in.ppm").string(), "--out", (dir / "whole.ppm").string()}).code, 0);
  EXPECT_EQ(read_ppm(dir / "whole.ppm").width(), 96);
}

TEST(CliNormalize, UnreadableInputIsUsageError) {
  const auto dir = fixture::temp_dir("cli_norm_bad");
  const Result r = fseg_cli({"normalize", "--in", (dir / "nope.ppm").string(), "--out", (dir / "o.ppm").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.ppm"), std::string::npos) << r.err;
}

TEST(CliSynth, WritesNineRastersReproducibly) {
  const auto a = fixture::temp_dir("cli_synth_a"), b = fixture::temp_dir("cli_synth_b");
  ASSERT_EQ(fseg_cli({"synth", "--seed", "4", "--count", "3", "--size", "128", "--out", a.string()}).code, 0);
  ASSERT_EQ(fseg_cli({"synth", "--seed", "4", "--count", "3", "--size", "128", "--out", b.string()}).code, 0);
  std::vector<fs::path> rasters;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") rasters.push_back(fs::relative(e.path(), a));
  EXPECT_EQ(rasters.size(), 9u);
  for (const fs::path& p : rasters) EXPECT_EQ(slurp(a / p), slurp(b / p)) << p;
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));

  const auto recs = load_split(a);
  ASSERT_EQ(recs.size(), 3u);
  for (const auto& rec : recs)
    for (std::uint8_t id : rec.truth->ids()) ASSERT_LE(id, 3);

  const nlohmann::json manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(manifest["command"], "synth");
  EXPECT_EQ(manifest["files"].size(), 9u);
  char crc[16];
  std::snprintf(crc, sizeof crc, "%08x", file_crc32(a / "images" / "01_synth.ppm"));
  EXPECT_EQ(manifest["files"]["images/01_synth.ppm"], crc);
}

TEST(CliTrain, TinyRunIsDeterministic) {
  const fs::path& data = tiny_dataset();
  const auto run_a = fixture::temp_dir("cli_train_a"), run_b = fixture::temp_dir("cli_train_b");
  const Result a = fseg_cli(tiny_train_args(data, run_a, 1));
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("selected epoch"), std::string::npos) << a.out;
  const Cnn net = load_model(run_a / "model.fseg");
  EXPECT_EQ(net.param_count(), 125079u);

  const std::string log = slurp(run_a / "train_log.csv");
  EXPECT_EQ(count_lines(log), 1u + 2u);
  EXPECT_TRUE(fs::exists(run_a / "checkpoints" / "epoch_001.fseg"));
  EXPECT_TRUE(fs::exists(run_a / "checkpoints" / "epoch_002.fseg"));
  EXPECT_TRUE(fs::exists(run_a / "config.ini"));
  EXPECT_TRUE(fs::exists(run_a / "manifest.json"));

  const Result b = fseg_cli(tiny_train_args(data, run_b, 2));
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(run_a / "model.fseg"), slurp(run_b / "model.fseg"));
  EXPECT_EQ(slurp(run_a / "train_log.csv"), log);
  EXPECT_EQ(slurp(run_b / "train_log.csv"), log);
}

TEST(CliTrain, ResumeMatchesUninterruptedRun) {
  const fs::path& data = tiny_dataset();
  const auto full = fixture::temp_dir("cli_resume_full"), split = fixture::temp_dir("cli_resume_split");
  ASSERT_EQ(fseg_cli(tiny_train_args(data, full, 1)).code, 0);

  auto first = tiny_train_args(data, split, 1);
  first[std::find(first.begin(), first.end(), "--epochs") - first.begin() + 1] = "1";
  ASSERT_EQ(fseg_cli(first).code, 0);
  auto rest = tiny_train_args(data, split, 1);
  rest.push_back("--resume");
  const Result r = fseg_cli(rest);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resuming after epoch 1"), std::string::npos);
  EXPECT_EQ(slurp(full / "model.fseg"), slurp(split / "model.fseg"));
  EXPECT_EQ(slurp(full / "train_log.csv"), slurp(split / "train_log.csv"));

  auto changed = rest;
  changed.push_back("--eta");
  changed.push_back("0.02");
  EXPECT_EQ(fseg_cli(changed).code, 2);
}

TEST(CliTrain, ConfigFileAndOverrides) {
  const fs::path& data = tiny_dataset();
  const auto dir = fixture::temp_dir("cli_config");
  {
    std::ofstream cfg(dir / "run.ini");
    cfg << "# tiny run\nepochs = 1\ntarget_background = 12\ntarget_optic_disc = 12\n"
        << "target_fovea = 12\ntarget_vessel=12\nworkers = 1\ndata = \"" << data.string() << "\"\n";
  }
  const Result r = fseg_cli({"train", "--config", (dir / "run.ini").string(), "--out", (dir / "run").string(),
                             "--epochs", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(slurp(dir / "run" / "train_log.csv")), 3u);
  const std::string stored = slurp(dir / "run" / "config.ini");
  EXPECT_NE(stored.find("target_vessel=12"), std::string::npos) << stored;
  EXPECT_NE(stored.find("epochs=2"), std::string::npos) << stored;

  {
    std::ofstream bad(dir / "bad.ini");
    bad << "no_such_key = 3\n";
  }
  EXPECT_EQ(fseg_cli({"train", "--config", (dir / "bad.ini").string(), "--out", (dir / "x").string()}).code, 2);
}

TEST(CliTrain, MissingDatasetIsUsageError) {
  const auto dir = fixture::temp_dir("cli_train_missing");
  const Result r = fseg_cli({"train", "--out", (dir / "run").string(), "--data", (dir / "none").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(CliSegment, SmallFullMaskAndEmptyMask) {
  const auto dir = fixture::temp_dir("cli_segment");
  Cnn net;
  init(net, 3);
  save_model(net, dir / "m.fseg");
  const FundusRecord rec = synth_fundus(6, 128);
  Image small(64, 64, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) small.at(x, y, c) = rec.image.at(x + 32, y + 32, c);
  write_ppm(small, dir / "07_small.ppm");
  write_mask(Mask(64, 64, true), dir / "full.pgm");
  write_mask(Mask(64, 64, false), dir / "empty.pgm");

  Result r = fseg_cli({"segment", "--model", (dir / "m.fseg").string(), "--image", (dir / "07_small.ppm").string(),
                       "--mask", (dir / "full.pgm").string(), "--out", (dir / "full").string(), "--workers", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const LabelMap labels = read_labels(dir / "full" / "07_labels.pgm");
  EXPECT_EQ(labels.width(), 64);
  EXPECT_EQ(labels.height(), 64);
  for (std::uint8_t id : labels.ids()) ASSERT_LE(id, 3);
  EXPECT_EQ(read_ppm(dir / "full" / "07_overlay.ppm").width(), 64);

  r = fseg_cli({"segment", "--model", (dir / "m.fseg").string(), "--image", (dir / "07_small.ppm").string(),
                "--mask", (dir / "empty.pgm").string(), "--out", (dir / "empty").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_labels(dir / "empty" / "07_labels.pgm"), LabelMap(64, 64));
  EXPECT_EQ(slurp(dir / "empty" / "07_overlay.ppm"), slurp(dir / "07_small.ppm"));
}

TEST(CliSegment, BadModelIsUsageError) {
  const auto dir = fixture::temp_dir("cli_segment_bad");
  write_ppm(Image(100, 100, 3, 0.5), dir / "01_x.ppm");
  {
    std::ofstream out(dir / "bad.fseg", std::ios::binary);
    out << "FSEGnot a model";
  }
  EXPECT_EQ(fseg_cli({"segment", "--model", (dir / "bad.fseg").string(), "--image", (dir / "01_x.ppm").string(),
                      "--out", (dir / "o").string()})
                .code,
            2);
  EXPECT_EQ(fseg_cli({"segment", "--model", (dir / "bad.fseg").string(), "--out", (dir / "o").string()}).code, 2);
}

TEST(CliEval, PerfectPredictionAndMissingFile) {
  const fs::path& data = tiny_dataset();
  const fs::path truth = data / "training" / "labels";
  const fs::path masks = data / "training" / "mask";
  const auto dir = fixture::temp_dir("cli_eval");
  Result r = fseg_cli({"eval", "--pred", truth.string(), "--truth", truth.string(), "--mask", masks.string(), "--out",
                       (dir / "perfect").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string per_image = slurp(dir / "perfect" / "per_image.csv");
  std::istringstream rows(per_image);
  std::string row;
  std::getline(rows, row);
  std::vector<std::string> ids;
  while (std::getline(rows, row)) {
    ids.push_back(row.substr(0, row.find(',')));
    EXPECT_EQ(row.substr(row.rfind(',') + 1), "100.00") << row;
  }
  EXPECT_EQ(ids, (std::vector<std::string>{"01", "02", "all"}));
  const std::string stats = slurp(dir / "perfect" / "class_stats.csv");
  EXPECT_NE(stats.find("optic_disc,1.0000,1.0000,1.0000"), std::string::npos) << stats;
  for (const char* f : {"confusion.csv", "confusion_pct.csv", "report.txt", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / "perfect" / f)) << f;

  fs::create_directories(dir / "partial");
  fs::copy_file(truth / "01_labels.pgm", dir / "partial" / "01_labels.pgm");
  r = fseg_cli({"eval", "--pred", (dir / "partial").string(), "--truth", truth.string(), "--mask", masks.string(),
                "--out", (dir / "out2").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing prediction for image 02"), std::string::npos) << r.err;
}

TEST(CliEval, DriveConfusionFixture) {
  // A 1-row-per-class label image is enough to carry any confusion matrix;
  // here the reference counts are scaled down by 1000 to stay small.
  const auto dir = fixture::temp_dir("cli_eval_fixture");
  for (const char* sub : {"pred", "truth", "mask"}) fs::create_directories(dir / sub);
  const std::uint64_t counts[4][4] = {{3642, 18, 36, 119}, {8, 69, 0, 2}, {7, 0, 59, 1}, {125, 15, 2, 436}};
  std::uint64_t total = 0;
  for (const auto& row : counts)
    for (auto v : row) total += v;
  LabelMap pred(static_cast<int>(total), 1), truth(static_cast<int>(total), 1);
  int x = 0;
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p)
      for (std::uint64_t i = 0; i < counts[t][p]; ++i, ++x) {
        truth.set(x, 0, static_cast<Label>(t));
        pred.set(x, 0, static_cast<Label>(p));
      }
  write_labels(pred, dir / "pred" / "01_labels.pgm");
  write_labels(truth, dir / "truth" / "01_labels.pgm");
  write_mask(Mask(static_cast<int>(total), 1, true), dir / "mask" / "01_test_mask.pgm");
  const Result r = fseg_cli({"eval", "--pred", (dir / "pred").string(), "--truth", (dir / "truth").string(), "--mask",
                             (dir / "mask").string(), "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string confusion = slurp(dir / "out" / "confusion.csv");
  EXPECT_NE(confusion.find("background,3642,18,36,119,3815"), std::string::npos) << confusion;
  EXPECT_NE(r.out.find("Per-class statistics"), std::string::npos);
}

TEST(CliExitCodes, UsageAndHelp) {
  EXPECT_EQ(fseg_cli({}).code, 2);
  EXPECT_EQ(fseg_cli({"bogus"}).code, 2);
  EXPECT_EQ(fseg_cli({"synth"}).code, 2);  // --out is required
  EXPECT_EQ(fseg_cli({"train", "--out", "x", "--eta", "abc"}).code, 2);
  const Result help = fseg_cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("segment"), std::string::npos);
  const Result train_help = fseg_cli({"train", "--help"});
  EXPECT_EQ(train_help.code, 0);
  EXPECT_NE(train_help.out.find("--target-optic-disc"), std::string::npos);
  EXPECT_EQ(fseg_cli({"synth", "--out", fixture::temp_dir("cli_exit").string(), "--size", "64"}).code, 2);
}
