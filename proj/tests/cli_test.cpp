#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advkit/checkpoint.hpp"
#include "advkit/cli.hpp"
#include "advkit/dataset.hpp"
#include "advkit/io.hpp"
#include "advkit/patch.hpp"
#include "test_support.hpp"

namespace advkit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::ScratchDir;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::vector<std::string> files_in(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::exists(dir)) return names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

std::size_t count_lines(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

// A small 16x16 digits corpus and a one-epoch victim, built through the CLI.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::ostringstream out, err;
    const std::vector<std::string> args{"--count", "360", "--size", "16", "--seed", "5",
                                        "--out-dir", (dir_ / "data").string()};
    ASSERT_EQ(cli::run_digits(args, out, err), cli::kExitOk) << err.str();
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::vector<std::string> test_data() const {
    return {"--images", path("data/test-images.idx"), "--labels", path("data/test-labels.idx"),
            "--classes", path("data/classes.txt")};
  }

  std::vector<std::string> train_data() const {
    return {"--images", path("data/train-images.idx"), "--labels", path("data/train-labels.idx"),
            "--classes", path("data/classes.txt")};
  }

  const std::string& checkpoint() {
    if (checkpoint_.empty()) {
      std::vector<std::string> args{"train", "--epochs", "2", "--out-dir", path("model")};
      const auto data = train_data();
      args.insert(args.end(), data.begin(), data.end());
      const Outcome o = cli(args);
      EXPECT_EQ(o.code, cli::kExitOk) << o.err;
      checkpoint_ = path("model/model.ckpt");
    }
    return checkpoint_;
  }

  // `sub` over the test split with the trained checkpoint, plus extra flags.
  Outcome attack(const std::string& sub, const std::string& out_dir, std::vector<std::string> extra) {
    std::vector<std::string> args{sub, "--checkpoint", checkpoint(), "--out-dir", path(out_dir)};
    const auto data = test_data();
    args.insert(args.end(), data.begin(), data.end());
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  }

  ScratchDir dir_{"cli"};
  std::string checkpoint_;
};

TEST(ParseEps, RangeIncludesStopAndSnapsToGrid) {
  const auto eps = cli::parse_eps("0.01:0.10:0.01");
  ASSERT_EQ(eps.size(), 10u);
  EXPECT_EQ(eps.front(), 0.01);
  EXPECT_EQ(eps[5], 0.06);
  EXPECT_EQ(eps.back(), 0.1);
  EXPECT_EQ(cli::parse_eps("0:0.3:0.1").size(), 4u);
  EXPECT_EQ(cli::parse_eps("0.5:0.5:0.1"), std::vector<double>{0.5});
}

TEST(ParseEps, CommaListKeepsOrder) {
  EXPECT_EQ(cli::parse_eps("0.3, 0.1,0"), (std::vector<double>{0.3, 0.1, 0.0}));
  EXPECT_EQ(cli::parse_eps("0.25"), std::vector<double>{0.25});
}

TEST(ParseEps, MalformedInputRaises) {
  for (const char* text : {"", "a", "0.1,", "0:1", "0:1:0", "0:1:-0.1", "1:0:0.1", "0:1:0.1:2", "nan", "0x"}) {
    const auto r = testing::raised([&] { cli::parse_eps(text); });
    EXPECT_TRUE(r.thrown) << text;
    EXPECT_EQ(r.code, Errc::invalid_argument) << text;
  }
}

TEST_F(CliTest, MissingOrUnknownSubcommandPrintsUsage) {
  for (const auto& args : {std::vector<std::string>{}, std::vector<std::string>{"bogus"}}) {
    const Outcome o = cli(args);
    EXPECT_EQ(o.code, cli::kExitInvalid);
    EXPECT_NE(o.err.find("Usage:"), std::string::npos);
    EXPECT_NE(o.err.find("patch-train"), std::string::npos);
  }
}

TEST_F(CliTest, UnknownFlagIsRejectedWithoutOutputs) {
  std::vector<std::string> args{"eval", "--checkpoint", checkpoint(), "--out-dir", path("e"), "--frobnicate", "1"};
  const auto data = test_data();
  args.insert(args.end(), data.begin(), data.end());
  const Outcome o = cli(args);
  EXPECT_EQ(o.code, cli::kExitInvalid);
  EXPECT_NE(o.err.find("--frobnicate"), std::string::npos);
  EXPECT_NE(o.err.find("Usage:"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("e")));
}

TEST_F(CliTest, HelpAndVersionExitZero) {
  Outcome o = cli({"--help"});
  EXPECT_EQ(o.code, cli::kExitOk);
  EXPECT_NE(o.out.find("sweep"), std::string::npos);
  o = cli({"sweep", "--help"});
  EXPECT_EQ(o.code, cli::kExitOk);
  EXPECT_NE(o.out.find("--eps"), std::string::npos);
  o = cli({"--version"});
  EXPECT_EQ(o.code, cli::kExitOk);
  EXPECT_EQ(o.out, "0.1.0\n");
}

TEST_F(CliTest, MissingRequiredSettingsExitOne) {
  EXPECT_EQ(cli({"sweep", "--checkpoint", checkpoint()}).code, cli::kExitInvalid);  // no --out-dir
  EXPECT_EQ(attack("sweep", "s", {}).code, cli::kExitInvalid);                         // no --eps
  EXPECT_EQ(attack("fgsm", "f", {"--eps", "0.1,0.2"}).code, cli::kExitInvalid);        // two epsilons
  EXPECT_EQ(attack("sweep", "s", {"--eps", "0.2,0.1"}).code, cli::kExitInvalid);       // descending
  EXPECT_EQ(attack("sweep", "s", {"--eps", "0.5:1.5:0.5"}).code, cli::kExitInvalid);   // above 1
  EXPECT_EQ(attack("eval", "e", {"--format", "csv,pdf"}).code, cli::kExitInvalid);
  EXPECT_EQ(attack("eval", "e", {"--show", "100000"}).code, cli::kExitInvalid);
  EXPECT_EQ(attack("patch-train", "p", {"--sizes", "4", "--target", "10"}).code, cli::kExitInvalid);
  EXPECT_EQ(attack("patch-train", "p", {"--sizes", "17"}).code, cli::kExitInvalid);
  EXPECT_EQ(attack("patch-train", "p", {"--sizes", "4", "--placement", "corner"}).code, cli::kExitInvalid);
  EXPECT_EQ(cli({"train", "--images", path("nope.idx"), "--labels", path("nope.idx"), "--out-dir", path("m2")}).code,
            cli::kExitInvalid);
  for (const char* d : {"e", "s", "f", "p", "m2"}) EXPECT_FALSE(fs::exists(path(d))) << d;
}

TEST_F(CliTest, ConfigFileIsValidatedAgainstTheSubcommand) {
  write_file_atomic(path("unknown.json"), R"({"eps": [0.1], "epochs": 3})");
  write_file_atomic(path("wrongtype.json"), R"({"eps": "x"})");
  write_file_atomic(path("notjson.json"), "{eps");
  write_file_atomic(path("othermanifest.json"), R"({"subcommand": "eval", "config": {}})");
  for (const char* name : {"unknown.json", "wrongtype.json", "notjson.json", "othermanifest.json"}) {
    const Outcome o = attack("sweep", "s", {"--config", path(name)});
    EXPECT_EQ(o.code, cli::kExitInvalid) << name;
    EXPECT_FALSE(o.err.empty()) << name;
  }
  EXPECT_FALSE(fs::exists(path("s")));
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  write_file_atomic(path("cfg.json"), R"({"eps": [0.0, 0.1, 0.2], "formats": ["json"]})");
  const Outcome o = attack("sweep", "s", {"--config", path("cfg.json"), "--eps", "0.05"});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_EQ(files_in(path("s")), (std::vector<std::string>{"manifest.json", "sweep.json"}));
  const json manifest = json::parse(read_file(path("s/manifest.json")));
  EXPECT_EQ(manifest["config"]["eps"], json::array({0.05}));
}

TEST_F(CliTest, SweepAtZeroEqualsCleanEval) {
  ASSERT_EQ(attack("eval", "e", {"--format", "json"}).code, cli::kExitOk);
  ASSERT_EQ(attack("sweep", "s", {"--eps", "0.0", "--format", "json"}).code, cli::kExitOk);
  const json clean = json::parse(read_file(path("e/eval.json")));
  const json sweep = json::parse(read_file(path("s/sweep.json")));
  const json row = sweep["rows"][0];
  EXPECT_EQ(row["top1_error"], clean["top1_error"]);
  EXPECT_EQ(row["top5_error"], clean["top5_error"]);
}

TEST_F(CliTest, RangeSweepHasOneRowPerEpsilon) {
  ASSERT_EQ(attack("sweep", "s", {"--eps", "0.01:0.10:0.01"}).code, cli::kExitOk);
  const std::string csv = read_file(path("s/sweep.csv"));
  EXPECT_EQ(count_lines(csv), 11u);
  EXPECT_NE(csv.find("\n0.06,"), std::string::npos);
  EXPECT_NE(csv.find("\n0.1,"), std::string::npos);
}

TEST_F(CliTest, ManifestRerunReproducesOutputsAcrossThreadCounts) {
  ASSERT_EQ(attack("sweep", "s1", {"--eps", "0:0.2:0.1", "--format", "csv,json,svg", "--threads", "1"}).code,
            cli::kExitOk);
  const Outcome o = cli({"sweep", "--config", path("s1/manifest.json"), "--out-dir", path("s2"), "--threads", "3"});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  const auto names = files_in(path("s1"));
  ASSERT_EQ(names, files_in(path("s2")));
  for (const auto& n : names) EXPECT_EQ(read_file(path("s1/" + n)), read_file(path("s2/" + n))) << n;
}

TEST_F(CliTest, ManifestRecordsDigestsSeedsAndVersion) {
  checkpoint();
  const json m = json::parse(read_file(path("model/manifest.json")));
  EXPECT_EQ(m["subcommand"], "train");
  EXPECT_EQ(m["version"], "0.1.0");
  EXPECT_EQ(m["seeds"]["train"], 1);
  EXPECT_EQ(m["config"]["epochs"], 2);
  EXPECT_FALSE(m["config"].contains("out_dir"));
  EXPECT_FALSE(m["config"].contains("threads"));
  EXPECT_EQ(m["input_digests"][path("data/train-images.idx")], sha256_file(path("data/train-images.idx")));
}

TEST_F(CliTest, TrainWritesLoadableCheckpointAndHistory) {
  const Model model = load_checkpoint(checkpoint());
  EXPECT_EQ(model.num_classes(), 10u);
  EXPECT_EQ(model.class_names().front(), "0");
  const std::string history = read_file(path("model/history.csv"));
  EXPECT_EQ(count_lines(history), 3u);
}

TEST_F(CliTest, FgsmOutputsStayInsideTheEpsilonBall) {
  ASSERT_EQ(attack("fgsm", "f", {"--eps", "0.1", "--show", "0,2"}).code, cli::kExitOk);
  const Dataset clean = load_idx(path("data/test-images.idx"), path("data/test-labels.idx"),
                                 load_class_names(path("data/classes.txt")));
  const Dataset adv = load_idx(path("f/adv-images.idx"), path("f/adv-labels.idx"),
                               load_class_names(path("f/classes.txt")));
  ASSERT_EQ(adv.size(), clean.size());
  EXPECT_EQ(adv.labels(), clean.labels());
  double worst = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i)
    for (std::size_t j = 0; j < adv.image(i).numel(); ++j)
      worst = std::max(worst, std::abs(double(adv.image(i).data()[j]) - clean.image(i).data()[j]));
  // IDX stores bytes, so both sides are quantised to 1/255.
  EXPECT_LE(worst, 0.1 + 1.0 / 255 + 1e-6);
  EXPECT_GT(worst, 0.05);
  const std::string conf = read_file(path("f/confidence.csv"));
  EXPECT_NE(conf.find("\n0-adv,"), std::string::npos);
  EXPECT_NE(conf.find("\n2-adv,"), std::string::npos);
}

TEST_F(CliTest, PatchTrainThenEvaluate) {
  std::vector<std::string> args{"patch-train", "--checkpoint", checkpoint(), "--sizes", "4,6", "--target", "3",
                                "--steps", "20", "--name", "p", "--out-dir", path("p")};
  const auto data = train_data();
  args.insert(args.end(), data.begin(), data.end());
  ASSERT_EQ(cli(args).code, cli::kExitOk);
  const Patch p6 = load_patch(path("p/p-6.patch"));
  EXPECT_EQ(p6.size(), 6u);
  EXPECT_EQ(p6.target_class, 3);
  EXPECT_EQ(count_lines(read_file(path("p/p-4-objective.csv"))), 21u);
  EXPECT_TRUE(fs::exists(path("p/p-4.png")));

  ASSERT_EQ(attack("patch-eval", "pe", {"--patch", path("p/p-4.patch"), "--patch", path("p/p-6.patch"),
                                        "--exclude-target", "--format", "csv"})
                .code,
            cli::kExitOk);
  const std::string csv = read_file(path("pe/patch_report.csv"));
  EXPECT_EQ(count_lines(csv), 3u);
  EXPECT_NE(csv.find("\np-4,4,"), std::string::npos);
  EXPECT_NE(csv.find("\np-6,6,"), std::string::npos);
}

TEST_F(CliTest, ReportRerendersJsonByteIdentically) {
  ASSERT_EQ(attack("eval", "e", {"--show", "1", "--format", "json"}).code, cli::kExitOk);
  const Outcome o = cli({"report", "--input", path("e/confidence.json"), "--format", "json,svg", "--out-dir",
                         path("r")});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_EQ(read_file(path("r/confidence.json")), read_file(path("e/confidence.json")));
  EXPECT_NE(read_file(path("r/confidence.svg")).find("<svg"), std::string::npos);
}

TEST_F(CliTest, CorruptCheckpointExitsTwoWithoutOutputs) {
  const Outcome o = cli({"eval", "--checkpoint", path("data/classes.txt"), "--images", path("data/test-images.idx"),
                         "--labels", path("data/test-labels.idx"), "--out-dir", path("e")});
  EXPECT_EQ(o.code, cli::kExitFailed);
  EXPECT_NE(o.err.find("bad_magic"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("e")));
}

TEST_F(CliTest, FailureMidRunRemovesPartialOutputs) {
  // A directory squatting on eval.json makes the second write fail after
  // eval.csv has already been written.
  fs::create_directories(path("e/eval.json"));
  write_file_atomic(path("e/keep.txt"), "mine");
  const Outcome o = attack("eval", "e", {"--format", "csv,json"});
  EXPECT_EQ(o.code, cli::kExitFailed);
  EXPECT_FALSE(fs::exists(path("e/eval.csv")));
  EXPECT_FALSE(fs::exists(path("e/manifest.json")));
  EXPECT_TRUE(fs::exists(path("e/keep.txt")));
}

TEST_F(CliTest, DigitsGeneratorIsDeterministic) {
  std::ostringstream out, err;
  const std::vector<std::string> args{"--count", "360", "--size", "16", "--seed", "5", "--out-dir", path("again")};
  ASSERT_EQ(cli::run_digits(args, out, err), cli::kExitOk);
  for (const char* f : {"train-images.idx", "train-labels.idx", "test-images.idx", "test-labels.idx", "classes.txt"})
    EXPECT_EQ(read_file(path(std::string("again/") + f)), read_file(path(std::string("data/") + f))) << f;
  EXPECT_EQ(cli::run_digits(std::vector<std::string>{"--out-dir", path("x"), "--test-fraction", "1"}, out, err),
            cli::kExitInvalid);
  EXPECT_EQ(cli::run_digits(std::vector<std::string>{"--count", "10"}, out, err), cli::kExitInvalid);
}

}  // namespace
}  // namespace advkit
