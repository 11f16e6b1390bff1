// Drives the xvqa binary: exit codes, config precedence and rerun determinism.

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "xvqa_cli_test";

struct Result {
  int code;
  std::string err;
};

Result run(const std::string& args, const fs::path& root = kWork / "runs") {
  const fs::path err = kWork / "stderr.txt";
  const std::string cmd = "XVQA_OUTPUT_ROOT='" + root.string() + "' '" XVQA_CLI "' " + args + " > /dev/null 2> '" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  std::ifstream in(err);
  std::stringstream s;
  s << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_file(const std::string& name, const std::string& body) {
  const fs::path p = kWork / name;
  std::ofstream(p) << body;
  return p;
}

const char* kSmall = R"({"data": {"train_size": 400, "val_size": 100},
  "word_predictor": {"epochs": 2}, "caption_generator": {"epochs": 1},
  "reasoner": {"epochs_high": 2, "epochs_low": 1}})";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    write_file("small.json", kSmall);
  }
  static std::string small() { return "--config '" + (kWork / "small.json").string() + "'"; }
};

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("--mode phrase gen-data").code, 2);
  const auto r = run("--caption-source other gen-data");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: usage: ", 0), 0u);
}

TEST_F(Cli, MissingFilesExitThree) {
  const auto r = run("--config /nonexistent/cfg.json gen-data");
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(r.err.rfind("error: missing-file: ", 0), 0u);
  EXPECT_EQ(run(small() + " evaluate --model /nonexistent.ckpt").code, 3);
}

TEST_F(Cli, ConfigErrorsExitFour) {
  EXPECT_EQ(run("--bins 0,0.5,0.4,1 gen-data").code, 4);
  EXPECT_EQ(run("--bins 0,x,1 gen-data").code, 4);
  EXPECT_EQ(run("--relevance-threshold 1.5 gen-data").code, 4);
  EXPECT_EQ(run("--set data.yes_bias=2 gen-data").code, 4);
  EXPECT_EQ(run("--config '" + write_file("unknown.json", R"({"data": {"trian_size": 5}})").string() + "' gen-data").code, 4);
  const auto r = run("--config '" + write_file("type.json", R"({"seed": "one"})").string() + "' gen-data");
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u);
  // One line, machine-parsable.
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST_F(Cli, DataErrorsExitSix) {
  const auto garbage = write_file("garbage.ckpt", "not a checkpoint");
  EXPECT_EQ(run(small() + " evaluate --model '" + garbage.string() + "'").code, 6);
  EXPECT_EQ(run("--config '" + write_file("bad.json", "{ not json").string() + "' gen-data").code, 4);
}

TEST_F(Cli, PrecedenceDefaultsFileFlags) {
  const auto cfg = write_file("prec.json", R"({"seed": 5, "data": {"train_size": 300, "val_size": 50},
    "analysis": {"relevance_threshold": 0.3, "bins": [0, 0.5, 1]}})");
  ASSERT_EQ(run("--config '" + cfg.string() + "' --seed 7 --bins 0,0.25,0.75,1 --out prec gen-data").code, 0);
  const auto j = nlohmann::json::parse(slurp(kWork / "runs/prec/config.json"));
  EXPECT_EQ(j["seed"], 7);                                  // flag over file
  EXPECT_EQ(j["data"]["train_size"], 300);                  // file over default
  EXPECT_DOUBLE_EQ(j["analysis"]["relevance_threshold"], 0.3);
  EXPECT_EQ(j["analysis"]["bins"], nlohmann::json({0, 0.25, 0.75, 1}));
  EXPECT_DOUBLE_EQ(j["data"]["yes_bias"], 0.7);             // default
}

TEST_F(Cli, AbsoluteOutIgnoresRoot) {
  const fs::path abs = kWork / "absolute-out";
  ASSERT_EQ(run(small() + " --out '" + abs.string() + "' build-vocab").code, 0);
  EXPECT_TRUE(fs::exists(abs / "config.json"));
  EXPECT_TRUE(fs::exists(abs / "vocab.txt"));
}

TEST_F(Cli, GradcheckPasses) {
  EXPECT_EQ(run("gradcheck --seeds 1").code, 0);
}

TEST_F(Cli, RerunFromEchoedConfigIsByteIdentical) {
  ASSERT_EQ(run(small() + " --mode sentence --out d dissect", kWork / "a").code, 0);
  ASSERT_EQ(run("--config '" + (kWork / "a/d/config.json").string() + "' dissect", kWork / "b").code, 0);
  for (const auto& e : fs::directory_iterator(kWork / "a/d")) {
    const auto other = kWork / "b/d" / e.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path().filename();
  }
}

TEST_F(Cli, ReportWithoutRunsIsMissing) {
  EXPECT_EQ(run("report", kWork / "empty-root").code, 3);
}

}  // namespace
