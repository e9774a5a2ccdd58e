#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = BANDIT_OPE_CLI;
const fs::path kConfigs = fs::path(BANDIT_OPE_SOURCE_DIR) / "configs";

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const fs::path out = fs::temp_directory_path() / ("bope_cli_" + std::to_string(::getpid()) + ".out");
  const std::string cmd = "\"" + kCli + "\" " + args + " > \"" + out.string() + "\" 2>/dev/null";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  fs::remove(out);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("bope_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

}  // namespace

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("evaluate --bogus-flag").code, 1);
  EXPECT_EQ(run("evaluate --events x").code, 1);  // --policy missing
  EXPECT_EQ(run("--format xml diagnose --world w").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(CliTest, DataErrorsExitTwo) {
  EXPECT_EQ(run("evaluate --events " + path("missing.jsonl") + " --policy " + path("p.json")).code, 2);
  std::ofstream(path("bad.jsonl")) << "{\"x\":{},\"a\":0,\"r\":1,\"p\":0}\n";
  std::ofstream(path("p.json")) << "{\"type\":\"uniform\",\"k\":2}\n";
  EXPECT_EQ(run("evaluate --events " + path("bad.jsonl") + " --policy " + path("p.json")).code, 2);
  std::ofstream(path("broken.json")) << "{\"task\": ";
  EXPECT_EQ(run("experiment --config " + path("broken.json")).code, 2);
}

TEST_F(CliTest, ConvertTrainEvaluate) {
  ASSERT_EQ(run("convert --synthetic 400 --k 4 --seed 3 --output " + path("e.jsonl") + " --dataset-out " +
                path("d.svm"))
                .code,
            0);
  ASSERT_EQ(run("train --input " + path("d.svm") + " --k 4 --output " + path("p.json")).code, 0);
  ASSERT_EQ(run("train --events " + path("e.jsonl") + " --k 4 --output " + path("r.json")).code, 0);
  const auto r = run("evaluate --evaluator drns --q 0.05 --cmax 1.0 --events " + path("e.jsonl") + " --policy " +
                     path("p.json") + " --rhat " + path("r.json") + " --seed 7");
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_TRUE(j.contains("estimate"));
  EXPECT_TRUE(j.contains("accepted_count"));
  EXPECT_TRUE(j.contains("T"));
  EXPECT_EQ(j["events_used"].get<int>(), 400);
  // Same seed, same answer.
  const auto again = run("evaluate --evaluator drns --q 0.05 --cmax 1.0 --events " + path("e.jsonl") + " --policy " +
                         path("p.json") + " --rhat " + path("r.json") + " --seed 7");
  EXPECT_EQ(again.out, r.out);
  for (const std::string ev : {"dm", "ips", "dr", "rs", "wc"}) {
    const auto o = run("evaluate --evaluator " + ev + " --events " + path("e.jsonl") + " --policy " + path("p.json") +
                       " --rhat " + path("r.json"));
    EXPECT_EQ(o.code, 0) << ev;
    EXPECT_TRUE(json::parse(o.out).contains("estimate")) << ev;
  }
}

TEST_F(CliTest, ConvertFromSvmlight) {
  std::ofstream(path("in.svm")) << "0,2 1:0.5 7:1.0\n1 2:1\n 3:1\n";
  ASSERT_EQ(run("convert --input " + path("in.svm") + " --k 4 --seed 1 --output " + path("out.jsonl")).code, 0);
  std::ifstream in(path("out.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    EXPECT_GT(j["p"].get<double>(), 0.0);
    ++n;
  }
  EXPECT_EQ(n, 2);  // the unlabeled line is dropped
}

TEST_F(CliTest, DiagnoseLemmas) {
  const auto r = run("diagnose --world " + (kConfigs / "w1.json").string() + " --check lemmas");
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_TRUE(j["lemmas"]["passed"].get<bool>());
  const auto t = run("diagnose --world " + (kConfigs / "w1.json").string() + " --check lemmas --format table");
  EXPECT_NE(t.out.find("passed  true"), std::string::npos);
}

TEST_F(CliTest, GroundTruthOnWorld) {
  const auto r = run("ground-truth --world " + (kConfigs / "w1.json").string() + " --policy " +
                     (kConfigs / "w1_policy.json").string() + " --horizon 2");
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j["stationary_value"].get<double>(), 0.6 * 0.675 + 0.4 * 0.3, 1e-12);  // empty history: pi = (0.75, 0.25)
}

TEST_F(CliTest, ExperimentWritesBothForms) {
  const json cfg = {{"task", "static"},
                    {"trials", 3},
                    {"dataset", {{"synthetic", {{"size", 800}}}}},
                    {"learner", {{"iterations", 100}}},
                    {"bootstrap_resamples", 100},
                    {"evaluators", {{{"type", "dm"}}, {{"type", "rs"}}, {{"type", "drns"}, {"q", 0.05}}}}};
  std::ofstream(path("c.json")) << cfg.dump();
  const auto r = run("experiment --config " + path("c.json") + " --output " + path("report.json"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("| rmse "), std::string::npos);
  std::ifstream in(path("report.json"));
  const auto j = json::parse(in);
  EXPECT_EQ(j["evaluators"].size(), 3u);
  EXPECT_EQ(j["trials"].get<int>(), 3);
  const auto table = run("--format table experiment --config " + path("c.json"));
  EXPECT_NE(table.out.find("ground truth loss"), std::string::npos);
}
