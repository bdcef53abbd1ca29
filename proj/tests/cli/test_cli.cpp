#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("scorelens_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) {
    const std::string cmd = "cd '" + dir_.string() + "' && '" SCORELENS_CLI "' " + args + " >out.txt 2>err.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string err() const { return slurp(dir_ / "err.txt"); }
  std::string out() const { return slurp(dir_ / "out.txt"); }

  void synth(int n = 1500) { ASSERT_EQ(run("synth --out syn --seed 4 --n-responses " + std::to_string(n)), 0) << err(); }

  static std::string inputs() {
    return "--records syn/records.jsonl --resp-emb syn/response_embeddings.jsonl --prob-emb syn/problem_embeddings.jsonl";
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("evaluate --bogus"), 1);
  EXPECT_EQ(run("evaluate --variants nonsense " + inputs() + " --out x"), 1);
  EXPECT_EQ(run("disagreements --case-format xml " + inputs() + " --out x"), 1);
}

TEST_F(Cli, DataErrorsExitTwo) {
  EXPECT_EQ(run("ingest --records missing.jsonl --out x"), 2);
  EXPECT_NE(err().find("missing.jsonl"), std::string::npos) << err();
  std::ofstream(dir_ / "bad.jsonl") << R"({"response_id":"a"})" << "\n";
  EXPECT_EQ(run("ingest --records bad.jsonl --out x"), 2);
  EXPECT_NE(err().find("student_id"), std::string::npos) << err();
  std::ofstream(dir_ / "cfg.json") << "{not json";
  EXPECT_EQ(run("evaluate --config cfg.json"), 2);
}

TEST_F(Cli, SynthWritesCorpus) {
  synth(300);
  for (const char* f : {"records.jsonl", "response_embeddings.jsonl", "problem_embeddings.jsonl", "ground_truth.json",
                        "runconfig.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "syn" / f)) << f;
  }
  EXPECT_NE(out().find("300 records"), std::string::npos) << out();
}

TEST_F(Cli, IngestFiltersAndReports) {
  synth(300);
  ASSERT_EQ(run("ingest --records syn/records.jsonl --out ing --min-words 50"), 0) << err();
  const auto report = json::parse(slurp(dir_ / "ing" / "filter_report.json"));
  EXPECT_EQ(report["input"], 300);
  EXPECT_EQ(report["stages"][2]["name"], "min_words");
  EXPECT_EQ(report["stages"][2]["kept"], 0);
  EXPECT_TRUE(slurp(dir_ / "ing" / "records.jsonl").empty());
}

TEST_F(Cli, EvaluateWritesReports) {
  synth();
  ASSERT_EQ(run("evaluate " + inputs() + " --out ev --bootstrap 100"), 0) << err();
  const auto report = json::parse(slurp(dir_ / "ev" / "report.json"));
  ASSERT_TRUE(report.is_array()) << report.dump();
  EXPECT_EQ(report.size(), 9u);
  const auto md = slurp(dir_ / "ev" / "report.md");
  EXPECT_EQ(md.rfind("| Model | MSE [95% CI] | AUC [95% CI] |", 0), 0u) << md;
  EXPECT_FALSE(fs::exists(dir_ / "ev" / "failures.json"));
}

TEST_F(Cli, RunConfigReproducesRun) {
  synth();
  ASSERT_EQ(run("evaluate " + inputs() + " --out a --bootstrap 0 --variants teacher_only,response_only --seed 11"), 0)
      << err();
  const auto cfg = json::parse(slurp(dir_ / "a" / "runconfig.json"));
  EXPECT_EQ(cfg["command"], "evaluate");
  EXPECT_EQ(cfg["seed"], 11);
  EXPECT_EQ(cfg["pipeline"]["bootstrap_B"], 0);
  EXPECT_EQ(cfg["pipeline"]["variants"], (json{"teacher_only", "response_only"}));

  ASSERT_EQ(run("evaluate --config a/runconfig.json --out b"), 0) << err();
  EXPECT_EQ(slurp(dir_ / "a" / "report.json"), slurp(dir_ / "b" / "report.json"));
  auto replay = json::parse(slurp(dir_ / "b" / "runconfig.json"));
  replay["paths"]["out"] = "a";
  EXPECT_EQ(replay, cfg);

  // Explicit flags override the file.
  ASSERT_EQ(run("--config a/runconfig.json evaluate --out c --seed 12"), 0) << err();
  EXPECT_EQ(json::parse(slurp(dir_ / "c" / "runconfig.json"))["seed"], 12);
}

TEST_F(Cli, FeaturizeAndTrain) {
  synth();
  ASSERT_EQ(run("featurize " + inputs() + " --out ft --variant teacher_only"), 0) << err();
  EXPECT_TRUE(fs::exists(dir_ / "ft" / "features_teacher_only_train.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "ft" / "features_teacher_only_test.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "ft" / "priors.csv"));
  ASSERT_EQ(run("train " + inputs() + " --out tr --variant teacher_only"), 0) << err();
  const auto model = json::parse(slurp(dir_ / "tr" / "model_teacher_only.json"));
  EXPECT_EQ(model["columns"].size(), 1u);
}

TEST_F(Cli, AuditAndDisagreements) {
  synth();
  ASSERT_EQ(run("audit " + inputs() + " --out au --bootstrap 0"), 0) << err();
  const auto audit = json::parse(slurp(dir_ / "au" / "audit.json"));
  EXPECT_TRUE(audit.contains("nonzero_unadjusted")) << audit.dump();
  EXPECT_TRUE(fs::exists(dir_ / "au" / "audit.md"));

  ASSERT_EQ(run("disagreements " + inputs() + " --out dg --bootstrap 0 --sample 40 --case-format jsonl"), 0) << err();
  const auto counts = json::parse(slurp(dir_ / "dg" / "pattern_counts.json"));
  EXPECT_EQ(counts["sample_size"], 40);
  std::size_t lines = 0;
  std::istringstream sample(slurp(dir_ / "dg" / "coding_sample.jsonl"));
  for (std::string line; std::getline(sample, line);) {
    const auto j = json::parse(line);
    EXPECT_NE(j["pattern"], "0-0-0");
    EXPECT_NE(j["pattern"], "1-1-1");
    ++lines;
  }
  EXPECT_EQ(lines, 40u);
}
