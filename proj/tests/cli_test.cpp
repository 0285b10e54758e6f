#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "comt/cli.hpp"
#include "comt/jsonl.hpp"
#include "test_util.hpp"

namespace comt {
namespace {

using testing::TempDir;
using testing::write_file;

struct Run {
  int code;
  Json summary;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  Json j = Json::parse(out.str(), nullptr, false);
  return {code, j, err.str()};
}

// setenv for the lifetime of the guard
class EnvGuard {
 public:
  EnvGuard(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~EnvGuard() { ::unsetenv(name_); }

 private:
  const char* name_;
};

const char* kRaw =
    R"({"report_id":"r1","split":"train","image_refs":["a.png"],"report_text":"The heart size is normal. The lungs are clear.","source":"x"})"
    "\n"
    R"({"report_id":"r2","split":"test","image_refs":[],"report_text":"Small left pleural effusion.","source":"x"})"
    "\n";

TEST(Cli, IngestReportsCounts) {
  TempDir dir;
  write_file(dir / "raw.jsonl", kRaw);
  auto r = run({"ingest", "--input", (dir / "raw.jsonl").string(), "--store", (dir / "s").string(), "--source",
                "openi"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary["accepted"], 2);
  EXPECT_EQ(r.summary["rejected"], 0);
  EXPECT_EQ(r.summary["artifact_version"], std::string(kArtifactVersion));
  EXPECT_EQ(r.summary["config"]["source"]["value"], "openi");

  auto again = run({"ingest", "--input", (dir / "raw.jsonl").string(), "--store", (dir / "s").string()});
  EXPECT_EQ(again.code, 0);
  EXPECT_EQ(again.summary["accepted"], 0);
  EXPECT_EQ(again.summary["already_present"], 2);
}

TEST(Cli, UsageErrorsExitTwo) {
  auto r = run({"evaluate", "--candidates", "c.jsonl"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--references"), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"ingest", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, ValidateExitsZeroWhenOracleCheckPasses) {
  auto r = run({"validate", "--rates", "cat=0.2,crit=0.1,attr=0.1", "--seed", "7", "--reports", "40"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.summary["passed"].get<bool>());
  EXPECT_DOUBLE_EQ(r.summary["computed_corpus_medihall"].get<double>(),
                   r.summary["expected_corpus_medihall"].get<double>());
}

TEST(Cli, DiscordantValidationRefusesToScore) {
  auto r = run({"validate", "--seed", "7", "--reports", "20", "--discordant"});
  ASSERT_EQ(r.summary["mode"], "discordant");
  EXPECT_GT(r.summary["pending_sentences"].get<int>(), 0);
}

TEST(Cli, FlagBeatsEnvBeatsConfig) {
  TempDir dir;
  write_file(dir / "cfg.json", R"({"seed": 3, "humanscore": {"faith": 1, "com": 1, "flu": 1, "data": 1}})");
  {
    auto r = run({"--config", (dir / "cfg.json").string(), "humanscore"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.summary["config"]["faith"]["source"], "config");
    EXPECT_DOUBLE_EQ(r.summary["mean"].get<double>(), 1.0);
  }
  EnvGuard env("COMT_FAITH", "0");
  {
    auto r = run({"--config", (dir / "cfg.json").string(), "humanscore"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.summary["config"]["faith"]["source"], "env");
    EXPECT_DOUBLE_EQ(r.summary["mean"].get<double>(), 2.0 / 3.0);
  }
  {
    auto r = run({"--config", (dir / "cfg.json").string(), "humanscore", "--faith", "1", "--com", "0"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.summary["config"]["faith"]["source"], "flag");
    EXPECT_DOUBLE_EQ(r.summary["mean"].get<double>(), 2.0 / 3.0);
  }
}

TEST(Cli, BadEnvValueIsUsageError) {
  EnvGuard env("COMT_FAITH", "lots");
  EXPECT_EQ(run({"humanscore", "--com", "1", "--flu", "1", "--data", "1"}).code, 2);
}

TEST(Cli, HumanScoreWorkedCaseAndInvalidTally) {
  auto r = run({"humanscore", "--faith", "120", "--com", "100", "--flu", "140", "--data", "200"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.summary["mean"].get<double>(), 0.6);
  EXPECT_EQ(run({"humanscore", "--faith", "1", "--com", "1", "--flu", "1", "--data", "0"}).code, 1);
}

TEST(Cli, PipelineIsRerunnableAndByteIdentical) {
  TempDir dir;
  write_file(dir / "raw.jsonl", kRaw);
  auto pass = [&](const std::string& tag) {
    const auto store = (dir / ("s" + tag)).string();
    EXPECT_EQ(run({"ingest", "--input", (dir / "raw.jsonl").string(), "--store", store}).code, 0);
    auto d = run({"decompose", "--store", store});
    EXPECT_EQ(d.code, 0) << d.err;
    EXPECT_TRUE(d.summary["deterministic"].get<bool>());
    auto c = run({"chain", "--store", store, "--out", (dir / ("out" + tag)).string(), "--allow-unverified"});
    EXPECT_EQ(c.code, 0) << c.err;
    EXPECT_EQ(c.summary["total"], 12);
  };
  pass("a");
  pass("b");
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl"})
    EXPECT_EQ(testing::read_file(dir / "outa" / f), testing::read_file(dir / "outb" / f)) << f;
  const auto run_json = Json::parse(testing::read_file(dir / "outa" / "run.json"));
  EXPECT_EQ(run_json["config"]["allow-unverified"]["source"], "flag");
}

TEST(Cli, ChainRefusesUnreviewedRecordsByDefault) {
  TempDir dir;
  write_file(dir / "raw.jsonl", kRaw);
  const auto store = (dir / "s").string();
  run({"ingest", "--input", (dir / "raw.jsonl").string(), "--store", store});
  run({"decompose", "--store", store});
  auto c = run({"chain", "--store", store, "--out", (dir / "out").string()});
  EXPECT_EQ(c.code, 0);
  EXPECT_EQ(c.summary["total"], 0);
  EXPECT_FALSE(c.summary["warnings"].empty());
}

TEST(Cli, InjectThenEvaluate) {
  TempDir dir;
  auto i = run({"inject", "--synthetic", "10", "--seed", "5", "--out", (dir / "inj").string()});
  ASSERT_EQ(i.code, 0) << i.err;
  EXPECT_EQ(i.summary["reports"], 10);
  auto e = run({"evaluate", "--candidates", (dir / "inj" / "candidates.jsonl").string(), "--references",
                (dir / "inj" / "references.jsonl").string(), "--embedding", "hashed", "--out",
                (dir / "scores.jsonl").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.summary["reports"], 10);
  EXPECT_TRUE(e.summary["metadata"]["deterministic"].get<bool>());
  const auto records = read_jsonl(dir / "scores.jsonl");
  ASSERT_EQ(records.size(), 11u);
  EXPECT_TRUE(records.back().contains("config"));
}

TEST(Cli, AugmentWritesCorpusAndFlagsDefaultRate) {
  TempDir dir;
  write_file(dir / "raw.jsonl", kRaw);
  auto r = run({"augment", "--input", (dir / "raw.jsonl").string(), "--out", (dir / "aug.jsonl").string(), "--mode",
                "eda_swap", "--seed", "9"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.summary["augment_rate_is_default"].get<bool>());
  EXPECT_EQ(read_jsonl(dir / "aug.jsonl").size(), 2u);
  EXPECT_EQ(run({"augment", "--input", (dir / "raw.jsonl").string(), "--out", (dir / "x.jsonl").string(), "--mode",
                 "shuffle"})
                .code,
            2);
}

TEST(Cli, MedihallWithoutJudgmentsFails) {
  TempDir dir;
  write_file(dir / "raw.jsonl", kRaw);
  run({"ingest", "--input", (dir / "raw.jsonl").string(), "--store", (dir / "s").string()});
  EXPECT_EQ(run({"medihall", "--store", (dir / "s").string()}).code, 1);
}

}  // namespace
}  // namespace comt
