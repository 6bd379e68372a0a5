#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "determinism.hpp"
#include "fixtures.hpp"
#include "ream/experiments.hpp"

using namespace ream;
namespace t = ream::testing;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "ream");
  args.push_back("--quiet");
  return cli::run(args);
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli::run(std::vector<std::string>{"ream"}), 1);
  EXPECT_EQ(cli::run(std::vector<std::string>{"ream", "bogus"}), 1);
  EXPECT_EQ(cli::run(std::vector<std::string>{"ream", "--help"}), 0);
  EXPECT_EQ(run({"synth", "--queries", "x", "--out", "/tmp/x"}), 1);
  EXPECT_EQ(run({"train", "--corpus", "/nonexistent.jsonl", "--out", "/tmp/x"}), 1);
}

TEST(Cli, EmbedMetricNeedsProvider) {
  t::TempDir dir;
  ASSERT_EQ(run({"synth", "--queries", "2", "--out", (dir / "c.jsonl").string()}), 0);
  EXPECT_EQ(run({"label", "--corpus", (dir / "c.jsonl").string(), "--metric", "embed", "--out",
                 (dir / "l.jsonl").string()}),
            1);
  EXPECT_EQ(run({"label", "--corpus", (dir / "c.jsonl").string(), "--metric", "embed",
                 "--provider", "hash", "--dim", "16", "--ks", "2", "--per-k", "1", "--out",
                 (dir / "l.jsonl").string()}),
            0);
  EXPECT_EQ(metrics::load_score_report(dir / "l.jsonl").size(), 2u);
}

TEST(Cli, RuntimeFailureExitsTwo) {
  t::TempDir dir;
  ASSERT_EQ(run({"synth", "--queries", "2", "--out", (dir / "c.jsonl").string()}), 0);
  // remote encoder that is not listening
  EXPECT_EQ(run({"train", "--corpus", (dir / "c.jsonl").string(), "--provider", "remote",
                 "--endpoint", "http://127.0.0.1:1/embed", "--timeout-ms", "200", "--dim", "8",
                 "--epochs", "1", "--out", (dir / "m.ckpt").string()}),
            2);
}

TEST(Cli, PipelineIsDeterministic) {
  t::TempDir dir;
  const auto a = t::run_pipeline(dir / "a", "7");
  const auto b = t::run_pipeline(dir / "b", "7");
  const auto c = t::run_pipeline(dir / "c", "7", "3");
  ASSERT_FALSE(a.empty());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].second, b[i].second) << a[i].first;
    EXPECT_EQ(a[i].second, c[i].second) << a[i].first << " with --jobs 3";
  }
  const auto d = t::run_pipeline(dir / "d", "8");
  EXPECT_NE(a[0].second, d[0].second);
}

TEST(Cli, TrainWritesSidecarAndHistory) {
  t::TempDir dir;
  const auto files = t::run_pipeline(dir.path(), "1");
  ASSERT_FALSE(files.empty());
  const auto meta = nlohmann::json::parse(t::read_file(dir / "m.ckpt.json"));
  EXPECT_EQ(meta["metric"], "bleu-star");
  EXPECT_EQ(meta["provider"].get<std::string>().rfind("hash:d=16", 0), 0u);
  EXPECT_EQ(meta["train_config"]["epochs"], 3);
  const auto hist = nlohmann::json::parse(t::read_file(dir / "m.ckpt.history.json"));
  EXPECT_EQ(hist["history"].size(), 3u);
  const auto ann = nlohmann::json::parse(t::read_file(dir / "a.json"));
  EXPECT_EQ(ann["results"].size(), 12u);
}

TEST(Cli, EvalScoreAndExperiments) {
  t::TempDir dir;
  ASSERT_FALSE(t::run_pipeline(dir.path(), "2").empty());
  const auto ckpt = (dir / "m.ckpt").string(), corpus = (dir / "c.jsonl").string();
  EXPECT_EQ(run({"eval", "--model", ckpt, "--corpus", corpus, "--buckets", "2,4", "--out",
                 (dir / "e.json").string()}),
            0);
  const auto e = nlohmann::json::parse(t::read_file(dir / "e.json"));
  EXPECT_EQ(e["buckets"].size(), 2u);
  EXPECT_EQ(run({"score", "--model", ckpt, "--query", "q", "--ref", "a", "--ref", "b", "--out",
                 (dir / "s.json").string()}),
            0);
  EXPECT_EQ(run({"score", "--model", ckpt, "--query", "q", "--provider", "hash", "--dim", "8",
                 "--ref", "a"}),
            1);  // dimension mismatch
  EXPECT_EQ(run({"compare", "--model", ckpt, "--corpus", corpus, "--metrics", "bleu-star",
                 "--target", "4", "--shared-prefix", "2", "--out", (dir / "cmp").string()}),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir / "cmp" / "compare.svg"));
  EXPECT_FALSE(experiments::read_curves_csv(dir / "cmp" / "compare.csv").empty());
  EXPECT_EQ(run({"assume", "--corpus", corpus, "--metrics", "bleu-star", "--max-refs", "3",
                 "--out", (dir / "as").string()}),
            0);
  EXPECT_EQ(run({"retrieve", "--corpus", corpus, "--query", "anything", "--top-k", "3", "--out",
                 (dir / "r.json").string()}),
            0);
  EXPECT_EQ(nlohmann::json::parse(t::read_file(dir / "r.json")).size(), 3u);
}
