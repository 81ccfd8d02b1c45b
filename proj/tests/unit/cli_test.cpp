#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "tempkg/errors.hpp"
#include "tempkg/synthetic.hpp"

namespace tempkg::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ("tempkg-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    unsetenv("TEMPKG_SEED");

    PlantedRuleConfig pc;
    pc.entities = 12;
    pc.timeline = 8;
    pc.chains_per_step = 1;
    pc.query_steps = 3;
    pc.rule_probability = 1.0;
    pc.seed = 2;
    auto d = make_planted_rule(pc);
    std::ostringstream g;
    write_tkg(g, d.graph);
    spit(graph(), g.str());
    std::string q;
    for (const auto& e : d.queries)
      q += d.graph.entity_label(e.subject) + "\t" + d.graph.relation_label(e.relation) + "\t" +
           d.graph.entity_label(e.object) + "\t" + d.graph.time_axis().label(e.time.begin()) + "\n";
    spit(queries(), q);
    spit(config(),
         "# tiny\nencoder.d_model = 8\nencoder.max_positions = 96\npretrain.epochs = 1\n"
         "train.epochs = 1\ntrain.max_positives = 10\nscoring.walks = 8\ncorpus.walks = 8\n");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string graph() const { return (dir_ / "graph.tsv").string(); }
  std::string queries() const { return (dir_ / "queries.tsv").string(); }
  std::string config() const { return (dir_ / "tiny.conf").string(); }
  std::string out(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST(RunConfig, ParsesCommentsAndWhitespace) {
  auto kv = parse_config_text("# header\n  seed = 7  # trailing\n\ntrain.lr=0.01\n");
  EXPECT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("seed"), "7");
  EXPECT_EQ(kv.at("train.lr"), "0.01");
}

TEST(RunConfig, RejectsUnknownKeysAndMalformedLines) {
  EXPECT_THROW(parse_config_text("nope = 1\n"), UsageError);
  EXPECT_THROW(parse_config_text("seed 7\n"), UsageError);
  EXPECT_THROW(resolve_config({{{"seed", "x"}}}), UsageError);
  EXPECT_THROW(resolve_config({{{"pretrain.mask_mode", "bert"}}}), UsageError);
  EXPECT_THROW(resolve_config({{{"scoring.use_t2v", "maybe"}}}), UsageError);
}

TEST(RunConfig, LaterLayersWin) {
  auto c = resolve_config({{{"seed", "1"}, {"train.epochs", "4"}}, {{"seed", "9"}}});
  EXPECT_EQ(c.experiment.seed, 9u);
  EXPECT_EQ(c.experiment.train.epochs, 4);
  EXPECT_EQ(c.values.at("seed"), "9");
  EXPECT_TRUE(c.explicit_keys.contains("train.epochs"));
  EXPECT_FALSE(c.explicit_keys.contains("train.lr"));
  EXPECT_EQ(c.values.size(), known_keys().size());
}

TEST(RunConfig, DefaultsAreTheDeskDefaultsUnderSeedZero) {
  auto c = resolve_config({});
  auto d = with_seed(desk_experiment_defaults(), 0);
  EXPECT_EQ(c.experiment.encoder.d_model, d.encoder.d_model);
  EXPECT_EQ(c.experiment.train.seed, d.train.seed);
  EXPECT_EQ(c.experiment.pretrain.seed, d.pretrain.seed);
}

TEST(RunConfig, BundleSwitchesReachTheCorpus) {
  auto c = resolve_config({{{"scoring.use_paths", "false"}, {"scoring.use_history", "no"}}});
  EXPECT_FALSE(c.experiment.scoring.bundle.use_paths);
  EXPECT_FALSE(c.experiment.corpus.bundle.use_paths);
  EXPECT_FALSE(c.experiment.corpus.bundle.use_history);
  auto s = resolve_config({{{"scoring.max_sentences", "5"}}});
  EXPECT_EQ(s.experiment.train.max_sentences, 5);
}

TEST(RunConfig, PositiveRelationsResolvePerGraph) {
  auto c = resolve_config({{{"train.positive_relations", "r3,r1"}}});
  ASSERT_EQ(c.positive_relations.size(), 2u);
  PlantedRuleConfig pc;
  pc.seed = 1;
  auto d = make_planted_rule(pc);
  auto ids = resolve_relations(d.graph, c.positive_relations);
  EXPECT_EQ(d.graph.relation_label(ids[0]), "r3");
  EXPECT_THROW(resolve_relations(d.graph, {"r9"}), LookupError);
}

TEST(Cli, HelpAndUsageCodes) {
  EXPECT_EQ(invoke({"--help"}).code, kExitOk);
  EXPECT_EQ(invoke({"validate", "--help"}).code, kExitOk);
  EXPECT_EQ(invoke({}).code, kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(invoke({"validate", "--format", "weekly"}).code, kExitUsage);
}

TEST_F(CliRun, MissingInputsAreUsageOrDataErrors) {
  EXPECT_EQ(invoke({"validate", "--out", out("a")}).code, kExitUsage);
  EXPECT_EQ(invoke({"validate", "--data", out("absent.tsv"), "--out", out("b")}).code, kExitData);
  EXPECT_EQ(invoke({"validate", "--data", graph(), "--set", "nope=1", "--out", out("c")}).code, kExitUsage);
  EXPECT_EQ(invoke({"validate", "--data", graph(), "--set", "seed", "--out", out("d")}).code, kExitUsage);
  spit(out("bad.tsv"), "a\tb\n");
  auto r = invoke({"validate", "--data", out("bad.tsv"), "--out", out("e")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliRun, ValidateWritesStatsAndManifest) {
  auto r = invoke({"validate", "--data", graph(), "--out", out("v")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  auto stats = nlohmann::json::parse(slurp(out("v/stats.json")));
  EXPECT_EQ(stats["entities"], 12);
  EXPECT_EQ(stats["relations"], 3);
  auto m = nlohmann::json::parse(slurp(out("v/manifest.json")));
  EXPECT_EQ(m["command"], "validate");
  EXPECT_EQ(m["outputs"][0], "stats.json");
  const std::string hash = m["inputs"][graph()];
  EXPECT_EQ(hash.size(), 64u);
  EXPECT_EQ(hash.find_first_not_of("0123456789abcdef"), std::string::npos);
  ASSERT_EQ(invoke({"validate", "--data", graph(), "--out", out("v2")}).code, kExitOk);
  EXPECT_EQ(slurp(out("v/manifest.json")), slurp(out("v2/manifest.json")));
}

TEST_F(CliRun, SeedPrecedence) {
  setenv("TEMPKG_SEED", "11", 1);
  ASSERT_EQ(invoke({"validate", "--data", graph(), "--out", out("env")}).code, kExitOk);
  EXPECT_EQ(nlohmann::json::parse(slurp(out("env/manifest.json")))["seed"], 11);
  spit(out("seed.conf"), "seed = 12\n");
  ASSERT_EQ(invoke({"validate", "--data", graph(), "--config", out("seed.conf"), "--out", out("file")}).code, kExitOk);
  EXPECT_EQ(nlohmann::json::parse(slurp(out("file/manifest.json")))["seed"], 12);
  ASSERT_EQ(invoke({"validate", "--data", graph(), "--config", out("seed.conf"), "--seed", "13", "--out",
                    out("flag")})
                .code,
            kExitOk);
  EXPECT_EQ(nlohmann::json::parse(slurp(out("flag/manifest.json")))["seed"], 13);
  unsetenv("TEMPKG_SEED");
}

TEST_F(CliRun, PipelineIsReproducible) {
  auto pipeline = [&](const std::string& tag) {
    auto o = [&](const char* s) { return out(tag + "/" + s); };
    auto step = [&](std::vector<std::string> args) {
      auto r = invoke(args);
      ASSERT_EQ(r.code, kExitOk) << args[0] << ": " << r.err;
    };
    step({"corpus", "--data", graph(), "--config", config(), "--out", o("corpus")});
    step({"pretrain", "--data", graph(), "--config", config(), "--corpus", o("corpus") + "/corpus.jsonl", "--out",
          o("pre")});
    step({"train", "--data", graph(), "--config", config(), "--checkpoint", o("pre") + "/encoder.ckpt", "--set",
          "train.positive_relations=r3", "--out", o("train")});
    step({"eval", "--data", graph(), "--queries", queries(), "--config", config(), "--checkpoint",
          o("train") + "/model.ckpt", "--out", o("eval")});
    step({"explain", "--data", graph(), "--queries", queries(), "--config", config(), "--checkpoint",
          o("train") + "/model.ckpt", "--query", "0", "--out", o("explain")});
  };
  pipeline("a");
  pipeline("b");
  if (HasFatalFailure()) return;
  for (const char* f : {"corpus/corpus.jsonl", "pre/encoder.ckpt", "pre/pretrain-loss.csv", "train/model.ckpt",
                        "eval/metrics.json", "eval/per-query.csv", "explain/explanations.jsonl"})
    EXPECT_EQ(slurp(out(std::string("a/") + f)), slurp(out(std::string("b/") + f))) << f;

  auto metrics = nlohmann::json::parse(slurp(out("a/eval/metrics.json")));
  EXPECT_GT(metrics["mrr"].get<double>(), 0.0);
  EXPECT_LE(metrics["mrr"].get<double>(), 1.0);
  EXPECT_EQ(metrics["candidates"], "validation50");
  auto lines = slurp(out("a/explain/explanations.jsonl"));
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 1);
  EXPECT_EQ(nlohmann::json::parse(lines.substr(0, lines.find('\n')))["query_id"], 0);
}

TEST_F(CliRun, QueriesWithUnknownLabelsAreDataErrors) {
  ASSERT_EQ(invoke({"pretrain", "--data", graph(), "--config", config(), "--out", out("pre")}).code, kExitOk);
  spit(out("q.tsv"), "zz\tr3\te01\t2000-01-05\n");
  auto r = invoke({"eval", "--data", graph(), "--queries", out("q.tsv"), "--config", config(), "--checkpoint",
                   out("pre/encoder.ckpt"), "--out", out("eval")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("zz"), std::string::npos);
}

TEST_F(CliRun, ExplainRejectsOutOfRangeQuery) {
  ASSERT_EQ(invoke({"pretrain", "--data", graph(), "--config", config(), "--out", out("pre")}).code, kExitOk);
  auto r = invoke({"explain", "--data", graph(), "--queries", queries(), "--config", config(), "--checkpoint",
                   out("pre/encoder.ckpt"), "--query", "999", "--out", out("x")});
  EXPECT_EQ(r.code, kExitUsage);
}

}  // namespace
}  // namespace tempkg::cli
