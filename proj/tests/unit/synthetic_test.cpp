#include <gtest/gtest.h>

#include "tempkg/errors.hpp"
#include "tempkg/experiment.hpp"
#include "tempkg/synthetic.hpp"

namespace tempkg {
namespace {

TEST(PlantedRule, Shape) {
  PlantedRuleConfig cfg;
  cfg.seed = 3;
  auto d = make_planted_rule(cfg);
  EXPECT_EQ(d.graph.num_entities(), 60u);
  ASSERT_EQ(d.graph.num_relations(), 3u);
  EXPECT_EQ(d.graph.entity_label(0), "e00");
  EXPECT_EQ(d.graph.time_span(), 50);
  EXPECT_FALSE(d.queries.empty());
  const RelationId r3 = d.graph.relation_id("r3");
  for (const auto& q : d.queries) {
    EXPECT_EQ(q.relation, r3);
    EXPECT_GE(q.time.begin(), cfg.timeline - cfg.query_steps);
    EXPECT_FALSE(d.graph.contains(q));
  }
}

// Every held-out conclusion has both premises one step earlier.
TEST(PlantedRule, QueriesFollowTheRule) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PlantedRuleConfig cfg;
    cfg.seed = seed;
    auto d = make_planted_rule(cfg);
    const RelationId r1 = d.graph.relation_id("r1"), r2 = d.graph.relation_id("r2");
    for (const auto& q : d.queries) {
      const TimeIndex t = q.time.begin() - 1;
      bool found = false;
      for (EntityId y = 0; y < static_cast<EntityId>(d.graph.num_entities()) && !found; ++y)
        found = d.graph.contains({q.subject, r1, y, TimeScope::point(t)}) && d.graph.contains({y, r2, q.object, TimeScope::point(t)});
      EXPECT_TRUE(found) << "seed " << seed;
    }
  }
}

TEST(PlantedRule, DistractorShare) {
  for (double share : {0.0, 0.3, 0.5}) {
    PlantedRuleConfig cfg;
    cfg.distractor_fraction = share;
    cfg.rule_probability = 1.0;
    cfg.seed = 11;
    auto d = make_planted_rule(cfg);
    // With a certain rule every step contributes two premises and one conclusion.
    const double total = static_cast<double>(d.graph.num_edges() + d.queries.size());
    const double expected_rule = 3.0 * cfg.chains_per_step * (cfg.timeline - 1);
    const double observed = 1.0 - expected_rule / total;
    // Collisions between random chains only shrink the rule part slightly.
    EXPECT_NEAR(observed, share, 0.05) << share;
  }
}

TEST(PlantedRule, Deterministic) {
  PlantedRuleConfig cfg;
  cfg.seed = 8;
  auto a = make_planted_rule(cfg), b = make_planted_rule(cfg);
  ASSERT_EQ(a.graph.num_edges(), b.graph.num_edges());
  for (std::size_t i = 0; i < a.graph.num_edges(); ++i)
    EXPECT_EQ(a.graph.edges()[i], b.graph.edges()[i]);
  EXPECT_EQ(a.queries, b.queries);
  cfg.seed = 9;
  auto c = make_planted_rule(cfg);
  EXPECT_NE(a.queries, c.queries);
}

TEST(PlantedRule, BadConfigs) {
  auto bad = [](auto edit) {
    PlantedRuleConfig cfg;
    edit(cfg);
    EXPECT_THROW(make_planted_rule(cfg), ContractViolation);
  };
  bad([](PlantedRuleConfig& c) { c.entities = 2; });
  bad([](PlantedRuleConfig& c) { c.timeline = 1; });
  bad([](PlantedRuleConfig& c) { c.chains_per_step = 0; });
  bad([](PlantedRuleConfig& c) { c.query_steps = 0; });
  bad([](PlantedRuleConfig& c) { c.query_steps = c.timeline; });
  bad([](PlantedRuleConfig& c) { c.distractor_fraction = 1.0; });
  bad([](PlantedRuleConfig& c) { c.distractor_fraction = -0.1; });
}

ExperimentConfig tiny_config() {
  auto c = desk_experiment_defaults();
  c.encoder.d_model = 8;
  c.encoder.max_positions = 96;
  c.pretrain.epochs = 2;
  c.train.epochs = 1;
  c.train.max_positives = 10;
  c.scoring.bundle.paths.walks = 8;
  c.questions.num_negatives = 5;
  return c;
}

PlantedRuleData tiny_data() {
  PlantedRuleConfig cfg;
  cfg.entities = 12;
  cfg.timeline = 8;
  cfg.chains_per_step = 1;
  cfg.query_steps = 3;
  cfg.rule_probability = 1.0;
  cfg.seed = 2;
  return make_planted_rule(cfg);
}

TEST(Experiment, WithSeedTouchesEveryStage) {
  auto a = with_seed(desk_experiment_defaults(), 1), b = with_seed(desk_experiment_defaults(), 2);
  EXPECT_NE(a.corpus.seed, b.corpus.seed);
  EXPECT_NE(a.encoder.rng_seed, b.encoder.rng_seed);
  EXPECT_NE(a.pretrain.seed, b.pretrain.seed);
  EXPECT_NE(a.train.seed, b.train.seed);
  EXPECT_NE(a.questions.seed, b.questions.seed);
}

TEST(Experiment, RunIsDeterministic) {
  auto d = tiny_data();
  auto cfg = with_seed(tiny_config(), 5);
  auto a = run_experiment(d.graph, d.queries, {}, cfg);
  auto b = run_experiment(d.graph, d.queries, {}, cfg);
  EXPECT_EQ(a.pretrain_loss.size(), 2u);
  EXPECT_EQ(a.train_loss.size(), 1u);
  EXPECT_EQ(a.pretrain_loss, b.pretrain_loss);
  EXPECT_EQ(a.metrics.mrr, b.metrics.mrr);
  EXPECT_GT(a.metrics.mrr, 0.0);
  EXPECT_LE(a.metrics.mrr, 1.0);
}

TEST(Experiment, MaskingCurveRows) {
  auto d = tiny_data();
  const std::uint64_t seeds[] = {1, 2};
  auto rows = masking_curve(d.graph, d.queries, {}, tiny_config(), seeds);
  ASSERT_EQ(rows.size(), 2u * 2u * 3u);
  EXPECT_EQ(rows.front().variant, "time");
  EXPECT_EQ(rows.back().variant, "random");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].epoch, static_cast<int>(i % 3));
    EXPECT_EQ(rows[i].seed, seeds[(i / 3) % 2]);
  }
  // Epoch-0 snapshots are the same untrained encoder for both modes.
  EXPECT_EQ(rows[0].mrr, rows[6].mrr);
  EXPECT_THROW(masking_curve(d.graph, d.queries, {}, tiny_config(), {}), ContractViolation);
}

}  // namespace
}  // namespace tempkg
