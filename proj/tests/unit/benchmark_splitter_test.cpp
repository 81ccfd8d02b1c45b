#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "graphs.hpp"
#include "json.hpp"
#include "tempkg/benchmark_splitter.hpp"
#include "tempkg/errors.hpp"

namespace tempkg {
namespace {

using testing::point_graph;
using testing::random_graph;

std::set<std::string> entity_set(const Tkg& g) {
  std::set<std::string> out;
  for (const auto& q : g.edges()) {
    out.insert(g.entity_label(q.subject));
    out.insert(g.entity_label(q.object));
  }
  return out;
}

std::string dump(const Tkg& g) {
  std::ostringstream out;
  write_tkg(out, g);
  return out.str();
}

Tkg two_components() {
  return point_graph({{"A", "r", "B", 0},
                      {"B", "q", "C", 1},
                      {"C", "r", "A", 2},
                      {"X", "r", "Y", 0},
                      {"Y", "q", "Z", 1},
                      {"Z", "r", "X", 2}},
                     3);
}

TEST(SampleSplit, DisconnectedComponentsSeparate) {
  Tkg g = two_components();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto split = sample_split(g, {1, 10, 4, seed});
    auto train = entity_set(split.ind_train);
    auto test = entity_set(split.ind_test);
    const std::set<std::string> first{"A", "B", "C"}, second{"X", "Y", "Z"};
    EXPECT_TRUE((train == first && test == second) || (train == second && test == first));
    EXPECT_EQ(split.report.train_links, 3u);
    EXPECT_EQ(split.report.test_links, 3u);
  }
}

TEST(SampleSplit, ExhaustionIsASamplingError) {
  Tkg g = point_graph({{"A", "r", "B", 0}, {"B", "r", "C", 0}, {"C", "r", "A", 0}}, 1);
  EXPECT_THROW(sample_split(g, {3, 20, 10, 1}), SamplingError);
}

TEST(SampleSplit, RejectsBadInputs) {
  EXPECT_THROW(sample_split(Tkg{}, {1, 1, 1, 0}), ContractViolation);
  EXPECT_THROW(sample_split(two_components(), {0, 1, 1, 0}), ContractViolation);
}

TEST(SampleSplit, DisjointAndContainedOnRandomGraphs) {
  int produced = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    Tkg g = random_graph(rng, 400, 6, 900, 30);
    try {
      auto split = sample_split(g, {4, 4, 3, seed});
      ++produced;
      auto report = validate_split(split);
      EXPECT_EQ(report.entity_overlap, 0u);
      EXPECT_TRUE(report.relation_containment);

      // Every output edge existed in the source, and the two edge sets are disjoint.
      std::set<std::tuple<std::string, std::string, std::string, TimeIndex>> train_edges;
      for (const auto& q : split.ind_train.edges()) {
        Quadruple src{g.entity_id(split.ind_train.entity_label(q.subject)),
                      g.relation_id(split.ind_train.relation_label(q.relation)),
                      g.entity_id(split.ind_train.entity_label(q.object)), q.time};
        EXPECT_TRUE(g.contains(src));
        train_edges.insert({split.ind_train.entity_label(q.subject), split.ind_train.relation_label(q.relation),
                            split.ind_train.entity_label(q.object), q.time.begin()});
      }
      for (const auto& q : split.ind_test.edges()) {
        EXPECT_FALSE(train_edges.contains({split.ind_test.entity_label(q.subject),
                                           split.ind_test.relation_label(q.relation),
                                           split.ind_test.entity_label(q.object), q.time.begin()}));
      }
      EXPECT_EQ(split.ind_train.time_axis(), g.time_axis());
      EXPECT_EQ(split.ind_test.time_axis(), g.time_axis());
    } catch (const SamplingError&) {
    }
  }
  EXPECT_GT(produced, 20);
}

TEST(SampleSplit, SameSeedSameOutput) {
  Rng rng(9);
  Tkg g = random_graph(rng, 300, 5, 700, 20);
  auto a = sample_split(g, {5, 4, 3, 42});
  auto b = sample_split(g, {5, 4, 3, 42});
  EXPECT_EQ(dump(a.ind_train), dump(b.ind_train));
  EXPECT_EQ(dump(a.ind_test), dump(b.ind_test));
  EXPECT_EQ(split_report_json(a.report), split_report_json(b.report));
}

TEST(SampleSplit, LongerWalksSeeMoreEntities) {
  Rng rng(2);
  Tkg g = random_graph(rng, 2000, 8, 4000, 30);
  std::size_t prev = 0;
  for (const auto& preset : split_presets(7)) {
    auto split = sample_split(g, preset.params);
    EXPECT_GE(split.report.train_entities, prev) << preset.name;
    prev = split.report.train_entities;
  }
}

TEST(ValidateSplit, SharedEntityCounted) {
  SplitPair pair{point_graph({{"A", "r", "E", 0}}, 1), point_graph({{"E", "r", "Z", 0}}, 1), {}};
  auto r = validate_split(pair);
  EXPECT_EQ(r.entity_overlap, 1u);
  EXPECT_TRUE(r.relation_containment);
}

TEST(ValidateSplit, NovelRelationBreaksContainment) {
  SplitPair pair{point_graph({{"A", "r", "B", 0}}, 1), point_graph({{"X", "novel", "Y", 0}}, 1), {}};
  auto r = validate_split(pair);
  EXPECT_EQ(r.entity_overlap, 0u);
  EXPECT_FALSE(r.relation_containment);
}

TEST(SplitPresets, FourNamedPresets) {
  auto presets = split_presets(3);
  ASSERT_EQ(presets.size(), 4u);
  EXPECT_EQ(presets[0].name, "v1");
  EXPECT_EQ(presets[3].name, "v4");
  for (std::size_t i = 1; i < presets.size(); ++i)
    EXPECT_GT(presets[i].params.walk_length, presets[i - 1].params.walk_length);
  EXPECT_EQ(split_preset("v2", 3).walk_length, presets[1].params.walk_length);
  EXPECT_THROW(split_preset("v9", 3), ValidationError);
}

TEST(SplitReportJson, Fields) {
  auto split = sample_split(two_components(), {1, 10, 4, 5});
  auto j = nlohmann::json::parse(split_report_json(split.report));
  for (const char* key : {"entity_overlap", "relation_containment", "train_entities", "test_entities", "train_links",
                          "test_links", "seed", "params"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["seed"], 5);
}

}  // namespace
}  // namespace tempkg
