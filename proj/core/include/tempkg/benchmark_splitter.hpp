#pragma once

// Fully-inductive (ind-train, ind-test) benchmark generation with disjoint
// entity sets.

#include <cstdint>
#include <string>
#include <vector>

#include "tempkg/kg_store.hpp"

namespace tempkg {

struct SplitParams {
  int num_roots = 10;
  int walks_per_root = 10;
  /// Longer walks expand the seen-entity set faster.
  int walk_length = 5;
  std::uint64_t rng_seed = 0;
};

struct SplitReport {
  std::size_t entity_overlap = 0;
  bool relation_containment = true;
  std::size_t train_entities = 0;
  std::size_t test_entities = 0;
  std::size_t train_links = 0;
  std::size_t test_links = 0;
  /// train_entities / test_entities (0 when the test side is empty).
  double seen_unseen_ratio = 0.0;
  /// Test links dropped because their relation never occurs in ind-train.
  std::size_t dropped_test_links = 0;
  SplitParams params;
};

struct SplitPair {
  Tkg ind_train;
  Tkg ind_test;
  SplitReport report;
};

/// Throws SamplingError when either side comes out empty.
SplitPair sample_split(const Tkg& tkg, const SplitParams& params);

/// Recomputes the report from the two graphs (entities and relations are
/// compared by label since each side is indexed independently).
SplitReport validate_split(const SplitPair& split);

/// Named parameter presets, "v1".."v4", ordered by walk length.
struct SplitPreset {
  std::string name;
  SplitParams params;
};
std::vector<SplitPreset> split_presets(std::uint64_t seed);
SplitParams split_preset(const std::string& name, std::uint64_t seed);

std::string split_report_json(const SplitReport& report);

}  // namespace tempkg
