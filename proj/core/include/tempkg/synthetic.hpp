#pragma once

// Planted-rule temporal graphs: r3(x, z, t+1) follows r1(x, y, t) and
// r2(y, z, t) with a fixed probability, mixed with random distractor edges.

#include <cstdint>
#include <vector>

#include "tempkg/kg_store.hpp"

namespace tempkg {

struct PlantedRuleConfig {
  int entities = 60;
  int timeline = 50;
  int chains_per_step = 2;
  double rule_probability = 0.9;
  /// Share of distractor edges in the final graph.
  double distractor_fraction = 0.3;
  /// Rule conclusions dated in the last `query_steps` steps are held out.
  int query_steps = 10;
  std::uint64_t seed = 0;
};

struct PlantedRuleData {
  /// Everything except the held-out conclusions.
  Tkg graph;
  /// Held-out r3 conclusions, in graph ids.
  std::vector<Quadruple> queries;
};

/// Entities are labelled e00.., relations r1, r2, r3; day time axis.
/// Throws ContractViolation on degenerate settings.
PlantedRuleData make_planted_rule(const PlantedRuleConfig& cfg);

}  // namespace tempkg
