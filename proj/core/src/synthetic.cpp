#include "tempkg/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "tempkg/errors.hpp"
#include "tempkg/rng.hpp"

namespace tempkg {

PlantedRuleData make_planted_rule(const PlantedRuleConfig& cfg) {
  if (cfg.entities < 3 || cfg.timeline < 2 || cfg.chains_per_step < 1 || cfg.query_steps < 1 ||
      cfg.query_steps >= cfg.timeline)
    throw ContractViolation("planted-rule graph needs >= 3 entities, >= 2 steps and a proper query window");
  if (cfg.distractor_fraction < 0.0 || cfg.distractor_fraction >= 1.0)
    throw ContractViolation("distractor fraction must lie in [0, 1)");

  constexpr std::int64_t kOrigin = 10957;  // 2000-01-01
  TkgBuilder b(Granularity::point, TimeAxis(TimeUnit::day, kOrigin, cfg.timeline));
  std::vector<EntityId> ents;
  for (int i = 0; i < cfg.entities; ++i) {
    char label[16];
    std::snprintf(label, sizeof label, "e%02d", i);
    ents.push_back(b.entity(label));
  }
  const RelationId r1 = b.relation("r1"), r2 = b.relation("r2"), r3 = b.relation("r3");

  Rng rng(cfg.seed);
  const auto n = static_cast<std::size_t>(cfg.entities);
  std::vector<Quadruple> body;
  std::set<Quadruple> conclusions, queries;
  const TimeIndex query_from = cfg.timeline - cfg.query_steps;
  for (TimeIndex t = 0; t + 1 < cfg.timeline; ++t) {
    for (int c = 0; c < cfg.chains_per_step; ++c) {
      auto pick = sample_without_replacement(rng, n, 3);
      EntityId x = ents[pick[0]], y = ents[pick[1]], z = ents[pick[2]];
      body.push_back({x, r1, y, TimeScope::point(t)});
      body.push_back({y, r2, z, TimeScope::point(t)});
      if (uniform01(rng) < cfg.rule_probability) {
        Quadruple q{x, r3, z, TimeScope::point(t + 1)};
        (t + 1 >= query_from ? queries : conclusions).insert(q);
      }
    }
  }

  std::size_t rule_edges = 0;
  for (const auto& q : body) rule_edges += b.add_edge(q) ? 1 : 0;
  for (const auto& q : conclusions) rule_edges += b.add_edge(q) ? 1 : 0;
  rule_edges += queries.size();

  const auto distractors = static_cast<std::size_t>(
      std::llround(cfg.distractor_fraction / (1.0 - cfg.distractor_fraction) * double(rule_edges)));
  const RelationId rels[] = {r1, r2, r3};
  std::size_t added = 0;
  for (std::size_t attempt = 0; added < distractors && attempt < 100 * (distractors + 1); ++attempt) {
    auto pick = sample_without_replacement(rng, n, 2);
    Quadruple q{ents[pick[0]], rels[uniform_index(rng, 3)], ents[pick[1]],
                TimeScope::point(static_cast<TimeIndex>(uniform_index(rng, static_cast<std::size_t>(cfg.timeline))))};
    if (queries.contains(q)) continue;
    added += b.add_edge(q) ? 1 : 0;
  }

  return {std::move(b).build(), {queries.begin(), queries.end()}};
}

}  // namespace tempkg
