#pragma once

// Tail-prediction questions, candidate scoring, rank metrics and the
// max-summand explanation.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tempkg/kg_store.hpp"
#include "tempkg/scoring.hpp"
#include "tempkg/sentence_builder.hpp"

namespace tempkg {

/// (s, r, ?, t) with a candidate list that contains the truth exactly once.
struct Question {
  std::size_t id = 0;
  EntityId subject = 0;
  RelationId relation = 0;
  TimeScope time;
  EntityId truth = 0;
  std::vector<EntityId> candidates;

  Quadruple with_object(EntityId o) const { return {subject, relation, o, time}; }
  /// Throws ContractViolation when the candidate invariant is broken.
  void validate() const;
};

/// validation50: the truth plus pre-generated 3-hop tail corruptions;
/// all: every entity of the graph.
enum class CandidatePreset { validation50, all };
CandidatePreset parse_candidate_preset(std::string_view text);
std::string_view to_string(CandidatePreset p);

struct QuestionOptions {
  CandidatePreset preset = CandidatePreset::validation50;
  int num_negatives = 50;
  /// Drop candidates (other than the truth) that form a known edge.
  bool filtered = false;
  std::uint64_t seed = 0;
};

/// One question per query quadruple; ids are query indices. Queries must use
/// the entity and relation ids of `g`.
std::vector<Question> make_questions(const Tkg& g, std::span<const Quadruple> queries, const QuestionOptions& opts);

struct CandidateScore {
  EntityId candidate = 0;
  double f = 0.0;
};

struct QuestionResult {
  std::size_t id = 0;
  EntityId truth = 0;
  std::vector<CandidateScore> scores;
};

/// Bundles are drawn from a per-(seed, question, candidate) stream, and the
/// query edge is hidden when it is present in `g`.
QuestionResult score_question(const Model& m, const Tkg& g, const Question& q, const TemplateTable& templates,
                              std::uint64_t seed);

/// Mean-rank tie policy: (best + worst) / 2 over the positions tied with the
/// truth. Throws ContractViolation when the truth was not scored.
double rank_of_truth(const QuestionResult& r);

struct QueryRank {
  std::size_t id = 0;
  double rank = 0.0;
  EntityId truth = 0;
  EntityId top1 = 0;
};

struct Metrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  std::size_t num_queries = 0;
  std::vector<QueryRank> per_query;
};

Metrics rank_and_metrics(std::span<const QuestionResult> results);

struct EvalOptions {
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Scores every question (in parallel when threads > 1; results do not
/// depend on the thread count) and computes the metrics.
Metrics evaluate(const Model& m, const Tkg& g, std::span<const Question> questions, const TemplateTable& templates,
                 const EvalOptions& opts);

struct Explanation {
  StructuredSentence sentence;
  std::string text;
  double weight = 0.0;
  double p = 0.0;
  double summand() const { return weight * p; }
};

/// The sentence with the largest weight * p in a scored bundle.
Explanation explain_bundle(const SentenceBundle& bundle, const BundleScore& score);

/// Rebuilds the bundle of (s, r, answer, t) with the same stream as
/// score_question and returns its max-summand sentence.
Explanation explain(const Model& m, const Tkg& g, const Question& q, EntityId answer,
                    const TemplateTable& templates, std::uint64_t seed);

std::string metrics_json(const Metrics& m, bool filtered, CandidatePreset preset);
/// `query_id,rank,truth,top1` with entity labels.
void write_per_query_csv(std::ostream& out, const Metrics& m, const Tkg& g);

/// Expected MRR of a uniformly random ranking over n candidates: H(n) / n.
double random_baseline_mrr(std::size_t n);

}  // namespace tempkg
