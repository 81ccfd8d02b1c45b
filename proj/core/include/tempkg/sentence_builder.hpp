#pragma once

// Structured sentences: relation paths between the target entities plus one
// historical description per entity, verbalised through relation templates.
// Nothing dated after the target's begin time may appear in a sentence.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tempkg/kg_store.hpp"
#include "tempkg/rng.hpp"

namespace tempkg {

inline constexpr std::string_view kInverseMarker = "inverse-of";

/// An edge together with the direction it was traversed in.
struct DirectedEdge {
  EdgeId id = -1;
  Quadruple edge;
  /// True when traversed object -> subject.
  bool reversed = false;

  EntityId from() const { return reversed ? edge.object : edge.subject; }
  EntityId to() const { return reversed ? edge.subject : edge.object; }

  friend bool operator==(const DirectedEdge&, const DirectedEdge&) = default;
};

/// Simple path (no repeated entity) from the target subject to the object.
struct RelationPath {
  std::vector<DirectedEdge> edges;

  std::size_t hops() const { return edges.size(); }
  TimeIndex earliest_time() const;
  std::vector<EdgeId> edge_ids() const;

  friend bool operator==(const RelationPath& a, const RelationPath& b) { return a.edge_ids() == b.edge_ids(); }
  friend bool operator<(const RelationPath& a, const RelationPath& b);
};

/// Per-relation prompt templates. Placeholders: {s} {o} {t} {t_begin} {t_end}.
class TemplateTable {
 public:
  TemplateTable() = default;

  /// Parses `relation<TAB>template` lines; the first field is a relation
  /// label of `g` or a numeric relation id. Throws ParseError/TemplateError.
  static TemplateTable parse(std::string_view tsv, const Tkg& g);

  /// Throws TemplateError on unknown placeholders.
  void set(RelationId r, std::string text);
  const std::string* find(RelationId r) const;
  std::size_t size() const { return templates_.size(); }

 private:
  std::unordered_map<RelationId, std::string> templates_;
};

/// Whitespace-separated template words, with placeholders left in place.
/// Throws TemplateError on unknown placeholders.
std::vector<std::string> template_words(std::string_view text);

/// The template applied when a relation has none of its own.
std::string fallback_template(const Tkg& g, RelationId r);

/// Label split on whitespace and underscores.
std::vector<std::string> label_words(std::string_view label);

std::string time_token(const Tkg& g, TimeIndex t);

/// Edges with any timestamp after the cutoff are never admitted.
inline bool admissible(const Quadruple& q, TimeIndex cutoff) { return q.time.end() <= cutoff; }

struct PathConfig {
  int max_hops = 3;
  int walks = 256;
};

/// Paths found by bidirectional random walks: walks alternate between
/// starting at `s` and at `o`; a prefix from `s` and a prefix from `o` that
/// end at a common entity are joined. `excluded` edges (the target edge and
/// any hidden edges) are never traversed. Result is sorted and de-duplicated.
std::vector<RelationPath> extract_paths(const Tkg& g, EntityId s, EntityId o, TimeIndex cutoff,
                                        const PathConfig& cfg, std::span<const EdgeId> excluded, Rng& rng);

/// Exhaustive DFS with the same constraints. Throws OracleOverflow past
/// `prefix_budget` explored prefixes.
std::vector<RelationPath> enumerate_paths_oracle(const Tkg& g, EntityId s, EntityId o, TimeIndex cutoff,
                                                 int max_hops, std::span<const EdgeId> excluded,
                                                 std::size_t prefix_budget = 100000);

/// Uniformly random incident edge of `e` admissible at `cutoff` and not in
/// `exclude`, read from `e`: reversed when `e` is the object.
std::optional<DirectedEdge> sample_description(const Tkg& g, EntityId e, TimeIndex cutoff,
                                               std::span<const EdgeId> exclude, Rng& rng);

std::vector<std::string> verbalize(const Tkg& g, const Quadruple& q, const TemplateTable& templates);
/// Reversed edges are prefixed with the `inverse-of` marker.
std::vector<std::string> verbalize(const Tkg& g, const DirectedEdge& e, const TemplateTable& templates);

enum class Segment : std::size_t { relation = 0, subject = 1, object = 2 };

struct StructuredSentence {
  Quadruple target;
  bool target_reversed = false;
  std::optional<RelationPath> path;
  std::optional<DirectedEdge> desc_s;
  std::optional<DirectedEdge> desc_o;
  /// Earliest timestamp in the path and description segments, or the
  /// target's begin time when both are empty.
  TimeIndex earliest_time = 0;
  /// Leading tokens of the relation segment that verbalise the target.
  std::size_t target_length = 0;
  /// Unframed tokens: relation (target + path), description_s, description_o.
  std::array<std::vector<std::string>, 3> segments;

  const std::vector<std::string>& segment(Segment s) const { return segments[static_cast<std::size_t>(s)]; }
};

struct SentenceBundle {
  Quadruple target;
  std::vector<StructuredSentence> sentences;
};

struct BundleConfig {
  PathConfig paths;
  /// Pair a path with fresh description draws when paths are scarce.
  bool reuse_paths = true;
  bool use_paths = true;
  bool use_history = true;
};

/// Up to `max_sentences` sentences, at least one. Paths are preferred by
/// fewer hops, then by a later earliest timestamp; ties are broken randomly.
/// `hidden` edges are excluded in addition to the target itself.
SentenceBundle build_bundle(const Tkg& g, const Quadruple& target, int max_sentences,
                            const TemplateTable& templates, const BundleConfig& cfg, Rng& rng,
                            std::span<const EdgeId> hidden = {});

/// Same, for the inverse-direction target (paths searched from the object).
SentenceBundle build_inverse_bundle(const Tkg& g, const Quadruple& target, int max_sentences,
                                    const TemplateTable& templates, const BundleConfig& cfg, Rng& rng);

/// One line-delimited record: {target, sentences:[{segments, time_positions, t_rho}]}.
std::string bundle_to_json(const Tkg& g, const SentenceBundle& bundle);

/// Space-joined text of all segments.
std::string render_sentence(const StructuredSentence& s);

}  // namespace tempkg
