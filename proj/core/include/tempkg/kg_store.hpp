#pragma once

// Temporal knowledge graph storage: TSV parsing, vocabularies, adjacency.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace tempkg {

using EntityId = std::int32_t;
using RelationId = std::int32_t;
using EdgeId = std::int32_t;
using TimeIndex = std::int32_t;

/// Dataset layout: `s r o date` versus `s r o begin end`.
enum class Granularity { point, interval };

enum class TimeUnit { day, year };

Granularity parse_granularity(std::string_view text);
std::string_view to_string(Granularity g);

/// Either a single time index or a closed interval of indices.
class TimeScope {
 public:
  constexpr TimeScope() = default;

  static constexpr TimeScope point(TimeIndex t) { return TimeScope(t, t, false); }
  static TimeScope interval(TimeIndex begin, TimeIndex end);

  constexpr bool is_interval() const { return interval_; }
  constexpr TimeIndex begin() const { return begin_; }
  /// For a point scope, equal to begin().
  constexpr TimeIndex end() const { return end_; }

  friend constexpr bool operator==(const TimeScope&, const TimeScope&) = default;
  friend constexpr auto operator<=>(const TimeScope&, const TimeScope&) = default;

 private:
  constexpr TimeScope(TimeIndex b, TimeIndex e, bool interval) : begin_(b), end_(e), interval_(interval) {}

  TimeIndex begin_ = 0;
  TimeIndex end_ = 0;
  bool interval_ = false;
};

struct Quadruple {
  EntityId subject = 0;
  RelationId relation = 0;
  EntityId object = 0;
  TimeScope time;

  friend constexpr bool operator==(const Quadruple&, const Quadruple&) = default;
  friend constexpr auto operator<=>(const Quadruple&, const Quadruple&) = default;
};

struct QuadrupleHash {
  std::size_t operator()(const Quadruple& q) const noexcept;
};

/// Calendar labels for dense time indices 0..span-1. Day axes count days from
/// the earliest observed date; year axes count years from the earliest year.
class TimeAxis {
 public:
  TimeAxis() = default;
  TimeAxis(TimeUnit unit, std::int64_t origin, TimeIndex span) : unit_(unit), origin_(origin), span_(span) {}

  TimeUnit unit() const { return unit_; }
  /// Days since 1970-01-01 for day axes, calendar year for year axes.
  std::int64_t origin() const { return origin_; }
  TimeIndex span() const { return span_; }

  std::string label(TimeIndex t) const;
  /// Parses a calendar label of this axis' unit; nullopt when it is not a
  /// valid label or falls outside the axis.
  std::optional<TimeIndex> index_of(std::string_view label) const;

  friend bool operator==(const TimeAxis&, const TimeAxis&) = default;

 private:
  TimeUnit unit_ = TimeUnit::day;
  std::int64_t origin_ = 0;
  TimeIndex span_ = 0;
};

class TkgBuilder;

/// Immutable temporal knowledge graph.
class Tkg {
 public:
  Tkg() = default;

  Granularity granularity() const { return granularity_; }
  const TimeAxis& time_axis() const { return axis_; }
  TimeIndex time_span() const { return axis_.span(); }

  std::size_t num_entities() const { return entity_labels_.size(); }
  std::size_t num_relations() const { return relation_labels_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  const std::string& entity_label(EntityId e) const;
  const std::string& relation_label(RelationId r) const;
  std::span<const std::string> entity_labels() const { return entity_labels_; }
  std::span<const std::string> relation_labels() const { return relation_labels_; }

  std::optional<EntityId> find_entity(std::string_view label) const;
  std::optional<RelationId> find_relation(std::string_view label) const;
  /// Throws LookupError when the label is unknown.
  EntityId entity_id(std::string_view label) const;
  RelationId relation_id(std::string_view label) const;

  std::span<const Quadruple> edges() const { return edges_; }
  const Quadruple& edge(EdgeId id) const;

  /// Edge ids with `e` as subject or object. Throws LookupError for bad ids.
  std::span<const EdgeId> incident(EntityId e) const;

  std::optional<EdgeId> find_edge(const Quadruple& q) const;
  bool contains(const Quadruple& q) const { return edge_index_.contains(q); }

  /// True when a `####` begin or end field was clamped while loading.
  bool wildcard_flagged(EdgeId id) const { return wildcards_.at(static_cast<std::size_t>(id)) != 0; }
  /// Bit 0: begin was a wildcard; bit 1: end was a wildcard.
  std::uint8_t wildcard_bits(EdgeId id) const { return wildcards_.at(static_cast<std::size_t>(id)); }
  std::size_t num_flagged() const;
  std::size_t duplicates_dropped() const { return duplicates_dropped_; }

  bool has_entity(EntityId e) const { return e >= 0 && static_cast<std::size_t>(e) < entity_labels_.size(); }
  bool has_relation(RelationId r) const {
    return r >= 0 && static_cast<std::size_t>(r) < relation_labels_.size();
  }

 private:
  friend class TkgBuilder;

  Granularity granularity_ = Granularity::point;
  TimeAxis axis_;
  std::vector<std::string> entity_labels_;
  std::unordered_map<std::string, EntityId> entity_ids_;
  std::vector<std::string> relation_labels_;
  std::unordered_map<std::string, RelationId> relation_ids_;
  std::vector<Quadruple> edges_;
  std::vector<std::uint8_t> wildcards_;
  std::unordered_map<Quadruple, EdgeId, QuadrupleHash> edge_index_;
  std::vector<std::vector<EdgeId>> adjacency_;
  std::size_t duplicates_dropped_ = 0;
};

/// Incremental construction of a Tkg over a fixed time axis.
class TkgBuilder {
 public:
  TkgBuilder(Granularity granularity, TimeAxis axis);

  EntityId entity(std::string_view label);
  RelationId relation(std::string_view label);

  /// Returns false (and counts a dropped duplicate) when the edge exists.
  /// Throws ValidationError when the scope is outside the axis or has the
  /// wrong granularity.
  bool add_edge(const Quadruple& q, std::uint8_t wildcard_bits = 0);

  Tkg build() &&;

 private:
  Tkg g_;
};

/// Parses a TSV dataset. Throws ParseError / ValidationError.
Tkg load_tkg(std::string_view text, Granularity format);

/// Loads several files onto one shared time axis (e.g. a train graph and its
/// evaluation graph), so time indices and labels agree across them.
std::vector<Tkg> load_tkg_family(std::span<const std::string_view> texts, Granularity format);

/// Writes the TSV form accepted by load_tkg. Flagged wildcard fields are
/// written back as `####-##-##`.
void write_tkg(std::ostream& out, const Tkg& g);

/// Entities within k undirected hops of `e`, excluding `e`; sorted ascending.
std::vector<EntityId> k_hop_neighbors(const Tkg& g, EntityId e, int k);

bool contains_edge(const Tkg& g, const Quadruple& q);

/// The other endpoint of `q` when walked from `from`.
inline EntityId other_endpoint(const Quadruple& q, EntityId from) {
  return q.subject == from ? q.object : q.subject;
}

}  // namespace tempkg
