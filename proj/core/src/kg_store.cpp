#include "tempkg/kg_store.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <deque>
#include <limits>
#include <ostream>

#include "tempkg/errors.hpp"

namespace tempkg {

namespace {

constexpr std::uint8_t kBeginWildcard = 1;
constexpr std::uint8_t kEndWildcard = 2;

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

int to_int(std::string_view s) {
  int v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

/// YYYY-MM-DD -> days since epoch.
std::optional<std::int64_t> parse_day(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto y = s.substr(0, 4), m = s.substr(5, 2), d = s.substr(8, 2);
  if (!all_digits(y) || !all_digits(m) || !all_digits(d)) return std::nullopt;
  using namespace std::chrono;
  year_month_day ymd{year{to_int(y)}, month{static_cast<unsigned>(to_int(m))},
                     day{static_cast<unsigned>(to_int(d))}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd}.time_since_epoch().count();
}

struct YearField {
  bool wildcard = false;
  int year = 0;
};

/// Accepts `YYYY`, `YYYY-MM-DD`, `YYYY-##-##` and `####...` wildcards.
std::optional<YearField> parse_year_field(std::string_view s) {
  if (s.size() < 4) return std::nullopt;
  auto head = s.substr(0, 4);
  auto rest = s.substr(4);
  if (!rest.empty()) {
    if (rest.size() != 6 || rest[0] != '-' || rest[3] != '-') return std::nullopt;
    for (std::size_t i : {1u, 2u, 4u, 5u})
      if (!(rest[i] == '#' || (rest[i] >= '0' && rest[i] <= '9'))) return std::nullopt;
  }
  if (head == "####") return YearField{true, 0};
  if (!all_digits(head)) return std::nullopt;
  return YearField{false, to_int(head)};
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

struct RawRecord {
  std::size_t line = 0;
  std::string_view subject, relation, object;
  std::int64_t begin = 0, end = 0;
  std::uint8_t wildcards = 0;
};

std::vector<RawRecord> parse_records(std::string_view text, Granularity format) {
  std::vector<RawRecord> out;
  const std::size_t want = format == Granularity::point ? 4 : 5;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (blank(line)) continue;

    auto fields = split_tabs(line);
    if (fields.size() != want)
      throw ParseError(line_no, "expected " + std::to_string(want) + " tab-separated fields, got " +
                                    std::to_string(fields.size()));
    for (std::size_t i = 0; i < 3; ++i)
      if (fields[i].empty()) throw ParseError(line_no, "empty label field");

    RawRecord rec{line_no, fields[0], fields[1], fields[2]};
    if (format == Granularity::point) {
      auto d = parse_day(fields[3]);
      if (!d) throw ParseError(line_no, "unparseable date '" + std::string(fields[3]) + "'");
      rec.begin = rec.end = *d;
    } else {
      auto b = parse_year_field(fields[3]);
      auto e = parse_year_field(fields[4]);
      if (!b) throw ParseError(line_no, "unparseable begin '" + std::string(fields[3]) + "'");
      if (!e) throw ParseError(line_no, "unparseable end '" + std::string(fields[4]) + "'");
      rec.begin = b->year;
      rec.end = e->year;
      if (b->wildcard) rec.wildcards |= kBeginWildcard;
      if (e->wildcard) rec.wildcards |= kEndWildcard;
      if (!b->wildcard && !e->wildcard && rec.end < rec.begin)
        throw ValidationError("line " + std::to_string(line_no) + ": end " + std::to_string(rec.end) +
                              " precedes begin " + std::to_string(rec.begin));
    }
    out.push_back(rec);
  }
  return out;
}

struct Bounds {
  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = std::numeric_limits<std::int64_t>::min();
  bool any() const { return lo <= hi; }
  void add(std::int64_t v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

void observe(Bounds& b, const RawRecord& r) {
  if (!(r.wildcards & kBeginWildcard)) b.add(r.begin);
  if (!(r.wildcards & kEndWildcard)) b.add(r.end);
}

Tkg assemble(const std::vector<RawRecord>& records, Granularity format, const TimeAxis& axis,
             const Bounds& bounds) {
  TkgBuilder builder(format, axis);
  for (const auto& r : records) {
    std::int64_t b = (r.wildcards & kBeginWildcard) ? bounds.lo : r.begin;
    std::int64_t e = (r.wildcards & kEndWildcard) ? bounds.hi : r.end;
    if (e < b) {
      throw ValidationError("line " + std::to_string(r.line) + ": end precedes begin after wildcard clamping");
    }
    auto bi = static_cast<TimeIndex>(b - axis.origin());
    auto ei = static_cast<TimeIndex>(e - axis.origin());
    Quadruple q{builder.entity(r.subject), builder.relation(r.relation), builder.entity(r.object),
                format == Granularity::point ? TimeScope::point(bi) : TimeScope::interval(bi, ei)};
    builder.add_edge(q, r.wildcards);
  }
  return std::move(builder).build();
}

TimeAxis axis_from(const Bounds& bounds, Granularity format, bool have_records) {
  const TimeUnit unit = format == Granularity::point ? TimeUnit::day : TimeUnit::year;
  if (!bounds.any()) {
    if (have_records) throw ValidationError("no concrete timestamps: every time field is a wildcard");
    return TimeAxis(unit, 0, 0);
  }
  return TimeAxis(unit, bounds.lo, static_cast<TimeIndex>(bounds.hi - bounds.lo + 1));
}

}  // namespace

Granularity parse_granularity(std::string_view text) {
  if (text == "point") return Granularity::point;
  if (text == "interval") return Granularity::interval;
  throw ValidationError("unknown format '" + std::string(text) + "' (expected point|interval)");
}

std::string_view to_string(Granularity g) { return g == Granularity::point ? "point" : "interval"; }

TimeScope TimeScope::interval(TimeIndex begin, TimeIndex end) {
  if (end < begin) throw ValidationError("interval end precedes begin");
  return TimeScope(begin, end, true);
}

std::size_t QuadrupleHash::operator()(const Quadruple& q) const noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  };
  mix(static_cast<std::uint32_t>(q.subject));
  mix(static_cast<std::uint32_t>(q.relation));
  mix(static_cast<std::uint32_t>(q.object));
  mix(static_cast<std::uint32_t>(q.time.begin()));
  mix(static_cast<std::uint32_t>(q.time.end()));
  mix(q.time.is_interval() ? 1 : 0);
  return static_cast<std::size_t>(h);
}

std::string TimeAxis::label(TimeIndex t) const {
  if (t < 0 || t >= span_) throw LookupError("time index " + std::to_string(t) + " outside axis");
  char buf[32];
  if (unit_ == TimeUnit::year) {
    std::snprintf(buf, sizeof buf, "%04lld", static_cast<long long>(origin_ + t));
    return buf;
  }
  using namespace std::chrono;
  year_month_day ymd{sys_days{days{origin_ + t}}};
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::optional<TimeIndex> TimeAxis::index_of(std::string_view label) const {
  std::optional<std::int64_t> raw;
  if (unit_ == TimeUnit::day) {
    raw = parse_day(label);
  } else if (auto y = parse_year_field(label); y && !y->wildcard) {
    raw = y->year;
  }
  if (!raw) return std::nullopt;
  std::int64_t t = *raw - origin_;
  if (t < 0 || t >= span_) return std::nullopt;
  return static_cast<TimeIndex>(t);
}

const std::string& Tkg::entity_label(EntityId e) const {
  if (!has_entity(e)) throw LookupError("unknown entity id " + std::to_string(e));
  return entity_labels_[static_cast<std::size_t>(e)];
}

const std::string& Tkg::relation_label(RelationId r) const {
  if (!has_relation(r)) throw LookupError("unknown relation id " + std::to_string(r));
  return relation_labels_[static_cast<std::size_t>(r)];
}

std::optional<EntityId> Tkg::find_entity(std::string_view label) const {
  auto it = entity_ids_.find(std::string(label));
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> Tkg::find_relation(std::string_view label) const {
  auto it = relation_ids_.find(std::string(label));
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

EntityId Tkg::entity_id(std::string_view label) const {
  if (auto id = find_entity(label)) return *id;
  throw LookupError("unknown entity '" + std::string(label) + "'");
}

RelationId Tkg::relation_id(std::string_view label) const {
  if (auto id = find_relation(label)) return *id;
  throw LookupError("unknown relation '" + std::string(label) + "'");
}

const Quadruple& Tkg::edge(EdgeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= edges_.size())
    throw LookupError("unknown edge id " + std::to_string(id));
  return edges_[static_cast<std::size_t>(id)];
}

std::span<const EdgeId> Tkg::incident(EntityId e) const {
  if (!has_entity(e)) throw LookupError("unknown entity id " + std::to_string(e));
  return adjacency_[static_cast<std::size_t>(e)];
}

std::optional<EdgeId> Tkg::find_edge(const Quadruple& q) const {
  auto it = edge_index_.find(q);
  if (it == edge_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Tkg::num_flagged() const {
  return static_cast<std::size_t>(std::count_if(wildcards_.begin(), wildcards_.end(), [](auto b) { return b != 0; }));
}

TkgBuilder::TkgBuilder(Granularity granularity, TimeAxis axis) {
  g_.granularity_ = granularity;
  g_.axis_ = axis;
}

EntityId TkgBuilder::entity(std::string_view label) {
  auto [it, inserted] = g_.entity_ids_.try_emplace(std::string(label), static_cast<EntityId>(g_.entity_labels_.size()));
  if (inserted) {
    g_.entity_labels_.emplace_back(label);
    g_.adjacency_.emplace_back();
  }
  return it->second;
}

RelationId TkgBuilder::relation(std::string_view label) {
  auto [it, inserted] =
      g_.relation_ids_.try_emplace(std::string(label), static_cast<RelationId>(g_.relation_labels_.size()));
  if (inserted) g_.relation_labels_.emplace_back(label);
  return it->second;
}

bool TkgBuilder::add_edge(const Quadruple& q, std::uint8_t wildcard_bits) {
  if (!g_.has_entity(q.subject) || !g_.has_entity(q.object) || !g_.has_relation(q.relation))
    throw LookupError("edge references an unregistered id");
  if (q.time.is_interval() != (g_.granularity_ == Granularity::interval))
    throw ValidationError("edge time scope does not match graph granularity");
  if (q.time.begin() < 0 || q.time.end() >= g_.axis_.span())
    throw ValidationError("edge time outside the time axis");
  auto id = static_cast<EdgeId>(g_.edges_.size());
  if (!g_.edge_index_.try_emplace(q, id).second) {
    ++g_.duplicates_dropped_;
    return false;
  }
  g_.edges_.push_back(q);
  g_.wildcards_.push_back(wildcard_bits);
  g_.adjacency_[static_cast<std::size_t>(q.subject)].push_back(id);
  if (q.object != q.subject) g_.adjacency_[static_cast<std::size_t>(q.object)].push_back(id);
  return true;
}

Tkg TkgBuilder::build() && { return std::move(g_); }

Tkg load_tkg(std::string_view text, Granularity format) {
  std::string_view one[] = {text};
  return std::move(load_tkg_family(one, format).front());
}

std::vector<Tkg> load_tkg_family(std::span<const std::string_view> texts, Granularity format) {
  std::vector<std::vector<RawRecord>> parsed;
  Bounds bounds;
  bool have_records = false;
  for (auto text : texts) {
    parsed.push_back(parse_records(text, format));
    for (const auto& r : parsed.back()) observe(bounds, r);
    have_records = have_records || !parsed.back().empty();
  }
  TimeAxis axis = axis_from(bounds, format, have_records);
  std::vector<Tkg> out;
  out.reserve(parsed.size());
  for (const auto& records : parsed) out.push_back(assemble(records, format, axis, bounds));
  return out;
}

void write_tkg(std::ostream& out, const Tkg& g) {
  const auto& axis = g.time_axis();
  auto field = [&](TimeIndex t, bool wildcard) -> std::string {
    if (wildcard) return "####-##-##";
    if (axis.unit() == TimeUnit::year) return axis.label(t) + "-##-##";
    return axis.label(t);
  };
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    const auto& q = g.edges()[i];
    auto bits = g.wildcard_bits(static_cast<EdgeId>(i));
    out << g.entity_label(q.subject) << '\t' << g.relation_label(q.relation) << '\t' << g.entity_label(q.object)
        << '\t' << field(q.time.begin(), bits & kBeginWildcard);
    if (q.time.is_interval()) out << '\t' << field(q.time.end(), bits & kEndWildcard);
    out << '\n';
  }
}

std::vector<EntityId> k_hop_neighbors(const Tkg& g, EntityId e, int k) {
  if (!g.has_entity(e)) throw LookupError("unknown entity id " + std::to_string(e));
  if (k < 1) throw ContractViolation("k_hop_neighbors requires k >= 1");
  std::vector<int> dist(g.num_entities(), -1);
  std::deque<EntityId> frontier{e};
  dist[static_cast<std::size_t>(e)] = 0;
  std::vector<EntityId> out;
  while (!frontier.empty()) {
    EntityId v = frontier.front();
    frontier.pop_front();
    int dv = dist[static_cast<std::size_t>(v)];
    if (dv == k) continue;
    for (EdgeId id : g.incident(v)) {
      EntityId w = other_endpoint(g.edge(id), v);
      auto& dw = dist[static_cast<std::size_t>(w)];
      if (dw >= 0) continue;
      dw = dv + 1;
      out.push_back(w);
      frontier.push_back(w);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool contains_edge(const Tkg& g, const Quadruple& q) { return g.contains(q); }

}  // namespace tempkg
