#include "tempkg/sentence_builder.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>
#include <tuple>

#include "json.hpp"
#include "tempkg/errors.hpp"

namespace tempkg {

namespace {

constexpr std::array<std::string_view, 5> kPlaceholders = {"{s}", "{o}", "{t}", "{t_begin}", "{t_end}"};

bool contains_id(std::span<const EdgeId> ids, EdgeId id) { return std::find(ids.begin(), ids.end(), id) != ids.end(); }

/// Rebuilds traversal directions for an edge-id sequence starting at `start`.
/// Returns nullopt when the sequence is not a simple path.
std::optional<RelationPath> orient(const Tkg& g, EntityId start, const std::vector<EdgeId>& ids) {
  RelationPath path;
  std::vector<EntityId> visited{start};
  EntityId cur = start;
  for (EdgeId id : ids) {
    const auto& q = g.edge(id);
    if (q.subject != cur && q.object != cur) return std::nullopt;
    bool reversed = q.subject != cur;
    EntityId next = other_endpoint(q, cur);
    if (std::find(visited.begin(), visited.end(), next) != visited.end()) return std::nullopt;
    visited.push_back(next);
    path.edges.push_back({id, q, reversed});
    cur = next;
  }
  return path;
}

/// Self-loop paths for the degenerate s == o case.
std::vector<RelationPath> self_loops(const Tkg& g, EntityId s, TimeIndex cutoff, std::span<const EdgeId> excluded) {
  std::vector<RelationPath> out;
  for (EdgeId id : g.incident(s)) {
    const auto& q = g.edge(id);
    if (q.subject == q.object && admissible(q, cutoff) && !contains_id(excluded, id))
      out.push_back(RelationPath{{{id, q, false}}});
  }
  std::sort(out.begin(), out.end());
  return out;
}

using Prefixes = std::map<EntityId, std::set<std::vector<EdgeId>>>;

void random_walk(const Tkg& g, EntityId start, EntityId goal, TimeIndex cutoff, int max_hops,
                 std::span<const EdgeId> excluded, Rng& rng, Prefixes& out, std::vector<EdgeId>& options) {
  std::vector<EntityId> visited{start};
  std::vector<EdgeId> prefix;
  EntityId v = start;
  for (int step = 0; step < max_hops; ++step) {
    options.clear();
    for (EdgeId id : g.incident(v)) {
      const auto& q = g.edge(id);
      if (!admissible(q, cutoff) || contains_id(excluded, id)) continue;
      EntityId w = other_endpoint(q, v);
      if (std::find(visited.begin(), visited.end(), w) != visited.end()) continue;
      options.push_back(id);
    }
    if (options.empty()) return;
    EdgeId pick = options[uniform_index(rng, options.size())];
    v = other_endpoint(g.edge(pick), v);
    visited.push_back(v);
    prefix.push_back(pick);
    out[v].insert(prefix);
    if (v == goal) return;
  }
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

void append(std::vector<std::string>& dst, const std::vector<std::string>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

bool is_time_token(std::string_view tok) { return tok.size() > 4 && tok.starts_with("[T:") && tok.ends_with("]"); }

StructuredSentence make_sentence(const Tkg& g, const Quadruple& target, bool target_reversed,
                                 std::optional<RelationPath> path, std::optional<DirectedEdge> desc_s,
                                 std::optional<DirectedEdge> desc_o, const TemplateTable& templates) {
  StructuredSentence s;
  s.target = target;
  s.target_reversed = target_reversed;
  s.path = std::move(path);
  s.desc_s = desc_s;
  s.desc_o = desc_o;

  auto& rel = s.segments[static_cast<std::size_t>(Segment::relation)];
  if (target_reversed) rel.emplace_back(kInverseMarker);
  append(rel, verbalize(g, target, templates));
  s.target_length = rel.size();

  bool any = false;
  TimeIndex earliest = target.time.begin();
  auto consider = [&](const Quadruple& q) {
    earliest = any ? std::min(earliest, q.time.begin()) : q.time.begin();
    any = true;
  };
  if (s.path) {
    for (const auto& e : s.path->edges) {
      append(rel, verbalize(g, e, templates));
      consider(e.edge);
    }
  }
  if (s.desc_s) {
    s.segments[static_cast<std::size_t>(Segment::subject)] = verbalize(g, *s.desc_s, templates);
    consider(s.desc_s->edge);
  }
  if (s.desc_o) {
    s.segments[static_cast<std::size_t>(Segment::object)] = verbalize(g, *s.desc_o, templates);
    consider(s.desc_o->edge);
  }
  s.earliest_time = any ? earliest : target.time.begin();
  return s;
}

SentenceBundle build_directed_bundle(const Tkg& g, const Quadruple& target, bool reversed, int max_sentences,
                                     const TemplateTable& templates, const BundleConfig& cfg, Rng& rng,
                                     std::span<const EdgeId> hidden) {
  if (!g.has_entity(target.subject) || !g.has_entity(target.object) || !g.has_relation(target.relation))
    throw LookupError("bundle target references unknown ids");
  if (max_sentences < 1) throw ContractViolation("sentence cap N must be positive");

  const EntityId from = reversed ? target.object : target.subject;
  const EntityId to = reversed ? target.subject : target.object;
  const TimeIndex cutoff = target.time.begin();

  std::vector<EdgeId> excluded(hidden.begin(), hidden.end());
  if (auto id = g.find_edge(target)) excluded.push_back(*id);

  std::vector<RelationPath> paths;
  if (cfg.use_paths) paths = extract_paths(g, from, to, cutoff, cfg.paths, excluded, rng);

  // Fewer hops first, then the most recent evidence; random among ties.
  std::vector<std::tuple<std::size_t, TimeIndex, std::uint64_t, std::size_t>> order;
  order.reserve(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i)
    order.emplace_back(paths[i].hops(), -paths[i].earliest_time(), rng(), i);
  std::sort(order.begin(), order.end());
  const std::size_t cap = static_cast<std::size_t>(max_sentences);
  std::vector<const RelationPath*> selected;
  for (std::size_t i = 0; i < std::min(cap, order.size()); ++i) selected.push_back(&paths[std::get<3>(order[i])]);

  auto draw_descriptions = [&](const RelationPath* path) {
    std::vector<EdgeId> ex = excluded;
    if (path)
      for (const auto& e : path->edges) ex.push_back(e.id);
    std::optional<DirectedEdge> ds, dobj;
    if (cfg.use_history) {
      ds = sample_description(g, from, cutoff, ex, rng);
      if (ds) ex.push_back(ds->id);
      dobj = sample_description(g, to, cutoff, ex, rng);
    }
    return std::pair{ds, dobj};
  };

  SentenceBundle bundle{target, {}};
  if (selected.empty()) {
    auto [ds, dobj] = draw_descriptions(nullptr);
    bundle.sentences.push_back(make_sentence(g, target, reversed, std::nullopt, ds, dobj, templates));
    return bundle;
  }

  using Key = std::tuple<std::vector<EdgeId>, EdgeId, EdgeId>;
  std::set<Key> seen;
  const std::size_t budget = 3 * cap;
  for (std::size_t attempt = 0; attempt < budget && bundle.sentences.size() < cap; ++attempt) {
    if (attempt >= selected.size() && !cfg.reuse_paths) break;
    const RelationPath* path = selected[attempt % selected.size()];
    auto [ds, dobj] = draw_descriptions(path);
    Key key{path->edge_ids(), ds ? ds->id : -1, dobj ? dobj->id : -1};
    if (!seen.insert(key).second) continue;
    bundle.sentences.push_back(make_sentence(g, target, reversed, *path, ds, dobj, templates));
  }
  return bundle;
}

}  // namespace

TimeIndex RelationPath::earliest_time() const {
  TimeIndex t = edges.empty() ? 0 : edges.front().edge.time.begin();
  for (const auto& e : edges) t = std::min(t, e.edge.time.begin());
  return t;
}

std::vector<EdgeId> RelationPath::edge_ids() const {
  std::vector<EdgeId> ids;
  ids.reserve(edges.size());
  for (const auto& e : edges) ids.push_back(e.id);
  return ids;
}

bool operator<(const RelationPath& a, const RelationPath& b) {
  if (a.hops() != b.hops()) return a.hops() < b.hops();
  return a.edge_ids() < b.edge_ids();
}

std::vector<std::string> template_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::string_view w = text.substr(i, j - i);
      if (w.find('{') != std::string_view::npos || w.find('}') != std::string_view::npos) {
        if (std::find(kPlaceholders.begin(), kPlaceholders.end(), w) == kPlaceholders.end())
          throw TemplateError("unknown placeholder '" + std::string(w) + "'");
      }
      words.emplace_back(w);
    }
    i = j;
  }
  return words;
}

TemplateTable TemplateTable::parse(std::string_view tsv, const Tkg& g) {
  TemplateTable table;
  std::size_t line_no = 0, start = 0;
  while (start < tsv.size()) {
    auto nl = tsv.find('\n', start);
    auto line = tsv.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? tsv.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos)
      throw ParseError(line_no, "template lines are relation<TAB>template");
    auto key = line.substr(0, tab);
    auto text = line.substr(tab + 1);

    std::optional<RelationId> rel = g.find_relation(key);
    if (!rel) {
      RelationId numeric = -1;
      auto [p, ec] = std::from_chars(key.data(), key.data() + key.size(), numeric);
      if (ec == std::errc{} && p == key.data() + key.size() && g.has_relation(numeric)) rel = numeric;
    }
    // Templates for relations absent from this graph are ignored.
    if (!rel) continue;
    try {
      table.set(*rel, std::string(text));
    } catch (const TemplateError& e) {
      throw TemplateError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

void TemplateTable::set(RelationId r, std::string text) {
  template_words(text);
  templates_[r] = std::move(text);
}

const std::string* TemplateTable::find(RelationId r) const {
  auto it = templates_.find(r);
  return it == templates_.end() ? nullptr : &it->second;
}

std::vector<std::string> label_words(std::string_view label) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : label) {
    if (c == '_' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string fallback_template(const Tkg& g, RelationId r) {
  std::string rel = join_words(label_words(g.relation_label(r)));
  if (g.granularity() == Granularity::interval) return "From {t_begin} to {t_end} , {s} " + rel + " {o} .";
  return "On {t} , {s} " + rel + " {o} .";
}

std::string time_token(const Tkg& g, TimeIndex t) { return "[T:" + g.time_axis().label(t) + "]"; }

std::vector<std::string> verbalize(const Tkg& g, const Quadruple& q, const TemplateTable& templates) {
  const std::string* text = templates.find(q.relation);
  std::string fallback;
  if (!text) {
    fallback = fallback_template(g, q.relation);
    text = &fallback;
  }
  std::vector<std::string> out;
  for (auto& w : template_words(*text)) {
    if (w == "{s}") {
      append(out, label_words(g.entity_label(q.subject)));
    } else if (w == "{o}") {
      append(out, label_words(g.entity_label(q.object)));
    } else if (w == "{t}" || w == "{t_begin}") {
      out.push_back(time_token(g, q.time.begin()));
    } else if (w == "{t_end}") {
      out.push_back(time_token(g, q.time.end()));
    } else {
      out.push_back(std::move(w));
    }
  }
  return out;
}

std::vector<std::string> verbalize(const Tkg& g, const DirectedEdge& e, const TemplateTable& templates) {
  std::vector<std::string> out;
  if (e.reversed) out.emplace_back(kInverseMarker);
  append(out, verbalize(g, e.edge, templates));
  return out;
}

std::vector<RelationPath> extract_paths(const Tkg& g, EntityId s, EntityId o, TimeIndex cutoff,
                                        const PathConfig& cfg, std::span<const EdgeId> excluded, Rng& rng) {
  if (!g.has_entity(s) || !g.has_entity(o)) throw LookupError("extract_paths: unknown entity");
  if (s == o) return self_loops(g, s, cutoff, excluded);

  Prefixes from_s, from_o;
  from_s[s].insert(std::vector<EdgeId>{});
  from_o[o].insert(std::vector<EdgeId>{});
  std::vector<EdgeId> scratch;
  for (int w = 0; w < cfg.walks; ++w) {
    if (w % 2 == 0)
      random_walk(g, s, o, cutoff, cfg.max_hops, excluded, rng, from_s, scratch);
    else
      random_walk(g, o, s, cutoff, cfg.max_hops, excluded, rng, from_o, scratch);
  }

  std::set<std::vector<EdgeId>> joined;
  for (const auto& [meet, heads] : from_s) {
    auto it = from_o.find(meet);
    if (it == from_o.end()) continue;
    for (const auto& head : heads) {
      for (const auto& tail : it->second) {
        std::size_t hops = head.size() + tail.size();
        if (hops == 0 || hops > static_cast<std::size_t>(cfg.max_hops)) continue;
        std::vector<EdgeId> ids = head;
        ids.insert(ids.end(), tail.rbegin(), tail.rend());
        joined.insert(std::move(ids));
      }
    }
  }

  std::vector<RelationPath> out;
  for (const auto& ids : joined)
    if (auto p = orient(g, s, ids)) out.push_back(std::move(*p));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<RelationPath> enumerate_paths_oracle(const Tkg& g, EntityId s, EntityId o, TimeIndex cutoff,
                                                 int max_hops, std::span<const EdgeId> excluded,
                                                 std::size_t prefix_budget) {
  if (!g.has_entity(s) || !g.has_entity(o)) throw LookupError("enumerate_paths_oracle: unknown entity");
  if (s == o) return self_loops(g, s, cutoff, excluded);

  std::vector<RelationPath> out;
  std::vector<EdgeId> stack;
  std::vector<EntityId> visited{s};
  std::size_t prefixes = 0;

  auto dfs = [&](auto&& self, EntityId v) -> void {
    if (static_cast<int>(stack.size()) == max_hops) return;
    for (EdgeId id : g.incident(v)) {
      const auto& q = g.edge(id);
      if (!admissible(q, cutoff) || contains_id(excluded, id)) continue;
      EntityId w = other_endpoint(q, v);
      if (std::find(visited.begin(), visited.end(), w) != visited.end()) continue;
      if (++prefixes > prefix_budget) throw OracleOverflow("path enumeration exceeded the prefix budget");
      stack.push_back(id);
      if (w == o) {
        out.push_back(*orient(g, s, stack));
      } else {
        visited.push_back(w);
        self(self, w);
        visited.pop_back();
      }
      stack.pop_back();
    }
  };
  dfs(dfs, s);
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<DirectedEdge> sample_description(const Tkg& g, EntityId e, TimeIndex cutoff,
                                               std::span<const EdgeId> exclude, Rng& rng) {
  std::vector<EdgeId> options;
  for (EdgeId id : g.incident(e))
    if (admissible(g.edge(id), cutoff) && !contains_id(exclude, id)) options.push_back(id);
  if (options.empty()) return std::nullopt;
  EdgeId pick = options[uniform_index(rng, options.size())];
  const auto& q = g.edge(pick);
  return DirectedEdge{pick, q, q.subject != e};
}

SentenceBundle build_bundle(const Tkg& g, const Quadruple& target, int max_sentences, const TemplateTable& templates,
                            const BundleConfig& cfg, Rng& rng, std::span<const EdgeId> hidden) {
  return build_directed_bundle(g, target, false, max_sentences, templates, cfg, rng, hidden);
}

SentenceBundle build_inverse_bundle(const Tkg& g, const Quadruple& target, int max_sentences,
                                    const TemplateTable& templates, const BundleConfig& cfg, Rng& rng) {
  return build_directed_bundle(g, target, true, max_sentences, templates, cfg, rng, {});
}

std::string bundle_to_json(const Tkg& g, const SentenceBundle& bundle) {
  using nlohmann::ordered_json;
  const auto& t = bundle.target;
  ordered_json j;
  j["target"] = {{"s", g.entity_label(t.subject)},
                 {"r", g.relation_label(t.relation)},
                 {"o", g.entity_label(t.object)},
                 {"time", {t.time.begin(), t.time.end()}}};
  ordered_json sentences = ordered_json::array();
  for (const auto& s : bundle.sentences) {
    ordered_json segs = ordered_json::array(), times = ordered_json::array();
    for (const auto& seg : s.segments) {
      segs.push_back(seg);
      ordered_json pos = ordered_json::array();
      for (std::size_t i = 0; i < seg.size(); ++i)
        if (is_time_token(seg[i])) pos.push_back(i);
      times.push_back(pos);
    }
    sentences.push_back({{"segments", segs}, {"time_positions", times}, {"t_rho", s.earliest_time}});
  }
  j["sentences"] = sentences;
  return j.dump();
}

std::string render_sentence(const StructuredSentence& s) {
  std::string out;
  for (const auto& seg : s.segments) {
    if (seg.empty()) continue;
    if (!out.empty()) out += " | ";
    out += join_words(seg);
  }
  return out;
}

}  // namespace tempkg
