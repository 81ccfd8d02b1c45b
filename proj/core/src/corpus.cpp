#include "tempkg/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <istream>
#include <ostream>
#include <set>
#include <thread>

#include "json.hpp"
#include "tempkg/errors.hpp"

namespace tempkg {

namespace {

constexpr std::array<std::string_view, 6> kSpecialTokens = {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]", "inverse-of"};

bool is_framing(TokenId id) { return id == Vocab::pad || id == Vocab::cls || id == Vocab::sep; }

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9)); }

void apply_replacement(MaskedSample& out, std::size_t slot, const Vocab& vocab, Rng& rng) {
  double u = uniform01(rng);
  auto pos = static_cast<std::size_t>(out.positions[slot]);
  if (u < 0.8) {
    out.kinds[slot] = ReplaceKind::mask;
    out.input[pos] = Vocab::mask;
  } else if (u < 0.9) {
    out.kinds[slot] = ReplaceKind::random;
    auto span = vocab.size() - static_cast<std::size_t>(Vocab::inverse);
    out.input[pos] = static_cast<TokenId>(Vocab::inverse + static_cast<TokenId>(uniform_index(rng, span)));
  } else {
    out.kinds[slot] = ReplaceKind::keep;
  }
}

/// Orders the sampled slots by position.
void sort_by_position(MaskedSample& s) {
  std::vector<std::size_t> idx(s.positions.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.positions[a] < s.positions[b]; });
  MaskedSample out{s.input, {}, {}, {}};
  for (auto i : idx) {
    out.positions.push_back(s.positions[i]);
    out.labels.push_back(s.labels[i]);
    out.kinds.push_back(s.kinds[i]);
  }
  s = std::move(out);
}

}  // namespace

Vocab::Vocab(std::vector<std::string> words, std::vector<std::string> time_tokens) {
  for (auto t : kSpecialTokens) tokens_.emplace_back(t);
  for (auto& w : words) tokens_.push_back(std::move(w));
  time_begin_ = static_cast<TokenId>(tokens_.size());
  for (auto& t : time_tokens) tokens_.push_back(std::move(t));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.try_emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw ValidationError("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Vocab::words() const {
  return {tokens_.begin() + num_special, tokens_.begin() + time_begin_};
}

std::vector<std::string> Vocab::time_tokens() const { return {tokens_.begin() + time_begin_, tokens_.end()}; }

Vocab build_vocab(const Tkg& g, const TemplateTable& templates) {
  std::set<std::string> words;
  for (const auto& label : g.entity_labels())
    for (auto& w : label_words(label)) words.insert(std::move(w));
  for (RelationId r = 0; r < static_cast<RelationId>(g.num_relations()); ++r) {
    const std::string* text = templates.find(r);
    std::string fallback;
    if (!text) {
      fallback = fallback_template(g, r);
      text = &fallback;
    }
    for (auto& w : template_words(*text))
      if (!w.starts_with('{')) words.insert(std::move(w));
  }
  for (auto t : kSpecialTokens) words.erase(std::string(t));

  std::vector<std::string> times;
  times.reserve(static_cast<std::size_t>(g.time_span()));
  for (TimeIndex t = 0; t < g.time_span(); ++t) times.push_back(time_token(g, t));
  for (const auto& t : times) words.erase(t);
  return Vocab({words.begin(), words.end()}, std::move(times));
}

TokenizedSentence tokenize(const StructuredSentence& sentence, const Vocab& vocab, const TokenizeOptions& opts) {
  auto lookup = [&](const std::string& tok) -> TokenId {
    if (auto id = vocab.find(tok)) return *id;
    if (opts.unknown == UnknownTokens::map_to_unk) return Vocab::unk;
    throw TokenizeError("out-of-vocabulary token '" + tok + "'");
  };

  const auto& rel = sentence.segment(Segment::relation);
  std::array<std::size_t, 3> keep = {rel.size(), sentence.segment(Segment::subject).size(),
                                     sentence.segment(Segment::object).size()};
  const std::size_t framing = 6;
  const auto max_len = static_cast<std::size_t>(opts.max_length);
  std::size_t total = framing + keep[0] + keep[1] + keep[2];
  if (total > max_len) {
    std::size_t over = total - max_len;
    auto shave = [&over](std::size_t& len, std::size_t floor) {
      std::size_t take = std::min(over, len - floor);
      len -= take;
      over -= take;
    };
    shave(keep[0], std::min(sentence.target_length, keep[0]));
    shave(keep[2], 0);
    shave(keep[1], 0);
    if (over > 0) throw LengthError("target segment alone exceeds max_length " + std::to_string(max_len));
  }

  TokenizedSentence out;
  out.earliest_time = sentence.earliest_time;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& seg = sentence.segments[s];
    out.segments[s].begin = static_cast<int>(out.ids.size());
    out.ids.push_back(Vocab::cls);
    for (std::size_t i = 0; i < keep[s]; ++i) out.ids.push_back(lookup(seg[i]));
    out.ids.push_back(Vocab::sep);
    out.segments[s].end = static_cast<int>(out.ids.size());
  }
  for (std::size_t i = 0; i < out.ids.size(); ++i)
    if (vocab.is_time(out.ids[i])) out.time_positions.push_back(static_cast<int>(i));
  return out;
}

MaskBudget time_mask_budget(std::size_t q, std::size_t m, const MaskRatios& ratios) {
  MaskBudget b;
  if (m > 0) b.time = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(ratios.p_time * double(m) - 1e-9)));
  b.total = std::max(b.time, round_half_up(ratios.p_total * double(q)));
  return b;
}

MaskedSample time_mask(const TokenizedSentence& ts, const Vocab& vocab, const MaskRatios& ratios, Rng& rng) {
  if (ts.ids.empty()) throw ContractViolation("time_mask requires a non-empty sentence");
  const auto& T = ts.time_positions;
  auto budget = time_mask_budget(ts.ids.size(), T.size(), ratios);

  std::vector<int> rest;
  for (std::size_t i = 0; i < ts.ids.size(); ++i)
    if (!is_framing(ts.ids[i]) && !vocab.is_time(ts.ids[i])) rest.push_back(static_cast<int>(i));
  std::size_t want = budget.total > budget.time ? budget.total - budget.time : 0;
  // Sentences made almost entirely of time tokens take the shortfall from them.
  const std::size_t time_count = std::min(T.size(), budget.time + (want > rest.size() ? want - rest.size() : 0));
  want = std::min(want, rest.size());

  MaskedSample out{ts.ids, {}, {}, {}};
  for (std::size_t idx : sample_without_replacement(rng, T.size(), time_count)) {
    auto pos = T[idx];
    out.positions.push_back(pos);
    out.labels.push_back(ts.ids[static_cast<std::size_t>(pos)]);
    out.kinds.push_back(ReplaceKind::mask);
    out.input[static_cast<std::size_t>(pos)] = Vocab::mask;
  }

  for (std::size_t idx : sample_without_replacement(rng, rest.size(), want)) {
    auto pos = rest[idx];
    out.positions.push_back(pos);
    out.labels.push_back(ts.ids[static_cast<std::size_t>(pos)]);
    out.kinds.push_back(ReplaceKind::mask);
    apply_replacement(out, out.positions.size() - 1, vocab, rng);
  }
  sort_by_position(out);
  return out;
}

MaskedSample random_mask(const TokenizedSentence& ts, const Vocab& vocab, double p_total, Rng& rng) {
  if (ts.ids.empty()) throw ContractViolation("random_mask requires a non-empty sentence");
  std::vector<int> candidates;
  for (std::size_t i = 0; i < ts.ids.size(); ++i)
    if (!is_framing(ts.ids[i])) candidates.push_back(static_cast<int>(i));
  std::size_t want = std::max<std::size_t>(1, round_half_up(p_total * double(ts.ids.size())));

  MaskedSample out{ts.ids, {}, {}, {}};
  for (std::size_t idx : sample_without_replacement(rng, candidates.size(), want)) {
    auto pos = candidates[idx];
    out.positions.push_back(pos);
    out.labels.push_back(ts.ids[static_cast<std::size_t>(pos)]);
    out.kinds.push_back(ReplaceKind::mask);
    apply_replacement(out, out.positions.size() - 1, vocab, rng);
  }
  sort_by_position(out);
  return out;
}

std::string corpus_record(const TokenizedSentence& ts, const Vocab& vocab) {
  nlohmann::ordered_json j;
  std::vector<std::string> tokens;
  tokens.reserve(ts.ids.size());
  for (auto id : ts.ids) tokens.push_back(vocab.token(id));
  j["tokens"] = tokens;
  j["time_positions"] = ts.time_positions;
  nlohmann::ordered_json spans = nlohmann::ordered_json::array();
  for (const auto& s : ts.segments) spans.push_back({s.begin, s.end});
  j["segments"] = spans;
  return j.dump();
}

TokenizedSentence parse_corpus_record(std::string_view line, const Vocab& vocab, UnknownTokens unknown) {
  auto j = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("tokens") || !j.contains("segments"))
    throw TokenizeError("malformed corpus record");
  TokenizedSentence ts;
  for (const auto& tok : j["tokens"]) {
    auto text = tok.get<std::string>();
    if (auto id = vocab.find(text))
      ts.ids.push_back(*id);
    else if (unknown == UnknownTokens::map_to_unk)
      ts.ids.push_back(Vocab::unk);
    else
      throw TokenizeError("out-of-vocabulary token '" + text + "' in corpus");
  }
  const auto& segs = j["segments"];
  if (!segs.is_array() || segs.size() != 3) throw TokenizeError("corpus record needs three segments");
  for (std::size_t s = 0; s < 3; ++s) ts.segments[s] = {segs[s][0].get<int>(), segs[s][1].get<int>()};
  for (std::size_t i = 0; i < ts.ids.size(); ++i)
    if (vocab.is_time(ts.ids[i])) ts.time_positions.push_back(static_cast<int>(i));
  return ts;
}

std::vector<TokenizedSentence> read_corpus(std::istream& in, const Vocab& vocab, UnknownTokens unknown) {
  std::vector<TokenizedSentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_corpus_record(line, vocab, unknown));
  }
  return out;
}

std::vector<TokenizedSentence> build_pretraining_corpus(const Tkg& g, const Vocab& vocab,
                                                        const TemplateTable& templates, const CorpusConfig& cfg) {
  const std::size_t n = g.num_edges();
  std::vector<std::vector<TokenizedSentence>> per_edge(n);

  auto work = [&](std::size_t i) {
    const auto& edge = g.edges()[i];
    Rng rng = derive_stream(cfg.seed, {i, 0});
    for (const auto& s : build_bundle(g, edge, cfg.max_sentences, templates, cfg.bundle, rng).sentences)
      per_edge[i].push_back(tokenize(s, vocab, cfg.tokenize));
    if (cfg.include_inverse) {
      Rng inv = derive_stream(cfg.seed, {i, 1});
      for (const auto& s : build_inverse_bundle(g, edge, cfg.max_sentences, templates, cfg.bundle, inv).sentences)
        per_edge[i].push_back(tokenize(s, vocab, cfg.tokenize));
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
          try {
            for (std::size_t i = t; i < n; i += threads) work(i);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<TokenizedSentence> out;
  for (auto& v : per_edge)
    for (auto& ts : v) out.push_back(std::move(ts));
  return out;
}

std::size_t emit_pretraining_corpus(const Tkg& g, const Vocab& vocab, const TemplateTable& templates,
                                    const CorpusConfig& cfg, std::ostream& sink) {
  auto corpus = build_pretraining_corpus(g, vocab, templates, cfg);
  for (const auto& ts : corpus) sink << corpus_record(ts, vocab) << '\n';
  sink.flush();
  if (!sink) throw IoError("failed writing pretraining corpus");
  return corpus.size();
}

}  // namespace tempkg
