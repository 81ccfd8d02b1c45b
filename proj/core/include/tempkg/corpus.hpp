#pragma once

// Token vocabulary, sentence tokenisation and the masked-LM samplers used for
// pretraining (time masking and ordinary random masking).

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tempkg/kg_store.hpp"
#include "tempkg/rng.hpp"
#include "tempkg/sentence_builder.hpp"

namespace tempkg {

using TokenId = std::int32_t;

/// Special tokens occupy ids 0..5, word tokens follow in lexicographic order,
/// and time tokens occupy one contiguous id range at the end.
class Vocab {
 public:
  static constexpr TokenId pad = 0;
  static constexpr TokenId cls = 1;
  static constexpr TokenId sep = 2;
  static constexpr TokenId mask = 3;
  static constexpr TokenId unk = 4;
  static constexpr TokenId inverse = 5;
  static constexpr TokenId num_special = 6;

  Vocab() = default;

  /// `words` excludes special and time tokens.
  Vocab(std::vector<std::string> words, std::vector<std::string> time_tokens);

  std::size_t size() const { return tokens_.size(); }
  std::span<const std::string> tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<TokenId> find(std::string_view token) const;

  TokenId time_begin() const { return time_begin_; }
  TokenId time_end() const { return static_cast<TokenId>(tokens_.size()); }
  std::size_t num_time_tokens() const { return static_cast<std::size_t>(time_end() - time_begin_); }
  std::size_t num_word_tokens() const { return static_cast<std::size_t>(time_begin_ - num_special); }

  bool is_time(TokenId id) const { return id >= time_begin_ && id < time_end(); }
  bool is_special(TokenId id) const { return id >= 0 && id < num_special && id != inverse; }

  /// Words and time tokens as stored (for checkpoint headers).
  std::vector<std::string> words() const;
  std::vector<std::string> time_tokens() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  TokenId time_begin_ = num_special;
};

/// Every token verbalize() can produce over `g` and `templates`, plus one time
/// token per time index.
Vocab build_vocab(const Tkg& g, const TemplateTable& templates);

struct Span {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// Three framed segments, `[CLS] ... [SEP]` each, concatenated in the order
/// relation, description_s, description_o.
struct TokenizedSentence {
  std::vector<TokenId> ids;
  std::vector<int> time_positions;
  std::array<Span, 3> segments;
  TimeIndex earliest_time = 0;

  std::span<const TokenId> segment_ids(Segment s) const {
    const auto& sp = segments[static_cast<std::size_t>(s)];
    return std::span<const TokenId>(ids).subspan(static_cast<std::size_t>(sp.begin), static_cast<std::size_t>(sp.size()));
  }
};

enum class UnknownTokens { error, map_to_unk };

struct TokenizeOptions {
  int max_length = 128;
  UnknownTokens unknown = UnknownTokens::error;
};

/// Sentences longer than max_length lose path tokens from the end first,
/// then description tokens; target tokens are never dropped.
/// Throws TokenizeError on out-of-vocabulary tokens (unless mapped to [UNK])
/// and LengthError when even the target segment does not fit.
TokenizedSentence tokenize(const StructuredSentence& sentence, const Vocab& vocab, const TokenizeOptions& opts = {});

enum class ReplaceKind : std::uint8_t { mask, random, keep };

struct MaskedSample {
  std::vector<TokenId> input;
  std::vector<int> positions;
  std::vector<TokenId> labels;
  std::vector<ReplaceKind> kinds;
};

struct MaskRatios {
  double p_time = 0.25;
  double p_total = 0.15;
};

struct MaskBudget {
  std::size_t time = 0;
  std::size_t total = 0;
};

/// k_time = max(1, ceil(p_time * m)) for m > 0; total = max(k_time, round(p_total * q)).
MaskBudget time_mask_budget(std::size_t q, std::size_t m, const MaskRatios& ratios = {});

/// Force-masks a quota of time tokens, then samples ordinary tokens until the
/// total budget is reached (80% [MASK], 10% random token, 10% unchanged).
/// Framing tokens are never sampled.
MaskedSample time_mask(const TokenizedSentence& ts, const Vocab& vocab, const MaskRatios& ratios, Rng& rng);

/// Ordinary masked-LM sampling: round(p_total * q) positions, time tokens
/// treated like any other token.
MaskedSample random_mask(const TokenizedSentence& ts, const Vocab& vocab, double p_total, Rng& rng);

struct CorpusConfig {
  int max_sentences = 2;
  BundleConfig bundle;
  TokenizeOptions tokenize;
  /// Also emit sentences for the inverse-direction target of every edge.
  bool include_inverse = false;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Tokenised sentences for every edge, in edge order. Output is independent
/// of the thread count.
std::vector<TokenizedSentence> build_pretraining_corpus(const Tkg& g, const Vocab& vocab,
                                                        const TemplateTable& templates, const CorpusConfig& cfg);

/// One record per line: {tokens, time_positions, segments}. Returns the number
/// of records. Output is independent of the thread count.
std::size_t emit_pretraining_corpus(const Tkg& g, const Vocab& vocab, const TemplateTable& templates,
                                    const CorpusConfig& cfg, std::ostream& sink);

std::string corpus_record(const TokenizedSentence& ts, const Vocab& vocab);
TokenizedSentence parse_corpus_record(std::string_view line, const Vocab& vocab,
                                      UnknownTokens unknown = UnknownTokens::error);
std::vector<TokenizedSentence> read_corpus(std::istream& in, const Vocab& vocab,
                                           UnknownTokens unknown = UnknownTokens::error);

}  // namespace tempkg
