#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "graphs.hpp"
#include "sentences.hpp"
#include "tempkg/corpus.hpp"
#include "tempkg/errors.hpp"

namespace tempkg {
namespace {

using testing::point_graph;
using testing::random_tokenized;
using testing::toy_vocab;

TEST(Vocab, EmptyGraphHasOnlySpecials) {
  Vocab v = build_vocab(Tkg{}, TemplateTable{});
  EXPECT_EQ(v.size(), static_cast<std::size_t>(Vocab::num_special));
  EXPECT_EQ(v.num_time_tokens(), 0u);
  EXPECT_EQ(v.find("[CLS]"), Vocab::cls);
  EXPECT_EQ(v.find("[SEP]"), Vocab::sep);
  EXPECT_EQ(v.find("[MASK]"), Vocab::mask);
  EXPECT_EQ(v.find("[PAD]"), Vocab::pad);
  EXPECT_EQ(v.find(kInverseMarker), Vocab::inverse);
}

TEST(Vocab, ToyGraphWordCount) {
  Tkg g = point_graph({{"A", "r1", "B", 0}, {"B", "r2", "C", 2}}, 3);
  Vocab v = build_vocab(g, TemplateTable{});
  // A B C, the relation words, and the fallback words On , .
  EXPECT_EQ(v.num_word_tokens(), 3u + 2u + 3u);
  EXPECT_EQ(v.num_time_tokens(), 3u);
}

TEST(Vocab, TemplateWordsIncluded) {
  Tkg g = point_graph({{"A", "r1", "B", 0}}, 1);
  auto t = TemplateTable::parse("r1\t{s} praised {o} on {t} !\n", g);
  Vocab v = build_vocab(g, t);
  EXPECT_TRUE(v.find("praised"));
  EXPECT_TRUE(v.find("!"));
  EXPECT_FALSE(v.find("{s}"));
}

TEST(Vocab, TimeTokensContiguous) {
  Tkg g = point_graph({{"A", "r", "B", 0}}, 20);
  Vocab v = build_vocab(g, TemplateTable{});
  EXPECT_EQ(v.num_time_tokens(), 20u);
  for (TokenId id = 0; id < static_cast<TokenId>(v.size()); ++id)
    EXPECT_EQ(v.is_time(id), v.token(id).starts_with("[T:")) << v.token(id);
}

TEST(Vocab, DuplicateWordsRejected) { EXPECT_THROW(Vocab({"a", "a"}, {}), ValidationError); }

StructuredSentence sentence_with(const Tkg& g, EdgeId target_id, int n_paths_cap = 1) {
  Rng rng(1);
  auto b = build_bundle(g, g.edge(target_id), n_paths_cap, TemplateTable{}, {}, rng);
  return b.sentences.front();
}

Tkg figure_one_graph() {
  return point_graph(
      {{"s", "a", "m", 1}, {"m", "b", "o", 2}, {"s", "visit", "x", 3}, {"y", "visit", "o", 4}, {"s", "t", "o", 8}},
      10);
}

TEST(Tokenize, FigureOneStyleSentence) {
  Tkg g = figure_one_graph();
  Vocab v = build_vocab(g, TemplateTable{});
  auto s = sentence_with(g, 4);
  ASSERT_TRUE(s.path);
  ASSERT_EQ(s.path->hops(), 2u);
  ASSERT_TRUE(s.desc_s);
  ASSERT_TRUE(s.desc_o);
  auto ts = tokenize(s, v);
  EXPECT_EQ(ts.time_positions.size(), 5u);
  for (int p : ts.time_positions) EXPECT_TRUE(v.is_time(ts.ids[static_cast<std::size_t>(p)]));
}

TEST(Tokenize, FramingAndSegments) {
  Tkg g = point_graph({{"s", "r", "o", 4}}, 6);
  Vocab v = build_vocab(g, TemplateTable{});
  auto s = sentence_with(g, 0);
  ASSERT_FALSE(s.path);
  auto ts = tokenize(s, v);
  auto rel = ts.segment_ids(Segment::relation);
  const auto& words = s.segment(Segment::relation);
  ASSERT_EQ(rel.size(), words.size() + 2);
  EXPECT_EQ(rel.front(), Vocab::cls);
  EXPECT_EQ(rel.back(), Vocab::sep);
  for (std::size_t i = 0; i < words.size(); ++i) EXPECT_EQ(v.token(rel[i + 1]), words[i]);
  EXPECT_EQ(ts.segment_ids(Segment::subject).size(), 2u);
  EXPECT_EQ(ts.segment_ids(Segment::object).size(), 2u);
  EXPECT_EQ(ts.segments[2].end, static_cast<int>(ts.ids.size()));
}

TEST(Tokenize, FourTimeMentions) {
  StructuredSentence s;
  s.segments[0] = {"[T:0]", "x", "[T:1]"};
  s.segments[1] = {"[T:2]"};
  s.segments[2] = {"y", "[T:3]"};
  s.target_length = 3;
  auto ts = tokenize(s, Vocab({"x", "y"}, {"[T:0]", "[T:1]", "[T:2]", "[T:3]"}));
  EXPECT_EQ(ts.time_positions.size(), 4u);
}

TEST(Tokenize, OutOfVocabulary) {
  StructuredSentence s;
  s.segments[0] = {"x", "nope"};
  s.target_length = 2;
  Vocab v({"x"}, {});
  EXPECT_THROW(tokenize(s, v), TokenizeError);
  TokenizeOptions opts;
  opts.unknown = UnknownTokens::map_to_unk;
  auto ts = tokenize(s, v, opts);
  EXPECT_EQ(ts.ids[2], Vocab::unk);
}

TEST(Tokenize, TruncationDropsPathThenDescriptions) {
  StructuredSentence s;
  s.segments[0] = {"t1", "t2", "p1", "p2", "p3"};
  s.target_length = 2;
  s.segments[1] = {"d1", "d2"};
  s.segments[2] = {"e1", "e2"};
  Vocab v({"t1", "t2", "p1", "p2", "p3", "d1", "d2", "e1", "e2"}, {});
  TokenizeOptions opts;
  opts.max_length = 12;  // 15 tokens in full; the path loses all three
  auto ts = tokenize(s, v, opts);
  EXPECT_EQ(static_cast<int>(ts.ids.size()), opts.max_length);
  EXPECT_EQ(ts.segment_ids(Segment::relation).size(), 4u);
  EXPECT_EQ(ts.segment_ids(Segment::subject).size(), 4u);

  opts.max_length = 9;  // then desc_o goes, then one desc_s token
  ts = tokenize(s, v, opts);
  EXPECT_EQ(ts.segment_ids(Segment::relation).size(), 4u);
  EXPECT_EQ(ts.segment_ids(Segment::object).size(), 2u);
  EXPECT_EQ(ts.segment_ids(Segment::subject).size(), 3u);

  opts.max_length = 7;
  EXPECT_THROW(tokenize(s, v, opts), LengthError);
}

TEST(TimeMaskBudget, WorkedExample) {
  auto b = time_mask_budget(40, 4);
  EXPECT_EQ(b.time, 1u);
  EXPECT_EQ(b.total, 6u);
}

TEST(TimeMaskBudget, Rounding) {
  EXPECT_EQ(time_mask_budget(40, 0).time, 0u);
  EXPECT_EQ(time_mask_budget(40, 5).time, 2u);
  EXPECT_EQ(time_mask_budget(40, 8).time, 2u);
  EXPECT_EQ(time_mask_budget(10, 0).total, 2u);  // 1.5 rounds half up
  EXPECT_EQ(time_mask_budget(12, 12).total, 3u);
}

TEST(TimeMask, WorkedExampleCounts) {
  Vocab v = toy_vocab(30, 10);
  Rng rng(4);
  auto ts = random_tokenized(v, 40, 4, rng);
  auto s = time_mask(ts, v, {}, rng);
  ASSERT_EQ(s.positions.size(), 6u);
  int time_sampled = 0;
  for (int p : s.positions) time_sampled += v.is_time(ts.ids[static_cast<std::size_t>(p)]);
  EXPECT_EQ(time_sampled, 1);
}

TEST(TimeMask, NoTimeTokensIsOrdinaryMlm) {
  Vocab v = toy_vocab(30, 10);
  Rng rng(4);
  auto ts = random_tokenized(v, 40, 0, rng);
  auto s = time_mask(ts, v, {}, rng);
  EXPECT_EQ(s.positions.size(), 6u);
}

TEST(TimeMask, LawsOnRandomSentences) {
  Vocab v = toy_vocab(50, 30);
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    int q = 10 + static_cast<int>(uniform_index(rng, 119));
    int m = static_cast<int>(uniform_index(rng, 13));
    m = std::min(m, q - 6);
    auto ts = random_tokenized(v, q, m, rng);
    auto s = time_mask(ts, v, {}, rng);
    auto budget = time_mask_budget(ts.ids.size(), ts.time_positions.size());
    ASSERT_EQ(s.positions.size(), budget.total);
    std::size_t time_count = 0;
    std::vector<TokenId> restored = s.input;
    for (std::size_t i = 0; i < s.positions.size(); ++i) {
      auto p = static_cast<std::size_t>(s.positions[i]);
      EXPECT_NE(ts.ids[p], Vocab::cls);
      EXPECT_NE(ts.ids[p], Vocab::sep);
      EXPECT_EQ(s.labels[i], ts.ids[p]);
      if (v.is_time(ts.ids[p])) {
        ++time_count;
        EXPECT_EQ(s.kinds[i], ReplaceKind::mask);
        EXPECT_EQ(s.input[p], Vocab::mask);
      }
      restored[p] = s.labels[i];
    }
    std::size_t words = 0;
    for (auto id : ts.ids) words += !v.is_time(id) && id != Vocab::cls && id != Vocab::sep;
    // A shortfall of ordinary tokens is covered by further time tokens.
    EXPECT_EQ(time_count, std::max(budget.time, budget.total - std::min(words, budget.total)));
    EXPECT_EQ(restored, ts.ids);
    EXPECT_TRUE(std::is_sorted(s.positions.begin(), s.positions.end()));
    for (std::size_t p = 0; p < ts.ids.size(); ++p) {
      bool in_t = std::binary_search(ts.time_positions.begin(), ts.time_positions.end(), static_cast<int>(p));
      EXPECT_EQ(in_t, v.is_time(ts.ids[p]));
    }
  }
}

TEST(TimeMask, TimeQuotaAboveBudgetStillMasked) {
  Vocab v = toy_vocab(10, 20);
  Rng rng(2);
  auto ts = random_tokenized(v, 10, 4, rng);
  auto s = time_mask(ts, v, {0.9, 0.05}, rng);  // k_time = 4 > round(0.5) = 1
  EXPECT_EQ(s.positions.size(), 4u);
  for (auto k : s.kinds) EXPECT_EQ(k, ReplaceKind::mask);
}

TEST(TimeMask, ReplacementFrequencies) {
  Vocab v = toy_vocab(40, 10);
  Rng rng(12);
  auto ts = random_tokenized(v, 60, 3, rng);
  std::array<int, 3> counts{};
  int n = 0;
  for (int i = 0; i < 10000; ++i) {
    auto s = time_mask(ts, v, {}, rng);
    for (std::size_t k = 0; k < s.positions.size(); ++k) {
      if (v.is_time(ts.ids[static_cast<std::size_t>(s.positions[k])])) continue;
      ++counts[static_cast<std::size_t>(s.kinds[k])];
      ++n;
    }
  }
  const std::array<double, 3> p{0.8, 0.1, 0.1};
  for (std::size_t k = 0; k < 3; ++k) {
    double sigma = std::sqrt(n * p[k] * (1 - p[k]));
    EXPECT_LT(std::abs(counts[k] - n * p[k]), 3 * sigma) << k;
  }
}

TEST(RandomMask, TreatsTimeTokensLikeWords) {
  Vocab v = toy_vocab(10, 10);
  Rng rng(3);
  auto ts = random_tokenized(v, 40, 20, rng);
  int time_hits = 0;
  for (int i = 0; i < 200; ++i) {
    auto s = random_mask(ts, v, 0.15, rng);
    EXPECT_EQ(s.positions.size(), 6u);
    for (int p : s.positions) time_hits += v.is_time(ts.ids[static_cast<std::size_t>(p)]);
  }
  // Roughly 20 of 34 content tokens are time tokens.
  EXPECT_GT(time_hits, 200 * 6 * 20 / 34 / 2);
}

TEST(CorpusRecord, RoundTrip) {
  Tkg g = figure_one_graph();
  Vocab v = build_vocab(g, TemplateTable{});
  auto ts = tokenize(sentence_with(g, 4), v);
  auto back = parse_corpus_record(corpus_record(ts, v), v);
  EXPECT_EQ(back.ids, ts.ids);
  EXPECT_EQ(back.time_positions, ts.time_positions);
  EXPECT_EQ(back.segments, ts.segments);
}

TEST(EmitCorpus, BoundsOnToyGraph) {
  std::vector<testing::EdgeSpec> edges;
  for (int i = 0; i < 10; ++i) edges.push_back({"n" + std::to_string(i % 5), "r", "n" + std::to_string((i + 1) % 5), i});
  Tkg g = point_graph(edges, 10);
  ASSERT_EQ(g.num_edges(), 10u);
  Vocab v = build_vocab(g, TemplateTable{});
  CorpusConfig cfg;
  cfg.max_sentences = 2;
  std::ostringstream out;
  auto n = emit_pretraining_corpus(g, v, TemplateTable{}, cfg, out);
  EXPECT_GE(n, 10u);
  EXPECT_LE(n, 20u);
  const std::string text = out.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), n);
}

TEST(EmitCorpus, EmptyGraph) {
  std::ostringstream out;
  EXPECT_EQ(emit_pretraining_corpus(Tkg{}, build_vocab(Tkg{}, TemplateTable{}), TemplateTable{}, {}, out), 0u);
  EXPECT_TRUE(out.str().empty());
}

TEST(EmitCorpus, DeterministicAndThreadIndependent) {
  Rng graphs(4);
  Tkg g = testing::random_graph(graphs, 30, 3, 120, 15);
  Vocab v = build_vocab(g, TemplateTable{});
  CorpusConfig cfg;
  cfg.seed = 77;
  std::ostringstream a, b, c;
  emit_pretraining_corpus(g, v, TemplateTable{}, cfg, a);
  emit_pretraining_corpus(g, v, TemplateTable{}, cfg, b);
  cfg.threads = 3;
  emit_pretraining_corpus(g, v, TemplateTable{}, cfg, c);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str(), c.str());

  std::istringstream in(a.str());
  auto corpus = read_corpus(in, v);
  const std::string text = a.str();
  EXPECT_EQ(corpus.size(), static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')));
}

TEST(EmitCorpus, InverseSentencesOptional) {
  Tkg g = figure_one_graph();
  Vocab v = build_vocab(g, TemplateTable{});
  CorpusConfig cfg;
  cfg.max_sentences = 1;
  auto plain = build_pretraining_corpus(g, v, TemplateTable{}, cfg);
  cfg.include_inverse = true;
  auto both = build_pretraining_corpus(g, v, TemplateTable{}, cfg);
  EXPECT_EQ(both.size(), 2 * plain.size());
}

TEST(EmitCorpus, FailedSinkIsIoError) {
  Tkg g = figure_one_graph();
  Vocab v = build_vocab(g, TemplateTable{});
  std::ostringstream out;
  out.setstate(std::ios::badbit);
  EXPECT_THROW(emit_pretraining_corpus(g, v, TemplateTable{}, {}, out), IoError);
}

}  // namespace
}  // namespace tempkg
