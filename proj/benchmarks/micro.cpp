#include <benchmark/benchmark.h>

#include "tempkg/benchmark_splitter.hpp"
#include "tempkg/corpus.hpp"
#include "tempkg/encoder.hpp"
#include "tempkg/scoring.hpp"
#include "tempkg/sentence_builder.hpp"
#include "tempkg/synthetic.hpp"

namespace tempkg {
namespace {

const PlantedRuleData& planted() {
  static const PlantedRuleData d = [] {
    PlantedRuleConfig c;
    c.entities = 200;
    c.timeline = 100;
    c.chains_per_step = 4;
    c.seed = 1;
    return make_planted_rule(c);
  }();
  return d;
}

std::vector<TokenId> random_tokens(int n, int vocab, Rng& rng) {
  std::vector<TokenId> t(static_cast<std::size_t>(n));
  for (auto& x : t) x = static_cast<TokenId>(6 + uniform_index(rng, static_cast<std::size_t>(vocab - 6)));
  return t;
}

void BM_Encode(benchmark::State& state) {
  EncoderConfig c;
  c.vocab_size = 500;
  c.d_model = static_cast<int>(state.range(0));
  c.n_layers = 2;
  auto p = init_encoder(c);
  Rng rng{3};
  auto tokens = random_tokens(static_cast<int>(state.range(1)), c.vocab_size, rng);
  for (auto _ : state) benchmark::DoNotOptimize(encode(p, tokens));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_Encode)->Args({32, 32})->Args({64, 64})->Args({64, 128})->Args({128, 128});

void BM_MlmStep(benchmark::State& state) {
  EncoderConfig c;
  c.vocab_size = 500;
  c.d_model = static_cast<int>(state.range(0));
  auto p = init_encoder(c);
  Rng rng{4};
  MaskedSample s;
  s.input = random_tokens(64, c.vocab_size, rng);
  for (int i = 0; i < 64; i += 7) {
    s.positions.push_back(i);
    s.labels.push_back(s.input[static_cast<std::size_t>(i)]);
    s.kinds.push_back(ReplaceKind::mask);
    s.input[static_cast<std::size_t>(i)] = 3;
  }
  auto grads = init_encoder(c);
  for (auto _ : state) benchmark::DoNotOptimize(mlm_forward_backward(p, s, grads));
}
BENCHMARK(BM_MlmStep)->Arg(32)->Arg(64);

void BM_ExtractPaths(benchmark::State& state) {
  const auto& d = planted();
  PathConfig cfg;
  cfg.walks = static_cast<int>(state.range(0));
  Rng rng{5};
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& q = d.queries[i++ % d.queries.size()];
    benchmark::DoNotOptimize(extract_paths(d.graph, q.subject, q.object, q.time.begin(), cfg, {}, rng));
  }
}
BENCHMARK(BM_ExtractPaths)->Arg(64)->Arg(256);

void BM_BuildBundle(benchmark::State& state) {
  const auto& d = planted();
  BundleConfig cfg;
  cfg.paths.walks = 64;
  Rng rng{6};
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& q = d.queries[i++ % d.queries.size()];
    benchmark::DoNotOptimize(build_bundle(d.graph, q, 3, {}, cfg, rng));
  }
}
BENCHMARK(BM_BuildBundle);

void BM_TimeMask(benchmark::State& state) {
  const auto& d = planted();
  Vocab v = build_vocab(d.graph, {});
  CorpusConfig cc;
  cc.bundle.paths.walks = 16;
  auto corpus = build_pretraining_corpus(d.graph, v, {}, cc);
  Rng rng{7};
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(time_mask(corpus[i++ % corpus.size()], v, {}, rng));
}
BENCHMARK(BM_TimeMask);

void BM_Aggregate(benchmark::State& state) {
  Rng rng{8};
  std::vector<SentenceScore> scores(static_cast<std::size_t>(state.range(0)));
  for (auto& s : scores) {
    s.p = uniform01(rng);
    s.t_rho = static_cast<TimeIndex>(uniform_index(rng, 100));
  }
  for (auto _ : state) benchmark::DoNotOptimize(aggregate(scores, TimeScope::point(100)));
}
BENCHMARK(BM_Aggregate)->Arg(3)->Arg(64);

void BM_SampleSplit(benchmark::State& state) {
  const auto& d = planted();
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_split(d.graph, {4, 6, 3, seed++}));
}
BENCHMARK(BM_SampleSplit)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace tempkg

BENCHMARK_MAIN();
