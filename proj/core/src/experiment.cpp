#include "tempkg/experiment.hpp"

#include "tempkg/errors.hpp"

namespace tempkg {

ExperimentConfig desk_experiment_defaults() {
  ExperimentConfig c;
  c.corpus.max_sentences = 2;
  c.encoder.d_model = 64;
  c.encoder.n_layers = 1;
  c.encoder.max_positions = 128;
  c.pretrain.epochs = 20;
  c.pretrain.lr = 2e-3;
  c.pretrain.batch = 8;
  c.train.epochs = 20;
  c.train.negatives = 3;
  c.train.max_sentences = 5;
  c.train.lr = 2e-3;
  c.scoring.max_sentences = 5;
  c.scoring.bundle.paths.walks = 256;
  c.questions.num_negatives = 49;
  return c;
}

ExperimentConfig with_seed(ExperimentConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.corpus.seed = mix64(seed ^ 0x1);
  cfg.encoder.rng_seed = mix64(seed ^ 0x2);
  cfg.pretrain.seed = mix64(seed ^ 0x3);
  cfg.train.seed = mix64(seed ^ 0x4);
  cfg.questions.seed = mix64(seed ^ 0x5);
  return cfg;
}

Model pretrained_model(const Tkg& g, const TemplateTable& templates, const ExperimentConfig& cfg,
                       std::vector<double>* loss, const EpochCallback& on_epoch) {
  Model m;
  m.vocab = build_vocab(g, templates);
  m.options = cfg.scoring;
  auto ecfg = cfg.encoder;
  ecfg.vocab_size = static_cast<int>(m.vocab.size());
  m.encoder = init_encoder(ecfg);
  m.scoring = init_scoring(ecfg.d_model, ecfg.init_scale, mix64(cfg.seed ^ 0x6));

  auto corpus_cfg = cfg.corpus;
  corpus_cfg.tokenize = cfg.scoring.tokenize;
  corpus_cfg.threads = cfg.threads;
  auto corpus = build_pretraining_corpus(g, m.vocab, templates, corpus_cfg);
  if (on_epoch) on_epoch(0, m.encoder);
  auto result = pretrain(std::move(m.encoder), corpus, m.vocab, cfg.pretrain, on_epoch);
  m.encoder = std::move(result.params);
  if (loss) *loss = std::move(result.epoch_loss);
  return m;
}

ExperimentResult finetune_and_evaluate(const Tkg& g, std::span<const Quadruple> queries, const TemplateTable& templates,
                                       Model model, const ExperimentConfig& cfg) {
  ExperimentResult r;
  model.options = cfg.scoring;
  auto trained = train(g, std::move(model), templates, cfg.train);
  r.train_loss = std::move(trained.epoch_loss);
  auto questions = make_questions(g, queries, cfg.questions);
  r.metrics = evaluate(trained.model, g, questions, templates, {mix64(cfg.seed ^ 0x7), cfg.threads});
  return r;
}

ExperimentResult run_experiment(const Tkg& g, std::span<const Quadruple> queries, const TemplateTable& templates,
                                const ExperimentConfig& cfg) {
  std::vector<double> pre_loss;
  auto model = pretrained_model(g, templates, cfg, &pre_loss);
  auto r = finetune_and_evaluate(g, queries, templates, std::move(model), cfg);
  r.pretrain_loss = std::move(pre_loss);
  return r;
}

std::vector<CurveRow> masking_curve(const Tkg& g, std::span<const Quadruple> queries, const TemplateTable& templates,
                                    const ExperimentConfig& base, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ContractViolation("the ablation curve needs at least one seed");
  std::vector<CurveRow> rows;
  for (MaskMode mode : {MaskMode::time, MaskMode::random}) {
    for (auto seed : seeds) {
      auto cfg = with_seed(base, seed);
      cfg.pretrain.mask_mode = mode;
      std::vector<Model> snapshots;
      Model proto;
      auto keep = [&](int, const EncoderParams& p) {
        Model m = proto;
        m.encoder = p;
        snapshots.push_back(std::move(m));
      };
      // The prototype supplies the vocabulary and scoring initialisation.
      proto = pretrained_model(g, templates, [&] { auto c = cfg; c.pretrain.epochs = 0; return c; }(), nullptr);
      pretrained_model(g, templates, cfg, nullptr, keep);
      for (std::size_t e = 0; e < snapshots.size(); ++e) {
        auto r = finetune_and_evaluate(g, queries, templates, snapshots[e], cfg);
        rows.push_back({std::string(to_string(mode)), seed, static_cast<int>(e), r.metrics.mrr});
      }
    }
  }
  return rows;
}

}  // namespace tempkg
