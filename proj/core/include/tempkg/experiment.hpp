#pragma once

// End-to-end runs: corpus -> masked-LM pretraining -> joint scoring training
// -> ranking evaluation, plus the per-epoch masking ablation curve.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tempkg/corpus.hpp"
#include "tempkg/encoder.hpp"
#include "tempkg/evaluation.hpp"
#include "tempkg/scoring.hpp"

namespace tempkg {

struct ExperimentConfig {
  CorpusConfig corpus;
  /// vocab_size is filled from the graph.
  EncoderConfig encoder;
  PretrainHyper pretrain;
  TrainHyper train;
  ScoringOptions scoring;
  QuestionOptions questions;
  unsigned threads = 1;
  /// Every stage seed is derived from this one.
  std::uint64_t seed = 0;
};

/// Settings used by the planted-rule experiments.
ExperimentConfig desk_experiment_defaults();

/// Applies `seed` to every stage of `cfg`.
ExperimentConfig with_seed(ExperimentConfig cfg, std::uint64_t seed);

struct ExperimentResult {
  std::vector<double> pretrain_loss;
  std::vector<double> train_loss;
  Metrics metrics;
};

/// Pretrains an encoder on `g` and returns it with the vocabulary.
Model pretrained_model(const Tkg& g, const TemplateTable& templates, const ExperimentConfig& cfg,
                       std::vector<double>* loss = nullptr, const EpochCallback& on_epoch = {});

/// Trains scoring on `g` starting from `model` and evaluates on `queries`.
ExperimentResult finetune_and_evaluate(const Tkg& g, std::span<const Quadruple> queries, const TemplateTable& templates,
                                       Model model, const ExperimentConfig& cfg);

ExperimentResult run_experiment(const Tkg& g, std::span<const Quadruple> queries, const TemplateTable& templates,
                                const ExperimentConfig& cfg);

struct CurveRow {
  std::string variant;
  std::uint64_t seed = 0;
  int epoch = 0;
  double mrr = 0.0;
};

/// For each masking mode and seed: snapshot the encoder after every
/// pretraining epoch (and before the first), fine-tune from each snapshot and
/// record the MRR.
std::vector<CurveRow> masking_curve(const Tkg& g, std::span<const Quadruple> queries, const TemplateTable& templates,
                                    const ExperimentConfig& base, std::span<const std::uint64_t> seeds);

}  // namespace tempkg
