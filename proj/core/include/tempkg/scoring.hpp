#pragma once

// Sentence probabilities from segment [CLS] vectors and a learnable time
// encoding, recency-weighted aggregation into a quadruple score, negative
// sampling, the margin loss and joint training.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tempkg/corpus.hpp"
#include "tempkg/encoder.hpp"
#include "tempkg/kg_store.hpp"
#include "tempkg/rng.hpp"
#include "tempkg/sentence_builder.hpp"

namespace tempkg {

/// Projections use the row convention h = u W + b.
struct ScoringParams {
  Matrix ws, wr, wo;  // d x d
  Matrix bs, br, bo;  // 1 x d
  Matrix w_theta;     // 1 x d
  Matrix b_theta;     // 1 x 1
  Matrix omega, phi;  // 1 x d

  int dim() const { return static_cast<int>(ws.rows()); }
  ScoringParams zeros_like() const;
};

std::vector<std::pair<std::string, Matrix*>> tensors(ScoringParams& p);
std::vector<std::pair<std::string, const Matrix*>> tensors(const ScoringParams& p);

/// Projections start near the identity; the time encoding starts with unit
/// frequencies and random phases.
ScoringParams init_scoring(int d, double init_scale, std::uint64_t seed);

/// (omega_0 t + phi_0, sin(omega_1 t + phi_1), ..., sin(omega_{d-1} t + phi_{d-1})).
RowVector t2v(double t, const ScoringParams& p);

/// Time index divided by the axis span (1 when the span is empty).
double scaled_time(TimeIndex t, TimeIndex span);

/// t2v of the scaled time, averaged over both endpoints for intervals;
/// all-ones when `use_t2v` is false.
RowVector time_encoding(TimeScope time, TimeIndex span, const ScoringParams& p, bool use_t2v = true);

/// sigmoid(w_theta . (h_s * h_t + h_r - h_o * h_t) + b_theta).
double probability_from_projections(const RowVector& h_s, const RowVector& h_r, const RowVector& h_o,
                                    const RowVector& h_t, const RowVector& w_theta, double b_theta);

double sentence_probability(const RowVector& u_s, const RowVector& u_r, const RowVector& u_o, TimeScope time,
                            TimeIndex span, const ScoringParams& p, bool use_t2v = true);

struct SentenceScore {
  double p = 0.0;
  TimeIndex t_rho = 0;
  double weight = 0.0;
};

/// Recency weights: softmax of (t_rho - t) for points; for intervals, half
/// the softmax against the begin plus half against the end. Computed with the
/// largest exponent subtracted. Throws ContractViolation on an empty list.
std::vector<double> recency_weights(std::span<const TimeIndex> t_rho, TimeScope target);

/// Fills the weights and returns the weighted sum of probabilities.
double aggregate(std::span<SentenceScore> scores, TimeScope target);

enum class Corruption { either, head, tail };

/// Negative sampler with cached 3-hop neighbourhoods. Replacement entities
/// come from the intersection of both endpoints' neighbourhoods, widening to
/// the union and then to every entity when too few remain after removing
/// candidates that would form an existing edge.
class NegativeSampler {
 public:
  explicit NegativeSampler(const Tkg& g, int hops = 3);

  /// With `either`, a side that admits no corruption hands its draws to the
  /// other side. Throws SamplingError when no valid corruption exists.
  std::vector<Quadruple> sample(const Quadruple& positive, int n, Rng& rng, Corruption side = Corruption::either);

  /// The candidate pool a corruption of `side` starts from (before fallback).
  std::vector<EntityId> primary_pool(const Quadruple& positive) const;

  const std::vector<EntityId>& neighbors(EntityId e);

 private:
  std::vector<EntityId> valid_pool(const Quadruple& positive, bool head, std::size_t needed);

  const Tkg* g_;
  int hops_;
  std::vector<std::vector<EntityId>> cache_;
  std::vector<char> cached_;
};

std::vector<Quadruple> sample_negatives(const Tkg& g, const Quadruple& positive, int n, Rng& rng);

enum class LossConvention { plausibility, paper_literal };
LossConvention parse_loss_convention(std::string_view text);
std::string_view to_string(LossConvention c);

struct TrainHyper {
  double margin = 0.5;
  int negatives = 3;
  int max_sentences = 3;
  double lr = 2e-3;
  int epochs = 10;
  /// Positive edges per optimiser step.
  int batch = 8;
  double weight_decay = 0.0;
  LossConvention loss = LossConvention::plausibility;
  /// 0 gives uniform 1/n weights over negatives.
  double adversarial_temperature = 0.0;
  bool freeze_encoder = false;
  /// Positive edges visited per epoch; 0 visits every edge.
  std::size_t max_positives = 0;
  /// Restricts positives to these relations; empty uses every edge.
  std::vector<RelationId> positive_relations;
  std::uint64_t seed = 0;
};

struct LossValue {
  double loss = 0.0;
  double d_pos = 0.0;
  std::vector<double> d_neg;
};

/// Loss and its derivatives in f_pos and each f_neg. Adversarial weights are
/// treated as constants. Throws ContractViolation on an empty negative list.
LossValue training_loss(double f_pos, std::span<const double> f_neg, const TrainHyper& hyper);

/// Scoring-time switches shared by training and evaluation.
struct ScoringOptions {
  int max_sentences = 3;
  BundleConfig bundle;
  bool use_t2v = true;
  TokenizeOptions tokenize;
};

struct Model {
  Vocab vocab;
  EncoderParams encoder;
  ScoringParams scoring;
  ScoringOptions options;
};

struct ModelGrads {
  EncoderParams encoder;
  ScoringParams scoring;
};

ModelGrads zero_grads(const Model& m);

/// Per-sentence probabilities and the aggregated score of one bundle.
struct BundleScore {
  std::vector<SentenceScore> sentences;
  double f = 0.0;
};

BundleScore score_bundle(const Model& m, const Tkg& g, const SentenceBundle& bundle);

/// A positive bundle with the bundles of its negatives.
struct TrainingExample {
  SentenceBundle positive;
  std::vector<SentenceBundle> negatives;
};

/// Builds the bundles of a positive edge and `hyper.negatives` corruptions.
TrainingExample make_example(const Model& m, const Tkg& g, EdgeId positive, const TrainHyper& hyper,
                             NegativeSampler& sampler, Rng& rng, const TemplateTable& templates);

/// Loss of one example; when `grads` is non-null, gradients are accumulated
/// into it (encoder gradients only when `with_encoder`).
double example_loss(const Model& m, const Tkg& g, const TrainingExample& ex, const TrainHyper& hyper,
                    ModelGrads* grads, bool with_encoder = true);

/// Max relative error of example_loss gradients against central differences
/// over scoring (and optionally encoder) parameters. Adversarial weights are
/// held at their unperturbed values, matching how training treats them.
double example_grad_check(const Model& m, const Tkg& g, const TrainingExample& ex, const TrainHyper& hyper,
                          double eps = 1e-4, bool with_encoder = true);

struct TrainResult {
  Model model;
  std::vector<double> epoch_loss;
};

using TrainCallback = std::function<void(int epoch, const Model&)>;

/// Deterministic per seed. Throws ContractViolation on an empty graph and
/// DivergenceError on a non-finite loss.
TrainResult train(const Tkg& g, Model model, const TemplateTable& templates, const TrainHyper& hyper,
                  const TrainCallback& on_epoch = {});

}  // namespace tempkg
