#pragma once

// A small single-head transformer encoder (no normalisation layers) with a
// masked-LM head tied to the token embeddings, GELU feed-forward blocks and
// hand-derived gradients.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tempkg/corpus.hpp"
#include "tempkg/rng.hpp"

namespace tempkg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

struct EncoderConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 1;
  int max_positions = 128;
  double init_scale = 0.02;
  std::uint64_t rng_seed = 0;

  /// Throws ContractViolation.
  void validate() const;
};

struct EncoderLayer {
  Matrix wq, wk, wv;
  Matrix w1;  // d x 2d
  Matrix b1;  // 1 x 2d
  Matrix w2;  // 2d x d
  Matrix b2;  // 1 x d
};

/// Also used, zero-filled, as the gradient accumulator of the same shape.
struct EncoderParams {
  EncoderConfig config;
  /// Token embeddings; also the MLM output weights.
  Matrix embedding;
  std::vector<EncoderLayer> layers;
  Matrix mlm_bias;  // 1 x vocab

  EncoderParams zeros_like() const;
};

/// Named views of every tensor, in a fixed order (checkpoints, optimiser).
std::vector<std::pair<std::string, Matrix*>> tensors(EncoderParams& p);
std::vector<std::pair<std::string, const Matrix*>> tensors(const EncoderParams& p);

EncoderParams init_encoder(const EncoderConfig& cfg);

/// Sinusoidal position table, rows 0..q-1.
Matrix position_table(int q, int d_model);

struct HiddenStates {
  Matrix h;
  RowVector cls() const { return h.row(0); }
};

/// Intermediate activations kept for the backward pass.
struct EncodeTrace {
  std::vector<TokenId> tokens;
  struct Layer {
    Matrix x, q, k, v, attn, z, pre;
  };
  std::vector<Layer> layers;
  Matrix out;
};

/// Throws LengthError when the input exceeds max_positions, LookupError on
/// ids outside the vocabulary.
HiddenStates encode(const EncoderParams& p, std::span<const TokenId> tokens);
EncodeTrace encode_traced(const EncoderParams& p, std::span<const TokenId> tokens);

/// Attention matrix of layer `layer` (for inspection and tests).
Matrix attention(const EncoderParams& p, std::span<const TokenId> tokens, int layer = 0);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(H).
void encode_backward(const EncoderParams& p, const EncodeTrace& trace, const Matrix& d_out, EncoderParams& grads);

/// Mean cross-entropy of the masked positions; gradients accumulated into
/// `grads`. Throws ContractViolation when the sample has no positions.
double mlm_forward_backward(const EncoderParams& p, const MaskedSample& sample, EncoderParams& grads);

/// Loss only.
double mlm_loss(const EncoderParams& p, const MaskedSample& sample);

/// Adam with decoupled weight decay over an ordered tensor list.
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  explicit AdamW(Options opts) : opts_(opts) {}

  /// `params` and `grads` must list same-shaped tensors in the same order on
  /// every call.
  void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads);
  long steps() const { return t_; }

 private:
  Options opts_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

enum class MaskMode { time, random };
MaskMode parse_mask_mode(std::string_view text);
std::string_view to_string(MaskMode m);

struct PretrainHyper {
  double lr = 1e-3;
  int epochs = 10;
  /// Sentences per optimiser step.
  int batch = 8;
  double weight_decay = 0.01;
  MaskMode mask_mode = MaskMode::time;
  MaskRatios ratios;
  std::uint64_t seed = 0;
};

/// The large-scale recipe (batch 8 with 32-step accumulation, 10 epochs);
/// recorded for reference, not run at desk scale.
PretrainHyper paper_scale_pretrain_hyper();

struct PretrainResult {
  EncoderParams params;
  std::vector<double> epoch_loss;
};

/// Called after every completed epoch (1-based) with the current parameters.
using EpochCallback = std::function<void(int epoch, const EncoderParams&)>;

/// Masks are drawn afresh every epoch from (seed, epoch, sentence index)
/// streams. Throws ContractViolation on an empty corpus and DivergenceError
/// on a non-finite loss.
PretrainResult pretrain(EncoderParams params, std::span<const TokenizedSentence> corpus, const Vocab& vocab,
                        const PretrainHyper& hyper, const EpochCallback& on_epoch = {});

/// Maximum relative error, |analytic - numeric| / max(1, |analytic|), of the
/// MLM gradient against central finite differences.
double grad_check(const EncoderParams& p, const MaskedSample& sample, double eps = 1e-4);

/// Generic central-difference checker over named tensors. `loss` is evaluated
/// after each perturbation; `analytic` lists the matching gradients.
double finite_difference_error(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& analytic,
                               const std::function<double()>& loss, double eps);

}  // namespace tempkg
