#include "tempkg/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tempkg/errors.hpp"

namespace tempkg {

namespace {

// Tanh approximation of GELU.
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v))); });
}

Matrix gelu_derivative(const Matrix& x) {
  return x.unaryExpr([](double v) {
    const double th = std::tanh(kGeluC * (v + 0.044715 * v * v * v));
    return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
  });
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * dist(rng);
  return m;
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

std::vector<Matrix*> tensor_ptrs(EncoderParams& p) {
  std::vector<Matrix*> out;
  for (auto& [name, t] : tensors(p)) out.push_back(t);
  return out;
}

std::vector<const Matrix*> tensor_ptrs(const EncoderParams& p) {
  std::vector<const Matrix*> out;
  for (auto& [name, t] : tensors(p)) out.push_back(t);
  return out;
}

/// Rows 0..q-1 of the position table, from a per-thread cache.
const Matrix& cached_positions(int q, int d_model) {
  thread_local Matrix table;
  thread_local int table_d = -1;
  if (table_d != d_model || table.rows() < q) {
    table = position_table(std::max<int>(q, static_cast<int>(table.rows())), d_model);
    table_d = d_model;
  }
  return table;
}

void check_tokens(const EncoderParams& p, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw ContractViolation("encode requires at least one token");
  if (static_cast<int>(tokens.size()) > p.config.max_positions)
    throw LengthError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_positions " +
                      std::to_string(p.config.max_positions));
  for (auto t : tokens)
    if (t < 0 || t >= p.embedding.rows()) throw LookupError("token id " + std::to_string(t) + " outside vocabulary");
}

/// Row-wise log-softmax cross-entropy for the sampled positions.
struct MlmHead {
  Matrix hidden;  // k x d, rows of H at the sampled positions
  Matrix probs;   // k x V
  double loss = 0.0;
};

MlmHead mlm_head(const EncoderParams& p, const Matrix& h, const MaskedSample& sample) {
  const auto k = static_cast<Eigen::Index>(sample.positions.size());
  MlmHead head;
  head.hidden.resize(k, h.cols());
  for (Eigen::Index i = 0; i < k; ++i) head.hidden.row(i) = h.row(sample.positions[static_cast<std::size_t>(i)]);
  head.probs = head.hidden * p.embedding.transpose();
  head.probs.rowwise() += p.mlm_bias.row(0);
  for (Eigen::Index i = 0; i < k; ++i) {
    auto row = head.probs.row(i);
    double mx = row.maxCoeff();
    row.array() -= mx;
    double lse = std::log(row.array().exp().sum());
    head.loss -= row(sample.labels[static_cast<std::size_t>(i)]) - lse;
    row = row.array().exp().matrix() / std::exp(lse);
  }
  head.loss /= double(k);
  return head;
}

void check_sample(const EncoderParams& p, const MaskedSample& sample) {
  if (sample.positions.empty()) throw ContractViolation("masked sample has no sampled positions");
  if (sample.positions.size() != sample.labels.size())
    throw ContractViolation("masked sample positions and labels differ in length");
  for (std::size_t i = 0; i < sample.positions.size(); ++i) {
    auto pos = sample.positions[i];
    if (pos < 0 || static_cast<std::size_t>(pos) >= sample.input.size())
      throw ContractViolation("masked position outside the sentence");
    if (sample.labels[i] < 0 || sample.labels[i] >= p.embedding.rows())
      throw ContractViolation("masked label outside the vocabulary");
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < 1 || d_model < 2 || n_layers < 1 || max_positions < 1)
    throw ContractViolation("encoder sizes must be positive");
  if (d_model % 2 != 0) throw ContractViolation("d_model must be even");
  if (!(init_scale >= 0.0)) throw ContractViolation("init_scale must be non-negative");
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z = *this;
  for (auto* t : tensor_ptrs(z)) t->setZero();
  return z;
}

std::vector<std::pair<std::string, Matrix*>> tensors(EncoderParams& p) {
  std::vector<std::pair<std::string, Matrix*>> out{{"embedding", &p.embedding}};
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto prefix = "layer" + std::to_string(l) + ".";
    auto& L = p.layers[l];
    out.insert(out.end(), {{prefix + "wq", &L.wq},
                           {prefix + "wk", &L.wk},
                           {prefix + "wv", &L.wv},
                           {prefix + "w1", &L.w1},
                           {prefix + "b1", &L.b1},
                           {prefix + "w2", &L.w2},
                           {prefix + "b2", &L.b2}});
  }
  out.emplace_back("mlm_bias", &p.mlm_bias);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> tensors(const EncoderParams& p) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, t] : tensors(const_cast<EncoderParams&>(p))) out.emplace_back(name, t);
  return out;
}

EncoderParams init_encoder(const EncoderConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.rng_seed);
  const Eigen::Index d = cfg.d_model, v = cfg.vocab_size;
  const double s = cfg.init_scale;
  EncoderParams p;
  p.config = cfg;
  p.embedding = normal_matrix(v, d, s, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    EncoderLayer L;
    L.wq = normal_matrix(d, d, s, rng);
    L.wk = normal_matrix(d, d, s, rng);
    L.wv = normal_matrix(d, d, s, rng);
    L.w1 = normal_matrix(d, 2 * d, s, rng);
    L.b1 = Matrix::Zero(1, 2 * d);
    L.w2 = normal_matrix(2 * d, d, s, rng);
    L.b2 = Matrix::Zero(1, d);
    p.layers.push_back(std::move(L));
  }
  p.mlm_bias = Matrix::Zero(1, v);
  return p;
}

Matrix position_table(int q, int d_model) {
  Matrix pe(q, d_model);
  for (int pos = 0; pos < q; ++pos) {
    for (int i = 0; i < d_model / 2; ++i) {
      double angle = pos / std::pow(10000.0, 2.0 * i / d_model);
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

EncodeTrace encode_traced(const EncoderParams& p, std::span<const TokenId> tokens) {
  check_tokens(p, tokens);
  const auto q = static_cast<Eigen::Index>(tokens.size());
  const double scale = 1.0 / std::sqrt(double(p.config.d_model));

  EncodeTrace tr;
  tr.tokens.assign(tokens.begin(), tokens.end());
  Matrix h = cached_positions(static_cast<int>(q), p.config.d_model).topRows(q);
  for (Eigen::Index i = 0; i < q; ++i) h.row(i) += p.embedding.row(tokens[static_cast<std::size_t>(i)]);

  for (const auto& L : p.layers) {
    EncodeTrace::Layer t;
    t.x = h;
    t.q = h * L.wq;
    t.k = h * L.wk;
    t.v = h * L.wv;
    t.attn = (t.q * t.k.transpose()) * scale;
    softmax_rows(t.attn);
    t.z = h + t.attn * t.v;
    t.pre = t.z * L.w1;
    t.pre.rowwise() += L.b1.row(0);
    h = t.z + gelu(t.pre) * L.w2;
    h.rowwise() += L.b2.row(0);
    tr.layers.push_back(std::move(t));
  }
  tr.out = std::move(h);
  return tr;
}

HiddenStates encode(const EncoderParams& p, std::span<const TokenId> tokens) {
  return HiddenStates{encode_traced(p, tokens).out};
}

Matrix attention(const EncoderParams& p, std::span<const TokenId> tokens, int layer) {
  auto tr = encode_traced(p, tokens);
  return tr.layers.at(static_cast<std::size_t>(layer)).attn;
}

void encode_backward(const EncoderParams& p, const EncodeTrace& tr, const Matrix& d_out, EncoderParams& grads) {
  const double scale = 1.0 / std::sqrt(double(p.config.d_model));
  Matrix dh = d_out;
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& L = p.layers[li];
    const auto& t = tr.layers[li];
    auto& G = grads.layers[li];

    // Feed-forward block.
    G.w2.noalias() += gelu(t.pre).transpose() * dh;
    G.b2 += dh.colwise().sum();
    Matrix d_pre = (dh * L.w2.transpose()).cwiseProduct(gelu_derivative(t.pre));
    G.w1.noalias() += t.z.transpose() * d_pre;
    G.b1 += d_pre.colwise().sum();
    Matrix dz = dh + d_pre * L.w1.transpose();

    // Attention block.
    Matrix dx = dz;
    Matrix d_attn = dz * t.v.transpose();
    Matrix dv = t.attn.transpose() * dz;
    Eigen::VectorXd row_dot = d_attn.cwiseProduct(t.attn).rowwise().sum();
    Matrix ds = t.attn.cwiseProduct(d_attn - row_dot.replicate(1, d_attn.cols())) * scale;
    Matrix dq = ds * t.k;
    Matrix dk = ds.transpose() * t.q;
    G.wq.noalias() += t.x.transpose() * dq;
    G.wk.noalias() += t.x.transpose() * dk;
    G.wv.noalias() += t.x.transpose() * dv;
    dx.noalias() += dq * L.wq.transpose();
    dx.noalias() += dk * L.wk.transpose();
    dx.noalias() += dv * L.wv.transpose();
    dh = std::move(dx);
  }
  for (std::size_t i = 0; i < tr.tokens.size(); ++i) grads.embedding.row(tr.tokens[i]) += dh.row(static_cast<Eigen::Index>(i));
}

double mlm_forward_backward(const EncoderParams& p, const MaskedSample& sample, EncoderParams& grads) {
  check_sample(p, sample);
  auto tr = encode_traced(p, sample.input);
  auto head = mlm_head(p, tr.out, sample);
  const auto k = static_cast<Eigen::Index>(sample.positions.size());

  Matrix d_logits = head.probs;
  for (Eigen::Index i = 0; i < k; ++i) d_logits(i, sample.labels[static_cast<std::size_t>(i)]) -= 1.0;
  d_logits /= double(k);

  grads.mlm_bias += d_logits.colwise().sum();
  grads.embedding.noalias() += d_logits.transpose() * head.hidden;
  Matrix d_hidden = d_logits * p.embedding;
  Matrix d_out = Matrix::Zero(tr.out.rows(), tr.out.cols());
  for (Eigen::Index i = 0; i < k; ++i) d_out.row(sample.positions[static_cast<std::size_t>(i)]) += d_hidden.row(i);
  encode_backward(p, tr, d_out, grads);
  return head.loss;
}

double mlm_loss(const EncoderParams& p, const MaskedSample& sample) {
  check_sample(p, sample);
  return mlm_head(p, encode(p, sample.input).h, sample).loss;
}

void AdamW::step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads) {
  if (params.size() != grads.size()) throw ContractViolation("optimiser parameter/gradient lists differ");
  if (m_.empty()) {
    for (auto* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (m_.size() != params.size()) throw ContractViolation("optimiser tensor list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, double(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = *grads[i];
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * g;
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * g.cwiseAbs2();
    if (opts_.weight_decay > 0.0) p *= 1.0 - opts_.lr * opts_.weight_decay;
    p.array() -= opts_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opts_.eps);
  }
}

MaskMode parse_mask_mode(std::string_view text) {
  if (text == "time") return MaskMode::time;
  if (text == "random") return MaskMode::random;
  throw ValidationError("unknown mask mode '" + std::string(text) + "' (expected time|random)");
}

std::string_view to_string(MaskMode m) { return m == MaskMode::time ? "time" : "random"; }

PretrainHyper paper_scale_pretrain_hyper() {
  PretrainHyper h;
  h.lr = 5e-4;
  h.epochs = 10;
  h.batch = 8 * 32;
  return h;
}

PretrainResult pretrain(EncoderParams params, std::span<const TokenizedSentence> corpus, const Vocab& vocab,
                        const PretrainHyper& hyper, const EpochCallback& on_epoch) {
  if (corpus.empty()) throw ContractViolation("pretraining corpus is empty");
  if (hyper.batch < 1 || hyper.epochs < 0) throw ContractViolation("batch must be positive and epochs non-negative");

  PretrainResult result{std::move(params), {}};
  AdamW opt({hyper.lr, 0.9, 0.999, 1e-8, hyper.weight_decay});
  auto grads = result.params.zeros_like();
  auto param_list = tensor_ptrs(result.params);
  auto grad_list = tensor_ptrs(std::as_const(grads));

  std::vector<std::size_t> order(corpus.size());
  std::size_t step = 0;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = derive_stream(hyper.seed, {0x5eedULL, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double total = 0.0;
    std::size_t in_batch = 0;
    auto flush = [&] {
      if (in_batch == 0) return;
      for (auto* g : tensor_ptrs(grads)) *g /= double(in_batch);
      opt.step(param_list, grad_list);
      for (auto* g : tensor_ptrs(grads)) g->setZero();
      in_batch = 0;
      ++step;
    };
    for (std::size_t idx : order) {
      Rng rng = derive_stream(hyper.seed, {static_cast<std::uint64_t>(epoch), idx});
      const auto& ts = corpus[idx];
      MaskedSample sample = hyper.mask_mode == MaskMode::time ? time_mask(ts, vocab, hyper.ratios, rng)
                                                              : random_mask(ts, vocab, hyper.ratios.p_total, rng);
      double loss = mlm_forward_backward(result.params, sample, grads);
      if (!std::isfinite(loss)) throw DivergenceError(epoch, step, "non-finite masked-LM loss");
      total += loss;
      if (++in_batch == static_cast<std::size_t>(hyper.batch)) flush();
    }
    flush();
    result.epoch_loss.push_back(total / double(corpus.size()));
    if (on_epoch) on_epoch(epoch, result.params);
  }
  return result;
}

double finite_difference_error(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& analytic,
                               const std::function<double()>& loss, double eps) {
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = *params[t];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      double saved = m.data()[i];
      m.data()[i] = saved + eps;
      double up = loss();
      m.data()[i] = saved - eps;
      double down = loss();
      m.data()[i] = saved;
      double numeric = (up - down) / (2.0 * eps);
      double a = analytic[t]->data()[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

double grad_check(const EncoderParams& p, const MaskedSample& sample, double eps) {
  auto work = p;
  auto grads = p.zeros_like();
  mlm_forward_backward(work, sample, grads);
  return finite_difference_error(tensor_ptrs(work), tensor_ptrs(std::as_const(grads)),
                                 [&] { return mlm_loss(work, sample); }, eps);
}

}  // namespace tempkg
