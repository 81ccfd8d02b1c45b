#include "tempkg/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tempkg/errors.hpp"

namespace tempkg {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

template <class P>
auto pointer_list(P& p) {
  using Ptr = decltype(tensors(p).front().second);
  std::vector<Ptr> out;
  for (auto& [name, t] : tensors(p)) out.push_back(t);
  return out;
}

/// Forward state of one sentence kept for the backward pass.
struct SentenceTrace {
  std::array<EncodeTrace, 3> seg;  // relation, subject, object
  RowVector hs, hr, ho, ht, inner;
  TimeScope time;
  double p = 0.0;
};

std::array<EncodeTrace, 3> encode_segments(const Model& m, const StructuredSentence& s) {
  auto ts = tokenize(s, m.vocab, m.options.tokenize);
  return {encode_traced(m.encoder, ts.segment_ids(Segment::relation)),
          encode_traced(m.encoder, ts.segment_ids(Segment::subject)),
          encode_traced(m.encoder, ts.segment_ids(Segment::object))};
}

SentenceTrace forward_sentence(const Model& m, const Tkg& g, const StructuredSentence& s) {
  const auto& P = m.scoring;
  SentenceTrace tr;
  tr.seg = encode_segments(m, s);
  RowVector ur = tr.seg[0].out.row(0), us = tr.seg[1].out.row(0), uo = tr.seg[2].out.row(0);
  tr.hs = us * P.ws + P.bs;
  tr.hr = ur * P.wr + P.br;
  tr.ho = uo * P.wo + P.bo;
  tr.time = s.target.time;
  tr.ht = time_encoding(tr.time, g.time_span(), P, m.options.use_t2v);
  tr.inner = tr.hs.cwiseProduct(tr.ht) + tr.hr - tr.ho.cwiseProduct(tr.ht);
  tr.p = sigmoid(P.w_theta.row(0).dot(tr.inner) + P.b_theta(0, 0));
  return tr;
}

void t2v_backward(double t, const ScoringParams& p, const RowVector& d_enc, double scale, ScoringParams& g) {
  const auto d = p.omega.cols();
  g.omega(0, 0) += scale * d_enc(0) * t;
  g.phi(0, 0) += scale * d_enc(0);
  for (Eigen::Index i = 1; i < d; ++i) {
    double c = std::cos(p.omega(0, i) * t + p.phi(0, i));
    g.omega(0, i) += scale * d_enc(i) * c * t;
    g.phi(0, i) += scale * d_enc(i) * c;
  }
}

void backward_sentence(const Model& m, const Tkg& g, const SentenceTrace& tr, double d_p, ModelGrads& grads,
                       bool with_encoder) {
  const auto& P = m.scoring;
  auto& G = grads.scoring;
  double dz = d_p * tr.p * (1.0 - tr.p);
  G.b_theta(0, 0) += dz;
  G.w_theta.row(0) += dz * tr.inner;
  RowVector d_inner = dz * P.w_theta.row(0);
  RowVector dhs = d_inner.cwiseProduct(tr.ht);
  RowVector dho = -d_inner.cwiseProduct(tr.ht);
  const RowVector& dhr = d_inner;

  if (m.options.use_t2v) {
    RowVector dht = d_inner.cwiseProduct(tr.hs - tr.ho);
    const TimeIndex span = g.time_span();
    if (tr.time.is_interval()) {
      t2v_backward(scaled_time(tr.time.begin(), span), P, dht, 0.5, G);
      t2v_backward(scaled_time(tr.time.end(), span), P, dht, 0.5, G);
    } else {
      t2v_backward(scaled_time(tr.time.begin(), span), P, dht, 1.0, G);
    }
  }

  const std::array<const RowVector*, 3> dh = {&dhr, &dhs, &dho};
  const std::array<const Matrix*, 3> w = {&P.wr, &P.ws, &P.wo};
  const std::array<Matrix*, 3> gw = {&G.wr, &G.ws, &G.wo};
  const std::array<Matrix*, 3> gb = {&G.br, &G.bs, &G.bo};
  for (std::size_t k = 0; k < 3; ++k) {
    RowVector u = tr.seg[k].out.row(0);
    gw[k]->noalias() += u.transpose() * *dh[k];
    gb[k]->row(0) += *dh[k];
    if (with_encoder) {
      Matrix d_out = Matrix::Zero(tr.seg[k].out.rows(), tr.seg[k].out.cols());
      d_out.row(0) = *dh[k] * w[k]->transpose();
      encode_backward(m.encoder, tr.seg[k], d_out, grads.encoder);
    }
  }
}

struct BundleTrace {
  std::vector<SentenceTrace> sentences;
  std::vector<double> weights;
  double f = 0.0;
};

BundleTrace forward_bundle(const Model& m, const Tkg& g, const SentenceBundle& b) {
  if (b.sentences.empty()) throw ContractViolation("cannot score an empty bundle");
  BundleTrace tr;
  std::vector<TimeIndex> times;
  for (const auto& s : b.sentences) {
    tr.sentences.push_back(forward_sentence(m, g, s));
    times.push_back(s.earliest_time);
  }
  tr.weights = recency_weights(times, b.target.time);
  for (std::size_t i = 0; i < tr.sentences.size(); ++i) tr.f += tr.weights[i] * tr.sentences[i].p;
  return tr;
}

void backward_bundle(const Model& m, const Tkg& g, const BundleTrace& tr, double d_f, ModelGrads& grads,
                     bool with_encoder) {
  for (std::size_t i = 0; i < tr.sentences.size(); ++i)
    backward_sentence(m, g, tr.sentences[i], d_f * tr.weights[i], grads, with_encoder);
}

}  // namespace

ScoringParams ScoringParams::zeros_like() const {
  ScoringParams z = *this;
  for (auto& [name, t] : tensors(z)) t->setZero();
  return z;
}

std::vector<std::pair<std::string, Matrix*>> tensors(ScoringParams& p) {
  return {{"scoring.ws", &p.ws},           {"scoring.wr", &p.wr},       {"scoring.wo", &p.wo},
          {"scoring.bs", &p.bs},           {"scoring.br", &p.br},       {"scoring.bo", &p.bo},
          {"scoring.w_theta", &p.w_theta}, {"scoring.b_theta", &p.b_theta}, {"scoring.omega", &p.omega},
          {"scoring.phi", &p.phi}};
}

std::vector<std::pair<std::string, const Matrix*>> tensors(const ScoringParams& p) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, t] : tensors(const_cast<ScoringParams&>(p))) out.emplace_back(name, t);
  return out;
}

ScoringParams init_scoring(int d, double init_scale, std::uint64_t seed) {
  if (d < 1) throw ContractViolation("scoring dimension must be positive");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  auto noise = [&](Eigen::Index r, Eigen::Index c, double s) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = s * normal(rng);
    return m;
  };
  ScoringParams p;
  p.ws = Matrix::Identity(d, d) + noise(d, d, init_scale);
  p.wr = Matrix::Identity(d, d) + noise(d, d, init_scale);
  p.wo = Matrix::Identity(d, d) + noise(d, d, init_scale);
  p.bs = Matrix::Zero(1, d);
  p.br = Matrix::Zero(1, d);
  p.bo = Matrix::Zero(1, d);
  p.w_theta = noise(1, d, 1.0 / std::sqrt(double(d)));
  p.b_theta = Matrix::Zero(1, 1);
  p.omega = noise(1, d, 2.0 * std::numbers::pi);
  p.phi.resize(1, d);
  for (Eigen::Index i = 0; i < d; ++i) p.phi(0, i) = phase(rng);
  return p;
}

RowVector t2v(double t, const ScoringParams& p) {
  const auto d = p.omega.cols();
  RowVector out(d);
  out(0) = p.omega(0, 0) * t + p.phi(0, 0);
  for (Eigen::Index i = 1; i < d; ++i) out(i) = std::sin(p.omega(0, i) * t + p.phi(0, i));
  return out;
}

double scaled_time(TimeIndex t, TimeIndex span) { return span > 0 ? double(t) / double(span) : double(t); }

RowVector time_encoding(TimeScope time, TimeIndex span, const ScoringParams& p, bool use_t2v) {
  if (!use_t2v) return RowVector::Ones(p.omega.cols());
  if (!time.is_interval()) return t2v(scaled_time(time.begin(), span), p);
  return 0.5 * (t2v(scaled_time(time.begin(), span), p) + t2v(scaled_time(time.end(), span), p));
}

double probability_from_projections(const RowVector& h_s, const RowVector& h_r, const RowVector& h_o,
                                    const RowVector& h_t, const RowVector& w_theta, double b_theta) {
  RowVector inner = h_s.cwiseProduct(h_t) + h_r - h_o.cwiseProduct(h_t);
  return sigmoid(w_theta.dot(inner) + b_theta);
}

double sentence_probability(const RowVector& u_s, const RowVector& u_r, const RowVector& u_o, TimeScope time,
                            TimeIndex span, const ScoringParams& p, bool use_t2v) {
  return probability_from_projections(u_s * p.ws + p.bs, u_r * p.wr + p.br, u_o * p.wo + p.bo,
                                      time_encoding(time, span, p, use_t2v), p.w_theta.row(0), p.b_theta(0, 0));
}

std::vector<double> recency_weights(std::span<const TimeIndex> t_rho, TimeScope target) {
  if (t_rho.empty()) throw ContractViolation("aggregate requires at least one sentence");
  auto softmax_against = [&](TimeIndex t) {
    double top = double(*std::max_element(t_rho.begin(), t_rho.end())) - double(t);
    std::vector<double> w;
    double sum = 0.0;
    for (auto r : t_rho) {
      w.push_back(std::exp(double(r) - double(t) - top));
      sum += w.back();
    }
    for (auto& x : w) x /= sum;
    return w;
  };
  if (!target.is_interval()) return softmax_against(target.begin());
  auto a = softmax_against(target.begin());
  auto b = softmax_against(target.end());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.5 * a[i] + 0.5 * b[i];
  return a;
}

double aggregate(std::span<SentenceScore> scores, TimeScope target) {
  if (scores.empty()) throw ContractViolation("aggregate requires at least one sentence");
  std::vector<TimeIndex> times;
  for (const auto& s : scores) times.push_back(s.t_rho);
  auto w = recency_weights(times, target);
  double f = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i].weight = w[i];
    f += w[i] * scores[i].p;
  }
  return f;
}

NegativeSampler::NegativeSampler(const Tkg& g, int hops)
    : g_(&g), hops_(hops), cache_(g.num_entities()), cached_(g.num_entities(), 0) {}

const std::vector<EntityId>& NegativeSampler::neighbors(EntityId e) {
  auto i = static_cast<std::size_t>(e);
  if (!cached_.at(i)) {
    cache_[i] = k_hop_neighbors(*g_, e, hops_);
    cached_[i] = 1;
  }
  return cache_[i];
}

std::vector<EntityId> NegativeSampler::primary_pool(const Quadruple& positive) const {
  auto a = k_hop_neighbors(*g_, positive.subject, hops_);
  auto b = k_hop_neighbors(*g_, positive.object, hops_);
  std::vector<EntityId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<EntityId> NegativeSampler::valid_pool(const Quadruple& positive, bool head, std::size_t needed) {
  const EntityId replaced = head ? positive.subject : positive.object;
  auto keep = [&](EntityId c) {
    if (c == replaced) return false;
    Quadruple q = positive;
    (head ? q.subject : q.object) = c;
    return !g_->contains(q);
  };
  auto filtered = [&](const std::vector<EntityId>& pool) {
    std::vector<EntityId> out;
    for (auto c : pool)
      if (keep(c)) out.push_back(c);
    return out;
  };

  const auto& a = neighbors(positive.subject);
  const auto& b = neighbors(positive.object);
  std::vector<EntityId> pool;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(pool));
  auto valid = filtered(pool);
  if (valid.size() >= needed) return valid;

  pool.clear();
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(pool));
  valid = filtered(pool);
  if (valid.size() >= needed) return valid;

  pool.resize(g_->num_entities());
  std::iota(pool.begin(), pool.end(), EntityId{0});
  return filtered(pool);
}

std::vector<Quadruple> NegativeSampler::sample(const Quadruple& positive, int n, Rng& rng, Corruption side) {
  if (n < 1) throw ContractViolation("number of negatives must be positive");
  std::vector<char> heads(static_cast<std::size_t>(n));
  std::size_t n_head = 0;
  for (auto& h : heads) {
    h = side == Corruption::head || (side == Corruption::either && (rng() & 1ULL));
    n_head += h ? 1 : 0;
  }

  std::vector<EntityId> head_pool, tail_pool;
  if (n_head > 0) head_pool = valid_pool(positive, true, n_head);
  if (n_head < heads.size()) tail_pool = valid_pool(positive, false, heads.size() - n_head);
  // With either side allowed, draws of a side without any valid corruption
  // move to the other side.
  const bool head_dead = n_head > 0 && head_pool.empty();
  const bool tail_dead = n_head < heads.size() && tail_pool.empty();
  if (side == Corruption::either && head_dead != tail_dead) {
    const bool to_head = tail_dead;
    std::fill(heads.begin(), heads.end(), to_head ? 1 : 0);
    n_head = to_head ? heads.size() : 0;
    (to_head ? head_pool : tail_pool) = valid_pool(positive, to_head, heads.size());
  }

  auto draw = [&](const std::vector<EntityId>& pool, std::size_t count) {
    std::vector<EntityId> picks;
    if (count == 0) return picks;
    if (pool.empty()) throw SamplingError("no entity yields a corruption absent from the graph");
    if (pool.size() >= count) {
      for (auto i : sample_without_replacement(rng, pool.size(), count)) picks.push_back(pool[i]);
    } else {
      for (std::size_t i = 0; i < count; ++i) picks.push_back(pool[uniform_index(rng, pool.size())]);
    }
    return picks;
  };
  auto head_picks = draw(head_pool, n_head);
  auto tail_picks = draw(tail_pool, heads.size() - n_head);

  std::vector<Quadruple> out;
  std::size_t hi = 0, ti = 0;
  for (auto h : heads) {
    Quadruple q = positive;
    if (h)
      q.subject = head_picks[hi++];
    else
      q.object = tail_picks[ti++];
    out.push_back(q);
  }
  return out;
}

std::vector<Quadruple> sample_negatives(const Tkg& g, const Quadruple& positive, int n, Rng& rng) {
  NegativeSampler sampler(g);
  return sampler.sample(positive, n, rng);
}

LossConvention parse_loss_convention(std::string_view text) {
  if (text == "plausibility") return LossConvention::plausibility;
  if (text == "paper-literal") return LossConvention::paper_literal;
  throw ValidationError("unknown loss convention '" + std::string(text) + "' (expected plausibility|paper-literal)");
}

std::string_view to_string(LossConvention c) {
  return c == LossConvention::plausibility ? "plausibility" : "paper-literal";
}

namespace {

std::vector<double> negative_weights(std::span<const double> f_neg, const TrainHyper& hyper) {
  const std::size_t n = f_neg.size();
  std::vector<double> w(n, 1.0 / double(n));
  if (hyper.adversarial_temperature != 0.0) {
    double top = *std::max_element(f_neg.begin(), f_neg.end()) * hyper.adversarial_temperature;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += w[i] = std::exp(hyper.adversarial_temperature * f_neg[i] - top);
    for (auto& x : w) x /= sum;
  }
  return w;
}

LossValue weighted_loss(double f_pos, std::span<const double> f_neg, std::span<const double> w,
                        const TrainHyper& hyper) {
  const double g = hyper.margin;
  const std::size_t n = f_neg.size();
  LossValue out;
  out.d_neg.resize(n);
  if (hyper.loss == LossConvention::plausibility) {
    out.loss = -log_sigmoid(f_pos - g);
    out.d_pos = -sigmoid(g - f_pos);
    for (std::size_t i = 0; i < n; ++i) {
      out.loss -= w[i] * log_sigmoid(g - f_neg[i]);
      out.d_neg[i] = w[i] * sigmoid(f_neg[i] - g);
    }
  } else {
    out.loss = -log_sigmoid(g - f_pos);
    out.d_pos = sigmoid(f_pos - g);
    for (std::size_t i = 0; i < n; ++i) {
      out.loss -= w[i] * log_sigmoid(f_neg[i] - g);
      out.d_neg[i] = -w[i] * sigmoid(g - f_neg[i]);
    }
  }
  return out;
}

}  // namespace

LossValue training_loss(double f_pos, std::span<const double> f_neg, const TrainHyper& hyper) {
  if (f_neg.empty()) throw ContractViolation("training loss needs at least one negative");
  return weighted_loss(f_pos, f_neg, negative_weights(f_neg, hyper), hyper);
}

ModelGrads zero_grads(const Model& m) { return {m.encoder.zeros_like(), m.scoring.zeros_like()}; }

BundleScore score_bundle(const Model& m, const Tkg& g, const SentenceBundle& bundle) {
  auto tr = forward_bundle(m, g, bundle);
  BundleScore out;
  out.f = tr.f;
  for (std::size_t i = 0; i < tr.sentences.size(); ++i)
    out.sentences.push_back({tr.sentences[i].p, bundle.sentences[i].earliest_time, tr.weights[i]});
  return out;
}

TrainingExample make_example(const Model& m, const Tkg& g, EdgeId positive, const TrainHyper& hyper,
                             NegativeSampler& sampler, Rng& rng, const TemplateTable& templates) {
  const auto& edge = g.edge(positive);
  TrainingExample ex;
  ex.positive = build_bundle(g, edge, hyper.max_sentences, templates, m.options.bundle, rng);
  const EdgeId hidden[] = {positive};
  for (const auto& neg : sampler.sample(edge, hyper.negatives, rng))
    ex.negatives.push_back(build_bundle(g, neg, hyper.max_sentences, templates, m.options.bundle, rng, hidden));
  return ex;
}

namespace {

/// With `fixed` set, those negative weights replace the adversarial ones.
double example_loss_impl(const Model& m, const Tkg& g, const TrainingExample& ex, const TrainHyper& hyper,
                         ModelGrads* grads, bool with_encoder, std::vector<double>* weights, bool fixed) {
  auto pos = forward_bundle(m, g, ex.positive);
  std::vector<BundleTrace> negs;
  std::vector<double> f_neg;
  for (const auto& b : ex.negatives) {
    negs.push_back(forward_bundle(m, g, b));
    f_neg.push_back(negs.back().f);
  }
  if (f_neg.empty()) throw ContractViolation("training loss needs at least one negative");
  std::vector<double> w = fixed ? *weights : negative_weights(f_neg, hyper);
  if (weights && !fixed) *weights = w;
  auto lv = weighted_loss(pos.f, f_neg, w, hyper);
  if (grads) {
    backward_bundle(m, g, pos, lv.d_pos, *grads, with_encoder);
    for (std::size_t i = 0; i < negs.size(); ++i) backward_bundle(m, g, negs[i], lv.d_neg[i], *grads, with_encoder);
  }
  return lv.loss;
}

}  // namespace

double example_loss(const Model& m, const Tkg& g, const TrainingExample& ex, const TrainHyper& hyper,
                    ModelGrads* grads, bool with_encoder) {
  return example_loss_impl(m, g, ex, hyper, grads, with_encoder, nullptr, false);
}

double example_grad_check(const Model& m, const Tkg& g, const TrainingExample& ex, const TrainHyper& hyper,
                          double eps, bool with_encoder) {
  Model work = m;
  auto grads = zero_grads(work);
  std::vector<double> weights;
  example_loss_impl(work, g, ex, hyper, &grads, with_encoder, &weights, false);

  std::vector<Matrix*> params = pointer_list(work.scoring);
  std::vector<const Matrix*> analytic = pointer_list(std::as_const(grads.scoring));
  if (with_encoder) {
    for (auto* t : pointer_list(work.encoder)) params.push_back(t);
    for (auto* t : pointer_list(std::as_const(grads.encoder))) analytic.push_back(t);
  }
  // The masked-LM bias does not enter the score; its gradient is zero.
  // Adversarial weights stay at their unperturbed values, as in training.
  return finite_difference_error(
      params, analytic, [&] { return example_loss_impl(work, g, ex, hyper, nullptr, true, &weights, true); }, eps);
}

TrainResult train(const Tkg& g, Model model, const TemplateTable& templates, const TrainHyper& hyper,
                  const TrainCallback& on_epoch) {
  if (g.num_edges() == 0) throw ContractViolation("training graph has no edges");
  if (hyper.negatives < 1 || hyper.max_sentences < 1 || hyper.batch < 1 || hyper.epochs < 0)
    throw ContractViolation("negatives, sentence cap and batch must be positive");

  TrainResult result{std::move(model), {}};
  Model& m = result.model;
  m.options.max_sentences = hyper.max_sentences;

  auto grads = zero_grads(m);
  std::vector<Matrix*> params = pointer_list(m.scoring);
  std::vector<const Matrix*> grad_list = pointer_list(std::as_const(grads.scoring));
  std::vector<Matrix*> all_grads = pointer_list(grads.scoring);
  if (!hyper.freeze_encoder) {
    for (auto* t : pointer_list(m.encoder)) params.push_back(t);
    for (auto* t : pointer_list(std::as_const(grads.encoder))) grad_list.push_back(t);
    for (auto* t : pointer_list(grads.encoder)) all_grads.push_back(t);
  }
  AdamW opt({hyper.lr, 0.9, 0.999, 1e-8, hyper.weight_decay});
  NegativeSampler sampler(g);

  std::vector<EdgeId> positives;
  for (EdgeId id = 0; id < static_cast<EdgeId>(g.num_edges()); ++id) {
    const auto& rel = hyper.positive_relations;
    if (rel.empty() || std::find(rel.begin(), rel.end(), g.edge(id).relation) != rel.end()) positives.push_back(id);
  }
  if (positives.empty()) throw ContractViolation("no training edge has one of the requested relations");

  std::vector<EdgeId> order;
  std::size_t step = 0;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    order = positives;
    Rng shuffle_rng = derive_stream(hyper.seed, {0x7a1ULL, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t visit = order.size();
    if (hyper.max_positives > 0) visit = std::min(visit, hyper.max_positives);

    double total = 0.0;
    std::size_t in_batch = 0;
    auto flush = [&] {
      if (in_batch == 0) return;
      for (auto* t : all_grads) *t /= double(in_batch);
      opt.step(params, grad_list);
      for (auto* t : all_grads) t->setZero();
      in_batch = 0;
      ++step;
    };
    for (std::size_t i = 0; i < visit; ++i) {
      EdgeId id = order[i];
      Rng rng = derive_stream(hyper.seed, {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(id)});
      auto ex = make_example(m, g, id, hyper, sampler, rng, templates);
      double loss = example_loss(m, g, ex, hyper, &grads, !hyper.freeze_encoder);
      if (!std::isfinite(loss)) throw DivergenceError(epoch, step, "non-finite training loss");
      total += loss;
      if (++in_batch == static_cast<std::size_t>(hyper.batch)) flush();
    }
    flush();
    result.epoch_loss.push_back(total / double(visit));
    if (on_epoch) on_epoch(epoch, m);
  }
  return result;
}

}  // namespace tempkg
