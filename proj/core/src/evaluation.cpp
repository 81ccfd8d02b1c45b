#include "tempkg/evaluation.hpp"

#include <algorithm>
#include <ostream>
#include <thread>

#include "json.hpp"
#include "tempkg/errors.hpp"

namespace tempkg {

void Question::validate() const {
  if (candidates.empty()) throw ContractViolation("question has no candidates");
  if (std::count(candidates.begin(), candidates.end(), truth) != 1)
    throw ContractViolation("question candidates must contain the truth exactly once");
}

CandidatePreset parse_candidate_preset(std::string_view text) {
  if (text == "validation50") return CandidatePreset::validation50;
  if (text == "all") return CandidatePreset::all;
  throw ValidationError("unknown candidate preset '" + std::string(text) + "' (expected validation50|all)");
}

std::string_view to_string(CandidatePreset p) { return p == CandidatePreset::validation50 ? "validation50" : "all"; }

std::vector<Question> make_questions(const Tkg& g, std::span<const Quadruple> queries, const QuestionOptions& opts) {
  NegativeSampler sampler(g);
  std::vector<Question> out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& qd = queries[i];
    if (!g.has_entity(qd.subject) || !g.has_entity(qd.object) || !g.has_relation(qd.relation))
      throw LookupError("query " + std::to_string(i) + " references ids outside the graph");
    Question q{i, qd.subject, qd.relation, qd.time, qd.object, {qd.object}};
    if (opts.preset == CandidatePreset::validation50) {
      Rng rng = derive_stream(opts.seed, {0xca7dULL, i});
      for (const auto& neg : sampler.sample(qd, opts.num_negatives, rng, Corruption::tail))
        if (std::find(q.candidates.begin(), q.candidates.end(), neg.object) == q.candidates.end())
          q.candidates.push_back(neg.object);
    } else {
      for (EntityId e = 0; e < static_cast<EntityId>(g.num_entities()); ++e)
        if (e != qd.object) q.candidates.push_back(e);
    }
    if (opts.filtered) {
      std::erase_if(q.candidates, [&](EntityId c) { return c != q.truth && g.contains(q.with_object(c)); });
    }
    out.push_back(std::move(q));
  }
  return out;
}

QuestionResult score_question(const Model& m, const Tkg& g, const Question& q, const TemplateTable& templates,
                              std::uint64_t seed) {
  q.validate();
  std::vector<EdgeId> hidden;
  if (auto id = g.find_edge(q.with_object(q.truth))) hidden.push_back(*id);

  QuestionResult r{q.id, q.truth, {}};
  for (EntityId c : q.candidates) {
    Rng rng = derive_stream(seed, {q.id, static_cast<std::uint64_t>(c)});
    auto bundle = build_bundle(g, q.with_object(c), m.options.max_sentences, templates, m.options.bundle, rng, hidden);
    r.scores.push_back({c, score_bundle(m, g, bundle).f});
  }
  return r;
}

double rank_of_truth(const QuestionResult& r) {
  auto it = std::find_if(r.scores.begin(), r.scores.end(), [&](const auto& s) { return s.candidate == r.truth; });
  if (it == r.scores.end()) throw ContractViolation("truth missing from scored candidates");
  const double f = it->f;
  std::size_t greater = 0, equal = 0;
  for (const auto& s : r.scores) {
    if (s.f > f)
      ++greater;
    else if (s.f == f)
      ++equal;
  }
  return double(greater) + (1.0 + double(equal)) / 2.0;
}

Metrics rank_and_metrics(std::span<const QuestionResult> results) {
  Metrics m;
  for (const auto& r : results) {
    double rank = rank_of_truth(r);
    auto top = std::max_element(r.scores.begin(), r.scores.end(), [](const auto& a, const auto& b) {
      return a.f < b.f || (a.f == b.f && a.candidate > b.candidate);
    });
    m.per_query.push_back({r.id, rank, r.truth, top->candidate});
    m.mrr += 1.0 / rank;
    m.hits1 += rank <= 1.0 ? 1.0 : 0.0;
    m.hits3 += rank <= 3.0 ? 1.0 : 0.0;
  }
  m.num_queries = results.size();
  if (m.num_queries > 0) {
    m.mrr /= double(m.num_queries);
    m.hits1 /= double(m.num_queries);
    m.hits3 /= double(m.num_queries);
  }
  return m;
}

Metrics evaluate(const Model& m, const Tkg& g, std::span<const Question> questions, const TemplateTable& templates,
                 const EvalOptions& opts) {
  std::vector<QuestionResult> results(questions.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(questions.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < questions.size(); ++i) results[i] = score_question(m, g, questions[i], templates, opts.seed);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            for (std::size_t i = t; i < questions.size(); i += threads)
              results[i] = score_question(m, g, questions[i], templates, opts.seed);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return rank_and_metrics(results);
}

Explanation explain_bundle(const SentenceBundle& bundle, const BundleScore& score) {
  if (bundle.sentences.empty() || bundle.sentences.size() != score.sentences.size())
    throw ContractViolation("explanation needs a scored, non-empty bundle");
  std::size_t best = 0;
  for (std::size_t i = 1; i < score.sentences.size(); ++i) {
    const auto& s = score.sentences[i];
    const auto& b = score.sentences[best];
    if (s.weight * s.p > b.weight * b.p) best = i;
  }
  const auto& s = bundle.sentences[best];
  return {s, render_sentence(s), score.sentences[best].weight, score.sentences[best].p};
}

Explanation explain(const Model& m, const Tkg& g, const Question& q, EntityId answer, const TemplateTable& templates,
                    std::uint64_t seed) {
  std::vector<EdgeId> hidden;
  if (auto id = g.find_edge(q.with_object(q.truth))) hidden.push_back(*id);
  Rng rng = derive_stream(seed, {q.id, static_cast<std::uint64_t>(answer)});
  auto bundle = build_bundle(g, q.with_object(answer), m.options.max_sentences, templates, m.options.bundle, rng, hidden);
  return explain_bundle(bundle, score_bundle(m, g, bundle));
}

std::string metrics_json(const Metrics& m, bool filtered, CandidatePreset preset) {
  nlohmann::ordered_json j;
  j["mrr"] = m.mrr;
  j["hits1"] = m.hits1;
  j["hits3"] = m.hits3;
  j["num_queries"] = m.num_queries;
  j["ranking"] = filtered ? "filtered" : "raw";
  j["candidates"] = std::string(to_string(preset));
  return j.dump(2);
}

void write_per_query_csv(std::ostream& out, const Metrics& m, const Tkg& g) {
  out << "query_id,rank,truth,top1\n";
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const auto& r : m.per_query)
    out << r.id << ',' << r.rank << ',' << quote(g.entity_label(r.truth)) << ',' << quote(g.entity_label(r.top1)) << '\n';
}

double random_baseline_mrr(std::size_t n) {
  double h = 0.0;
  for (std::size_t k = 1; k <= n; ++k) h += 1.0 / double(k);
  return n == 0 ? 0.0 : h / double(n);
}

}  // namespace tempkg
