#include "cli.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "tempkg/benchmark_splitter.hpp"
#include "tempkg/checkpoint.hpp"
#include "tempkg/errors.hpp"
#include "tempkg/evaluation.hpp"
#include "tempkg/experiment.hpp"
#include "tempkg/synthetic.hpp"

namespace tempkg::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Options {
  std::string data, queries, format = "point", templates, out = "tempkg-out", config, checkpoint, corpus;
  std::string preset = "v1..v4", mode = "masking", seeds = "1,2,3,4,5";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<int> epochs;
  std::optional<std::size_t> query;
  std::string mask_mode, loss_convention, candidates;
  bool freeze_encoder = false, no_paths = false, no_history = false, no_t2v = false;
  std::vector<std::string> overrides;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
  out.close();
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

std::string number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Per-invocation state: resolved config, inputs read so far, outputs written.
class Run {
 public:
  Run(std::string command, const Options& o) : command_(std::move(command)), opts_(o) {
    std::map<std::string, std::string> env, file, flags;
    if (const char* s = std::getenv("TEMPKG_SEED")) env["seed"] = s;
    if (!o.config.empty()) file = parse_config_text(input(o.config));
    if (o.seed) flags["seed"] = std::to_string(*o.seed);
    if (o.threads) flags["threads"] = std::to_string(*o.threads);
    if (o.epochs) flags["pretrain.epochs"] = std::to_string(*o.epochs);
    if (o.freeze_encoder) flags["train.freeze_encoder"] = "true";
    if (o.no_paths) flags["scoring.use_paths"] = "false";
    if (o.no_history) flags["scoring.use_history"] = "false";
    if (o.no_t2v) flags["scoring.use_t2v"] = "false";
    if (!o.mask_mode.empty()) flags["pretrain.mask_mode"] = o.mask_mode;
    if (!o.loss_convention.empty()) flags["train.loss"] = o.loss_convention;
    if (!o.candidates.empty()) flags["eval.candidates"] = o.candidates;
    for (const auto& kv : o.overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      flags[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    cfg_ = resolve_config({env, file, flags});
    try {
      granularity_ = parse_granularity(o.format);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    fs::create_directories(o.out);
  }

  const RunConfig& config() const { return cfg_; }
  const Options& opts() const { return opts_; }
  Granularity granularity() const { return granularity_; }

  /// Reads an input file and records its hash for the manifest.
  std::string input(const std::string& path) {
    auto bytes = read_file(path);
    inputs_[path] = sha256_hex(bytes);
    return bytes;
  }

  void output(const std::string& name, const std::string& bytes) {
    auto path = fs::path(opts_.out) / name;
    fs::create_directories(path.parent_path());
    write_file(path, bytes);
    outputs_.push_back(name);
  }

  void save(const std::string& name, const Checkpoint& c) {
    std::ostringstream s;
    write_checkpoint(s, c);
    output(name, s.str());
  }

  std::string hyper_json() const {
    ordered_json h;
    for (const auto& [k, v] : cfg_.values) h[k] = v;
    return h.dump();
  }

  void write_manifest() {
    ordered_json m;
    m["command"] = command_;
    m["seed"] = cfg_.experiment.seed;
    m["format"] = std::string(to_string(granularity_));
    ordered_json c;
    for (const auto& [k, v] : cfg_.values) c[k] = v;
    m["config"] = c;
    ordered_json in = ordered_json::object();
    for (const auto& [p, h] : inputs_) in[p] = h;
    m["inputs"] = in;
    m["outputs"] = outputs_;
    write_file(fs::path(opts_.out) / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  Options opts_;
  RunConfig cfg_;
  Granularity granularity_ = Granularity::point;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required ") + flag);
}

Tkg load_graph(Run& run) {
  require(run.opts().data, "--data");
  return load_tkg(run.input(run.opts().data), run.granularity());
}

TemplateTable load_templates(Run& run, const Tkg& g) {
  if (run.opts().templates.empty()) return {};
  return TemplateTable::parse(run.input(run.opts().templates), g);
}

/// The context graph and query quadruples (in context ids) on a shared axis.
struct EvalData {
  Tkg graph;
  std::vector<Quadruple> queries;
};

EvalData load_eval_data(Run& run) {
  require(run.opts().data, "--data");
  require(run.opts().queries, "--queries");
  std::vector<std::string> texts{run.input(run.opts().data), run.input(run.opts().queries)};
  std::vector<std::string_view> views(texts.begin(), texts.end());
  auto family = load_tkg_family(views, run.granularity());
  EvalData d{std::move(family[0]), {}};
  const Tkg& q = family[1];
  for (const auto& e : q.edges()) {
    auto s = d.graph.find_entity(q.entity_label(e.subject));
    auto o = d.graph.find_entity(q.entity_label(e.object));
    auto r = d.graph.find_relation(q.relation_label(e.relation));
    if (!s || !o || !r)
      throw LookupError("query (" + q.entity_label(e.subject) + ", " + q.relation_label(e.relation) + ", " +
                        q.entity_label(e.object) + ") uses a label absent from the --data graph");
    d.queries.push_back({*s, *r, *o, e.time});
  }
  return d;
}

/// Scoring switches given explicitly on this run override the checkpoint's.
void apply_scoring_overrides(Model& m, const RunConfig& c) {
  const auto& s = c.experiment.scoring;
  auto has = [&](const char* k) { return c.explicit_keys.contains(k); };
  if (has("scoring.max_sentences")) m.options.max_sentences = s.max_sentences;
  if (has("scoring.walks")) m.options.bundle.paths.walks = s.bundle.paths.walks;
  if (has("scoring.max_hops")) m.options.bundle.paths.max_hops = s.bundle.paths.max_hops;
  if (has("scoring.use_paths")) m.options.bundle.use_paths = s.bundle.use_paths;
  if (has("scoring.use_history")) m.options.bundle.use_history = s.bundle.use_history;
  if (has("scoring.use_t2v")) m.options.use_t2v = s.use_t2v;
  if (has("scoring.max_length")) m.options.tokenize.max_length = s.tokenize.max_length;
  if (has("scoring.unknown_tokens")) m.options.tokenize.unknown = s.tokenize.unknown;
}

Model load_model(Run& run) {
  require(run.opts().checkpoint, "--checkpoint");
  std::istringstream in(run.input(run.opts().checkpoint));
  Model m = to_model(read_checkpoint(in));
  apply_scoring_overrides(m, run.config());
  return m;
}

Checkpoint to_checkpoint(const Model& m, bool with_scoring, const std::string& hyper) {
  Checkpoint c;
  c.vocab = m.vocab;
  c.encoder = m.encoder;
  if (with_scoring) c.scoring = m.scoring;
  c.options = m.options;
  c.hyper_json = hyper;
  return c;
}

std::string loss_csv(const std::vector<double>& loss) {
  std::string s = "epoch,loss\n";
  for (std::size_t i = 0; i < loss.size(); ++i) s += std::to_string(i + 1) + "," + number(loss[i]) + "\n";
  return s;
}

std::uint64_t eval_seed(const RunConfig& c) { return mix64(c.experiment.seed ^ 0x7); }

// ---------------------------------------------------------------- commands

int cmd_validate(Run& run, std::ostream& out) {
  Tkg g = load_graph(run);
  ordered_json s;
  s["entities"] = g.num_entities();
  s["relations"] = g.num_relations();
  s["edges"] = g.num_edges();
  s["time_tokens"] = g.time_span();
  s["granularity"] = std::string(to_string(g.granularity()));
  s["wildcard_flagged"] = g.num_flagged();
  s["duplicates_dropped"] = g.duplicates_dropped();
  if (g.time_span() > 0) {
    s["first_time"] = g.time_axis().label(0);
    s["last_time"] = g.time_axis().label(g.time_span() - 1);
  }
  if (!run.opts().templates.empty()) s["templates"] = load_templates(run, g).size();
  run.output("stats.json", s.dump(2) + "\n");
  out << s.dump(2) << "\n";
  return kExitOk;
}

std::vector<std::string> preset_names(const std::string& text) {
  if (text == "v1..v4" || text == "all") return {"v1", "v2", "v3", "v4"};
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_split(Run& run, std::ostream& out) {
  Tkg g = load_graph(run);
  const auto seed = run.config().experiment.seed;
  for (const auto& name : preset_names(run.opts().preset)) {
    SplitParams params;
    try {
      params = split_preset(name, seed);
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
    auto split = sample_split(g, params);
    auto report = validate_split(split);
    std::ostringstream train, test;
    write_tkg(train, split.ind_train);
    write_tkg(test, split.ind_test);
    run.output(name + "/ind-train.tsv", train.str());
    run.output(name + "/ind-test.tsv", test.str());
    run.output(name + "/split-report.json", split_report_json(report) + "\n");
    out << name << ": " << report.train_entities << " train entities, " << report.test_entities
        << " test entities, overlap " << report.entity_overlap << "\n";
  }
  return kExitOk;
}

int cmd_corpus(Run& run, std::ostream& out) {
  Tkg g = load_graph(run);
  auto templates = load_templates(run, g);
  Vocab v = build_vocab(g, templates);
  auto cc = run.config().experiment.corpus;
  cc.tokenize = run.config().experiment.scoring.tokenize;
  cc.threads = run.config().experiment.threads;
  std::ostringstream sink;
  auto n = emit_pretraining_corpus(g, v, templates, cc, sink);
  run.output("corpus.jsonl", sink.str());
  out << n << " sentences, vocabulary " << v.size() << "\n";
  return kExitOk;
}

int cmd_pretrain(Run& run, std::ostream& out) {
  Tkg g = load_graph(run);
  auto templates = load_templates(run, g);
  const auto& cfg = run.config().experiment;
  std::vector<double> loss;
  Model m;
  if (run.opts().corpus.empty()) {
    m = pretrained_model(g, templates, cfg, &loss);
  } else {
    m.vocab = build_vocab(g, templates);
    m.options = cfg.scoring;
    auto ec = cfg.encoder;
    ec.vocab_size = static_cast<int>(m.vocab.size());
    std::istringstream in(run.input(run.opts().corpus));
    auto corpus = read_corpus(in, m.vocab, cfg.scoring.tokenize.unknown);
    auto r = pretrain(init_encoder(ec), corpus, m.vocab, cfg.pretrain);
    m.encoder = std::move(r.params);
    loss = std::move(r.epoch_loss);
  }
  run.save("encoder.ckpt", to_checkpoint(m, false, run.hyper_json()));
  run.output("pretrain-loss.csv", loss_csv(loss));
  out << "pretrained " << loss.size() << " epochs";
  if (!loss.empty()) out << ", final loss " << number(loss.back());
  out << "\n";
  return kExitOk;
}

int cmd_train(Run& run, std::ostream& out) {
  Tkg g = load_graph(run);
  auto templates = load_templates(run, g);
  const auto& cfg = run.config().experiment;
  Model m;
  if (!run.opts().checkpoint.empty()) {
    m = load_model(run);
  } else {
    // Untrained encoder: scoring is learned on top of random features.
    m = pretrained_model(g, templates, [&] { auto c = cfg; c.pretrain.epochs = 0; return c; }());
  }
  apply_scoring_overrides(m, run.config());
  if (!run.opts().checkpoint.empty() && !run.config().explicit_keys.contains("scoring.max_sentences"))
    m.options.max_sentences = cfg.scoring.max_sentences;
  auto hyper = cfg.train;
  hyper.positive_relations = resolve_relations(g, run.config().positive_relations);
  auto r = train(g, std::move(m), templates, hyper);
  run.save("model.ckpt", to_checkpoint(r.model, true, run.hyper_json()));
  run.output("train-loss.csv", loss_csv(r.epoch_loss));
  out << "trained " << r.epoch_loss.size() << " epochs";
  if (!r.epoch_loss.empty()) out << ", final loss " << number(r.epoch_loss.back());
  out << "\n";
  return kExitOk;
}

int cmd_eval(Run& run, std::ostream& out) {
  auto d = load_eval_data(run);
  Model m = load_model(run);
  auto templates = load_templates(run, d.graph);
  const auto& cfg = run.config().experiment;
  auto questions = make_questions(d.graph, d.queries, cfg.questions);
  auto metrics = evaluate(m, d.graph, questions, templates, {eval_seed(run.config()), cfg.threads});
  auto json = metrics_json(metrics, cfg.questions.filtered, cfg.questions.preset);
  run.output("metrics.json", json + "\n");
  std::ostringstream csv;
  write_per_query_csv(csv, metrics, d.graph);
  run.output("per-query.csv", csv.str());
  out << json << "\n";
  return kExitOk;
}

int cmd_explain(Run& run, std::ostream& out) {
  auto d = load_eval_data(run);
  Model m = load_model(run);
  auto templates = load_templates(run, d.graph);
  const auto& cfg = run.config().experiment;
  auto questions = make_questions(d.graph, d.queries, cfg.questions);
  if (run.opts().query && *run.opts().query >= questions.size())
    throw UsageError("--query " + std::to_string(*run.opts().query) + " is out of range (" +
                     std::to_string(questions.size()) + " queries)");
  std::string lines;
  for (const auto& q : questions) {
    if (run.opts().query && q.id != *run.opts().query) continue;
    auto result = score_question(m, d.graph, q, templates, eval_seed(run.config()));
    const auto& best = *std::max_element(result.scores.begin(), result.scores.end(),
                                         [](const auto& a, const auto& b) { return a.f < b.f; });
    auto e = explain(m, d.graph, q, best.candidate, templates, eval_seed(run.config()));
    ordered_json j;
    j["query_id"] = q.id;
    j["subject"] = d.graph.entity_label(q.subject);
    j["relation"] = d.graph.relation_label(q.relation);
    j["truth"] = d.graph.entity_label(q.truth);
    j["answer"] = d.graph.entity_label(best.candidate);
    j["score"] = best.f;
    j["rank_of_truth"] = rank_of_truth(result);
    j["weight"] = e.weight;
    j["p"] = e.p;
    j["sentence"] = e.text;
    lines += j.dump() + "\n";
  }
  run.output("explanations.jsonl", lines);
  out << lines;
  return kExitOk;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || p != item.data() + item.size()) throw UsageError("--seeds: cannot parse '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--seeds needs at least one seed");
  return out;
}

int cmd_ablate(Run& run, std::ostream& out) {
  const auto& rc = run.config();
  EvalData d;
  TemplateTable templates;
  std::vector<std::string> positive = rc.positive_relations;
  if (run.opts().data.empty()) {
    // No dataset: the seeded planted-rule graph.
    PlantedRuleConfig pc;
    pc.seed = rc.experiment.seed;
    auto p = make_planted_rule(pc);
    d = {std::move(p.graph), std::move(p.queries)};
    if (!rc.explicit_keys.contains("train.positive_relations")) positive = {"r3"};
    std::ostringstream g;
    write_tkg(g, d.graph);
    run.output("planted-graph.tsv", g.str());
    const auto& axis = d.graph.time_axis();
    std::string q;
    for (const auto& e : d.queries) {
      auto when = axis.label(e.time.begin());
      if (axis.unit() == TimeUnit::year) when += "-##-##";
      q += d.graph.entity_label(e.subject) + "\t" + d.graph.relation_label(e.relation) + "\t" +
           d.graph.entity_label(e.object) + "\t" + when + "\n";
    }
    run.output("planted-queries.tsv", q);
  } else {
    d = load_eval_data(run);
    templates = load_templates(run, d.graph);
  }
  auto base = rc.experiment;
  base.train.positive_relations = resolve_relations(d.graph, positive);
  const auto seeds = parse_seeds(run.opts().seeds);

  std::string csv = "variant,seed,epoch,mrr\n";
  auto row = [&](const std::string& variant, std::uint64_t seed, int epoch, double mrr) {
    csv += variant + "," + std::to_string(seed) + "," + std::to_string(epoch) + "," + number(mrr) + "\n";
  };
  if (run.opts().mode == "masking") {
    for (const auto& r : masking_curve(d.graph, d.queries, templates, base, seeds))
      row(r.variant, r.seed, r.epoch, r.mrr);
  } else if (run.opts().mode == "components") {
    for (auto seed : seeds) {
      auto cfg = with_seed(base, seed);
      const int epochs = cfg.pretrain.epochs;
      auto pretrained = pretrained_model(d.graph, templates, cfg);
      row("full", seed, epochs, finetune_and_evaluate(d.graph, d.queries, templates, pretrained, cfg).metrics.mrr);
      auto no_t2v = cfg;
      no_t2v.scoring.use_t2v = false;
      row("no-t2v", seed, epochs,
          finetune_and_evaluate(d.graph, d.queries, templates, pretrained, no_t2v).metrics.mrr);
      auto no_paths = cfg;
      no_paths.corpus.bundle.use_paths = no_paths.scoring.bundle.use_paths = false;
      row("no-paths", seed, epochs, run_experiment(d.graph, d.queries, templates, no_paths).metrics.mrr);
      auto no_history = cfg;
      no_history.corpus.bundle.use_history = no_history.scoring.bundle.use_history = false;
      row("no-history", seed, epochs, run_experiment(d.graph, d.queries, templates, no_history).metrics.mrr);
    }
  } else {
    throw UsageError("--mode must be masking or components");
  }
  run.output("ablation.csv", csv);
  out << csv;
  return kExitOk;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--data", o.data, "Dataset TSV");
  sub->add_option("--format", o.format, "point|interval")->check(CLI::IsMember({"point", "interval"}));
  sub->add_option("--templates", o.templates, "relation<TAB>template file");
  sub->add_option("--seed", o.seed, "Global seed (default: TEMPKG_SEED, then 0)");
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--config", o.config, "Flat key = value config file");
  sub->add_option("--threads", o.threads, "Worker cap");
  sub->add_option("--set", o.overrides, "key=value override (repeatable)");
}

void add_model_flags(CLI::App* sub, Options& o) {
  sub->add_flag("--no-paths", o.no_paths, "Drop relation paths");
  sub->add_flag("--no-history", o.no_history, "Drop historical descriptions");
  sub->add_flag("--no-t2v", o.no_t2v, "Replace the time encoding by ones");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal relation prediction pipeline", "tempkg"};
  app.require_subcommand(1);
  Options o;
  struct Command {
    const char* name;
    const char* help;
    int (*fn)(Run&, std::ostream&);
  };
  const Command commands[] = {
      {"validate", "Load a dataset and print its statistics", cmd_validate},
      {"split", "Generate fully-inductive benchmarks", cmd_split},
      {"corpus", "Emit the pretraining corpus", cmd_corpus},
      {"pretrain", "Masked-LM pretraining of the encoder", cmd_pretrain},
      {"train", "Train the scoring model", cmd_train},
      {"eval", "Rank candidates for query quadruples", cmd_eval},
      {"explain", "Highest-contribution sentence for each top answer", cmd_explain},
      {"ablate", "Masking curve or component ablation", cmd_ablate},
  };
  std::map<const CLI::App*, const Command*> lookup;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, o);
    lookup[sub] = &c;
    const std::string n = c.name;
    if (n == "split") sub->add_option("--preset", o.preset, "v1..v4, or a comma list of v1-v4");
    if (n == "pretrain") sub->add_option("--corpus", o.corpus, "Corpus JSONL from `corpus`");
    if (n == "pretrain" || n == "ablate") {
      sub->add_option("--mask-mode", o.mask_mode, "time|random");
      sub->add_option("--epochs", o.epochs, "Pretraining epochs");
    }
    if (n == "train" || n == "eval" || n == "explain") sub->add_option("--checkpoint", o.checkpoint, "Checkpoint");
    if (n == "train") {
      sub->add_flag("--freeze-encoder", o.freeze_encoder, "Train scoring parameters only");
      sub->add_option("--loss-convention", o.loss_convention, "plausibility|paper-literal");
    }
    if (n == "eval" || n == "explain" || n == "ablate") {
      sub->add_option("--queries", o.queries, "Query quadruples TSV");
      sub->add_option("--candidates", o.candidates, "validation50|all");
    }
    if (n == "explain") sub->add_option("--query", o.query, "Only this query index");
    if (n == "ablate") {
      sub->add_option("--mode", o.mode, "masking|components");
      sub->add_option("--seeds", o.seeds, "Comma-separated seeds");
      sub->add_option("--loss-convention", o.loss_convention, "plausibility|paper-literal");
    }
    if (n == "corpus" || n == "pretrain" || n == "train" || n == "eval" || n == "explain" || n == "ablate")
      add_model_flags(sub, o);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const Command* cmd = nullptr;
  for (auto* sub : app.get_subcommands()) cmd = lookup.at(sub);
  try {
    Run r(cmd->name, o);
    const int code = cmd->fn(r, out);
    r.write_manifest();
    return code;
  } catch (const UsageError& e) {
    err << "tempkg " << cmd->name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "tempkg " << cmd->name << ": training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "tempkg " << cmd->name << ": " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace tempkg::cli
