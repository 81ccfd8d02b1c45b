#include "run_config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "tempkg/errors.hpp"

namespace tempkg::cli {

namespace {

struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || p != text.data() + text.size())
    throw UsageError("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw UsageError("config key '" + key + "': expected true|false, got '" + text + "'");
}

std::string show(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string show(bool v) { return v ? "true" : "false"; }
template <class T>
std::string show(T v) requires std::is_integral_v<T> { return std::to_string(v); }

/// Field bound to a member reached through `access`.
template <class T, class Access>
Field field(Access access) {
  return {[access](RunConfig& c, const std::string& key, const std::string& text) {
            T& ref = access(c);
            if constexpr (std::is_same_v<T, bool>) {
              ref = parse_bool(key, text);
            } else {
              ref = parse_number<T>(key, text);
            }
          },
          [access](const RunConfig& c) { return show(access(const_cast<RunConfig&>(c))); }};
}

template <class Parse, class Show, class Access>
Field enum_field(Parse parse, Show print, Access access) {
  return {[=](RunConfig& c, const std::string& key, const std::string& text) {
            try {
              access(c) = parse(text);
            } catch (const tempkg::Error& e) {
              throw UsageError("config key '" + key + "': " + e.what());
            }
          },
          [=](const RunConfig& c) { return std::string(print(access(const_cast<RunConfig&>(c)))); }};
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

#define ACCESS(expr) [](RunConfig& c) -> auto& { return c.experiment.expr; }

const std::map<std::string, Field>& registry() {
  static const std::map<std::string, Field> fields = [] {
    std::map<std::string, Field> f;
    f["seed"] = field<std::uint64_t>(ACCESS(seed));
    f["threads"] = field<unsigned>(ACCESS(threads));

    f["corpus.max_sentences"] = field<int>(ACCESS(corpus.max_sentences));
    f["corpus.walks"] = field<int>(ACCESS(corpus.bundle.paths.walks));
    f["corpus.include_inverse"] = field<bool>(ACCESS(corpus.include_inverse));

    f["encoder.d_model"] = field<int>(ACCESS(encoder.d_model));
    f["encoder.n_layers"] = field<int>(ACCESS(encoder.n_layers));
    f["encoder.max_positions"] = field<int>(ACCESS(encoder.max_positions));
    f["encoder.init_scale"] = field<double>(ACCESS(encoder.init_scale));

    f["pretrain.lr"] = field<double>(ACCESS(pretrain.lr));
    f["pretrain.epochs"] = field<int>(ACCESS(pretrain.epochs));
    f["pretrain.batch"] = field<int>(ACCESS(pretrain.batch));
    f["pretrain.weight_decay"] = field<double>(ACCESS(pretrain.weight_decay));
    f["pretrain.p_time"] = field<double>(ACCESS(pretrain.ratios.p_time));
    f["pretrain.p_total"] = field<double>(ACCESS(pretrain.ratios.p_total));
    f["pretrain.mask_mode"] = enum_field(parse_mask_mode, [](MaskMode m) { return to_string(m); },
                                         ACCESS(pretrain.mask_mode));

    f["train.margin"] = field<double>(ACCESS(train.margin));
    f["train.negatives"] = field<int>(ACCESS(train.negatives));
    f["train.lr"] = field<double>(ACCESS(train.lr));
    f["train.epochs"] = field<int>(ACCESS(train.epochs));
    f["train.batch"] = field<int>(ACCESS(train.batch));
    f["train.weight_decay"] = field<double>(ACCESS(train.weight_decay));
    f["train.adversarial_temperature"] = field<double>(ACCESS(train.adversarial_temperature));
    f["train.freeze_encoder"] = field<bool>(ACCESS(train.freeze_encoder));
    f["train.max_positives"] = field<std::size_t>(ACCESS(train.max_positives));
    f["train.loss"] = enum_field(parse_loss_convention, [](LossConvention l) { return to_string(l); },
                                 ACCESS(train.loss));
    f["train.positive_relations"] = {
        [](RunConfig& c, const std::string&, const std::string& text) { c.positive_relations = split_list(text); },
        [](const RunConfig& c) {
          std::string out;
          for (const auto& r : c.positive_relations) out += (out.empty() ? "" : ",") + r;
          return out;
        }};

    // One sentence cap is shared by training and scoring.
    f["scoring.max_sentences"] = {
        [](RunConfig& c, const std::string& key, const std::string& text) {
          c.experiment.scoring.max_sentences = c.experiment.train.max_sentences =
              parse_number<int>(key, text);
        },
        [](const RunConfig& c) { return show(c.experiment.scoring.max_sentences); }};
    f["scoring.walks"] = field<int>(ACCESS(scoring.bundle.paths.walks));
    f["scoring.max_hops"] = {
        [](RunConfig& c, const std::string& key, const std::string& text) {
          c.experiment.scoring.bundle.paths.max_hops = c.experiment.corpus.bundle.paths.max_hops =
              parse_number<int>(key, text);
        },
        [](const RunConfig& c) { return show(c.experiment.scoring.bundle.paths.max_hops); }};
    f["scoring.use_paths"] = {
        [](RunConfig& c, const std::string& key, const std::string& text) {
          c.experiment.scoring.bundle.use_paths = c.experiment.corpus.bundle.use_paths =
              parse_bool(key, text);
        },
        [](const RunConfig& c) { return show(c.experiment.scoring.bundle.use_paths); }};
    f["scoring.use_history"] = {
        [](RunConfig& c, const std::string& key, const std::string& text) {
          c.experiment.scoring.bundle.use_history = c.experiment.corpus.bundle.use_history =
              parse_bool(key, text);
        },
        [](const RunConfig& c) { return show(c.experiment.scoring.bundle.use_history); }};
    f["scoring.use_t2v"] = field<bool>(ACCESS(scoring.use_t2v));
    f["scoring.max_length"] = field<int>(ACCESS(scoring.tokenize.max_length));
    f["scoring.unknown_tokens"] = enum_field(
        [](const std::string& t) {
          if (t == "error") return UnknownTokens::error;
          if (t == "unk") return UnknownTokens::map_to_unk;
          throw ValidationError("expected error|unk, got '" + t + "'");
        },
        [](UnknownTokens u) { return u == UnknownTokens::error ? "error" : "unk"; }, ACCESS(scoring.tokenize.unknown));

    f["eval.candidates"] = enum_field(parse_candidate_preset, [](CandidatePreset p) { return to_string(p); },
                                      ACCESS(questions.preset));
    f["eval.negatives"] = field<int>(ACCESS(questions.num_negatives));
    f["eval.filtered"] = field<bool>(ACCESS(questions.filtered));
    return f;
  }();
  return fields;
}

#undef ACCESS

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : registry()) out.push_back(k);
  return out;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(n) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    if (!registry().contains(key)) throw UsageError("config line " + std::to_string(n) + ": unknown key '" + key + "'");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

RunConfig resolve_config(const std::vector<std::map<std::string, std::string>>& layers) {
  RunConfig c;
  c.experiment = desk_experiment_defaults();
  for (const auto& layer : layers) {
    for (const auto& [key, value] : layer) {
      auto it = registry().find(key);
      if (it == registry().end()) throw UsageError("unknown config key '" + key + "'");
      it->second.set(c, key, value);
      c.explicit_keys.insert(key);
    }
  }
  c.experiment = with_seed(c.experiment, c.experiment.seed);
  for (const auto& [key, f] : registry()) c.values[key] = f.get(c);
  return c;
}

std::vector<RelationId> resolve_relations(const Tkg& g, const std::vector<std::string>& labels) {
  std::vector<RelationId> out;
  for (const auto& l : labels) out.push_back(g.relation_id(l));
  return out;
}

}  // namespace tempkg::cli
