#include "tempkg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "tempkg/errors.hpp"

namespace tempkg {

namespace {

using nlohmann::ordered_json;

ordered_json options_json(const ScoringOptions& o) {
  return {{"max_sentences", o.max_sentences},
          {"max_hops", o.bundle.paths.max_hops},
          {"walks", o.bundle.paths.walks},
          {"reuse_paths", o.bundle.reuse_paths},
          {"use_paths", o.bundle.use_paths},
          {"use_history", o.bundle.use_history},
          {"use_t2v", o.use_t2v},
          {"max_length", o.tokenize.max_length},
          {"unknown_tokens", o.tokenize.unknown == UnknownTokens::error ? "error" : "map_to_unk"}};
}

ScoringOptions options_from(const nlohmann::json& j) {
  ScoringOptions o;
  o.max_sentences = j.at("max_sentences").get<int>();
  o.bundle.paths.max_hops = j.at("max_hops").get<int>();
  o.bundle.paths.walks = j.at("walks").get<int>();
  o.bundle.reuse_paths = j.at("reuse_paths").get<bool>();
  o.bundle.use_paths = j.at("use_paths").get<bool>();
  o.bundle.use_history = j.at("use_history").get<bool>();
  o.use_t2v = j.at("use_t2v").get<bool>();
  o.tokenize.max_length = j.at("max_length").get<int>();
  o.tokenize.unknown = j.at("unknown_tokens").get<std::string>() == "error" ? UnknownTokens::error
                                                                           : UnknownTokens::map_to_unk;
  return o;
}

std::vector<std::pair<std::string, Matrix*>> all_tensors(EncoderParams& e, std::optional<ScoringParams>& s) {
  auto out = tensors(e);
  if (s)
    for (auto& t : tensors(*s)) out.push_back(t);
  return out;
}

void write_f64(std::ostream& out, double x) {
  auto bits = std::bit_cast<std::uint64_t>(x);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
  out.write(bytes, 8);
}

double read_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw IoError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  Checkpoint copy = ckpt;
  const auto& c = copy.encoder.config;
  ordered_json h;
  h["format_version"] = kCheckpointFormatVersion;
  h["config"] = {{"vocab_size", c.vocab_size},
                 {"d_model", c.d_model},
                 {"n_layers", c.n_layers},
                 {"max_positions", c.max_positions},
                 {"init_scale", c.init_scale},
                 {"rng_seed", c.rng_seed},
                 {"has_scoring", copy.scoring.has_value()}};
  h["options"] = options_json(copy.options);
  h["hyper"] = ordered_json::parse(copy.hyper_json);
  h["vocab"] = {{"words", copy.vocab.words()}, {"time_tokens", copy.vocab.time_tokens()}};
  ordered_json manifest = ordered_json::array();
  std::size_t offset = 0;
  auto list = all_tensors(copy.encoder, copy.scoring);
  for (auto& [name, t] : list) {
    manifest.push_back({{"name", name}, {"shape", {t->rows(), t->cols()}}, {"offset", offset}});
    offset += static_cast<std::size_t>(t->size());
  }
  h["tensors"] = manifest;
  out << h.dump() << '\n';
  for (auto& [name, t] : list)
    for (Eigen::Index i = 0; i < t->size(); ++i) write_f64(out, t->data()[i]);
  if (!out) throw IoError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty checkpoint");
  auto h = ordered_json::parse(line, nullptr, false);
  if (h.is_discarded() || !h.is_object()) throw IoError("checkpoint header is not JSON");
  try {
    if (h.at("format_version").get<int>() != kCheckpointFormatVersion) throw IoError("unsupported checkpoint version");
    Checkpoint ckpt;
    const auto& c = h.at("config");
    EncoderConfig cfg;
    cfg.vocab_size = c.at("vocab_size").get<int>();
    cfg.d_model = c.at("d_model").get<int>();
    cfg.n_layers = c.at("n_layers").get<int>();
    cfg.max_positions = c.at("max_positions").get<int>();
    cfg.rng_seed = c.at("rng_seed").get<std::uint64_t>();
    cfg.init_scale = 0.0;  // tensors are overwritten below
    ckpt.encoder = init_encoder(cfg);
    ckpt.encoder.config.init_scale = c.at("init_scale").get<double>();
    if (c.at("has_scoring").get<bool>()) ckpt.scoring = init_scoring(cfg.d_model, 0.0, 0);
    ckpt.options = options_from(h.at("options"));
    ckpt.hyper_json = h.at("hyper").dump();
    ckpt.vocab = Vocab(h.at("vocab").at("words").get<std::vector<std::string>>(),
                       h.at("vocab").at("time_tokens").get<std::vector<std::string>>());
    if (static_cast<int>(ckpt.vocab.size()) != cfg.vocab_size) throw IoError("checkpoint vocabulary size mismatch");

    auto list = all_tensors(ckpt.encoder, ckpt.scoring);
    const auto& manifest = h.at("tensors");
    if (manifest.size() != list.size()) throw IoError("checkpoint tensor manifest mismatch");
    for (std::size_t i = 0; i < list.size(); ++i) {
      auto& [name, t] = list[i];
      const auto& entry = manifest[i];
      if (entry.at("name").get<std::string>() != name || entry.at("shape")[0].get<Eigen::Index>() != t->rows() ||
          entry.at("shape")[1].get<Eigen::Index>() != t->cols())
        throw IoError("checkpoint tensor '" + name + "' does not match the configuration");
      for (Eigen::Index k = 0; k < t->size(); ++k) t->data()[k] = read_f64(in);
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

Model to_model(Checkpoint ckpt) {
  Model m;
  m.vocab = std::move(ckpt.vocab);
  m.encoder = std::move(ckpt.encoder);
  m.scoring = ckpt.scoring ? std::move(*ckpt.scoring) : init_scoring(m.encoder.config.d_model, 0.02, m.encoder.config.rng_seed);
  m.options = ckpt.options;
  return m;
}

}  // namespace tempkg
