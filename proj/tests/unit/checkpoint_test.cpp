#include <gtest/gtest.h>

#include <sstream>

#include "graphs.hpp"
#include "json.hpp"
#include "tempkg/checkpoint.hpp"
#include "tempkg/errors.hpp"

namespace tempkg {
namespace {

Checkpoint sample_checkpoint(bool with_scoring) {
  Rng graphs(1);
  Tkg g = testing::random_graph(graphs, 10, 2, 30, 5);
  Checkpoint c;
  c.vocab = build_vocab(g, TemplateTable{});
  EncoderConfig cfg;
  cfg.vocab_size = static_cast<int>(c.vocab.size());
  cfg.d_model = 6;
  cfg.n_layers = 2;
  cfg.init_scale = 0.1;
  cfg.rng_seed = 4;
  c.encoder = init_encoder(cfg);
  c.encoder.mlm_bias(0, 3) = -1.0 / 3.0;
  if (with_scoring) c.scoring = init_scoring(6, 0.2, 5);
  c.options.max_sentences = 4;
  c.options.use_t2v = false;
  c.options.bundle.use_history = false;
  c.hyper_json = R"({"lr":0.002,"loss":"plausibility"})";
  return c;
}

std::string serialise(const Checkpoint& c) {
  std::ostringstream out;
  write_checkpoint(out, c);
  return out.str();
}

TEST(Checkpoint, RoundTripIsExact) {
  for (bool with_scoring : {false, true}) {
    auto c = sample_checkpoint(with_scoring);
    auto bytes = serialise(c);
    std::istringstream in(bytes);
    auto back = read_checkpoint(in);
    EXPECT_EQ(back.scoring.has_value(), with_scoring);
    auto a = tensors(c.encoder);
    auto b = tensors(back.encoder);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].second, *b[i].second) << a[i].first;
    if (with_scoring) EXPECT_EQ(back.scoring->omega, c.scoring->omega);
    EXPECT_EQ(back.vocab.words(), c.vocab.words());
    EXPECT_EQ(back.vocab.time_tokens(), c.vocab.time_tokens());
    EXPECT_EQ(back.options.max_sentences, 4);
    EXPECT_FALSE(back.options.use_t2v);
    EXPECT_FALSE(back.options.bundle.use_history);
    EXPECT_EQ(back.encoder.config.n_layers, 2);
    EXPECT_EQ(serialise(back), bytes);
  }
}

TEST(Checkpoint, HeaderLayout) {
  auto bytes = serialise(sample_checkpoint(true));
  auto header = nlohmann::json::parse(bytes.substr(0, bytes.find('\n')));
  EXPECT_EQ(header["format_version"], kCheckpointFormatVersion);
  EXPECT_EQ(header["config"]["d_model"], 6);
  EXPECT_EQ(header["hyper"]["lr"], 0.002);
  std::size_t floats = 0;
  for (const auto& t : header["tensors"]) {
    EXPECT_EQ(t["offset"].get<std::size_t>(), floats);
    floats += t["shape"][0].get<std::size_t>() * t["shape"][1].get<std::size_t>();
  }
  EXPECT_EQ(bytes.size() - bytes.find('\n') - 1, floats * 8);
}

TEST(Checkpoint, LittleEndianPayload) {
  auto c = sample_checkpoint(false);
  c.encoder.embedding(0, 0) = 1.0;  // 0x3ff0000000000000
  auto bytes = serialise(c);
  auto body = bytes.substr(bytes.find('\n') + 1, 8);
  EXPECT_EQ(static_cast<unsigned char>(body[7]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(body[6]), 0xf0);
  EXPECT_EQ(static_cast<unsigned char>(body[0]), 0x00);
}

TEST(Checkpoint, CorruptFilesRejected) {
  auto bytes = serialise(sample_checkpoint(true));
  std::istringstream truncated(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(read_checkpoint(truncated), IoError);
  std::istringstream empty("");
  EXPECT_THROW(read_checkpoint(empty), IoError);
  std::istringstream junk("not json\n");
  EXPECT_THROW(read_checkpoint(junk), IoError);
  auto header = nlohmann::json::parse(bytes.substr(0, bytes.find('\n')));
  header["format_version"] = 99;
  std::istringstream version(header.dump() + "\n");
  EXPECT_THROW(read_checkpoint(version), IoError);
}

TEST(Checkpoint, MissingFile) { EXPECT_THROW(load_checkpoint("/nonexistent/dir/model.ckpt"), IoError); }

TEST(Checkpoint, ToModel) {
  auto c = sample_checkpoint(true);
  auto m = to_model(c);
  EXPECT_EQ(m.scoring.wr, c.scoring->wr);
  EXPECT_EQ(m.options.max_sentences, 4);
  // A pretrained-encoder checkpoint gets fresh scoring parameters.
  auto fresh = to_model(sample_checkpoint(false));
  EXPECT_EQ(fresh.scoring.dim(), 6);
}

}  // namespace
}  // namespace tempkg
