#pragma once

// Checkpoint files: one JSON header line (format version, configuration,
// vocabulary, tensor manifest) followed by raw little-endian 64-bit floats in
// manifest order.

#include <iosfwd>
#include <optional>
#include <string>

#include "tempkg/corpus.hpp"
#include "tempkg/encoder.hpp"
#include "tempkg/scoring.hpp"

namespace tempkg {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  Vocab vocab;
  EncoderParams encoder;
  /// Absent for pretrained-encoder checkpoints.
  std::optional<ScoringParams> scoring;
  ScoringOptions options;
  /// Echoed hyperparameters; must be a JSON object.
  std::string hyper_json = "{}";
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
/// Throws IoError on truncated or inconsistent files.
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Model to_model(Checkpoint ckpt);

}  // namespace tempkg
