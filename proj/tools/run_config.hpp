#pragma once

// Flat key=value run configuration. Values are layered defaults < config file
// < command-line flags, and every key is validated when applied.

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempkg/experiment.hpp"

namespace tempkg::cli {

/// Bad key, bad value or malformed config file (exit status 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ExperimentConfig experiment;
  /// Relation labels restricting training positives; resolved per graph.
  std::vector<std::string> positive_relations;
  /// Every key that was set by the file or a flag.
  std::set<std::string> explicit_keys;
  /// Effective value of every known key, for the manifest.
  std::map<std::string, std::string> values;
};

/// All recognised keys, sorted.
std::vector<std::string> known_keys();

/// Parses `key = value` lines; `#` starts a comment. Throws UsageError.
std::map<std::string, std::string> parse_config_text(const std::string& text);

/// Applies the desk defaults, then each layer in order (lowest precedence
/// first). Throws UsageError on unknown keys or unparseable values.
RunConfig resolve_config(const std::vector<std::map<std::string, std::string>>& layers);

/// Resolves the label list against `g`; throws LookupError on unknown labels.
std::vector<RelationId> resolve_relations(const Tkg& g, const std::vector<std::string>& labels);

}  // namespace tempkg::cli
