#pragma once

// Pipeline stages shared by the command-line tool: feature extraction over
// a roster and the per-run manifest.

#include <string>
#include <vector>

#include <json.hpp>

#include "seqx/backend.hpp"
#include "seqx/features.hpp"

namespace seqx {

inline constexpr const char* kToolVersion = "0.1.0";

struct ExtractResult {
  Dataset dataset;
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();  // [{id, backend, error}]
};

/// Fetches log probabilities for every (document, backend) pair using up to
/// `jobs` threads and assembles word features in roster order. Documents
/// with any failed request are skipped and listed in failures. Throws
/// TransportError when every request failed because backends were down.
ExtractResult extract_features(const Dataset& docs, const std::vector<BackendClient>& roster,
                               std::size_t jobs = 1);

/// Run record written next to a command's outputs.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  /// Adds tool version, start time and wall-clock.
  nlohmann::ordered_json to_json(double wall_clock_seconds) const;
};

/// "<output>.manifest.json"
std::string manifest_path_for(const std::string& output);
void write_manifest(const RunManifest& manifest, double wall_clock_seconds, const std::string& path);

}  // namespace seqx
