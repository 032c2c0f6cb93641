#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "seqx/encoder.hpp"
#include "seqx/features.hpp"

namespace seqx {

inline constexpr int kCheckpointSchemaVersion = 1;

/// A trained model plus what is needed to apply it to a dataset.
struct Checkpoint {
  Encoder model;
  CategorySet categories;
  std::vector<std::string> backends;
  nlohmann::ordered_json train_config = nlohmann::ordered_json::object();
};

nlohmann::ordered_json config_to_json(const EncoderConfig& config);
EncoderConfig config_from_json(const nlohmann::ordered_json& j);

/// JSON envelope {schema_version, config, categories, backends, train_config,
/// tensors:{name: {shape, dtype:"f32", data: base64 little-endian}}}.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& content);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace seqx
