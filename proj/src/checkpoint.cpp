#include "seqx/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "seqx/error.hpp"

namespace seqx {

using json = nlohmann::ordered_json;

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto v = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                   static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16;
    if (rest == 2) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  std::array<int, 256> table;
  table.fill(-1);
  for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kAlphabet[i])] = i;
  if (text.size() % 4 != 0) throw InputError("base64: length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=') {
        if (i + 4 != text.size() || j < 2) throw InputError("base64: misplaced padding");
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad > 0) throw InputError("base64: data after padding");
      const int d = table[static_cast<unsigned char>(c)];
      if (d < 0) throw InputError("base64: invalid character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<char>(v & 0xFF));
  }
  return out;
}

json config_to_json(const EncoderConfig& c) {
  return json{{"in_channels", c.in_channels},
              {"conv_kernels", c.conv_kernels},
              {"conv_strides", c.conv_strides},
              {"conv_channels", c.conv_channels},
              {"model_dim", c.model_dim},
              {"heads", c.heads},
              {"layers", c.layers},
              {"ffn_dim", c.ffn_dim},
              {"dropout", c.dropout},
              {"labels", c.labels},
              {"use_cnn", c.use_cnn},
              {"use_transformer", c.use_transformer},
              {"conv_activation", c.conv_activation == Activation::kGelu ? "gelu" : "identity"}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  try {
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.conv_kernels = j.at("conv_kernels").get<std::vector<std::size_t>>();
    c.conv_strides = j.at("conv_strides").get<std::vector<std::size_t>>();
    c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
    c.model_dim = j.at("model_dim").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.labels = j.at("labels").get<std::size_t>();
    c.use_cnn = j.at("use_cnn").get<bool>();
    c.use_transformer = j.at("use_transformer").get<bool>();
    const auto act = j.value("conv_activation", std::string("gelu"));
    if (act != "gelu" && act != "identity") throw InputError("unknown conv_activation " + act);
    c.conv_activation = act == "gelu" ? Activation::kGelu : Activation::kIdentity;
  } catch (const json::exception& e) {
    throw InputError(std::string("encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian floats");

std::string tensor_bytes(const Tensor<float>& t) {
  std::string bytes(t.size() * sizeof(float), '\0');
  std::memcpy(bytes.data(), t.data(), bytes.size());
  return bytes;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json tensors = json::object();
  const auto& params = ckpt.model.parameters();
  for (const auto& name : params.names()) {
    const auto& t = params[name];
    tensors[name] = {{"shape", t.shape()}, {"dtype", "f32"}, {"data", base64_encode(tensor_bytes(t))}};
  }
  json out{{"schema_version", kCheckpointSchemaVersion},
           {"config", config_to_json(ckpt.model.config())},
           {"categories", ckpt.categories.names()},
           {"backends", ckpt.backends},
           {"train_config", ckpt.train_config},
           {"tensors", std::move(tensors)}};
  return out.dump() + "\n";
}

Checkpoint parse_checkpoint(const std::string& content) {
  json j;
  try {
    j = json::parse(content);
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
  if (!j.contains("schema_version") || j["schema_version"] != kCheckpointSchemaVersion) {
    throw InputError("checkpoint: unsupported schema_version");
  }
  Checkpoint ckpt;
  const EncoderConfig config = config_from_json(j.at("config"));
  try {
    ckpt.categories = CategorySet(j.at("categories").get<std::vector<std::string>>());
    ckpt.backends = j.at("backends").get<std::vector<std::string>>();
    ckpt.train_config = j.value("train_config", json::object());
    ParameterSet<float> params;
    for (const auto& [name, shape] : parameter_layout(config)) {
      if (!j.at("tensors").contains(name)) throw InputError("checkpoint: missing tensor " + name);
      const auto& rec = j["tensors"][name];
      if (rec.at("dtype") != "f32") throw InputError("checkpoint: tensor " + name + " is not f32");
      if (rec.at("shape").get<std::vector<std::size_t>>() != shape) {
        throw InputError("checkpoint: tensor " + name + " has the wrong shape");
      }
      const std::string bytes = base64_decode(rec.at("data").get<std::string>());
      Tensor<float>& t = params.add(name, shape);
      if (bytes.size() != t.size() * sizeof(float)) throw InputError("checkpoint: tensor " + name + " has the wrong size");
      std::memcpy(t.data(), bytes.data(), bytes.size());
    }
    if (j["tensors"].size() != params.names().size()) throw InputError("checkpoint: unexpected extra tensors");
    ckpt.model = Encoder::from_parameters(config, std::move(params));
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
  if (ckpt.model.config().labels != LabelSet(ckpt.categories).size()) {
    throw InputError("checkpoint: label count does not match categories");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path);
  out << serialize_checkpoint(ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace seqx
