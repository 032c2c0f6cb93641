#include "seqx/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "seqx/error.hpp"

namespace seqx::protocol {

std::vector<std::size_t> codepoint_offsets(const std::string& text) {
  std::vector<std::size_t> out;
  out.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if ((c & 0xC0) != 0x80) out.push_back(i);
  }
  out.push_back(text.size());
  return out;
}

namespace {

std::size_t byte_to_codepoint(const std::vector<std::size_t>& offsets, std::size_t byte) {
  auto it = std::lower_bound(offsets.begin(), offsets.end(), byte);
  if (it == offsets.end() || *it != byte) {
    throw InputError("byte offset " + std::to_string(byte) + " splits a UTF-8 sequence");
  }
  return static_cast<std::size_t>(it - offsets.begin());
}

template <typename T>
T require(const std::string& backend, const json& body, const char* key) {
  if (!body.is_object() || !body.contains(key)) {
    throw ProtocolError(backend, std::string("response missing field '") + key + "'");
  }
  try {
    return body.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ProtocolError(backend, std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace

json parse_body(const std::string& backend, const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw ProtocolError(backend, std::string("malformed JSON: ") + e.what());
  }
}

json encode_logprobs_request(const std::string& text) { return json{{"text", text}}; }

json encode_logprobs_response(const LogProbResponse& response, const std::string& text) {
  const auto offsets = codepoint_offsets(text);
  json tokens = json::array();
  for (const auto& t : response.tokens) {
    tokens.push_back({{"text", t.text},
                      {"start", byte_to_codepoint(offsets, t.start)},
                      {"end", byte_to_codepoint(offsets, t.end)},
                      {"logprob", t.logprob}});
  }
  json out{{"model", response.backend}, {"tokens", std::move(tokens)}};
  if (response.truncated) out["truncated"] = true;
  return out;
}

LogProbResponse decode_logprobs_response(const std::string& backend, const json& body,
                                         const std::string& text) {
  require<std::string>(backend, body, "model");
  const json tokens = require<json>(backend, body, "tokens");
  if (!tokens.is_array()) throw ProtocolError(backend, "'tokens' is not an array");
  const auto offsets = codepoint_offsets(text);
  const std::size_t n_cp = offsets.size() - 1;
  LogProbResponse out;
  out.backend = backend;
  out.tokens.reserve(tokens.size());
  for (const auto& tok : tokens) {
    TokenLogProb t;
    t.text = require<std::string>(backend, tok, "text");
    const auto start = require<std::int64_t>(backend, tok, "start");
    const auto end = require<std::int64_t>(backend, tok, "end");
    if (start < 0 || end < 0 || static_cast<std::size_t>(end) > n_cp) {
      throw ProtocolError(backend, "token offset outside the request text");
    }
    t.start = offsets[static_cast<std::size_t>(start)];
    t.end = offsets[static_cast<std::size_t>(end)];
    if (!tok.contains("logprob") || !tok["logprob"].is_number()) {
      throw ProtocolError(backend, "token missing numeric 'logprob'");
    }
    t.logprob = tok["logprob"].get<double>();
    out.tokens.push_back(std::move(t));
  }
  if (body.contains("truncated") && body["truncated"].is_boolean()) {
    out.truncated = body["truncated"].get<bool>();
  }
  return out;
}

json encode_generate_request(const std::string& prompt, std::size_t max_new_tokens,
                             bool instruction_wrap) {
  return json{{"prompt", prompt},
              {"max_new_tokens", max_new_tokens},
              {"instruction_wrap", instruction_wrap}};
}

json encode_generate_response(const std::string& text) { return json{{"text", text}}; }

std::string decode_generate_response(const std::string& backend, const json& body) {
  return require<std::string>(backend, body, "text");
}

json encode_perturb_request(const std::string& text, std::size_t n) {
  return json{{"text", text}, {"n", n}};
}

json encode_perturb_response(const std::vector<std::string>& variants) {
  return json{{"variants", variants}};
}

std::vector<std::string> decode_perturb_response(const std::string& backend, const json& body) {
  return require<std::vector<std::string>>(backend, body, "variants");
}

}  // namespace seqx::protocol
