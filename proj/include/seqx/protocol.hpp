#pragma once

// JSON wire format of the backend HTTP protocol. On the wire, offsets count
// Unicode code points; in memory they are byte offsets into UTF-8 text.

#include <string>
#include <vector>

#include <json.hpp>

#include "seqx/backend.hpp"

namespace seqx::protocol {

using json = nlohmann::ordered_json;

/// Byte offset for every code point boundary of text (size = code points + 1).
std::vector<std::size_t> codepoint_offsets(const std::string& text);

json encode_logprobs_request(const std::string& text);
json encode_logprobs_response(const LogProbResponse& response, const std::string& text);
/// Throws ProtocolError on schema violations.
LogProbResponse decode_logprobs_response(const std::string& backend, const json& body,
                                         const std::string& text);

json encode_generate_request(const std::string& prompt, std::size_t max_new_tokens,
                             bool instruction_wrap);
json encode_generate_response(const std::string& text);
std::string decode_generate_response(const std::string& backend, const json& body);

json encode_perturb_request(const std::string& text, std::size_t n);
json encode_perturb_response(const std::vector<std::string>& variants);
std::vector<std::string> decode_perturb_response(const std::string& backend, const json& body);

/// Parses a body, mapping parse failures to ProtocolError.
json parse_body(const std::string& backend, const std::string& body);

}  // namespace seqx::protocol
