#include "seqx/backend.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "seqx/error.hpp"
#include "seqx/http_transport.hpp"
#include "seqx/mock_backend.hpp"
#include "seqx/random.hpp"

namespace seqx {

std::string to_string(BackendKind kind) {
  return kind == BackendKind::kCausalLm ? "causal-lm" : "instruction-tuned";
}

BackendKind parse_backend_kind(std::string_view text) {
  if (text == "causal-lm") return BackendKind::kCausalLm;
  if (text == "instruction-tuned") return BackendKind::kInstructionTuned;
  throw InputError("unknown backend kind '" + std::string(text) + "'");
}

std::string default_category(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool blank(const std::string& text) {
  return std::all_of(text.begin(), text.end(), is_space);
}

}  // namespace

bool validate_tokens(const std::string& backend, const std::string& text,
                     const std::vector<TokenLogProb>& tokens) {
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t.start >= t.end) throw ProtocolError(backend, "token " + std::to_string(i) + " has an empty span");
    if (t.end > text.size()) throw ProtocolError(backend, "token " + std::to_string(i) + " ends past the text");
    if (t.start < cursor) throw ProtocolError(backend, "token " + std::to_string(i) + " overlaps its predecessor");
    if (!std::isfinite(t.logprob)) throw ProtocolError(backend, "token " + std::to_string(i) + " has a non-finite logprob");
    if (t.logprob > 1e-9) throw ProtocolError(backend, "token " + std::to_string(i) + " has a positive logprob");
    for (std::size_t c = cursor; c < t.start; ++c) {
      if (!is_space(text[c])) {
        throw ProtocolError(backend, "character " + std::to_string(c) + " is not covered by any token");
      }
    }
    cursor = t.end;
  }
  for (std::size_t c = cursor; c < text.size(); ++c) {
    if (!is_space(text[c])) return true;
  }
  return false;
}

BackendClient::BackendClient(BackendSpec spec, std::shared_ptr<BackendTransport> transport,
                             int max_retries)
    : spec_(std::move(spec)), transport_(std::move(transport)), max_retries_(max_retries) {
  if (spec_.max_sequence_length == 0) throw InputError("backend " + spec_.name + ": max_sequence_length must be >= 1");
  if (!transport_) throw InputError("backend " + spec_.name + ": no transport");
}

template <typename Fn>
auto BackendClient::with_retries(Fn&& fn) const {
  for (int attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const TransportError&) {
      if (attempt >= max_retries_) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    }
  }
}

LogProbResponse BackendClient::fetch_logprobs(const std::string& text) const {
  if (blank(text)) throw InputError("fetch_logprobs: empty text for backend " + spec_.name);
  LogProbResponse response = with_retries([&] { return transport_->logprobs(text); });
  response.backend = spec_.name;
  response.text_hash = fnv1a(text);
  bool prefix_only = validate_tokens(spec_.name, text, response.tokens);
  if (response.tokens.size() > spec_.max_sequence_length) {
    response.tokens.resize(spec_.max_sequence_length);
    prefix_only = true;
  }
  response.truncated = response.truncated || prefix_only;
  return response;
}

std::string BackendClient::wire_prompt(const std::string& prompt) const {
  if (spec_.kind != BackendKind::kInstructionTuned) return prompt;
  return std::string(kContinuationInstruction) + prompt;
}

Generation BackendClient::generate(const std::string& prompt, std::size_t max_new_tokens) const {
  if (blank(prompt)) throw InputError("generate: empty prompt for backend " + spec_.name);
  if (max_new_tokens == 0) throw InputError("generate: max_new_tokens must be positive");
  const std::string wire = wire_prompt(prompt);
  const bool wrapped = spec_.kind == BackendKind::kInstructionTuned;
  Generation out;
  out.text = with_retries([&] { return transport_->generate(wire, max_new_tokens, wrapped); });
  out.end_of_sequence = blank(out.text);
  return out;
}

Perturbations BackendClient::perturb(const std::string& text, std::size_t n) const {
  if (n == 0) throw InputError("perturb: n must be >= 1");
  Perturbations out;
  out.variants = with_retries([&] { return transport_->perturb(text, n); });
  if (out.variants.size() != n) {
    throw ProtocolError(spec_.name, "perturb returned " + std::to_string(out.variants.size()) +
                                        " variants, expected " + std::to_string(n));
  }
  for (const auto& v : out.variants) out.degenerate.push_back(v == text);
  return out;
}

std::vector<BackendSpec> parse_roster(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InputError(std::string("roster: ") + e.what());
  }
  std::vector<BackendSpec> out;
  std::set<std::string> seen;
  for (const auto& [name, section] : tree) {
    if (section.empty()) throw InputError("roster: entry '" + name + "' is not a section");
    if (!seen.insert(name).second) throw InputError("roster: duplicate backend name " + name);
    BackendSpec spec;
    spec.name = name;
    spec.endpoint = section.get<std::string>("endpoint", "");
    if (spec.endpoint.empty()) throw InputError("roster: backend " + name + " has no endpoint");
    spec.kind = parse_backend_kind(section.get<std::string>("kind", "causal-lm"));
    const long max_len = section.get<long>("max_sequence_length", 1024);
    if (max_len < 1) throw InputError("roster: backend " + name + " max_sequence_length must be >= 1");
    spec.max_sequence_length = static_cast<std::size_t>(max_len);
    spec.category = section.get<std::string>("category", default_category(name));
    spec.token = section.get<std::string>("token", "");
    out.push_back(std::move(spec));
  }
  if (out.empty()) throw InputError("roster: no backends");
  return out;
}

std::vector<BackendSpec> load_roster(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("roster: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_roster(buf.str());
}

std::shared_ptr<BackendTransport> make_transport(const BackendSpec& spec) {
  if (spec.endpoint.starts_with("mock:")) {
    return std::make_shared<MockBackend>(spec.name, MockOptions::parse(spec.endpoint));
  }
  if (spec.endpoint.starts_with("http://") || spec.endpoint.starts_with("https://")) {
    return std::make_shared<HttpTransport>(spec.name, spec.endpoint, spec.token);
  }
  throw InputError("backend " + spec.name + ": unsupported endpoint '" + spec.endpoint + "'");
}

std::vector<BackendClient> connect(const std::vector<BackendSpec>& roster) {
  std::vector<BackendClient> out;
  out.reserve(roster.size());
  for (const auto& spec : roster) out.emplace_back(spec, make_transport(spec));
  return out;
}

}  // namespace seqx
