#pragma once

// Model backends: the log-probability / generation / perturbation protocol,
// a validating client on top of any transport, and the roster file.

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace seqx {

enum class BackendKind { kCausalLm, kInstructionTuned };

std::string to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view text);

struct BackendSpec {
  std::string name;
  std::string endpoint;
  BackendKind kind = BackendKind::kCausalLm;
  std::size_t max_sequence_length = 1024;
  /// Provenance category for text this backend generates ("GPT2", ...).
  std::string category;
  /// Optional static bearer token.
  std::string token;
};

/// One backend token. Offsets are byte offsets into the request text.
struct TokenLogProb {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
  double logprob = 0.0;

  bool operator==(const TokenLogProb&) const = default;
};

struct LogProbResponse {
  std::string backend;
  std::vector<TokenLogProb> tokens;
  bool truncated = false;
  std::uint64_t text_hash = 0;

  bool operator==(const LogProbResponse&) const = default;
};

struct Generation {
  std::string text;
  /// Backend produced end-of-sequence before any token.
  bool end_of_sequence = false;
};

struct Perturbations {
  std::vector<std::string> variants;
  /// variant i equals the original text.
  std::vector<bool> degenerate;
};

/// Raw request/response exchange with one backend. Implementations must be
/// safe to call from several threads at once.
class BackendTransport {
 public:
  virtual ~BackendTransport() = default;
  virtual LogProbResponse logprobs(const std::string& text) = 0;
  /// Returns the continuation text verbatim (may be empty).
  virtual std::string generate(const std::string& prompt, std::size_t max_new_tokens,
                               bool instruction_wrap) = 0;
  virtual std::vector<std::string> perturb(const std::string& text, std::size_t n) = 0;
};

/// Instruction template for instruction-tuned backends.
inline constexpr std::string_view kContinuationInstruction =
    "Please provide a continuation for the following content to make it coherent: ";

/// Smallest log probability a backend may report; -inf is floored to this.
inline constexpr double kLogProbFloor = -100.0;

/// Validating client for one backend.
class BackendClient {
 public:
  BackendClient(BackendSpec spec, std::shared_ptr<BackendTransport> transport,
                int max_retries = 2);

  const BackendSpec& spec() const { return spec_; }
  const std::string& name() const { return spec_.name; }

  /// Token log probabilities with byte spans; truncated at max_sequence_length.
  LogProbResponse fetch_logprobs(const std::string& text) const;
  Generation generate(const std::string& prompt, std::size_t max_new_tokens) const;
  Perturbations perturb(const std::string& text, std::size_t n) const;

  /// Prompt exactly as it is sent on the wire.
  std::string wire_prompt(const std::string& prompt) const;

 private:
  template <typename Fn>
  auto with_retries(Fn&& fn) const;

  BackendSpec spec_;
  std::shared_ptr<BackendTransport> transport_;
  int max_retries_;
};

/// Checks token invariants against the request text; throws ProtocolError.
/// Returns true when the tokens cover only a prefix of the text.
bool validate_tokens(const std::string& backend, const std::string& text,
                     const std::vector<TokenLogProb>& tokens);

/// Parses an INI-style roster: one [name] section per backend with keys
/// endpoint, kind, max_sequence_length, and optionally category and token.
std::vector<BackendSpec> load_roster(const std::string& path);
std::vector<BackendSpec> parse_roster(const std::string& text);

/// Default category for a backend name: its alphanumerics, upper-cased.
std::string default_category(std::string_view name);

/// Builds the transport named by spec.endpoint: mock://... or http(s)://...
std::shared_ptr<BackendTransport> make_transport(const BackendSpec& spec);
std::vector<BackendClient> connect(const std::vector<BackendSpec>& roster);

}  // namespace seqx
