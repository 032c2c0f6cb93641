#pragma once

// Deterministic in-process backend used by tests, the synthetic benchmark,
// and `seqx serve-mock`.
//
// Endpoint syntax: mock://<mode>?key=value&...
//   mode     table (default) | uniform | synthetic | down
//   vocab    uniform vocabulary size (50257)
//   piece    max bytes per token, 0 = one token per word (0)
//   space    1 = tokens carry their leading whitespace (0)
//   base     synthetic mean word logprob for human words (-4)
//   shift    synthetic offset for machine words (-3)
//   own      offset for machine words of this backend's own slot (= shift)
//   rho      AR(1) coefficient of the word noise (0.7)
//   sigma    stationary standard deviation of the word noise (1)
//   slot     machine-lexicon slot this backend generates from
//   perturb  edit (default) | identity
//   rate     fraction of words edited per perturbation (0.15)
//   eos      prompts containing this marker generate nothing

#include <cstdint>
#include <string>
#include <vector>

#include "seqx/backend.hpp"
#include "seqx/random.hpp"

namespace seqx {

struct MockOptions {
  enum class Mode { kTable, kUniform, kSynthetic, kDown };
  enum class Perturb { kEdit, kIdentity };

  Mode mode = Mode::kTable;
  std::size_t vocab = 50257;
  std::size_t piece = 0;
  bool attach_space = false;
  double base = -4.0;
  double shift = -3.0;
  double own_shift = -3.0;
  bool own_shift_set = false;
  double rho = 0.7;
  double sigma = 1.0;
  int slot = -1;
  Perturb perturb = Perturb::kEdit;
  double edit_rate = 0.15;
  std::string eos_marker;

  static MockOptions parse(const std::string& endpoint);
};

inline constexpr std::size_t kMockSlots = 8;

/// Word classes of the mock world. Human and machine words are built from
/// disjoint consonant sets, so a word's class is recoverable from its letters.
namespace mock_lexicon {
bool is_machine_word(const std::string& word);
std::size_t slot_of(const std::string& word);
const std::vector<std::string>& human_words();
const std::vector<std::string>& machine_words(std::size_t slot);
/// A capitalized sentence of `words` words ending in '.'.
std::string human_sentence(Rng& rng, std::size_t words);
std::string machine_sentence(Rng& rng, std::size_t slot, std::size_t words);
}  // namespace mock_lexicon

class MockBackend : public BackendTransport {
 public:
  MockBackend(std::string name, MockOptions options);

  LogProbResponse logprobs(const std::string& text) override;
  std::string generate(const std::string& prompt, std::size_t max_new_tokens,
                       bool instruction_wrap) override;
  std::vector<std::string> perturb(const std::string& text, std::size_t n) override;

  const MockOptions& options() const { return options_; }
  std::size_t slot() const { return slot_; }

 private:
  double word_offset(const std::string& word) const;

  std::string name_;
  MockOptions options_;
  std::size_t slot_;
};

}  // namespace seqx
