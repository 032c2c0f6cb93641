#pragma once

// Token-to-word alignment. Every backend tokenizes differently; features
// are defined over one shared whitespace tokenization of the text.

#include <string>
#include <vector>

#include "seqx/backend.hpp"
#include "seqx/tensor.hpp"

namespace seqx {

struct WordSpan {
  std::string text;
  std::size_t start = 0;  // byte offset, inclusive
  std::size_t end = 0;    // byte offset, exclusive
  std::size_t index = 0;

  bool operator==(const WordSpan&) const = default;
};

/// Maximal runs of non-whitespace characters, in order.
std::vector<WordSpan> whitespace_words(const std::string& text);

struct WordAlignment {
  std::vector<double> logprobs;          // one per word
  std::vector<std::size_t> token_counts;  // tokens attributed to each word
  /// Some word received no token (only after backend truncation).
  bool truncated = false;
};

/// Attributes each token to the word it overlaps most (ties to the earlier
/// word; a token touching no word goes to the next word, or the last one)
/// and averages the attributed log probabilities per word. Words without
/// tokens get kLogProbFloor.
WordAlignment align(const std::vector<TokenLogProb>& tokens, const std::vector<WordSpan>& words,
                    std::size_t text_length);

/// Word-level feature matrix: row i holds word i's log probability under
/// each backend, columns in backend order.
struct WordFeatureSequence {
  std::vector<WordSpan> words;
  Tensor<double> feats;  // [words x backends]
  std::vector<std::string> backends;
  std::vector<std::string> truncated;  // backends whose alignment was truncated

  std::size_t length() const { return words.size(); }
  std::size_t channels() const { return backends.size(); }
  bool operator==(const WordFeatureSequence&) const = default;
};

/// Aligns every response to the whitespace words of text and stacks the
/// columns in the order given. Throws InputError when a response was
/// computed for different text.
WordFeatureSequence assemble(const std::string& text, const std::vector<LogProbResponse>& responses);

}  // namespace seqx
