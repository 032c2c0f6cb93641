#include "seqx/alignment.hpp"

#include <algorithm>
#include <cctype>

#include "seqx/error.hpp"
#include "seqx/random.hpp"

namespace seqx {

std::vector<WordSpan> whitespace_words(const std::string& text) {
  std::vector<WordSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    out.push_back({text.substr(i, j - i), i, j, out.size()});
    i = j;
  }
  return out;
}

WordAlignment align(const std::vector<TokenLogProb>& tokens, const std::vector<WordSpan>& words,
                    std::size_t text_length) {
  for (const auto& w : words) {
    if (w.end > text_length || w.start >= w.end) throw InputError("align: word span outside the text");
  }
  WordAlignment out;
  out.logprobs.assign(words.size(), 0.0);
  out.token_counts.assign(words.size(), 0);
  if (words.empty()) return out;

  std::vector<double> sums(words.size(), 0.0);
  std::size_t first = 0;  // first word that can still overlap later tokens
  for (const auto& tok : tokens) {
    if (tok.end > text_length || tok.start >= tok.end) {
      throw InputError("align: token span outside the text");
    }
    while (first < words.size() && words[first].end <= tok.start) ++first;
    std::size_t best = words.size();
    std::size_t best_overlap = 0;
    for (std::size_t w = first; w < words.size() && words[w].start < tok.end; ++w) {
      const std::size_t lo = std::max(words[w].start, tok.start);
      const std::size_t hi = std::min(words[w].end, tok.end);
      const std::size_t overlap = hi > lo ? hi - lo : 0;
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best = w;
      }
    }
    if (best == words.size()) best = std::min(first, words.size() - 1);
    sums[best] += tok.logprob;
    ++out.token_counts[best];
  }
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (out.token_counts[w] == 0) {
      out.logprobs[w] = kLogProbFloor;
      out.truncated = true;
    } else {
      out.logprobs[w] = sums[w] / static_cast<double>(out.token_counts[w]);
    }
  }
  return out;
}

WordFeatureSequence assemble(const std::string& text, const std::vector<LogProbResponse>& responses) {
  WordFeatureSequence seq;
  seq.words = whitespace_words(text);
  seq.feats = Tensor<double>({seq.words.size(), responses.size()});
  const std::uint64_t hash = fnv1a(text);
  for (std::size_t c = 0; c < responses.size(); ++c) {
    const auto& r = responses[c];
    if (r.text_hash != hash) {
      throw InputError("assemble: response from " + r.backend + " was computed for different text");
    }
    const WordAlignment aligned = align(r.tokens, seq.words, text.size());
    for (std::size_t w = 0; w < seq.words.size(); ++w) seq.feats.at(w, c) = aligned.logprobs[w];
    seq.backends.push_back(r.backend);
    if (aligned.truncated || r.truncated) seq.truncated.push_back(r.backend);
  }
  return seq;
}

}  // namespace seqx
