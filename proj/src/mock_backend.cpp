#include "seqx/mock_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "seqx/error.hpp"

namespace seqx {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Lower-case letters of a word without punctuation.
std::string core_of(const std::string& word) {
  std::string out;
  for (char c : word) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

constexpr const char* kHumanConsonants = "bdfghlmnprst";
constexpr const char* kMachineConsonants = "kvxzjw";
constexpr const char* kVowels = "aeiou";

std::string make_word(Rng& rng, const char* consonants, std::size_t syllables) {
  const std::size_t nc = std::char_traits<char>::length(consonants);
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w.push_back(consonants[rng.below(nc)]);
    w.push_back(kVowels[rng.below(5)]);
  }
  return w;
}

std::string capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

std::string sentence_from(Rng& rng, const std::vector<std::string>& lexicon, std::size_t words) {
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    std::string w = lexicon[rng.below(lexicon.size())];
    if (i == 0) w = capitalize(w);
    if (i > 0) out.push_back(' ');
    out += w;
  }
  out.push_back('.');
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::map<std::string, std::string> parse_query(const std::string& query) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < query.size()) {
    std::size_t amp = query.find('&', pos);
    if (amp == std::string::npos) amp = query.size();
    const std::string kv = query.substr(pos, amp - pos);
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      out[kv] = "1";
    } else {
      out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    pos = amp + 1;
  }
  return out;
}

}  // namespace

namespace mock_lexicon {

bool is_machine_word(const std::string& word) {
  const std::string core = core_of(word);
  return core.find_first_of(kMachineConsonants) != std::string::npos;
}

std::size_t slot_of(const std::string& word) { return fnv1a(core_of(word)) % kMockSlots; }

const std::vector<std::string>& human_words() {
  static const std::vector<std::string> words = [] {
    Rng rng(0x68756d616eULL);
    std::set<std::string> seen;
    std::vector<std::string> out;
    while (out.size() < 600) {
      std::string w = make_word(rng, kHumanConsonants, 1 + rng.below(3));
      if (seen.insert(w).second) out.push_back(w);
    }
    return out;
  }();
  return words;
}

const std::vector<std::string>& machine_words(std::size_t slot) {
  static const std::vector<std::vector<std::string>> by_slot = [] {
    Rng rng(0x6d616368696e65ULL);
    std::set<std::string> seen;
    std::vector<std::vector<std::string>> out(kMockSlots);
    std::size_t filled = 0;
    while (filled < kMockSlots) {
      std::string w = make_word(rng, kMachineConsonants, 2 + rng.below(2));
      if (!seen.insert(w).second) continue;
      auto& bucket = out[slot_of(w)];
      if (bucket.size() < 300) {
        bucket.push_back(w);
        if (bucket.size() == 300) ++filled;
      }
    }
    return out;
  }();
  return by_slot.at(slot % kMockSlots);
}

std::string human_sentence(Rng& rng, std::size_t words) {
  return sentence_from(rng, human_words(), words);
}

std::string machine_sentence(Rng& rng, std::size_t slot, std::size_t words) {
  return sentence_from(rng, machine_words(slot), words);
}

}  // namespace mock_lexicon

MockOptions MockOptions::parse(const std::string& endpoint) {
  MockOptions o;
  std::string rest = endpoint;
  if (rest.starts_with("mock://")) {
    rest = rest.substr(7);
  } else if (rest.starts_with("mock:")) {
    rest = rest.substr(5);
  } else {
    throw InputError("not a mock endpoint: " + endpoint);
  }
  const std::size_t q = rest.find('?');
  const std::string mode = rest.substr(0, q);
  const auto query = q == std::string::npos ? std::map<std::string, std::string>{}
                                            : parse_query(rest.substr(q + 1));
  if (mode.empty() || mode == "table") {
    o.mode = Mode::kTable;
  } else if (mode == "uniform") {
    o.mode = Mode::kUniform;
  } else if (mode == "synthetic") {
    o.mode = Mode::kSynthetic;
  } else if (mode == "down") {
    o.mode = Mode::kDown;
  } else {
    throw InputError("unknown mock mode '" + mode + "'");
  }
  try {
    for (const auto& [key, value] : query) {
      if (key == "vocab") {
        o.vocab = std::stoul(value);
      } else if (key == "piece") {
        o.piece = std::stoul(value);
      } else if (key == "space") {
        o.attach_space = value != "0";
      } else if (key == "base") {
        o.base = std::stod(value);
      } else if (key == "shift") {
        o.shift = std::stod(value);
      } else if (key == "own") {
        o.own_shift = std::stod(value);
        o.own_shift_set = true;
      } else if (key == "rho") {
        o.rho = std::stod(value);
      } else if (key == "sigma") {
        o.sigma = std::stod(value);
      } else if (key == "slot") {
        o.slot = std::stoi(value);
      } else if (key == "perturb") {
        if (value == "edit") {
          o.perturb = Perturb::kEdit;
        } else if (value == "identity") {
          o.perturb = Perturb::kIdentity;
        } else {
          throw InputError("unknown mock perturb mode '" + value + "'");
        }
      } else if (key == "rate") {
        o.edit_rate = std::stod(value);
      } else if (key == "eos") {
        o.eos_marker = value;
      } else {
        throw InputError("unknown mock option '" + key + "'");
      }
    }
  } catch (const std::logic_error&) {
    throw InputError("bad mock option value in " + endpoint);
  }
  if (!o.own_shift_set) o.own_shift = o.shift;
  if (o.vocab == 0) throw InputError("mock vocab must be positive");
  if (!(o.rho > -1.0 && o.rho < 1.0)) throw InputError("mock rho must be in (-1, 1)");
  return o;
}

MockBackend::MockBackend(std::string name, MockOptions options)
    : name_(std::move(name)),
      options_(std::move(options)),
      slot_(options_.slot >= 0 ? static_cast<std::size_t>(options_.slot) % kMockSlots
                               : fnv1a(name_) % kMockSlots) {}

double MockBackend::word_offset(const std::string& word) const {
  if (!mock_lexicon::is_machine_word(word)) return 0.0;
  return mock_lexicon::slot_of(word) == slot_ ? options_.own_shift : options_.shift;
}

LogProbResponse MockBackend::logprobs(const std::string& text) {
  if (options_.mode == MockOptions::Mode::kDown) throw TransportError(name_, "mock backend is down");
  LogProbResponse out;
  out.backend = name_;

  // Word spans of the text.
  std::vector<std::pair<std::size_t, std::size_t>> words;
  for (std::size_t i = 0; i < text.size();) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    words.emplace_back(i, j);
    i = j;
  }

  Rng noise(mix_seed(fnv1a(text), fnv1a(name_)));
  const double innovation = options_.sigma * std::sqrt(1.0 - options_.rho * options_.rho);
  double e = options_.sigma * noise.normal();
  std::size_t prev_end = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto [ws, we] = words[w];
    if (w > 0) e = options_.rho * e + innovation * noise.normal();
    const double word_value =
        options_.base + word_offset(text.substr(ws, we - ws)) + e;

    // Piece boundaries never split a UTF-8 sequence.
    std::vector<std::size_t> cuts{ws};
    if (options_.piece > 0) {
      std::size_t c = ws;
      while (c < we) {
        c = std::min(we, c + options_.piece);
        while (c < we && (static_cast<unsigned char>(text[c]) & 0xC0) == 0x80) ++c;
        cuts.push_back(c);
      }
    } else {
      cuts.push_back(we);
    }
    const std::size_t pieces = cuts.size() - 1;
    // Zero-sum jitter so the mean over a word's pieces is the word value.
    std::vector<double> jitter(pieces, 0.0);
    if (pieces > 1) {
      double mean = 0.0;
      for (auto& j : jitter) {
        j = 0.3 * noise.normal();
        mean += j;
      }
      mean /= static_cast<double>(pieces);
      for (auto& j : jitter) j -= mean;
    }
    for (std::size_t p = 0; p < pieces; ++p) {
      TokenLogProb t;
      t.start = cuts[p];
      t.end = cuts[p + 1];
      if (p == 0 && options_.attach_space && w > 0) t.start = prev_end;
      t.text = text.substr(t.start, t.end - t.start);
      switch (options_.mode) {
        case MockOptions::Mode::kUniform:
          t.logprob = -std::log(static_cast<double>(options_.vocab));
          break;
        case MockOptions::Mode::kTable:
          t.logprob = -(0.5 + static_cast<double>(fnv1a(t.text) % 950) / 100.0);
          break;
        default:
          t.logprob = std::max(kLogProbFloor, std::min(0.0, word_value + jitter[p]));
          break;
      }
      out.tokens.push_back(std::move(t));
    }
    prev_end = we;
  }
  if (!out.tokens.empty()) out.tokens.front().logprob = 0.0;
  return out;
}

std::string MockBackend::generate(const std::string& prompt, std::size_t max_new_tokens,
                                  bool /*instruction_wrap*/) {
  if (options_.mode == MockOptions::Mode::kDown) throw TransportError(name_, "mock backend is down");
  if (!options_.eos_marker.empty() && prompt.find(options_.eos_marker) != std::string::npos) {
    return "";
  }
  Rng rng(mix_seed(fnv1a(prompt), fnv1a(name_)));
  std::string out;
  std::size_t used = 0;
  while (used < max_new_tokens) {
    std::size_t words = 5 + rng.below(7);
    if (used + words > max_new_tokens) words = max_new_tokens - used;
    if (words < 2 && used > 0) break;
    if (!out.empty()) out.push_back(' ');
    out += mock_lexicon::machine_sentence(rng, slot_, words);
    used += words;
  }
  return out;
}

std::vector<std::string> MockBackend::perturb(const std::string& text, std::size_t n) {
  if (options_.mode == MockOptions::Mode::kDown) throw TransportError(name_, "mock backend is down");
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (options_.perturb == MockOptions::Perturb::kIdentity) {
      out.push_back(text);
      continue;
    }
    Rng rng(mix_seed(fnv1a(text), i));
    std::vector<std::string> words = split_words(text);
    // The sentence-initial word is never edited.
    if (words.size() > 1) {
      const auto edits = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(options_.edit_rate * static_cast<double>(words.size()))));
      for (std::size_t e = 0; e < edits && words.size() > 1; ++e) {
        const std::size_t pos = 1 + rng.below(words.size() - 1);
        if (words.size() > 2 && rng.uniform() < 0.3) {
          words.erase(words.begin() + static_cast<std::ptrdiff_t>(pos));
          continue;
        }
        const std::string& old = words[pos];
        std::size_t tail = old.size();
        while (tail > 0 && !std::isalpha(static_cast<unsigned char>(old[tail - 1]))) --tail;
        const std::string suffix = old.substr(tail);
        const auto& lexicon = mock_lexicon::is_machine_word(old)
                                  ? mock_lexicon::machine_words(mock_lexicon::slot_of(old))
                                  : mock_lexicon::human_words();
        std::string repl = lexicon[rng.below(lexicon.size())];
        if (!old.empty() && std::isupper(static_cast<unsigned char>(old[0]))) repl = capitalize(repl);
        words[pos] = repl + suffix;
      }
    }
    std::string joined;
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (w > 0) joined.push_back(' ');
      joined += words[w];
    }
    out.push_back(words.size() <= 1 ? text : joined);
  }
  return out;
}

}  // namespace seqx
