#include "seqx/features.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "seqx/error.hpp"

namespace seqx {

using json = nlohmann::ordered_json;

CategorySet::CategorySet(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw InputError("category names must be non-empty");
    if (!seen.insert(n).second) throw InputError("duplicate category " + n);
  }
}

bool CategorySet::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t CategorySet::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw InputError("category '" + name + "' is not in the category set");
  return static_cast<std::size_t>(it - names_.begin());
}

std::string WordLabel::to_string() const {
  switch (kind) {
    case Kind::kBegin:
      return "B-" + category;
    case Kind::kInside:
      return "I-" + category;
    default:
      return "O";
  }
}

WordLabel WordLabel::parse(const std::string& text) {
  if (text == "O") return outside();
  if (text.size() > 2 && text[1] == '-' && (text[0] == 'B' || text[0] == 'I')) {
    return text[0] == 'B' ? begin(text.substr(2)) : inside(text.substr(2));
  }
  throw InputError("bad word label '" + text + "'");
}

std::size_t LabelSet::index_of(const WordLabel& label) const {
  if (label.kind == WordLabel::Kind::kOutside) return 0;
  const std::size_t c = categories_.index_of(label.category);
  return label.kind == WordLabel::Kind::kBegin ? 1 + 2 * c : 2 + 2 * c;
}

WordLabel LabelSet::label(std::size_t index) const {
  if (index == 0) return WordLabel::outside();
  if (index >= size()) throw InputError("label index out of range");
  const std::string& c = categories_.name((index - 1) / 2);
  return index % 2 == 1 ? WordLabel::begin(c) : WordLabel::inside(c);
}

void check_partition(const std::vector<SentenceSpan>& spans, std::size_t t) {
  std::size_t cursor = 0;
  for (const auto& s : spans) {
    if (s.start_word != cursor) {
      throw InputError("sentence spans leave a gap or overlap at word " + std::to_string(cursor));
    }
    if (s.end_word <= s.start_word) throw InputError("empty sentence span at word " + std::to_string(cursor));
    cursor = s.end_word;
  }
  if (cursor != t) {
    throw InputError("sentence spans cover " + std::to_string(cursor) + " of " + std::to_string(t) + " words");
  }
}

std::vector<WordLabel> expand_labels(const std::vector<SentenceSpan>& spans, std::size_t t) {
  check_partition(spans, t);
  std::vector<WordLabel> out;
  out.reserve(t);
  for (const auto& s : spans) {
    out.push_back(WordLabel::begin(s.category));
    for (std::size_t w = s.start_word + 1; w < s.end_word; ++w) out.push_back(WordLabel::inside(s.category));
  }
  return out;
}

namespace {

constexpr std::array<const char*, 9> kAbbreviations = {"e.g.", "i.e.", "Dr.", "Mr.", "Mrs.",
                                                       "etc.", "vs.", "Fig.", "No."};

bool ends_sentence(const std::vector<WordSpan>& words, std::size_t i) {
  if (i + 1 == words.size()) return true;
  const std::string& w = words[i].text;
  const char last = w.back();
  if (last == '!' || last == '?') return true;
  if (last != '.') return false;
  if (std::find(kAbbreviations.begin(), kAbbreviations.end(), w) != kAbbreviations.end()) return false;
  return std::isupper(static_cast<unsigned char>(words[i + 1].text.front())) != 0;
}

}  // namespace

std::vector<SentenceSpan> segment_words(const std::vector<WordSpan>& words) {
  std::vector<SentenceSpan> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (ends_sentence(words, i)) {
      out.push_back({start, i + 1, {}});
      start = i + 1;
    }
  }
  return out;
}

std::vector<SentenceSpan> segment_sentences(const std::string& text) {
  return segment_words(whitespace_words(text));
}

LabeledDocument make_document(std::string id, std::string text, std::vector<SentenceSpan> spans) {
  LabeledDocument doc;
  doc.id = std::move(id);
  doc.text = std::move(text);
  doc.features.words = whitespace_words(doc.text);
  doc.features.feats = Tensor<double>({doc.features.words.size(), 0});
  check_partition(spans, doc.features.words.size());
  doc.spans = std::move(spans);
  return doc;
}

// ---------------------------------------------------------------------------
// Dataset files

namespace {

json document_record(const LabeledDocument& doc) {
  json words = json::array();
  for (const auto& w : doc.words()) words.push_back(w.text);
  json spans = json::array();
  for (const auto& s : doc.spans) spans.push_back(json::array({s.start_word, s.end_word, s.category}));
  json feats = json::array();
  const auto& f = doc.features;
  if (f.channels() > 0) {
    for (std::size_t i = 0; i < f.length(); ++i) {
      json row = json::array();
      for (std::size_t c = 0; c < f.channels(); ++c) row.push_back(f.feats.at(i, c));
      feats.push_back(std::move(row));
    }
  }
  json rec{{"id", doc.id},           {"text", doc.text},     {"words", std::move(words)},
           {"spans", std::move(spans)}, {"backends", f.backends}, {"feats", std::move(feats)}};
  if (!f.truncated.empty()) rec["truncated"] = f.truncated;
  return rec;
}

[[noreturn]] void fail_line(std::size_t line, const std::string& what) {
  throw InputError("dataset line " + std::to_string(line) + ": " + what);
}

LabeledDocument parse_record(const json& rec, const Dataset& schema, std::size_t line) {
  LabeledDocument doc;
  try {
    doc.id = rec.at("id").get<std::string>();
    doc.text = rec.at("text").get<std::string>();
    doc.features.words = whitespace_words(doc.text);
    const auto words = rec.at("words").get<std::vector<std::string>>();
    if (words.size() != doc.features.words.size()) fail_line(line, "word count does not match text");
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (words[i] != doc.features.words[i].text) fail_line(line, "word " + std::to_string(i) + " does not match text");
    }
    for (const auto& s : rec.at("spans")) {
      if (!s.is_array() || s.size() != 3) fail_line(line, "span must be [start, end, category]");
      SentenceSpan span{s[0].get<std::size_t>(), s[1].get<std::size_t>(), s[2].get<std::string>()};
      if (!schema.categories.contains(span.category)) fail_line(line, "unknown category '" + span.category + "'");
      doc.spans.push_back(std::move(span));
    }
    try {
      check_partition(doc.spans, doc.length());
    } catch (const InputError& e) {
      fail_line(line, e.what());
    }
    doc.features.backends = rec.at("backends").get<std::vector<std::string>>();
    if (doc.features.backends != schema.backends) fail_line(line, "backend columns differ from the schema header");
    const std::size_t n = doc.features.backends.size();
    const auto& feats = rec.at("feats");
    doc.features.feats = Tensor<double>({doc.length(), n});
    if (n > 0) {
      if (!feats.is_array() || feats.size() != doc.length()) fail_line(line, "feats must have one row per word");
      for (std::size_t i = 0; i < doc.length(); ++i) {
        const auto& row = feats[i];
        if (!row.is_array() || row.size() != n) fail_line(line, "feats row " + std::to_string(i) + " has the wrong width");
        for (std::size_t c = 0; c < n; ++c) {
          if (!row[c].is_number()) fail_line(line, "non-numeric feature");
          doc.features.feats.at(i, c) = row[c].get<double>();
        }
      }
    } else if (!feats.empty()) {
      fail_line(line, "feats given without backends");
    }
    if (rec.contains("truncated")) doc.features.truncated = rec["truncated"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail_line(line, e.what());
  }
  return doc;
}

}  // namespace

std::string serialize_dataset(const Dataset& dataset) {
  if (dataset.docs.empty()) return {};
  std::string out = "#schema " +
                    json{{"version", 1}, {"categories", dataset.categories.names()}, {"backends", dataset.backends}}.dump() +
                    "\n";
  for (const auto& doc : dataset.docs) {
    if (doc.features.backends != dataset.backends) {
      throw InputError("document " + doc.id + " has backend columns that differ from the dataset");
    }
    for (const auto& s : doc.spans) {
      if (!dataset.categories.contains(s.category)) {
        throw InputError("document " + doc.id + " uses category '" + s.category + "' outside the dataset schema");
      }
    }
    out += document_record(doc).dump();
    out.push_back('\n');
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  const std::string content = serialize_dataset(dataset);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << content;
}

Dataset parse_dataset(const std::string& content) {
  Dataset ds;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  bool have_schema = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.starts_with("#schema")) {
      if (have_schema) fail_line(lineno, "second schema header");
      try {
        const json schema = json::parse(line.substr(7));
        if (schema.value("version", 0) != 1) fail_line(lineno, "unsupported schema version");
        ds.categories = CategorySet(schema.at("categories").get<std::vector<std::string>>());
        ds.backends = schema.at("backends").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        fail_line(lineno, e.what());
      }
      have_schema = true;
      continue;
    }
    if (!have_schema) fail_line(lineno, "document before the #schema header");
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail_line(lineno, e.what());
    }
    ds.docs.push_back(parse_record(rec, ds, lineno));
  }
  return ds;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

std::vector<HumanDocument> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open corpus " + path);
  std::vector<HumanDocument> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      out.push_back({rec.at("id").get<std::string>(), rec.at("text").get<std::string>()});
    } catch (const json::exception& e) {
      throw InputError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_corpus(const std::vector<HumanDocument>& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& d : corpus) out << json{{"id", d.id}, {"text", d.text}}.dump() << '\n';
}

}  // namespace seqx
