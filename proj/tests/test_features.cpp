#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "seqx/error.hpp"
#include "seqx/features.hpp"
#include "seqx/mock_backend.hpp"
#include "seqx/random.hpp"

namespace seqx {
namespace {

std::vector<std::string> strings(const std::vector<WordLabel>& labels) {
  std::vector<std::string> out;
  for (const auto& l : labels) out.push_back(l.to_string());
  return out;
}

TEST(Labels, ExpandSpans) {
  const std::vector<SentenceSpan> spans{{0, 3, "HUMAN"}, {3, 5, "AI"}};
  EXPECT_EQ(strings(expand_labels(spans, 5)),
            (std::vector<std::string>{"B-HUMAN", "I-HUMAN", "I-HUMAN", "B-AI", "I-AI"}));
  EXPECT_EQ(strings(expand_labels({{0, 1, "AI"}}, 1)), (std::vector<std::string>{"B-AI"}));
  EXPECT_TRUE(expand_labels({}, 0).empty());
}

TEST(Labels, PartitionErrors) {
  EXPECT_THROW(check_partition({{0, 2, "AI"}, {3, 5, "AI"}}, 5), InputError);
  EXPECT_THROW(check_partition({{0, 3, "AI"}, {2, 5, "AI"}}, 5), InputError);
  EXPECT_THROW(check_partition({{0, 3, "AI"}}, 5), InputError);
  EXPECT_THROW(check_partition({{0, 0, "AI"}, {0, 2, "AI"}}, 2), InputError);
  EXPECT_THROW(check_partition({{0, 6, "AI"}}, 5), InputError);
  EXPECT_NO_THROW(check_partition({{0, 2, "AI"}, {2, 5, "HUMAN"}}, 5));
}

TEST(Labels, ParseAndIndex) {
  EXPECT_EQ(WordLabel::parse("B-AI"), WordLabel::begin("AI"));
  EXPECT_EQ(WordLabel::parse("I-HUMAN"), WordLabel::inside("HUMAN"));
  EXPECT_EQ(WordLabel::parse("O"), WordLabel::outside());
  EXPECT_THROW(WordLabel::parse("X-AI"), InputError);
  EXPECT_THROW(WordLabel::parse("B-"), InputError);
  const LabelSet ls(CategorySet::binary());
  EXPECT_EQ(ls.size(), 5u);
  EXPECT_EQ(ls.index_of(WordLabel::outside()), 0u);
  EXPECT_EQ(ls.index_of(WordLabel::begin("AI")), 1u);
  EXPECT_EQ(ls.index_of(WordLabel::inside("AI")), 2u);
  EXPECT_EQ(ls.index_of(WordLabel::begin("HUMAN")), 3u);
  EXPECT_EQ(ls.index_of(WordLabel::inside("HUMAN")), 4u);
  for (std::size_t i = 0; i < ls.size(); ++i) EXPECT_EQ(ls.index_of(ls.label(i)), i);
  EXPECT_THROW(ls.index_of(WordLabel::begin("GPT2")), InputError);
}

TEST(Categories, RejectDuplicatesAndEmpty) {
  EXPECT_THROW(CategorySet({"AI", "AI"}), InputError);
  EXPECT_THROW(CategorySet({""}), InputError);
  EXPECT_THROW(CategorySet::binary().index_of("GPT2"), InputError);
}

// Every partition of t words into spans, with categories cycling through
// three names, compared against the labels written out word by word.
TEST(Labels, ExpandMatchesBruteForceOverAllPartitions) {
  const std::vector<std::string> cats{"A", "B", "C"};
  for (std::size_t t = 1; t <= 8; ++t) {
    for (std::uint32_t mask = 0; mask < (1u << (t - 1)); ++mask) {
      std::vector<SentenceSpan> spans;
      std::size_t start = 0;
      for (std::size_t i = 1; i <= t; ++i) {
        if (i == t || (mask >> (i - 1)) & 1u) {
          spans.push_back({start, i, cats[spans.size() % 3]});
          start = i;
        }
      }
      const auto labels = expand_labels(spans, t);
      ASSERT_EQ(labels.size(), t);
      std::size_t span = 0;
      for (std::size_t i = 0; i < t; ++i) {
        const bool starts = i == 0 || (mask >> (i - 1)) & 1u;
        if (starts && i > 0) ++span;
        const auto& cat = cats[span % 3];
        EXPECT_EQ(labels[i], starts ? WordLabel::begin(cat) : WordLabel::inside(cat));
      }
    }
  }
}

TEST(Segmentation, Examples) {
  EXPECT_EQ(segment_sentences("A b. C d.").size(), 2u);
  EXPECT_EQ(segment_sentences("Dr. Smith left.").size(), 1u);
  EXPECT_EQ(segment_sentences("Hi! ok").size(), 2u);
  EXPECT_EQ(segment_sentences("e.g. Rome is old.").size(), 1u);
  EXPECT_EQ(segment_sentences("one two. three four.").size(), 1u);
  EXPECT_TRUE(segment_sentences("").empty());
  const auto s = segment_sentences("A b. C d.");
  EXPECT_EQ(s[0], (SentenceSpan{0, 2, ""}));
  EXPECT_EQ(s[1], (SentenceSpan{2, 4, ""}));
}

TEST(Segmentation, PartitionsAndIsIdempotent) {
  Rng rng(5);
  for (int iter = 0; iter < 200; ++iter) {
    std::string text;
    const auto n = 1 + rng.below(5);
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) text += ' ';
      text += mock_lexicon::human_sentence(rng, 1 + rng.below(6));
      if (rng.below(4) == 0) text.back() = rng.below(2) ? '!' : '?';
    }
    const auto spans = segment_sentences(text);
    const auto words = whitespace_words(text);
    EXPECT_NO_THROW(check_partition(spans, words.size()));
    EXPECT_EQ(spans.size(), n) << text;
    // Re-segmenting each sentence on its own yields exactly one sentence.
    for (const auto& sp : spans) {
      std::string sentence;
      for (std::size_t w = sp.start_word; w < sp.end_word; ++w) {
        if (w > sp.start_word) sentence += ' ';
        sentence += words[w].text;
      }
      EXPECT_EQ(segment_sentences(sentence).size(), 1u) << sentence;
    }
  }
}

Dataset random_dataset(Rng& rng, std::size_t n_docs, std::size_t channels) {
  Dataset ds;
  ds.categories = CategorySet::binary();
  for (std::size_t c = 0; c < channels; ++c) ds.backends.push_back("b" + std::to_string(c));
  for (std::size_t d = 0; d < n_docs; ++d) {
    std::string text;
    std::vector<SentenceSpan> spans;
    std::size_t words = 0;
    const auto n = 1 + rng.below(4);
    for (std::size_t s = 0; s < n; ++s) {
      const auto len = 1 + rng.below(6);
      if (s > 0) text += ' ';
      text += mock_lexicon::human_sentence(rng, len);
      spans.push_back({words, words + len, rng.below(2) ? "AI" : "HUMAN"});
      words += len;
    }
    auto doc = make_document("d" + std::to_string(d), text, spans);
    doc.features.backends = ds.backends;
    doc.features.feats = Tensor<double>({doc.length(), channels});
    for (auto& v : doc.features.feats.values()) v = -rng.uniform(0.0, 20.0);
    if (rng.below(5) == 0 && channels > 0) doc.features.truncated = {ds.backends[0]};
    ds.docs.push_back(std::move(doc));
  }
  return ds;
}

TEST(Dataset, RoundTripFuzz) {
  Rng rng(99);
  const auto ds = random_dataset(rng, 100, 4);
  const auto text = serialize_dataset(ds);
  const auto back = parse_dataset(text);
  EXPECT_EQ(back, ds);
  EXPECT_EQ(serialize_dataset(back), text);
}

TEST(Dataset, FileRoundTrip) {
  Rng rng(3);
  const auto ds = random_dataset(rng, 10, 2);
  const auto path = (std::filesystem::temp_directory_path() / "seqx_features_rt.jsonl").string();
  save_dataset(ds, path);
  EXPECT_EQ(load_dataset(path), ds);
  std::filesystem::remove(path);
}

TEST(Dataset, EmptyDatasetIsAnEmptyFile) {
  Dataset ds;
  ds.categories = CategorySet::binary();
  EXPECT_EQ(serialize_dataset(ds), "");
  EXPECT_TRUE(parse_dataset("").docs.empty());
}

TEST(Dataset, FeatureLayout) {
  Dataset ds;
  ds.categories = CategorySet::binary();
  ds.backends = {"a", "b", "c", "d"};
  auto doc = make_document("x", "Hello there.", {{0, 2, "HUMAN"}});
  doc.features.backends = ds.backends;
  doc.features.feats = Tensor<double>({2, 4});
  for (std::size_t i = 0; i < 8; ++i) doc.features.feats[i] = -static_cast<double>(i);
  ds.docs.push_back(doc);
  const auto text = serialize_dataset(ds);
  const auto line = text.substr(text.find('\n') + 1);
  const auto rec = nlohmann::json::parse(line);
  ASSERT_EQ(rec["feats"].size(), 2u);
  ASSERT_EQ(rec["feats"][0].size(), 4u);
  EXPECT_EQ(rec["feats"][1][2].get<double>(), -6.0);
  EXPECT_EQ(rec["words"], nlohmann::json::array({"Hello", "there."}));
}

TEST(Dataset, SchemaErrorsNameTheLine) {
  Rng rng(1);
  const auto ds = random_dataset(rng, 3, 1);
  std::string text = serialize_dataset(ds);
  // Break the third line (second document).
  std::size_t pos = text.find('\n');
  pos = text.find('\n', pos + 1);
  const std::size_t end = text.find('\n', pos + 1);
  std::string broken = text.substr(0, pos + 1) + "{\"id\": 3}" + text.substr(end);
  try {
    parse_dataset(broken);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_dataset(text.substr(text.find('\n') + 1)), InputError);
  std::string wrong_cat = text;
  const auto at = wrong_cat.find("\"HUMAN\"]");
  if (at != std::string::npos) {
    wrong_cat.replace(at, 7, "\"GPT2\"");
    EXPECT_THROW(parse_dataset(wrong_cat), InputError);
  }
}

TEST(Dataset, SerializeRejectsInconsistentDocuments) {
  Rng rng(2);
  auto ds = random_dataset(rng, 2, 2);
  ds.docs[1].features.backends = {"b0"};
  EXPECT_THROW(serialize_dataset(ds), InputError);
  auto ds2 = random_dataset(rng, 1, 2);
  ds2.docs[0].spans[0].category = "GPT2";
  EXPECT_THROW(serialize_dataset(ds2), InputError);
}

TEST(Corpus, RoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "seqx_corpus_rt.jsonl").string();
  std::vector<HumanDocument> corpus{{"a", "One two."}, {"b", "Caf\xc3\xa9 \"quoted\"."}};
  save_corpus(corpus, path);
  const auto back = load_corpus(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].text, corpus[1].text);
  std::ofstream(path) << "{\"id\": \"a\"}\n";
  EXPECT_THROW(load_corpus(path), InputError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace seqx
