#include "seqx/prediction.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "seqx/error.hpp"

namespace seqx {

using json = nlohmann::ordered_json;

std::string to_string(Level level) { return level == Level::kSentence ? "sentence" : "document"; }

Level parse_level(const std::string& text) {
  if (text == "sentence") return Level::kSentence;
  if (text == "document") return Level::kDocument;
  throw InputError("unknown level '" + text + "' (expected sentence or document)");
}

std::string serialize_predictions(const std::vector<PredictionResult>& preds) {
  std::string out;
  for (const auto& p : preds) {
    json labels = json::array();
    for (const auto& l : p.word_labels) labels.push_back(l.to_string());
    json sentences = json::array();
    for (const auto& s : p.sentences) {
      json rec{{"span", json::array({s.span.start_word, s.span.end_word})}, {"category", s.span.category}};
      if (s.score) rec["score"] = *s.score;
      sentences.push_back(std::move(rec));
    }
    out += json{{"id", p.id},
                {"word_labels", std::move(labels)},
                {"sentences", std::move(sentences)},
                {"document_category", p.document_category}}
               .dump();
    out.push_back('\n');
  }
  return out;
}

void save_predictions(const std::vector<PredictionResult>& preds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << serialize_predictions(preds);
}

std::vector<PredictionResult> load_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open predictions " + path);
  std::vector<PredictionResult> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      PredictionResult p;
      p.id = rec.at("id").get<std::string>();
      for (const auto& l : rec.at("word_labels")) p.word_labels.push_back(WordLabel::parse(l.get<std::string>()));
      for (const auto& s : rec.at("sentences")) {
        SentencePrediction sp;
        sp.span.start_word = s.at("span").at(0).get<std::size_t>();
        sp.span.end_word = s.at("span").at(1).get<std::size_t>();
        sp.span.category = s.at("category").get<std::string>();
        if (s.contains("score")) sp.score = s["score"].get<double>();
        p.sentences.push_back(std::move(sp));
      }
      p.document_category = rec.at("document_category").get<std::string>();
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw InputError("predictions line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace seqx
