#include "seqx/evalkit.hpp"

#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "seqx/detector.hpp"
#include "seqx/error.hpp"

namespace seqx {

ConfusionTable::ConfusionTable(CategorySet cats)
    : categories(std::move(cats)),
      counts(categories.size(), std::vector<std::size_t>(categories.size(), 0)) {}

void ConfusionTable::add(const std::string& gold, const std::string& predicted) {
  add(categories.index_of(gold), categories.index_of(predicted));
}

void ConfusionTable::add(std::size_t gold, std::size_t predicted, std::size_t n) {
  counts.at(gold).at(predicted) += n;
}

std::size_t ConfusionTable::total() const {
  std::size_t n = 0;
  for (const auto& row : counts) {
    for (auto c : row) n += c;
  }
  return n;
}

const CategoryMetrics& Metrics::of(const std::string& category) const {
  for (const auto& m : per_category) {
    if (m.category == category) return m;
  }
  throw InputError("no metrics for category " + category);
}

ConfusionTable confusion(const std::vector<PredictionResult>& preds, const Dataset& gold, Level level) {
  std::map<std::string, const PredictionResult*> by_id;
  for (const auto& p : preds) {
    if (!by_id.emplace(p.id, &p).second) throw InputError("duplicate prediction id " + p.id);
  }
  std::vector<std::string> missing, extra;
  std::map<std::string, bool> gold_ids;
  for (const auto& d : gold.docs) {
    gold_ids[d.id] = true;
    if (!by_id.count(d.id)) missing.push_back(d.id);
  }
  for (const auto& p : preds) {
    if (!gold_ids.count(p.id)) extra.push_back(p.id);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "predictions and gold do not pair up;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (std::size_t i = 0; i < ids.size() && i < 10; ++i) msg += " " + ids[i];
      if (ids.size() > 10) msg += " ...";
    };
    list("missing predictions", missing);
    list("unknown ids", extra);
    throw InputError(msg);
  }

  ConfusionTable table(gold.categories);
  for (const auto& doc : gold.docs) {
    const PredictionResult& p = *by_id.at(doc.id);
    if (level == Level::kDocument) {
      const auto labels = expand_labels(doc.spans, doc.length());
      table.add(decode_document(labels), p.document_category);
      continue;
    }
    if (p.sentences.size() != doc.spans.size()) {
      throw InputError("document " + doc.id + ": predicted sentences do not match gold spans");
    }
    for (std::size_t s = 0; s < doc.spans.size(); ++s) {
      const auto& g = doc.spans[s];
      const auto& ps = p.sentences[s].span;
      if (g.start_word != ps.start_word || g.end_word != ps.end_word) {
        throw InputError("document " + doc.id + ": sentence " + std::to_string(s) + " span differs from gold");
      }
      table.add(g.category, ps.category);
    }
  }
  return table;
}

Metrics metrics(const ConfusionTable& table) {
  Metrics out;
  const std::size_t n = table.categories.size();
  out.n_units = table.total();
  double f1_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t tp = table.counts[c][c];
    std::size_t gold = 0, predicted = 0;
    for (std::size_t j = 0; j < n; ++j) {
      gold += table.counts[c][j];
      predicted += table.counts[j][c];
    }
    CategoryMetrics m;
    m.category = table.categories.name(c);
    m.support = gold;
    m.precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    m.recall = gold == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gold);
    m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    if (gold > 0) {
      f1_sum += m.f1;
      ++present;
    }
    out.per_category.push_back(std::move(m));
  }
  out.macro_f1 = present == 0 ? 0.0 : f1_sum / static_cast<double>(present);
  return out;
}

std::string report_json(const Metrics& m, Level level) {
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& c : m.per_category) {
    per[c.category] = {{"P", c.precision}, {"R", c.recall}, {"F1", c.f1}, {"support", c.support}};
  }
  return nlohmann::ordered_json{{"level", to_string(level)},
                                {"per_category", std::move(per)},
                                {"macro_f1", m.macro_f1},
                                {"n_units", m.n_units}}
             .dump(2) +
         "\n";
}

std::string report_csv(const Metrics& m, const std::string& method) {
  std::ostringstream head, row;
  head << "method";
  row << method;
  row << std::fixed << std::setprecision(1);
  for (const auto& c : m.per_category) {
    head << ",P.(" << c.category << "),R.(" << c.category << ")";
    row << ',' << 100.0 * c.precision << ',' << 100.0 * c.recall;
  }
  head << ",Macro-F1\n";
  row << ',' << 100.0 * m.macro_f1 << '\n';
  return head.str() + row.str();
}

}  // namespace seqx
