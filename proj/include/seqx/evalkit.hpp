#pragma once

#include <string>
#include <vector>

#include "seqx/features.hpp"
#include "seqx/prediction.hpp"

namespace seqx {

/// Rows are gold categories, columns predicted categories.
struct ConfusionTable {
  CategorySet categories;
  std::vector<std::vector<std::size_t>> counts;

  explicit ConfusionTable(CategorySet cats = {});
  void add(const std::string& gold, const std::string& predicted);
  void add(std::size_t gold, std::size_t predicted, std::size_t n = 1);
  std::size_t total() const;
};

struct CategoryMetrics {
  std::string category;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold units
};

struct Metrics {
  std::vector<CategoryMetrics> per_category;  // schema order
  double macro_f1 = 0.0;                      // over categories with gold support
  std::size_t n_units = 0;

  const CategoryMetrics& of(const std::string& category) const;
};

/// Pairs predictions with gold documents by id. Throws InputError listing
/// unpaired ids, or naming a document whose sentence spans disagree.
ConfusionTable confusion(const std::vector<PredictionResult>& preds, const Dataset& gold, Level level);

/// Precision/recall/F1 per category, 0/0 taken as 0.
Metrics metrics(const ConfusionTable& table);

/// {level, per_category:{c:{P,R,F1}}, macro_f1, n_units}
std::string report_json(const Metrics& m, Level level);
/// One header row and one value row: P.(c), R.(c) per category, then Macro-F1 (percent).
std::string report_csv(const Metrics& m, const std::string& method);

}  // namespace seqx
