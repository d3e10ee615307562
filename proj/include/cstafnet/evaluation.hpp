#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cstafnet/model.hpp"

namespace cstafnet {

// Multiclass: argmax per row, first index on ties. Binary: 1 iff p >= threshold.
std::vector<int> predict_labels(const Matrix& outputs, Head head, double threshold = 0.5);

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConfusionMatrix {
  CountMatrix counts;  // rows: true class, columns: predicted class
  std::vector<std::string> class_names;

  int classes() const { return static_cast<int>(counts.rows()); }
  std::int64_t total() const { return counts.sum(); }
};

// Class names default to "0".."C-1".
ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred, int classes,
                          std::vector<std::string> class_names = {});

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  // Set when the denominator was zero and the metric was reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

struct AverageMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct ClassificationReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  AverageMetrics macro;
  AverageMetrics weighted;

  nlohmann::json to_json() const;
  // Fixed-width table, four decimals: Precision, Recall, F1-Score, Support.
  std::string to_table() const;
};

ClassificationReport report(const ConfusionMatrix& cm);

// Header row and first column carry class names.
std::string confusion_to_csv(const ConfusionMatrix& cm);

}  // namespace cstafnet
