#include "cstafnet/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "cstafnet/csv.hpp"

namespace cstafnet {

std::vector<int> predict_labels(const Matrix& outputs, Head head, double threshold) {
  std::vector<int> out(static_cast<std::size_t>(outputs.rows()));
  for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
    if (head == Head::binary) {
      out[static_cast<std::size_t>(i)] = outputs(i, 0) >= threshold ? 1 : 0;
    } else {
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < outputs.cols(); ++j)
        if (outputs(i, j) > outputs(i, best)) best = j;
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
  }
  return out;
}

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred, int classes,
                          std::vector<std::string> class_names) {
  if (y_true.size() != y_pred.size())
    throw ShapeError("confusion(): " + std::to_string(y_true.size()) + " true labels vs " +
                     std::to_string(y_pred.size()) + " predictions");
  if (classes < 1) throw ConfigError("confusion(): class count must be positive");
  if (class_names.empty())
    for (int c = 0; c < classes; ++c) class_names.push_back(std::to_string(c));
  if (static_cast<int>(class_names.size()) != classes) throw ConfigError("confusion(): class name count differs from C");
  ConfusionMatrix cm{CountMatrix::Zero(classes, classes), std::move(class_names)};
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= classes)
      throw LabelError("confusion(): true label " + std::to_string(y_true[i]) + " at index " + std::to_string(i) + " out of range");
    if (y_pred[i] < 0 || y_pred[i] >= classes)
      throw LabelError("confusion(): predicted label " + std::to_string(y_pred[i]) + " at index " + std::to_string(i) + " out of range");
    ++cm.counts(y_true[i], y_pred[i]);
  }
  return cm;
}

ClassificationReport report(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total <= 0) throw ConfigError("report(): confusion matrix is empty");
  ClassificationReport r;
  const int classes = cm.classes();
  const double n = static_cast<double>(total);
  double weighted_p = 0.0, weighted_r = 0.0, weighted_f = 0.0;
  for (int c = 0; c < classes; ++c) {
    ClassMetrics m;
    m.name = cm.class_names[static_cast<std::size_t>(c)];
    const std::int64_t tp = cm.counts(c, c);
    const std::int64_t predicted = cm.counts.col(c).sum();
    m.support = cm.counts.row(c).sum();
    m.precision_undefined = predicted == 0;
    m.recall_undefined = m.support == 0;
    m.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    m.recall = m.support ? static_cast<double>(tp) / static_cast<double>(m.support) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;

    r.macro.precision += m.precision;
    r.macro.recall += m.recall;
    r.macro.f1 += m.f1;
    const double s = static_cast<double>(m.support);
    weighted_p += s * m.precision;
    // support * (tp / support) == tp; summing tp keeps weighted recall == accuracy bit-exact.
    weighted_r += static_cast<double>(tp);
    weighted_f += s * m.f1;
    r.per_class.push_back(std::move(m));
  }
  r.accuracy = static_cast<double>(cm.counts.trace()) / n;
  r.macro.precision /= classes;
  r.macro.recall /= classes;
  r.macro.f1 /= classes;
  r.macro.support = total;
  r.weighted = {weighted_p / n, weighted_r / n, weighted_f / n, total};
  return r;
}

nlohmann::json ClassificationReport::to_json() const {
  nlohmann::json j;
  j["classes"] = nlohmann::json::array();
  for (const auto& m : per_class) {
    j["classes"].push_back({{"name", m.name},
                            {"precision", m.precision},
                            {"recall", m.recall},
                            {"f1", m.f1},
                            {"support", m.support},
                            {"precision_undefined", m.precision_undefined},
                            {"recall_undefined", m.recall_undefined}});
  }
  auto avg = [](const AverageMetrics& a) {
    return nlohmann::json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}, {"support", a.support}};
  };
  j["accuracy"] = accuracy;
  j["macro_average"] = avg(macro);
  j["weighted_average"] = avg(weighted);
  return j;
}

std::string ClassificationReport::to_table() const {
  std::size_t name_width = std::string("Weighted Average").size();
  for (const auto& m : per_class) name_width = std::max(name_width, m.name.size() + (m.precision_undefined || m.recall_undefined ? 2 : 0));
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  auto row = [&](const std::string& name, double p, double r, double f, std::int64_t s) {
    out << std::left << std::setw(static_cast<int>(name_width)) << name << std::right << std::setw(11) << p
        << std::setw(11) << r << std::setw(11) << f << std::setw(10) << s << "\n";
  };
  out << std::left << std::setw(static_cast<int>(name_width)) << "Class/Metric" << std::right << std::setw(11)
      << "Precision" << std::setw(11) << "Recall" << std::setw(11) << "F1-Score" << std::setw(10) << "Support"
      << "\n";
  bool any_undefined = false;
  for (const auto& m : per_class) {
    const bool undefined = m.precision_undefined || m.recall_undefined;
    any_undefined |= undefined;
    row(undefined ? m.name + " *" : m.name, m.precision, m.recall, m.f1, m.support);
  }
  out << std::left << std::setw(static_cast<int>(name_width)) << "Accuracy" << std::right << std::setw(33) << accuracy
      << std::setw(10) << macro.support << "\n";
  row("Macro Average", macro.precision, macro.recall, macro.f1, macro.support);
  row("Weighted Average", weighted.precision, weighted.recall, weighted.f1, weighted.support);
  if (any_undefined) out << "* zero denominator, metric reported as 0\n";
  return out.str();
}

std::string confusion_to_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  std::vector<std::string> header{"true\\predicted"};
  header.insert(header.end(), cm.class_names.begin(), cm.class_names.end());
  csv::write_row(out, header);
  for (int i = 0; i < cm.classes(); ++i) {
    std::vector<std::string> row{cm.class_names[static_cast<std::size_t>(i)]};
    for (int j = 0; j < cm.classes(); ++j) row.push_back(std::to_string(cm.counts(i, j)));
    csv::write_row(out, row);
  }
  return out.str();
}

}  // namespace cstafnet
