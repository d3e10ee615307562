#pragma once

// Flow-record preprocessing: CSV load, imputation, leakage-column removal,
// categorical and label encoding, stratified split, standardization fitted
// on the training rows, and the CSTDAT1 dataset file.

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cstafnet/numerics.hpp"

namespace cstafnet {

enum class ColumnKind { numeric, categorical };

std::string to_string(ColumnKind k);

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  // Exactly one of these is populated, selected by `kind`.
  std::vector<std::optional<double>> numbers;
  std::vector<std::optional<std::string>> text;

  std::size_t size() const { return kind == ColumnKind::numeric ? numbers.size() : text.size(); }
  std::size_t missing_count() const;
};

struct RawTable {
  std::vector<Column> columns;
  std::size_t rows = 0;
  std::string label_column;

  std::size_t index_of(const std::string& name) const;  // throws ConfigError
  const Column& column(const std::string& name) const { return columns[index_of(name)]; }
  Column& column(const std::string& name) { return columns[index_of(name)]; }
  bool has_column(const std::string& name) const;
};

// "" and "nan" (any case) are missing.
bool is_missing_cell(const std::string& cell);
std::optional<double> parse_number(const std::string& cell);

// The label column is always categorical; other columns are numeric when
// every non-missing cell parses as a number.
RawTable load_csv(const std::string& path, const std::string& label_column,
                  const std::vector<std::string>& drop_columns);
RawTable load_csv(std::istream& in, const std::string& label_column, const std::vector<std::string>& drop_columns);

struct FillValue {
  std::string column;
  ColumnKind kind = ColumnKind::numeric;
  double number = 0.0;
  std::string text;
};

// Median for numeric columns (mean of middle pair on even counts), mode for
// categorical columns (ties to the lexicographically smallest value).
// The label column is neither imputed nor given a fill value.
std::vector<FillValue> fit_impute(const RawTable& table);
RawTable impute(const RawTable& table, const std::vector<FillValue>& fills);
RawTable impute(const RawTable& table);

double median(std::vector<double> values);

class LabelMapping {
public:
  LabelMapping() = default;
  explicit LabelMapping(std::vector<std::string> sorted_classes);

  int encode(const std::string& name) const;  // throws LabelError
  std::optional<int> find(const std::string& name) const;
  const std::string& decode(int index) const;
  const std::vector<std::string>& classes() const { return classes_; }
  int size() const { return static_cast<int>(classes_.size()); }

  bool operator==(const LabelMapping& other) const { return classes_ == other.classes_; }

private:
  std::vector<std::string> classes_;
  std::map<std::string, int> index_;
};

struct EncodedLabels {
  std::vector<int> labels;
  LabelMapping mapping;
};

// Classes sorted lexicographically and numbered 0..C-1.
EncodedLabels encode_labels(const std::vector<std::string>& column);

struct ScalerStats {
  RowVector mean;
  RowVector stddev;  // population; zero-variance columns floored to 1
};

ScalerStats fit_standardize(const Matrix& train);
Matrix apply_standardize(const Matrix& features, const ScalerStats& stats);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Per class: indices in ascending order, shuffled with the seed, first
// round(ratio * n_c) go to test. Both outputs are returned sorted.
SplitIndices stratified_split_indices(const std::vector<int>& labels, double test_ratio, std::uint64_t seed,
                                      const LabelMapping* names = nullptr);

// Fitted state needed to turn raw flow records into model input.
struct FeatureSpec {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  double fill_number = 0.0;
  std::string fill_text;
  LabelMapping categories;  // categorical only
};

struct Preprocessor {
  std::string label_column;
  std::vector<std::string> drop_columns;
  std::vector<FeatureSpec> features;
  LabelMapping labels;
  ScalerStats scaler;

  std::size_t feature_count() const { return features.size(); }
  std::vector<std::string> feature_names() const;

  nlohmann::json to_json() const;
  static Preprocessor from_json(const nlohmann::json& j);
};

struct DatasetSplit {
  Matrix train_x;
  std::vector<int> train_y;
  Matrix test_x;
  std::vector<int> test_y;
  Preprocessor preprocessor;
  std::uint64_t seed = 0;
  double test_ratio = 0.2;

  std::size_t features() const { return static_cast<std::size_t>(train_x.cols()); }
  int classes() const { return preprocessor.labels.size(); }
};

// Split already-encoded features without scaling (scaler left empty).
DatasetSplit stratified_split(const Matrix& features, const std::vector<int>& labels, double test_ratio,
                              std::uint64_t seed);

struct PreprocessOptions {
  double test_ratio = 0.2;
  std::uint64_t seed = 42;
};

// Full pipeline: impute, encode categoricals and labels, split, fit the
// scaler on train rows, standardize both splits.
DatasetSplit preprocess(const RawTable& table, const std::vector<std::string>& drop_columns,
                        const PreprocessOptions& options);

// Raw record conversion for inference. Missing cells take the training fill;
// unknown categories take the training mode and are reported in `warnings`.
// An unparseable numeric cell throws ParseError.
RowVector encode_record(const Preprocessor& pre, const std::vector<std::string>& header,
                        const std::vector<std::string>& row, std::vector<std::string>* warnings = nullptr);

// CSTDAT1 layout: magic "CSTDAT1", u32 length + JSON metadata, then
// train_x (f64 LE, row-major), train_y (i32 LE), test_x, test_y.
std::vector<std::uint8_t> serialize_dataset(const DatasetSplit& split);
DatasetSplit deserialize_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const std::string& path, const DatasetSplit& split);
DatasetSplit load_dataset(const std::string& path);

}  // namespace cstafnet
