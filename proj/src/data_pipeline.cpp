#include "cstafnet/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "cstafnet/binary_io.hpp"
#include "cstafnet/csv.hpp"

namespace cstafnet {

namespace {

constexpr std::string_view kDatasetMagic = "CSTDAT1";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

RawTable build_table(const csv::Document& doc, const std::string& label_column,
                     const std::vector<std::string>& drop_columns) {
  if (std::find(doc.header.begin(), doc.header.end(), label_column) == doc.header.end())
    throw ConfigError("label column '" + label_column + "' not found in CSV header");
  for (const auto& d : drop_columns) {
    if (d == label_column) throw ConfigError("cannot drop the label column '" + d + "'");
    if (std::find(doc.header.begin(), doc.header.end(), d) == doc.header.end())
      throw ConfigError("drop column '" + d + "' not found in CSV header");
  }

  RawTable table;
  table.rows = doc.rows.size();
  table.label_column = label_column;
  for (std::size_t c = 0; c < doc.header.size(); ++c) {
    const std::string& name = doc.header[c];
    if (std::find(drop_columns.begin(), drop_columns.end(), name) != drop_columns.end()) continue;
    Column col;
    col.name = name;
    bool numeric = name != label_column;
    std::vector<std::optional<double>> numbers;
    numbers.reserve(doc.rows.size());
    for (const auto& row : doc.rows) {
      const std::string& cell = row[c];
      if (is_missing_cell(cell)) {
        numbers.emplace_back();
        continue;
      }
      if (!numeric) continue;
      auto v = parse_number(cell);
      if (!v) {
        numeric = false;
        continue;
      }
      numbers.push_back(v);
    }
    if (numeric) {
      col.kind = ColumnKind::numeric;
      col.numbers = std::move(numbers);
    } else {
      col.kind = ColumnKind::categorical;
      col.text.reserve(doc.rows.size());
      for (const auto& row : doc.rows) {
        if (is_missing_cell(row[c]))
          col.text.emplace_back();
        else
          col.text.emplace_back(trim(row[c]));
      }
    }
    table.columns.push_back(std::move(col));
  }
  return table;
}

}  // namespace

std::string to_string(ColumnKind k) { return k == ColumnKind::numeric ? "numeric" : "categorical"; }

std::size_t Column::missing_count() const {
  std::size_t n = 0;
  if (kind == ColumnKind::numeric)
    for (const auto& v : numbers) n += !v.has_value();
  else
    for (const auto& v : text) n += !v.has_value();
  return n;
}

std::size_t RawTable::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return i;
  throw ConfigError("column '" + name + "' not found");
}

bool RawTable::has_column(const std::string& name) const {
  return std::any_of(columns.begin(), columns.end(), [&](const Column& c) { return c.name == name; });
}

bool is_missing_cell(const std::string& cell) {
  const std::string t = trim(cell);
  if (t.empty()) return true;
  if (t.size() != 3) return false;
  std::string lower = t;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return lower == "nan";
}

std::optional<double> parse_number(const std::string& cell) {
  const std::string t = trim(cell);
  if (t.empty()) return std::nullopt;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

RawTable load_csv(std::istream& in, const std::string& label_column, const std::vector<std::string>& drop_columns) {
  return build_table(csv::read(in), label_column, drop_columns);
}

RawTable load_csv(const std::string& path, const std::string& label_column,
                  const std::vector<std::string>& drop_columns) {
  return build_table(csv::read_file(path), label_column, drop_columns);
}

double median(std::vector<double> values) {
  if (values.empty()) throw PreprocessError("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<FillValue> fit_impute(const RawTable& table) {
  std::vector<FillValue> fills;
  for (const auto& col : table.columns) {
    if (col.name == table.label_column) continue;
    FillValue fill;
    fill.column = col.name;
    fill.kind = col.kind;
    if (col.kind == ColumnKind::numeric) {
      std::vector<double> present;
      present.reserve(col.numbers.size());
      for (const auto& v : col.numbers)
        if (v) present.push_back(*v);
      if (present.empty()) throw PreprocessError("column '" + col.name + "' has no non-missing values");
      fill.number = median(std::move(present));
    } else {
      std::map<std::string, std::size_t> counts;
      for (const auto& v : col.text)
        if (v) ++counts[*v];
      if (counts.empty()) throw PreprocessError("column '" + col.name + "' has no non-missing values");
      // std::map iterates lexicographically, so strict '>' keeps the smallest on ties.
      std::size_t best = 0;
      for (const auto& [value, n] : counts) {
        if (n > best) {
          best = n;
          fill.text = value;
        }
      }
    }
    fills.push_back(std::move(fill));
  }
  return fills;
}

RawTable impute(const RawTable& table, const std::vector<FillValue>& fills) {
  RawTable out = table;
  for (const auto& fill : fills) {
    Column& col = out.column(fill.column);
    if (col.kind != fill.kind) throw PreprocessError("column '" + fill.column + "' kind differs from its fill value");
    if (col.kind == ColumnKind::numeric) {
      for (auto& v : col.numbers)
        if (!v) v = fill.number;
    } else {
      for (auto& v : col.text)
        if (!v) v = fill.text;
    }
  }
  return out;
}

RawTable impute(const RawTable& table) { return impute(table, fit_impute(table)); }

LabelMapping::LabelMapping(std::vector<std::string> sorted_classes) : classes_(std::move(sorted_classes)) {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (!index_.emplace(classes_[i], static_cast<int>(i)).second)
      throw LabelError("duplicate class name '" + classes_[i] + "'");
  }
}

int LabelMapping::encode(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LabelError("unknown class '" + name + "'");
  return it->second;
}

std::optional<int> LabelMapping::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& LabelMapping::decode(int index) const {
  if (index < 0 || index >= size()) throw LabelError("class index " + std::to_string(index) + " out of range");
  return classes_[static_cast<std::size_t>(index)];
}

EncodedLabels encode_labels(const std::vector<std::string>& column) {
  std::set<std::string> distinct(column.begin(), column.end());
  EncodedLabels out{{}, LabelMapping(std::vector<std::string>(distinct.begin(), distinct.end()))};
  out.labels.reserve(column.size());
  for (const auto& v : column) out.labels.push_back(out.mapping.encode(v));
  return out;
}

ScalerStats fit_standardize(const Matrix& train) {
  if (train.rows() == 0) throw PreprocessError("fit_standardize(): no rows");
  ScalerStats stats;
  const double n = static_cast<double>(train.rows());
  stats.mean = train.colwise().sum() / n;
  stats.stddev.resize(train.cols());
  for (Eigen::Index j = 0; j < train.cols(); ++j) {
    const double var = (train.col(j).array() - stats.mean(j)).square().sum() / n;
    double sd = std::sqrt(var);
    // Constant columns can leave rounding residue instead of an exact zero.
    if (sd <= 1e-12 * std::max(1.0, std::abs(stats.mean(j)))) sd = 1.0;
    stats.stddev(j) = sd;
  }
  return stats;
}

Matrix apply_standardize(const Matrix& features, const ScalerStats& stats) {
  if (features.cols() != stats.mean.size() || features.cols() != stats.stddev.size())
    throw ShapeError("apply_standardize(): input has " + std::to_string(features.cols()) +
                     " features, scaler was fitted on " + std::to_string(stats.mean.size()));
  Matrix out(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    out.row(i) = (features.row(i) - stats.mean).cwiseQuotient(stats.stddev);
  return out;
}

SplitIndices stratified_split_indices(const std::vector<int>& labels, double test_ratio, std::uint64_t seed,
                                      const LabelMapping* names) {
  if (!(test_ratio > 0.0 && test_ratio < 1.0))
    throw ConfigError("test ratio must lie in (0, 1), got " + std::to_string(test_ratio));
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  SplitIndices out;
  Rng rng(seed, 0x5B1D);
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 2) {
      std::string name = std::to_string(cls);
      if (names && cls >= 0 && cls < names->size()) name = names->decode(cls);
      throw SplitError("class '" + name + "' has " + std::to_string(idx.size()) +
                       " sample(s); stratified split needs at least 2");
    }
    shuffle(idx, rng);
    const auto n_test = static_cast<std::size_t>(std::round(test_ratio * static_cast<double>(idx.size())));
    out.test.insert(out.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

std::vector<int> gather(const std::vector<int>& v, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

}  // namespace

DatasetSplit stratified_split(const Matrix& features, const std::vector<int>& labels, double test_ratio,
                              std::uint64_t seed) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw ShapeError("stratified_split(): " + std::to_string(features.rows()) + " feature rows vs " +
                     std::to_string(labels.size()) + " labels");
  const SplitIndices idx = stratified_split_indices(labels, test_ratio, seed);
  DatasetSplit split;
  split.train_x = gather_rows(features, idx.train);
  split.train_y = gather(labels, idx.train);
  split.test_x = gather_rows(features, idx.test);
  split.test_y = gather(labels, idx.test);
  split.seed = seed;
  split.test_ratio = test_ratio;
  return split;
}

std::vector<std::string> Preprocessor::feature_names() const {
  std::vector<std::string> names;
  for (const auto& f : features) names.push_back(f.name);
  return names;
}

nlohmann::json Preprocessor::to_json() const {
  nlohmann::json j;
  j["label_column"] = label_column;
  j["drop_columns"] = drop_columns;
  j["classes"] = labels.classes();
  j["features"] = nlohmann::json::array();
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    nlohmann::json fj;
    fj["name"] = f.name;
    fj["kind"] = to_string(f.kind);
    if (f.kind == ColumnKind::numeric) {
      fj["fill"] = f.fill_number;
    } else {
      fj["fill"] = f.fill_text;
      fj["categories"] = f.categories.classes();
    }
    fj["mean"] = i < static_cast<std::size_t>(scaler.mean.size()) ? scaler.mean(static_cast<Eigen::Index>(i)) : 0.0;
    fj["std"] = i < static_cast<std::size_t>(scaler.stddev.size()) ? scaler.stddev(static_cast<Eigen::Index>(i)) : 1.0;
    j["features"].push_back(fj);
  }
  return j;
}

Preprocessor Preprocessor::from_json(const nlohmann::json& j) {
  Preprocessor p;
  p.label_column = j.at("label_column").get<std::string>();
  p.drop_columns = j.at("drop_columns").get<std::vector<std::string>>();
  p.labels = LabelMapping(j.at("classes").get<std::vector<std::string>>());
  const auto& feats = j.at("features");
  p.scaler.mean.resize(static_cast<Eigen::Index>(feats.size()));
  p.scaler.stddev.resize(static_cast<Eigen::Index>(feats.size()));
  Eigen::Index i = 0;
  for (const auto& fj : feats) {
    FeatureSpec f;
    f.name = fj.at("name").get<std::string>();
    const auto kind = fj.at("kind").get<std::string>();
    if (kind == "numeric") {
      f.kind = ColumnKind::numeric;
      f.fill_number = fj.at("fill").get<double>();
    } else if (kind == "categorical") {
      f.kind = ColumnKind::categorical;
      f.fill_text = fj.at("fill").get<std::string>();
      f.categories = LabelMapping(fj.at("categories").get<std::vector<std::string>>());
    } else {
      throw ParseError("unknown feature kind '" + kind + "'");
    }
    p.scaler.mean(i) = fj.at("mean").get<double>();
    p.scaler.stddev(i) = fj.at("std").get<double>();
    p.features.push_back(std::move(f));
    ++i;
  }
  return p;
}

DatasetSplit preprocess(const RawTable& raw, const std::vector<std::string>& drop_columns,
                        const PreprocessOptions& options) {
  const std::vector<FillValue> fills = fit_impute(raw);
  const RawTable table = impute(raw, fills);

  const Column& label_col = table.column(table.label_column);
  std::vector<std::string> label_text;
  label_text.reserve(table.rows);
  for (std::size_t i = 0; i < label_col.text.size(); ++i) {
    if (!label_col.text[i]) throw PreprocessError("label missing in data row " + std::to_string(i + 1));
    label_text.push_back(*label_col.text[i]);
  }
  EncodedLabels enc = encode_labels(label_text);

  Preprocessor pre;
  pre.label_column = table.label_column;
  pre.drop_columns = drop_columns;
  pre.labels = enc.mapping;

  std::vector<const Column*> feature_cols;
  for (const auto& col : table.columns)
    if (col.name != table.label_column) feature_cols.push_back(&col);

  Matrix features(static_cast<Eigen::Index>(table.rows), static_cast<Eigen::Index>(feature_cols.size()));
  for (std::size_t j = 0; j < feature_cols.size(); ++j) {
    const Column& col = *feature_cols[j];
    FeatureSpec spec;
    spec.name = col.name;
    spec.kind = col.kind;
    const auto fill = std::find_if(fills.begin(), fills.end(), [&](const FillValue& f) { return f.column == col.name; });
    const auto jj = static_cast<Eigen::Index>(j);
    if (col.kind == ColumnKind::numeric) {
      spec.fill_number = fill->number;
      for (std::size_t i = 0; i < table.rows; ++i) features(static_cast<Eigen::Index>(i), jj) = *col.numbers[i];
    } else {
      spec.fill_text = fill->text;
      std::vector<std::string> values;
      values.reserve(table.rows);
      for (const auto& v : col.text) values.push_back(*v);
      EncodedLabels cats = encode_labels(values);
      spec.categories = cats.mapping;
      for (std::size_t i = 0; i < table.rows; ++i)
        features(static_cast<Eigen::Index>(i), jj) = static_cast<double>(cats.labels[i]);
    }
    pre.features.push_back(std::move(spec));
  }

  const SplitIndices idx = stratified_split_indices(enc.labels, options.test_ratio, options.seed, &enc.mapping);
  DatasetSplit split;
  const Matrix train_raw = gather_rows(features, idx.train);
  const Matrix test_raw = gather_rows(features, idx.test);
  pre.scaler = fit_standardize(train_raw);
  split.train_x = apply_standardize(train_raw, pre.scaler);
  split.test_x = apply_standardize(test_raw, pre.scaler);
  split.train_y = gather(enc.labels, idx.train);
  split.test_y = gather(enc.labels, idx.test);
  split.preprocessor = std::move(pre);
  split.seed = options.seed;
  split.test_ratio = options.test_ratio;
  return split;
}

RowVector encode_record(const Preprocessor& pre, const std::vector<std::string>& header,
                        const std::vector<std::string>& row, std::vector<std::string>* warnings) {
  RowVector x(static_cast<Eigen::Index>(pre.features.size()));
  for (std::size_t j = 0; j < pre.features.size(); ++j) {
    const FeatureSpec& f = pre.features[j];
    const auto it = std::find(header.begin(), header.end(), f.name);
    if (it == header.end()) throw ConfigError("input is missing feature column '" + f.name + "'");
    const auto c = static_cast<std::size_t>(it - header.begin());
    if (c >= row.size()) throw ParseError("row is too short for column '" + f.name + "'");
    const std::string& cell = row[c];
    double v = 0.0;
    if (f.kind == ColumnKind::numeric) {
      if (is_missing_cell(cell)) {
        v = f.fill_number;
      } else {
        auto parsed = parse_number(cell);
        if (!parsed) throw ParseError("column '" + f.name + "': cannot parse '" + cell + "' as a number");
        v = *parsed;
      }
    } else {
      std::string value = is_missing_cell(cell) ? f.fill_text : trim(cell);
      auto code = f.categories.find(value);
      if (!code) {
        if (warnings)
          warnings->push_back("column '" + f.name + "': unknown category '" + value + "', using '" + f.fill_text + "'");
        code = f.categories.find(f.fill_text);
      }
      v = static_cast<double>(*code);
    }
    const auto jj = static_cast<Eigen::Index>(j);
    x(jj) = (v - pre.scaler.mean(jj)) / pre.scaler.stddev(jj);
  }
  return x;
}

std::vector<std::uint8_t> serialize_dataset(const DatasetSplit& split) {
  if (split.train_x.cols() != split.test_x.cols())
    throw ShapeError("serialize_dataset(): train and test feature counts differ");
  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["preprocessor"] = split.preprocessor.to_json();
  meta["feature_names"] = split.preprocessor.feature_names();
  meta["split_seed"] = split.seed;
  meta["test_ratio"] = split.test_ratio;
  meta["features"] = split.train_x.cols();
  meta["train_rows"] = split.train_x.rows();
  meta["test_rows"] = split.test_x.rows();

  bin::Writer w;
  w.bytes(kDatasetMagic);
  w.text(meta.dump());
  auto put_split = [&](const Matrix& x, const std::vector<int>& y) {
    for (Eigen::Index i = 0; i < x.size(); ++i) w.f64(x.data()[i]);
    for (int v : y) w.i32(v);
  };
  put_split(split.train_x, split.train_y);
  put_split(split.test_x, split.test_y);
  return w.data();
}

DatasetSplit deserialize_dataset(const std::vector<std::uint8_t>& bytes) {
  bin::Reader<ParseError> r(bytes.data(), bytes.size(), "dataset file");
  if (r.bytes(kDatasetMagic.size()) != kDatasetMagic) throw ParseError("dataset file: bad magic at byte offset 0");
  const std::size_t meta_offset = r.offset();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.text());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset file: bad metadata block at byte offset ") + std::to_string(meta_offset) +
                     ": " + e.what());
  }
  DatasetSplit split;
  try {
    split.preprocessor = Preprocessor::from_json(meta.at("preprocessor"));
    split.seed = meta.at("split_seed").get<std::uint64_t>();
    split.test_ratio = meta.at("test_ratio").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset file: incomplete metadata: ") + e.what());
  }
  const auto d = meta.at("features").get<Eigen::Index>();
  const auto n_train = meta.at("train_rows").get<Eigen::Index>();
  const auto n_test = meta.at("test_rows").get<Eigen::Index>();
  auto get_split = [&](Eigen::Index rows, Matrix& x, std::vector<int>& y) {
    x.resize(rows, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = r.f64();
    y.resize(static_cast<std::size_t>(rows));
    for (auto& v : y) v = r.i32();
  };
  get_split(n_train, split.train_x, split.train_y);
  get_split(n_test, split.test_x, split.test_y);
  if (r.remaining() != 0) r.fail("unexpected trailing bytes");
  return split;
}

void save_dataset(const std::string& path, const DatasetSplit& split) {
  bin::write_file_atomic(path, serialize_dataset(split));
}

DatasetSplit load_dataset(const std::string& path) { return deserialize_dataset(bin::read_file(path)); }

}  // namespace cstafnet
