#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "cstafnet/csv.hpp"
#include "cstafnet/data_pipeline.hpp"
#include "support.hpp"

using namespace cstafnet;

namespace {

RawTable table_from(const std::string& text, const std::string& label, const std::vector<std::string>& drop = {}) {
  std::istringstream in(text);
  return load_csv(in, label, drop);
}

}  // namespace

TEST_CASE("csv reader handles quotes, BOM and blank lines") {
  std::istringstream in("\xEF\xBB\xBF" "a,b\n\"x,1\",\"say \"\"hi\"\"\"\n\n2,\"multi\nline\"\n");
  const csv::Document doc = csv::read(in);
  REQUIRE(doc.header == std::vector<std::string>{"a", "b"});
  REQUIRE(doc.rows.size() == 2);
  CHECK(doc.rows[0][0] == "x,1");
  CHECK(doc.rows[0][1] == "say \"hi\"");
  CHECK(doc.rows[1][1] == "multi\nline");
  CHECK(doc.line_numbers[1] == 4);

  std::ostringstream out;
  csv::write_row(out, {"plain", "a,b", "q\""});
  CHECK(out.str() == "plain,\"a,b\",\"q\"\"\"\n");
}

TEST_CASE("csv reader rejects ragged rows with the row number") {
  std::istringstream in("a,b\n1,2\n3\n");
  try {
    csv::read(in);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("load_csv drops columns and types them") {
  const RawTable t = table_from("f1,f2,junk,label\n1,a,9,x\n2,b,9,y\n3,,9,x\n", "label", {"junk"});
  CHECK(t.rows == 3);
  CHECK(t.columns.size() == 3);
  CHECK(t.column("f1").kind == ColumnKind::numeric);
  CHECK(t.column("f2").kind == ColumnKind::categorical);
  CHECK(t.column("label").kind == ColumnKind::categorical);
  CHECK_FALSE(t.has_column("junk"));
  CHECK_FALSE(t.column("f2").text[2].has_value());
  CHECK(t.column("f2").missing_count() == 1);
}

TEST_CASE("load_csv reports a missing label or drop column by name") {
  try {
    table_from("a,b\n1,2\n", "Attack_type");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("Attack_type") != std::string::npos);
  }
  CHECK_THROWS_AS(table_from("a,b\n1,2\n", "b", {"nope"}), ConfigError);
}

TEST_CASE("missing-cell convention") {
  CHECK(is_missing_cell(""));
  CHECK(is_missing_cell("nan"));
  CHECK(is_missing_cell("NaN"));
  CHECK_FALSE(is_missing_cell("0"));
  CHECK(parse_number("1.5e3").value() == 1500.0);
  CHECK_FALSE(parse_number("abc").has_value());
  CHECK_FALSE(parse_number("1.5x").has_value());
}

TEST_CASE("imputation: median and mode") {
  RawTable t = table_from("n,c,label\n1,a,x\n,a,x\n3,,y\n", "label");
  RawTable filled = impute(t);
  CHECK(filled.column("n").numbers[1].value() == 2.0);
  CHECK(filled.column("c").text[2].value() == "a");

  RawTable even = table_from("n,label\n1,x\n2,x\n3,x\n4,x\n,x\n", "label");
  CHECK(impute(even).column("n").numbers[4].value() == 2.5);

  // Ties resolve to the lexicographically smallest category.
  RawTable tie = table_from("c,label\nb,x\na,x\n,x\n", "label");
  CHECK(impute(tie).column("c").text[2].value() == "a");

  CHECK_THROWS_AS(impute(table_from("n,label\n,x\n,y\n", "label")), PreprocessError);
  CHECK(median({5, 1, 3}) == 3.0);
}

TEST_CASE("label encoding is lexicographic") {
  const EncodedLabels e = encode_labels({"Normal", "Backdoor", "Normal"});
  CHECK(e.mapping.classes() == std::vector<std::string>{"Backdoor", "Normal"});
  CHECK(e.labels == std::vector<int>{1, 0, 1});
  CHECK(encode_labels({"only", "only"}).labels == std::vector<int>{0, 0});

  std::vector<std::string> names;
  for (int i = 0; i < 15; ++i) names.push_back("attack_" + std::string(1, static_cast<char>('a' + i)));
  const EncodedLabels fifteen = encode_labels(names);
  CHECK(fifteen.mapping.size() == 15);
  for (int i = 0; i < 15; ++i) {
    CHECK(fifteen.labels[static_cast<std::size_t>(i)] == i);
    CHECK(fifteen.mapping.decode(i) == names[static_cast<std::size_t>(i)]);
    CHECK(fifteen.mapping.encode(names[static_cast<std::size_t>(i)]) == i);
  }
  CHECK_THROWS_AS(fifteen.mapping.encode("zzz"), LabelError);
}

TEST_CASE("standardization") {
  Matrix col(3, 2);
  col << 1, 7, 2, 7, 3, 7;
  const ScalerStats s = fit_standardize(col);
  const Matrix z = apply_standardize(col, s);
  CHECK(std::abs(z(0, 0) + 1.224744871391589) < 1e-15);
  CHECK(z(1, 0) == 0.0);
  CHECK(std::abs(z(2, 0) - 1.224744871391589) < 1e-15);
  CHECK(s.stddev(1) == 1.0);
  CHECK(z.col(1).isZero(0.0));
  CHECK((s.stddev.array() > 0.0).all());

  Matrix at_mean(1, 2);
  at_mean << 2, 7;
  CHECK(apply_standardize(at_mean, s).isZero(0.0));
  CHECK_THROWS_AS(apply_standardize(Matrix::Zero(1, 3), s), ShapeError);
}

TEST_CASE("stratified split counts and determinism") {
  std::vector<int> ten{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const SplitIndices s = stratified_split_indices(ten, 0.2, 1);
  int test0 = 0, test1 = 0;
  for (auto i : s.test) (ten[i] == 0 ? test0 : test1)++;
  CHECK(s.train.size() == 8);
  CHECK(test0 == 1);
  CHECK(test1 == 1);

  const SplitIndices again = stratified_split_indices(ten, 0.2, 1);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);

  std::vector<int> seven(7, 0);
  seven.push_back(1);
  seven.push_back(1);
  CHECK(stratified_split_indices(seven, 0.2, 3).test.size() == 1 + 0);

  try {
    stratified_split_indices({0, 0, 0, 1}, 0.2, 1);
    FAIL("expected SplitError");
  } catch (const SplitError& e) {
    CHECK(std::string(e.what()).find("'1'") != std::string::npos);
  }
}

TEST_CASE("stratified split property: partition with per-class counts within one") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int classes = 2 + static_cast<int>(rng.uniform_index(6));
    std::vector<int> labels;
    for (int c = 0; c < classes; ++c)
      for (int k = 0, n = 2 + static_cast<int>(rng.uniform_index(40)); k < n; ++k) labels.push_back(c);
    shuffle(labels, rng);
    const double ratio = rng.uniform(0.05, 0.5);
    const SplitIndices s = stratified_split_indices(labels, ratio, rng.next_u64());
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == labels.size());
    CHECK(s.train.size() + s.test.size() == labels.size());
    for (int c = 0; c < classes; ++c) {
      double total = 0, train = 0;
      for (int y : labels) total += y == c;
      for (auto i : s.train) train += labels[i] == c;
      CHECK(std::abs(train - (1.0 - ratio) * total) <= 1.0);
    }
  }
}

TEST_CASE("full preprocess, record encoding and dataset round trip") {
  std::string text = "dur,proto,leak,Attack_type\n";
  for (int i = 0; i < 20; ++i)
    text += std::to_string(i) + "," + (i % 3 ? "tcp" : "udp") + ",1," + (i % 2 ? "DDoS" : "Normal") + "\n";
  text += ",nan,1,Normal\n,,1,DDoS\n";
  const RawTable t = table_from(text, "Attack_type", {"leak"});
  PreprocessOptions opt;
  opt.seed = 5;
  const DatasetSplit d = preprocess(t, {"leak"}, opt);
  CHECK(d.features() == 2);
  CHECK(d.classes() == 2);
  CHECK(d.train_x.rows() + d.test_x.rows() == 22);
  CHECK(d.test_x.rows() == 4);
  CHECK(std::abs(d.train_x.col(0).mean()) < 1e-12);
  CHECK(d.preprocessor.drop_columns == std::vector<std::string>{"leak"});

  // A raw record reproduces the standardized row of the same input.
  const std::vector<std::string> header{"dur", "proto", "Attack_type"};
  std::vector<std::string> warnings;
  const RowVector r = encode_record(d.preprocessor, header, {"7", "mystery", "Normal"}, &warnings);
  CHECK(warnings.size() == 1);
  CHECK(warnings[0].find("mystery") != std::string::npos);
  const RowVector mode_row = encode_record(d.preprocessor, header, {"7", "tcp", "Normal"});
  CHECK(r == mode_row);
  CHECK_THROWS_AS(encode_record(d.preprocessor, header, {"x7", "tcp", "Normal"}), ParseError);
  CHECK_THROWS_AS(encode_record(d.preprocessor, {"proto"}, {"tcp"}), ConfigError);

  testing::TempDir dir;
  save_dataset(dir.file("d.bin"), d);
  const DatasetSplit back = load_dataset(dir.file("d.bin"));
  CHECK(back.train_x == d.train_x);
  CHECK(back.test_x == d.test_x);
  CHECK(back.train_y == d.train_y);
  CHECK(back.test_y == d.test_y);
  CHECK(back.preprocessor.labels == d.preprocessor.labels);
  CHECK(back.preprocessor.to_json() == d.preprocessor.to_json());

  auto bytes = serialize_dataset(d);
  bytes[0] = 'X';
  CHECK_THROWS_AS(deserialize_dataset(bytes), ParseError);
  bytes = serialize_dataset(d);
  bytes.resize(bytes.size() - 3);
  CHECK_THROWS_AS(deserialize_dataset(bytes), ParseError);
}
