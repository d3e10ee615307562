#include "cstafnet/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "cstafnet/binary_io.hpp"
#include "cstafnet/csv.hpp"
#include "cstafnet/data_pipeline.hpp"
#include "cstafnet/evaluation.hpp"
#include "cstafnet/selfcheck.hpp"
#include "cstafnet/training.hpp"

namespace cstafnet {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

// Default seed: CSTAFNET_SEED when set, else 42.
std::uint64_t default_seed() {
  const char* env = std::getenv("CSTAFNET_SEED");
  if (!env || !*env) return 42;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("CSTAFNET_SEED is not an unsigned integer: '") + env + "'");
  return v;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

// A config file is either {"model": {...}, "train": {...}, ...} or a run
// manifest, whose "config" member has that shape.
json config_section(const std::string& path) {
  if (path.empty()) return json::object();
  json j = read_json_file(path);
  if (!j.is_object()) throw ConfigError("config file '" + path + "' must hold a JSON object");
  if (j.contains("config")) j = j["config"];
  return j;
}

void write_manifest(const std::string& path, const std::string& command, const json& config, const json& inputs,
                    const json& outputs, const json& seeds) {
  json m{{"command", command},    {"config", config},           {"inputs", inputs}, {"outputs", outputs},
         {"seeds", seeds},        {"tool_version", kToolVersion}, {"created_at", utc_timestamp()}};
  bin::write_text_file_atomic(path, m.dump(2) + "\n");
}

std::string manifest_path_for(const std::string& output) { return output + ".manifest.json"; }

template <typename T>
void apply(std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

// ---- preprocess ----

// Edge-IIoTset carries both a binary and a multiclass label; whichever one is
// not the target leaks the answer and is dropped unless a drop list is given.
std::vector<std::string> default_drop_columns(const std::string& input, const std::string& label) {
  static const std::vector<std::pair<std::string, std::string>> companions{{"Attack_type", "Attack_label"},
                                                                           {"Attack_label", "Attack_type"}};
  std::ifstream in(input);
  if (!in) return {};
  std::string header_line;
  std::getline(in, header_line);
  std::istringstream header_stream(header_line);
  const csv::Document header = csv::read(header_stream, /*allow_ragged=*/true);
  for (const auto& [target, leak] : companions)
    if (label == target && std::find(header.header.begin(), header.header.end(), leak) != header.header.end())
      return {leak};
  return {};
}

struct PreprocessArgs {
  std::string input, label_column, output, config;
  std::string drop;
  std::optional<double> test_ratio;
  std::optional<std::uint64_t> seed;
};

int cmd_preprocess(PreprocessArgs& a) {
  const json cfg = config_section(a.config);
  const json pcfg = cfg.value("preprocess", json::object());
  std::string label = pcfg.value("label_column", std::string());
  if (!a.label_column.empty()) label = a.label_column;
  if (label.empty()) throw ConfigError("preprocess: --label-col is required");
  std::vector<std::string> drop;
  if (!a.drop.empty()) drop = split_list(a.drop);
  else if (pcfg.contains("drop_columns")) drop = pcfg["drop_columns"].get<std::vector<std::string>>();
  else drop = default_drop_columns(a.input, label);
  PreprocessOptions opt;
  opt.test_ratio = pcfg.value("test_ratio", opt.test_ratio);
  opt.seed = pcfg.value("seed", default_seed());
  apply(a.test_ratio, opt.test_ratio);
  apply(a.seed, opt.seed);

  const RawTable table = load_csv(a.input, label, drop);
  const DatasetSplit split = preprocess(table, drop, opt);
  save_dataset(a.output, split);

  const json config{{"preprocess",
                     {{"label_column", label}, {"drop_columns", drop}, {"test_ratio", opt.test_ratio}, {"seed", opt.seed}}}};
  write_manifest(manifest_path_for(a.output), "preprocess", config, {{"input", a.input}}, {{"dataset", a.output}},
                 {{"split", opt.seed}});

  if (!drop.empty()) {
    std::cout << "dropped columns:";
    for (const auto& d : drop) std::cout << " " << d;
    std::cout << "\n";
  }
  std::cout << "rows " << table.rows << ", features " << split.features() << ", classes " << split.classes() << "\n"
            << "train " << split.train_x.rows() << ", test " << split.test_x.rows() << "\n";
  std::vector<std::int64_t> train_counts(static_cast<std::size_t>(split.classes())), test_counts(train_counts);
  for (int y : split.train_y) ++train_counts[static_cast<std::size_t>(y)];
  for (int y : split.test_y) ++test_counts[static_cast<std::size_t>(y)];
  for (int c = 0; c < split.classes(); ++c)
    std::cout << "  " << split.preprocessor.labels.decode(c) << ": train " << train_counts[static_cast<std::size_t>(c)]
              << ", test " << test_counts[static_cast<std::size_t>(c)] << "\n";
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string data, out, config;
  std::optional<std::string> head;
  std::optional<double> lr, beta1, beta2, epsilon, val_frac, dropout_conv, dropout_hidden;
  std::optional<int> batch, epochs, patience, filters, gru_units, attention_ratio, hidden_units;
  std::optional<std::vector<int>> kernels;
  std::optional<bool> temporal_bias;
  std::optional<std::uint64_t> seed, shuffle_seed;
};

int cmd_train(TrainArgs& a) {
  const json cfg = config_section(a.config);
  ModelConfig mc = ModelConfig::from_json(cfg.value("model", json::object()));
  TrainConfig tc = TrainConfig::from_json(cfg.value("train", json::object()));
  const json mj = cfg.value("model", json::object()), tj = cfg.value("train", json::object());
  if (!mj.contains("seed")) mc.seed = default_seed();
  if (!tj.contains("shuffle_seed")) tc.shuffle_seed = default_seed();

  if (a.head) mc.head = head_from_string(*a.head);
  apply(a.filters, mc.filters);
  apply(a.gru_units, mc.gru_units);
  apply(a.attention_ratio, mc.attention_ratio);
  apply(a.hidden_units, mc.hidden_units);
  apply(a.dropout_conv, mc.dropout_conv);
  apply(a.dropout_hidden, mc.dropout_hidden);
  apply(a.kernels, mc.kernel_sizes);
  apply(a.temporal_bias, mc.temporal_attention_bias);
  if (a.seed) mc.seed = tc.shuffle_seed = *a.seed;
  apply(a.shuffle_seed, tc.shuffle_seed);
  apply(a.lr, tc.learning_rate);
  apply(a.beta1, tc.beta1);
  apply(a.beta2, tc.beta2);
  apply(a.epsilon, tc.epsilon);
  apply(a.val_frac, tc.validation_fraction);
  apply(a.batch, tc.batch_size);
  apply(a.epochs, tc.max_epochs);
  apply(a.patience, tc.patience);
  tc.loss = loss_for_head(mc.head);

  const DatasetSplit data = load_dataset(a.data);
  if (mc.head == Head::binary && data.classes() != 2)
    throw ConfigError("binary head needs a dataset with exactly 2 classes, '" + a.data + "' has " +
                      std::to_string(data.classes()));
  mc.input_length = static_cast<int>(data.features());
  mc.classes = data.classes();
  mc.validate();
  tc.validate();

  fs::create_directories(a.out);
  const std::string ckpt = (fs::path(a.out) / "model.ckpt").string();
  const std::string history_path = (fs::path(a.out) / "history.json").string();
  const json config{{"model", mc.to_json()}, {"train", tc.to_json()}};

  TrainOptions opt;
  opt.checkpoint_path = ckpt;
  opt.checkpoint_extra = {{"preprocessor", data.preprocessor.to_json()}, {"train", tc.to_json()}};
  opt.progress = &std::cout;
  std::cout << "training " << to_string(mc.head) << " model: " << build_model(mc).parameter_count()
            << " parameters, " << data.train_x.rows() << " samples\n";
  const TrainResult result = train(build_model(mc), tc, mc, data.train_x, data.train_y, opt);
  bin::write_text_file_atomic(history_path, result.history.to_text());
  write_manifest((fs::path(a.out) / "manifest.json").string(), "train", config, {{"data", a.data}},
                 {{"checkpoint", ckpt}, {"history", history_path}},
                 {{"init", mc.seed}, {"shuffle", tc.shuffle_seed}});
  std::cout << "best epoch " << result.history.best_epoch << " (" << result.history.stop_reason << "), checkpoint "
            << ckpt << "\n";
  return kExitOk;
}

// ---- evaluate ----

std::vector<std::string> class_names_from(const Checkpoint& ck, const DatasetSplit* data) {
  if (data) return data->preprocessor.labels.classes();
  if (ck.extra.contains("preprocessor")) return Preprocessor::from_json(ck.extra["preprocessor"]).labels.classes();
  return {};
}

void check_compatible(const ModelConfig& mc, const DatasetSplit& data, const std::string& ckpt, const std::string& path) {
  if (static_cast<int>(data.features()) != mc.input_length)
    throw ShapeError("feature width mismatch: model '" + ckpt + "' expects " + std::to_string(mc.input_length) +
                     " features, dataset '" + path + "' has " + std::to_string(data.features()));
  if (data.classes() != mc.classes)
    throw ConfigError("class count mismatch: model '" + ckpt + "' has " + std::to_string(mc.classes) +
                      " classes, dataset '" + path + "' has " + std::to_string(data.classes()));
}

struct EvaluateArgs {
  std::string model, data, report, cm;
  double threshold = 0.5;
};

int cmd_evaluate(EvaluateArgs& a) {
  const Checkpoint ck = load_checkpoint(a.model);
  const DatasetSplit data = load_dataset(a.data);
  check_compatible(ck.config, data, a.model, a.data);
  const Matrix probs = predict_proba(ck.params, ck.config, data.test_x);
  const std::vector<int> pred = predict_labels(probs, ck.config.head, a.threshold);
  const ConfusionMatrix cm = confusion(data.test_y, pred, ck.config.classes, class_names_from(ck, &data));
  const ClassificationReport rep = report(cm);

  json outputs = json::object();
  const std::string table = rep.to_table();
  if (!a.report.empty()) {
    bin::write_text_file_atomic(a.report, rep.to_json().dump(2) + "\n");
    bin::write_text_file_atomic(a.report + ".txt", table);
    outputs["report"] = a.report;
    outputs["report_text"] = a.report + ".txt";
  }
  if (!a.cm.empty()) {
    bin::write_text_file_atomic(a.cm, confusion_to_csv(cm));
    outputs["confusion_matrix"] = a.cm;
  }
  const std::string anchor = !a.report.empty() ? a.report : a.cm;
  if (!anchor.empty())
    write_manifest(manifest_path_for(anchor), "evaluate", {{"model", ck.config.to_json()}, {"threshold", a.threshold}},
                   {{"model", a.model}, {"data", a.data}}, outputs, {{"init", ck.config.seed}});
  std::cout << table << std::setprecision(6) << "accuracy " << rep.accuracy << "\n";
  return kExitOk;
}

// ---- predict ----

struct PredictArgs {
  std::string model, input, output;
  bool strict = false;
  double threshold = 0.5;
};

int cmd_predict(PredictArgs& a) {
  const Checkpoint ck = load_checkpoint(a.model);
  if (!ck.extra.contains("preprocessor"))
    throw ConfigError("checkpoint '" + a.model + "' carries no preprocessing state; train it from a dataset file");
  const Preprocessor pre = Preprocessor::from_json(ck.extra["preprocessor"]);
  if (static_cast<int>(pre.feature_count()) != ck.config.input_length)
    throw ShapeError("checkpoint '" + a.model + "': preprocessor yields " + std::to_string(pre.feature_count()) +
                     " features, model expects " + std::to_string(ck.config.input_length));

  // A file with no bytes at all is an empty input, not a malformed one.
  const csv::Document doc =
      fs::exists(a.input) && fs::file_size(a.input) == 0 ? csv::Document{} : csv::read_file(a.input, /*allow_ragged=*/true);
  std::vector<std::string> header{"row_id", "predicted_class"};
  for (const auto& c : pre.labels.classes()) header.push_back("prob_" + c);

  std::vector<std::size_t> ids;
  std::vector<RowVector> rows;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < doc.rows.size(); ++i) {
    const std::size_t line = i < doc.line_numbers.size() ? doc.line_numbers[i] : i + 2;
    std::vector<std::string> warnings;
    try {
      if (doc.rows[i].size() != doc.header.size())
        throw ParseError("line " + std::to_string(line) + ": " + std::to_string(doc.rows[i].size()) + " fields, header has " +
                         std::to_string(doc.header.size()));
      rows.push_back(encode_record(pre, doc.header, doc.rows[i], &warnings));
      ids.push_back(i);
    } catch (const ParseError& e) {
      if (a.strict) throw;
      ++bad;
      std::cerr << "warning: skipping row " << i << ": " << e.what() << "\n";
    }
    for (const auto& w : warnings) std::cerr << "warning: row " << i << ": " << w << "\n";
  }

  Matrix x(static_cast<Eigen::Index>(rows.size()), ck.config.input_length);
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i];
  Matrix probs = rows.empty() ? Matrix(0, ck.config.output_units()) : predict_proba(ck.params, ck.config, x);
  if (ck.config.head == Head::binary) {
    Matrix two(probs.rows(), 2);
    two.col(0) = 1.0 - probs.col(0).array();
    two.col(1) = probs.col(0);
    probs = two;
  }
  const std::vector<int> pred = predict_labels(ck.config.head == Head::binary ? Matrix(probs.col(1)) : probs,
                                               ck.config.head, a.threshold);

  std::ostringstream out;
  csv::write_row(out, header);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<std::string> fields{std::to_string(ids[i]), pre.labels.decode(pred[i])};
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      std::ostringstream v;
      v << std::setprecision(17) << probs(static_cast<Eigen::Index>(i), c);
      fields.push_back(v.str());
    }
    csv::write_row(out, fields);
  }
  bin::write_text_file_atomic(a.output, out.str());
  write_manifest(manifest_path_for(a.output), "predict",
                 {{"model", ck.config.to_json()}, {"strict", a.strict}, {"threshold", a.threshold}},
                 {{"model", a.model}, {"input", a.input}}, {{"predictions", a.output}}, {{"init", ck.config.seed}});
  std::cout << "predicted " << ids.size() << " rows";
  if (bad) std::cout << ", skipped " << bad << " unparseable";
  std::cout << "\n";
  return bad ? kExitInputData : kExitOk;
}

// ---- selfcheck ----

struct SelfcheckArgs {
  std::uint64_t seed = 7;
  bool inject_fault = false;
};

int cmd_selfcheck(const SelfcheckArgs& a) {
  SelfcheckOptions opt;
  opt.seed = a.seed;
  opt.inject_fault = a.inject_fault;
  const SelfcheckReport rep = run_selfcheck(opt);
  rep.print(std::cout);
  return rep.all_passed() ? kExitOk : kExitSelfcheckFailed;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"CST-AFNet intrusion detection: preprocessing, training, evaluation, inference"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  PreprocessArgs pa;
  auto* pre = app.add_subcommand("preprocess", "Flow-record CSV to a split, standardized dataset file");
  pre->add_option("--input", pa.input, "Input CSV")->required();
  pre->add_option("--label-col", pa.label_column, "Label column name");
  pre->add_option("--drop-cols", pa.drop, "Comma-separated columns to remove");
  pre->add_option("--test-ratio", pa.test_ratio, "Test fraction per class (default 0.2)");
  pre->add_option("--seed", pa.seed, "Split seed (default $CSTAFNET_SEED or 42)");
  pre->add_option("--output", pa.output, "Dataset file to write")->required();
  pre->add_option("--config", pa.config, "JSON config; flags take precedence");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model on a dataset file");
  tr->add_option("--data", ta.data, "Dataset file")->required();
  tr->add_option("--out", ta.out, "Output directory")->required();
  tr->add_option("--config", ta.config, "JSON config or run manifest; flags take precedence");
  tr->add_option("--head", ta.head, "binary | multiclass");
  tr->add_option("--lr", ta.lr, "Learning rate");
  tr->add_option("--beta1", ta.beta1);
  tr->add_option("--beta2", ta.beta2);
  tr->add_option("--epsilon", ta.epsilon);
  tr->add_option("--batch-size", ta.batch, "Batch size");
  tr->add_option("--epochs", ta.epochs, "Maximum epochs");
  tr->add_option("--val-frac", ta.val_frac, "Validation fraction of the training split");
  tr->add_option("--patience", ta.patience, "Early-stopping patience");
  tr->add_option("--filters", ta.filters, "Filters per convolution branch");
  tr->add_option("--kernels", ta.kernels, "Odd kernel sizes")->delimiter(',');
  tr->add_option("--gru-units", ta.gru_units, "Units per GRU direction");
  tr->add_option("--attention-ratio", ta.attention_ratio, "Channel-attention reduction ratio");
  tr->add_option("--hidden-units", ta.hidden_units, "Hidden dense width");
  tr->add_option("--dropout-conv", ta.dropout_conv);
  tr->add_option("--dropout-hidden", ta.dropout_hidden);
  tr->add_option("--temporal-bias", ta.temporal_bias, "Temporal-attention bias on/off (true|false)");
  tr->add_option("--seed", ta.seed, "Initialization and shuffle seed (default $CSTAFNET_SEED or 42)");
  tr->add_option("--shuffle-seed", ta.shuffle_seed, "Shuffle seed, overrides --seed");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a dataset's test split");
  ev->add_option("--model", ea.model, "Checkpoint")->required();
  ev->add_option("--data", ea.data, "Dataset file")->required();
  ev->add_option("--report", ea.report, "Report JSON (table goes to <report>.txt)");
  ev->add_option("--cm", ea.cm, "Confusion matrix CSV");
  ev->add_option("--threshold", ea.threshold, "Binary decision threshold");

  PredictArgs pr;
  auto* pd = app.add_subcommand("predict", "Classify raw flow records");
  pd->add_option("--model", pr.model, "Checkpoint")->required();
  pd->add_option("--input", pr.input, "Input CSV")->required();
  pd->add_option("--output", pr.output, "Output CSV")->required();
  pd->add_flag("--strict", pr.strict, "Abort on the first unparseable row");
  pd->add_option("--threshold", pr.threshold, "Binary decision threshold");

  SelfcheckArgs sa;
  auto* sc = app.add_subcommand("selfcheck", "Gradient, normalization and metric property checks");
  sc->add_option("--seed", sa.seed, "Seed for random draws");
  sc->add_flag("--inject-fault", sa.inject_fault, "Corrupt one analytic gradient (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*pre) return cmd_preprocess(pa);
    if (*tr) return cmd_train(ta);
    if (*ev) return cmd_evaluate(ea);
    if (*pd) return cmd_predict(pr);
    if (*sc) return cmd_selfcheck(sa);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputData;
  } catch (const PreprocessError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputData;
  } catch (const SplitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputData;
  } catch (const LabelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputData;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputData;
  } catch (const Error& e) {
    // ConfigError, ShapeError
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace cstafnet
