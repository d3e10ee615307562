// Acceptance gate: one PASS/FAIL/SKIP line per criterion, exit 1 on any FAIL.
// Criterion 9 needs CSTAFNET_ACCEPTANCE_DATA pointing at a dataset file
// produced by `cstafnet preprocess` from a stratified Edge-IIoTset sample.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cstafnet/evaluation.hpp"
#include "cstafnet/selfcheck.hpp"
#include "cstafnet/training.hpp"
#include "support.hpp"

using namespace cstafnet;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

Verdict verdict(bool ok, const std::string& detail) { return {ok ? Outcome::pass : Outcome::fail, detail}; }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

Verdict gradient_exactness() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  int cases = 0, failed = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SelfcheckOptions opt;
    opt.seed = seed;
    for (const auto& r : run_gradient_checks(opt)) {
      ++cases;
      failed += !r.passed;
      if (r.worst >= worst) {
        worst = r.worst;
        worst_name = r.name;
      }
    }
  }
  const double secs = seconds_since(start);
  return verdict(failed == 0 && secs < 120.0, std::to_string(cases - failed) + "/" + std::to_string(cases) +
                                                  " cases, worst rel err " + sci(worst) + " (" + worst_name + "), " +
                                                  std::to_string(secs) + " s");
}

Verdict analytic_losses() {
  const Matrix uniform = Matrix::Constant(3, 15, 1.0 / 15.0);
  const double scce = scce_loss({0, 7, 14}, uniform).loss;
  Matrix half(1, 1);
  half << 0.5;
  const double bce = bce_loss({1}, half).loss;
  const double e1 = std::abs(scce - std::log(15.0)), e2 = std::abs(bce - std::log(2.0));
  return verdict(e1 <= 1e-9 && e2 <= 1e-9, "|scce - ln 15| " + sci(e1) + ", |bce - ln 2| " + sci(e2));
}

Verdict adam_single_step() {
  // Gradients log-uniform in [1e-5, 1e5], both signs. Below ~1e-5 the
  // epsilon term alone moves the step by more than 1e-6.
  TrainConfig cfg;
  Rng rng(31);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double g = (rng.uniform() < 0.5 ? -1.0 : 1.0) * std::pow(10.0, rng.uniform(-5.0, 5.0));
    Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, rng.normal()), m = Eigen::VectorXd::Zero(1),
                    v = Eigen::VectorXd::Zero(1), grad = Eigen::VectorXd::Constant(1, g);
    const double before = theta(0);
    adam_update(theta, grad, m, v, 1, cfg);
    const double step = theta(0) - before;
    worst = std::max(worst, std::abs(std::abs(step) - cfg.learning_rate));
    if (std::signbit(step) == std::signbit(g)) worst = std::max(worst, 1.0);
  }
  return verdict(worst <= 1e-6, "max ||step| - lr| " + sci(worst) + " over 1000 gradients");
}

Verdict normalization() {
  SelfcheckOptions opt;
  opt.normalization_draws = 100;
  std::string detail;
  bool ok = true;
  for (const auto& r : run_normalization_checks(opt)) {
    ok = ok && r.passed;
    detail += (detail.empty() ? "" : "; ") + r.name + " " + r.detail;
  }
  return verdict(ok, detail);
}

Verdict metric_oracle() {
  SelfcheckOptions opt;
  opt.metric_trials = 1000;
  std::string detail;
  bool ok = true;
  for (const auto& r : run_metric_checks(opt)) {
    ok = ok && r.passed;
    detail += (detail.empty() ? "" : "; ") + r.name + " " + r.detail;
  }
  return verdict(ok, detail);
}

Verdict learning() {
  const auto start = std::chrono::steady_clock::now();
  TrainConfig tc;
  tc.batch_size = 16;
  tc.max_epochs = 50;
  tc.patience = 50;

  Matrix x;
  std::vector<int> y;
  testing::separable_blobs(300, 12, 3, 2024, x, y);
  const ModelConfig mc = tiny_config();
  const TrainResult multi = train(build_model(mc), tc, mc, x, y);
  const double acc = evaluate_loss(multi.params, mc, x, y, LossKind::scce, 256).accuracy;

  Matrix xb;
  std::vector<int> yb;
  testing::separable_blobs(200, 12, 2, 7, xb, yb);
  ModelConfig bc = tiny_config();
  bc.head = Head::binary;
  bc.classes = 2;
  TrainConfig btc = tc;
  btc.loss = LossKind::bce;
  const TrainResult bin = train(build_model(bc), btc, bc, xb, yb);
  const ClassificationReport rep =
      report(confusion(yb, predict_labels(predict_proba(bin.params, bc, xb), Head::binary), 2));
  bool perfect = rep.accuracy == 1.0;
  for (const auto& m : rep.per_class) perfect = perfect && m.precision == 1.0 && m.recall == 1.0;

  const double secs = seconds_since(start);
  std::ostringstream d;
  d << std::setprecision(4) << "3-class train acc " << acc << " after " << multi.history.epochs.size()
    << " epochs; binary P/R " << (perfect ? "1.0000" : "<1") << "; " << std::setprecision(3) << secs << " s";
  return verdict(acc >= 0.99 && perfect && secs < 120.0, d.str());
}

Verdict early_stopping() {
  const std::vector<double> scripted{1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99};
  Matrix x;
  std::vector<int> y;
  testing::separable_blobs(40, 12, 3, 5, x, y);
  const ModelConfig mc = tiny_config();
  TrainConfig tc;
  tc.batch_size = 8;
  tc.max_epochs = 10;
  tc.patience = 5;

  // Reference weights after exactly two epochs of the same run.
  TrainConfig two = tc;
  two.max_epochs = 2;
  TrainOptions ref_opt;
  ModelParams after_epoch2;
  ref_opt.validation_loss_override = [&](int epoch, double) { return epoch == 2 ? 0.0 : 1.0; };
  after_epoch2 = train(build_model(mc), two, mc, x, y, ref_opt).params;

  TrainOptions opt;
  opt.validation_loss_override = [&](int epoch, double) {
    return scripted[static_cast<std::size_t>(std::min<int>(epoch, static_cast<int>(scripted.size())) - 1)];
  };
  const TrainResult r = train(build_model(mc), tc, mc, x, y, opt);
  const bool ok = r.history.epochs.size() == 7 && r.history.best_epoch == 2 && r.history.stop_reason == "early_stopping" &&
                  bitwise_equal(r.params, after_epoch2);
  return verdict(ok, "stopped after epoch " + std::to_string(r.history.epochs.size()) + ", best epoch " +
                         std::to_string(r.history.best_epoch) + ", restored weights " +
                         (bitwise_equal(r.params, after_epoch2) ? "match" : "differ from") + " epoch 2");
}

Verdict determinism() {
  testing::TempDir dir;
  Matrix x;
  std::vector<int> y;
  testing::separable_blobs(80, 12, 3, 9, x, y, 1.5);
  const ModelConfig mc = tiny_config();
  TrainConfig tc;
  tc.batch_size = 16;
  tc.max_epochs = 4;
  std::string histories[2], checkpoints[2];
  for (int run = 0; run < 2; ++run) {
    TrainOptions opt;
    opt.checkpoint_path = dir.file("run" + std::to_string(run) + ".ckpt");
    histories[run] = train(build_model(mc), tc, mc, x, y, opt).history.to_text();
    checkpoints[run] = testing::read_text(opt.checkpoint_path);
  }
  const bool ok = histories[0] == histories[1] && checkpoints[0] == checkpoints[1] && !checkpoints[0].empty();
  return verdict(ok, std::string("history ") + (histories[0] == histories[1] ? "identical" : "differs") +
                         ", checkpoint " + (checkpoints[0] == checkpoints[1] ? "bit-identical" : "differs") + " (" +
                         std::to_string(checkpoints[0].size()) + " bytes)");
}

Verdict user_dataset() {
  const char* path = std::getenv("CSTAFNET_ACCEPTANCE_DATA");
  if (!path || !*path) return {Outcome::skip, "set CSTAFNET_ACCEPTANCE_DATA to a preprocessed dataset file"};
  const auto start = std::chrono::steady_clock::now();
  const DatasetSplit data = load_dataset(path);
  ModelConfig mc;
  mc.input_length = static_cast<int>(data.features());
  mc.classes = data.classes();
  const TrainConfig tc;
  const TrainResult r = train(build_model(mc), tc, mc, data.train_x, data.train_y, {.progress = &std::cerr});
  const double acc = evaluate_loss(r.params, mc, data.test_x, data.test_y, LossKind::scce, 1024).accuracy;
  std::ostringstream d;
  d << std::setprecision(4) << "test accuracy " << acc << " (" << data.classes() << " classes, "
    << data.train_x.rows() << " train rows, " << r.history.epochs.size() << " epochs, " << seconds_since(start)
    << " s)";
  return verdict(acc >= 0.97, d.str());
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient exactness", gradient_exactness},
      {"analytic loss values", analytic_losses},
      {"adam single-step oracle", adam_single_step},
      {"normalization invariants", normalization},
      {"metric oracle", metric_oracle},
      {"learning check", learning},
      {"early-stopping rule", early_stopping},
      {"determinism", determinism},
      {"user dataset accuracy (optional)", user_dataset},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::fail ? "FAIL" : "SKIP";
    failures += v.outcome == Outcome::fail;
    std::cout << "criterion " << (i + 1) << " " << tag << "  " << criteria[i].first << ": " << v.detail << std::endl;
  }
  return failures ? 1 : 0;
}
