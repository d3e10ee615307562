#include "cstafnet/training.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace cstafnet {

std::string to_string(LossKind k) { return k == LossKind::bce ? "bce" : "scce"; }

LossKind loss_from_string(const std::string& name) {
  if (name == "bce") return LossKind::bce;
  if (name == "scce") return LossKind::scce;
  throw ConfigError("unknown loss '" + name + "' (expected bce or scce)");
}

LossKind loss_for_head(Head head) { return head == Head::binary ? LossKind::bce : LossKind::scce; }

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (!(learning_rate > 0.0)) fail("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon must be positive");
  if (batch_size < 2) fail("batch size must be >= 2 (batch normalization)");
  if (max_epochs < 1) fail("max epochs must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) fail("validation fraction must lie in (0, 1)");
  if (patience < 1) fail("patience must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"validation_fraction", validation_fraction},
          {"patience", patience},
          {"shuffle_seed", shuffle_seed},
          {"loss", to_string(loss)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.patience = j.value("patience", c.patience);
  c.shuffle_seed = j.value("shuffle_seed", c.shuffle_seed);
  c.loss = loss_from_string(j.value("loss", to_string(c.loss)));
  return c;
}

LossResult bce_loss(const std::vector<int>& y, const Matrix& p) {
  if (p.cols() != 1 || static_cast<std::size_t>(p.rows()) != y.size())
    throw ShapeError("bce_loss(): predictions " + shape_string(p) + " vs " + std::to_string(y.size()) + " labels");
  const double n = static_cast<double>(y.size());
  LossResult out{0.0, Matrix::Zero(p.rows(), 1)};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (y[i] != 0 && y[i] != 1) throw LabelError("bce_loss(): label " + std::to_string(y[i]) + " at sample " + std::to_string(i) + " is not 0/1");
    const double raw = p(ii, 0);
    const double q = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
    const bool clamped = raw != q;
    if (y[i] == 1) {
      out.loss -= std::log(q);
      if (!clamped) out.grad(ii, 0) = -1.0 / (q * n);
    } else {
      out.loss -= std::log(1.0 - q);
      if (!clamped) out.grad(ii, 0) = 1.0 / ((1.0 - q) * n);
    }
  }
  out.loss /= n;
  return out;
}

LossResult scce_loss(const std::vector<int>& y, const Matrix& probs) {
  if (static_cast<std::size_t>(probs.rows()) != y.size())
    throw ShapeError("scce_loss(): " + shape_string(probs) + " vs " + std::to_string(y.size()) + " labels");
  const double n = static_cast<double>(y.size());
  LossResult out{0.0, Matrix::Zero(probs.rows(), probs.cols())};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (y[i] < 0 || y[i] >= probs.cols())
      throw LabelError("scce_loss(): label " + std::to_string(y[i]) + " at sample " + std::to_string(i) +
                       " outside [0, " + std::to_string(probs.cols() - 1) + "]");
    const double raw = probs(ii, y[i]);
    const double q = std::clamp(raw, kProbabilityClamp, 1.0);
    out.loss -= std::log(q);
    if (raw == q) out.grad(ii, y[i]) = -1.0 / (q * n);
  }
  out.loss /= n;
  return out;
}

void adam_update(Eigen::Ref<Eigen::VectorXd> theta, const Eigen::Ref<const Eigen::VectorXd>& grad,
                 Eigen::VectorXd& m, Eigen::VectorXd& v, std::int64_t t, const TrainConfig& cfg) {
  if (theta.size() != grad.size() || m.size() != theta.size() || v.size() != theta.size())
    throw ShapeError("adam_update(): parameter, gradient and moment sizes differ");
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double m_corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double v_corr = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  theta.array() -= cfg.learning_rate * (m.array() / m_corr) / ((v.array() / v_corr).sqrt() + cfg.epsilon);
}

void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, const TrainConfig& cfg) {
  auto p = params.arrays();
  auto g = const_cast<ModelParams&>(grads).arrays();
  if (p.size() != g.size()) throw ShapeError("adam_step(): parameter and gradient structures differ");
  std::size_t trainable = 0;
  for (const auto& a : p) trainable += a.trainable;
  if (state.m.empty()) {
    for (const auto& a : p) {
      if (!a.trainable) continue;
      state.m.push_back(Eigen::VectorXd::Zero(a.size()));
      state.v.push_back(Eigen::VectorXd::Zero(a.size()));
    }
  }
  if (state.m.size() != trainable) throw ShapeError("adam_step(): optimizer state does not match parameters");
  ++state.step;
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!p[i].trainable) continue;
    if (p[i].shape != g[i].shape) throw ShapeError("adam_step(): gradient shape differs for '" + p[i].name + "'");
    adam_update(p[i].flat(), g[i].flat(), state.m[k], state.v[k], state.step, cfg);
    ++k;
  }
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience), best_loss_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::observe(double val_loss) {
  ++epochs_;
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epochs_;
    wait_ = 0;
    return true;
  }
  ++wait_;
  return false;
}

nlohmann::json TrainHistory::to_json() const {
  nlohmann::json j;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"train_acc", e.train_accuracy},
                           {"val_loss", e.val_loss},
                           {"val_acc", e.val_accuracy}});
  j["best_epoch"] = best_epoch;
  j["stop_reason"] = stop_reason;
  return j;
}

std::string TrainHistory::to_text() const { return to_json().dump(2) + "\n"; }

namespace {

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), x.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

std::vector<int> gather(const std::vector<int>& y, const std::vector<std::size_t>& idx, std::size_t begin,
                        std::size_t end) {
  std::vector<int> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(y[idx[i]]);
  return out;
}

LossResult compute_loss(LossKind kind, const std::vector<int>& y, const Matrix& out) {
  return kind == LossKind::bce ? bce_loss(y, out) : scce_loss(y, out);
}

std::size_t count_correct(const Matrix& out, const std::vector<int>& y) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    int pred = 0;
    if (out.cols() == 1) {
      pred = out(ii, 0) >= 0.5 ? 1 : 0;
    } else {
      Eigen::Index arg = 0;
      out.row(ii).maxCoeff(&arg);
      pred = static_cast<int>(arg);
    }
    correct += pred == y[i];
  }
  return correct;
}

// Batch boundaries; a trailing single-sample batch is folded into its
// predecessor since train-mode batch norm needs two samples.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch) out.emplace_back(b, std::min(n, b + batch));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

}  // namespace

Matrix predict_proba(const ModelParams& params, const ModelConfig& model_cfg, const Matrix& x, int batch_size) {
  Matrix out(x.rows(), model_cfg.output_units());
  const auto step = static_cast<Eigen::Index>(std::max(1, batch_size));
  for (Eigen::Index b = 0; b < x.rows(); b += step) {
    const Eigen::Index n = std::min(step, x.rows() - b);
    out.middleRows(b, n) = forward(params, model_cfg, x.middleRows(b, n), Mode::infer, nullptr);
  }
  return out;
}

LossAndAccuracy evaluate_loss(const ModelParams& params, const ModelConfig& model_cfg, const Matrix& x,
                              const std::vector<int>& y, LossKind loss, int batch_size) {
  if (x.rows() == 0) throw ShapeError("evaluate_loss(): empty set");
  const Matrix out = predict_proba(params, model_cfg, x, batch_size);
  return {compute_loss(loss, y, out).loss, static_cast<double>(count_correct(out, y)) / static_cast<double>(y.size())};
}

TrainResult train(ModelParams params, const TrainConfig& cfg, const ModelConfig& model_cfg, const Matrix& x,
                  const std::vector<int>& y, const TrainOptions& options) {
  cfg.validate();
  model_cfg.validate();
  if (cfg.loss != loss_for_head(model_cfg.head))
    throw ConfigError("loss " + to_string(cfg.loss) + " does not match the " + to_string(model_cfg.head) + " head");
  if (x.rows() == 0) throw ConfigError("training set is empty");
  if (static_cast<std::size_t>(x.rows()) != y.size())
    throw ShapeError("train(): " + std::to_string(x.rows()) + " rows vs " + std::to_string(y.size()) + " labels");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] < 0 || y[i] >= model_cfg.classes)
      throw LabelError("train(): label " + std::to_string(y[i]) + " at sample " + std::to_string(i) +
                       " outside [0, " + std::to_string(model_cfg.classes - 1) + "]");

  const std::size_t n = y.size();
  const auto n_val = static_cast<std::size_t>(std::round(cfg.validation_fraction * static_cast<double>(n)));
  if (n_val < 1) throw ConfigError("validation fraction leaves no validation samples");
  if (n - n_val < 2) throw ConfigError("validation fraction leaves fewer than 2 training samples");

  Rng shuffle_rng(cfg.shuffle_seed, 1);
  Rng dropout_rng(cfg.shuffle_seed, 2);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, shuffle_rng);
  const std::size_t n_fit = n - n_val;
  const Matrix val_x = gather_rows(x, order, n_fit, n);
  const std::vector<int> val_y = gather(y, order, n_fit, n);
  std::vector<std::size_t> fit(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_fit));

  OptimizerState state;
  EarlyStopping stopper(cfg.patience);
  TrainResult result{params, {}};

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(fit, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    int batch_no = 0;
    for (const auto& [begin, end] : batch_ranges(n_fit, static_cast<std::size_t>(cfg.batch_size))) {
      ++batch_no;
      const Matrix bx = gather_rows(x, fit, begin, end);
      const std::vector<int> by = gather(y, fit, begin, end);
      ForwardCache cache;
      const Matrix out = forward(params, model_cfg, bx, Mode::train, &dropout_rng, &cache);
      const LossResult loss = compute_loss(cfg.loss, by, out);
      if (!std::isfinite(loss.loss))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_no));
      const ModelParams grads = backward(params, model_cfg, cache, loss.grad);
      update_running_stats(params, cache);
      adam_step(params, grads, state, cfg);
      loss_sum += loss.loss * static_cast<double>(end - begin);
      correct += count_correct(out, by);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n_fit);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n_fit);
    const LossAndAccuracy val = evaluate_loss(params, model_cfg, val_x, val_y, cfg.loss, cfg.batch_size);
    if (!std::isfinite(val.loss)) throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
    rec.val_loss = options.validation_loss_override ? options.validation_loss_override(epoch, val.loss) : val.loss;
    rec.val_accuracy = val.accuracy;
    result.history.epochs.push_back(rec);

    const bool improved = stopper.observe(rec.val_loss);
    if (improved) {
      result.params = params;
      if (!options.checkpoint_path.empty())
        save_checkpoint(params, model_cfg, options.checkpoint_path, options.checkpoint_extra);
    }
    if (options.progress) {
      *options.progress << std::setprecision(6) << "epoch " << epoch << "/" << cfg.max_epochs
                        << " train_loss=" << rec.train_loss << " train_acc=" << rec.train_accuracy
                        << " val_loss=" << rec.val_loss << " val_acc=" << rec.val_accuracy
                        << (improved ? " *" : "") << "\n";
    }
    if (stopper.should_stop()) {
      result.history.stop_reason = "early_stopping";
      break;
    }
  }
  if (result.history.stop_reason.empty()) result.history.stop_reason = "max_epochs";
  result.history.best_epoch = stopper.best_epoch();
  return result;
}

TrainResult train(ModelParams params, const TrainConfig& cfg, const ModelConfig& model_cfg, const DatasetSplit& data,
                  const std::string& checkpoint_path) {
  TrainOptions options;
  options.checkpoint_path = checkpoint_path;
  options.checkpoint_extra = {{"preprocessor", data.preprocessor.to_json()}};
  return train(std::move(params), cfg, model_cfg, data.train_x, data.train_y, options);
}

}  // namespace cstafnet
