#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cstafnet/data_pipeline.hpp"
#include "cstafnet/model.hpp"

namespace cstafnet {

enum class LossKind { bce, scce };

std::string to_string(LossKind k);
LossKind loss_from_string(const std::string& name);
LossKind loss_for_head(Head head);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 1024;
  int max_epochs = 10;
  double validation_fraction = 0.2;
  int patience = 5;
  std::uint64_t shuffle_seed = 42;
  LossKind loss = LossKind::scce;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LossResult {
  double loss = 0.0;  // mean over the batch
  Matrix grad;        // d(mean loss) / d(predictions), same shape as predictions
};

inline constexpr double kProbabilityClamp = 1e-7;

// p is (N x 1); p clamped to [1e-7, 1 - 1e-7].
LossResult bce_loss(const std::vector<int>& y, const Matrix& p);
// probs is (N x C); the true-class probability clamped to [1e-7, 1].
LossResult scce_loss(const std::vector<int>& y, const Matrix& probs);

struct OptimizerState {
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> v;
  std::int64_t step = 0;
};

// One Adam update of a single array at step t (t >= 1):
// theta -= lr * m_hat / (sqrt(v_hat) + eps)
void adam_update(Eigen::Ref<Eigen::VectorXd> theta, const Eigen::Ref<const Eigen::VectorXd>& grad,
                 Eigen::VectorXd& m, Eigen::VectorXd& v, std::int64_t t, const TrainConfig& cfg);

// Increments state.step, then updates every trainable array of `params`.
void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, const TrainConfig& cfg);

// Patience rule on validation loss: improvement is a strict decrease.
class EarlyStopping {
public:
  explicit EarlyStopping(int patience);

  // Records the next epoch's loss; returns true when it is a new best.
  bool observe(double val_loss);
  bool should_stop() const { return wait_ >= patience_; }
  int best_epoch() const { return best_epoch_; }  // 1-based, 0 before any observation
  double best_loss() const { return best_loss_; }
  int epochs_seen() const { return epochs_; }

private:
  int patience_;
  int epochs_ = 0;
  int wait_ = 0;
  int best_epoch_ = 0;
  double best_loss_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  std::string stop_reason;

  nlohmann::json to_json() const;
  std::string to_text() const;  // JSON, full precision
};

struct TrainResult {
  ModelParams params;  // weights of the best validation epoch
  TrainHistory history;
};

struct TrainOptions {
  std::string checkpoint_path;  // empty: no checkpointing
  nlohmann::json checkpoint_extra = nlohmann::json::object();
  std::ostream* progress = nullptr;
  // When set, replaces the measured validation loss of each epoch:
  // (epoch, measured) -> loss seen by early stopping and the history.
  std::function<double(int, double)> validation_loss_override;
};

TrainResult train(ModelParams params, const TrainConfig& cfg, const ModelConfig& model_cfg, const Matrix& x,
                  const std::vector<int>& y, const TrainOptions& options = {});
TrainResult train(ModelParams params, const TrainConfig& cfg, const ModelConfig& model_cfg, const DatasetSplit& data,
                  const std::string& checkpoint_path);

struct LossAndAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Infer-mode loss and accuracy over a whole set, in batches.
LossAndAccuracy evaluate_loss(const ModelParams& params, const ModelConfig& model_cfg, const Matrix& x,
                              const std::vector<int>& y, LossKind loss, int batch_size);

// Infer-mode outputs for a whole set, in batches.
Matrix predict_proba(const ModelParams& params, const ModelConfig& model_cfg, const Matrix& x, int batch_size = 1024);

}  // namespace cstafnet
