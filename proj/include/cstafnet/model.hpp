#pragma once

// End-to-end network: reshape -> parallel same-padded ReLU convolutions ->
// concat -> batch norm -> dropout -> BiGRU -> temporal attention ->
// channel attention -> global max pool -> dense ReLU -> dropout -> head.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cstafnet/layers.hpp"

namespace cstafnet {

enum class Head { binary, multiclass };

std::string to_string(Head h);
Head head_from_string(const std::string& name);

struct ModelConfig {
  int input_length = 60;
  std::vector<int> kernel_sizes{3, 5, 7};
  int filters = 64;
  int gru_units = 64;
  int attention_ratio = 8;
  double dropout_conv = 0.3;
  double dropout_hidden = 0.4;
  int hidden_units = 128;
  Head head = Head::multiclass;
  int classes = 15;
  bool temporal_attention_bias = true;
  std::uint64_t seed = 42;

  // Throws ConfigError naming the violated constraint.
  void validate() const;
  int output_units() const { return head == Head::binary ? 1 : classes; }
  int concat_channels() const { return filters * static_cast<int>(kernel_sizes.size()); }
  int recurrent_channels() const { return 2 * gru_units; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// The gradient-check composite: d=12, kernels {3,5}, 4 filters, U=3, r=2,
// hidden 8, 3 classes.
ModelConfig tiny_config();

struct ModelParams {
  std::vector<ConvParams> convs;  // in kernel_sizes order
  BatchNormParams bn;
  GruParams gru_fwd;
  GruParams gru_bwd;
  TemporalAttentionParams t_attn;
  ChannelAttentionParams c_attn;
  DenseParams hidden;
  DenseParams out;

  // Every array in serialization order (the field order above).
  std::vector<ArrayRef> arrays();
  Eigen::Index parameter_count(bool trainable_only = true) const;
};

ModelParams build_model(const ModelConfig& cfg);
ModelParams zeros_like(const ModelParams& p);

struct DropoutMasks {
  std::vector<Matrix> conv;  // per sample, T x concat_channels
  Matrix hidden;             // B x hidden_units
};

struct ForwardCache {
  Mode mode = Mode::infer;
  std::vector<MultiScaleCache> conv;
  BatchNormCache bn;
  DropoutMasks masks;
  std::vector<BiGruCache> gru;
  std::vector<TemporalAttentionCache> t_attn;
  std::vector<ChannelAttentionCache> c_attn;
  std::vector<MaxPoolCache> pool;
  DenseCache hidden;
  DenseCache out;
};

// `batch` is (B x input_length). Returns (B x C) probability rows for the
// multiclass head or (B x 1) probabilities for the binary head.
// Train mode draws dropout masks from `rng` unless `frozen_masks` is given.
Matrix forward(const ModelParams& params, const ModelConfig& cfg, const Matrix& batch, Mode mode, Rng* rng,
               ForwardCache* cache = nullptr, const DropoutMasks* frozen_masks = nullptr);

// Gradient of a scalar loss with respect to every trainable array, given
// dLoss/dOutput. Non-trainable arrays come back zero.
ModelParams backward(const ModelParams& params, const ModelConfig& cfg, const ForwardCache& cache,
                     const Matrix& grad_out);

// Folds the batch statistics of a train-mode pass into the running stats.
void update_running_stats(ModelParams& params, const ForwardCache& cache);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  // Free-form block carried alongside (preprocessing state, provenance).
  nlohmann::json extra = nlohmann::json::object();
};

// Layout: "CSTAFNET", u8 format version, u32 length + JSON config block,
// u32 array count, per array u32 rank + u32 dims + f64 LE values, then a
// u64 FNV-1a checksum over every byte after the version byte.
std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                                               const nlohmann::json& extra = nlohmann::json::object());
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const std::string& path,
                     const nlohmann::json& extra = nlohmann::json::object());
Checkpoint load_checkpoint(const std::string& path);

bool bitwise_equal(const ModelParams& a, const ModelParams& b);

}  // namespace cstafnet
