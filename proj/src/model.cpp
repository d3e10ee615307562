#include "cstafnet/model.hpp"

#include <algorithm>
#include <cstring>

namespace cstafnet {

std::string to_string(Head h) { return h == Head::binary ? "binary" : "multiclass"; }

Head head_from_string(const std::string& name) {
  if (name == "binary") return Head::binary;
  if (name == "multiclass") return Head::multiclass;
  throw ConfigError("unknown head '" + name + "' (expected binary or multiclass)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (kernel_sizes.empty()) fail("at least one kernel size is required");
  for (int k : kernel_sizes)
    if (k < 1 || k % 2 == 0) fail("kernel size " + std::to_string(k) + " must be odd and positive");
  const int max_kernel = *std::max_element(kernel_sizes.begin(), kernel_sizes.end());
  if (input_length < max_kernel)
    fail("input length " + std::to_string(input_length) + " must be >= max kernel size " + std::to_string(max_kernel));
  if (filters < 1) fail("filters must be >= 1");
  if (gru_units < 1) fail("gru units must be >= 1");
  if (attention_ratio < 1 || recurrent_channels() % attention_ratio != 0)
    fail("2 * gru units (" + std::to_string(recurrent_channels()) + ") must be divisible by attention ratio " +
         std::to_string(attention_ratio));
  if (!(dropout_conv >= 0.0 && dropout_conv < 1.0)) fail("conv dropout rate must lie in [0, 1)");
  if (!(dropout_hidden >= 0.0 && dropout_hidden < 1.0)) fail("hidden dropout rate must lie in [0, 1)");
  if (hidden_units < 1) fail("hidden units must be >= 1");
  if (head == Head::multiclass && classes < 2) fail("multiclass head needs at least 2 classes");
  if (head == Head::binary && classes != 2) fail("binary head needs exactly 2 classes");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"input_length", input_length},
          {"kernel_sizes", kernel_sizes},
          {"filters", filters},
          {"gru_units", gru_units},
          {"attention_ratio", attention_ratio},
          {"dropout_conv", dropout_conv},
          {"dropout_hidden", dropout_hidden},
          {"hidden_units", hidden_units},
          {"head", to_string(head)},
          {"classes", classes},
          {"temporal_attention_bias", temporal_attention_bias},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_length = j.value("input_length", c.input_length);
  c.kernel_sizes = j.value("kernel_sizes", c.kernel_sizes);
  c.filters = j.value("filters", c.filters);
  c.gru_units = j.value("gru_units", c.gru_units);
  c.attention_ratio = j.value("attention_ratio", c.attention_ratio);
  c.dropout_conv = j.value("dropout_conv", c.dropout_conv);
  c.dropout_hidden = j.value("dropout_hidden", c.dropout_hidden);
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.head = head_from_string(j.value("head", to_string(c.head)));
  c.classes = j.value("classes", c.classes);
  c.temporal_attention_bias = j.value("temporal_attention_bias", c.temporal_attention_bias);
  c.seed = j.value("seed", c.seed);
  return c;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_length = 12;
  c.kernel_sizes = {3, 5};
  c.filters = 4;
  c.gru_units = 3;
  c.attention_ratio = 2;
  c.hidden_units = 8;
  c.classes = 3;
  return c;
}

std::vector<ArrayRef> ModelParams::arrays() {
  std::vector<ArrayRef> out;
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i].list_arrays("conv" + std::to_string(convs[i].kernel) + ".", out);
  bn.list_arrays("bn.", out);
  gru_fwd.list_arrays("gru_fwd.", out);
  gru_bwd.list_arrays("gru_bwd.", out);
  t_attn.list_arrays("t_attn.", out);
  c_attn.list_arrays("c_attn.", out);
  hidden.list_arrays("hidden.", out);
  this->out.list_arrays("out.", out);
  return out;
}

Eigen::Index ModelParams::parameter_count(bool trainable_only) const {
  Eigen::Index n = 0;
  for (const auto& a : const_cast<ModelParams*>(this)->arrays())
    if (a.trainable || !trainable_only) n += a.size();
  return n;
}

ModelParams build_model(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed, 0x1A17);
  ModelParams p;
  for (int k : cfg.kernel_sizes) p.convs.push_back(make_conv(k, 1, cfg.filters, rng));
  p.bn = make_batch_norm(cfg.concat_channels());
  p.gru_fwd = make_gru(cfg.concat_channels(), cfg.gru_units, rng);
  p.gru_bwd = make_gru(cfg.concat_channels(), cfg.gru_units, rng);
  p.t_attn = make_temporal_attention(cfg.input_length, rng);
  p.c_attn = make_channel_attention(cfg.recurrent_channels(), cfg.attention_ratio, rng);
  p.hidden = make_dense(cfg.recurrent_channels(), cfg.hidden_units, rng);
  p.out = make_dense(cfg.hidden_units, cfg.output_units(), rng);
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto& a : z.arrays()) a.flat().setZero();
  return z;
}

Matrix forward(const ModelParams& params, const ModelConfig& cfg, const Matrix& batch, Mode mode, Rng* rng,
               ForwardCache* cache, const DropoutMasks* frozen_masks) {
  if (batch.cols() != cfg.input_length)
    throw ShapeError("forward(): batch has " + std::to_string(batch.cols()) + " features, model expects " +
                     std::to_string(cfg.input_length));
  const auto batch_size = static_cast<std::size_t>(batch.rows());
  if (batch_size == 0) throw ShapeError("forward(): empty batch");
  const bool train = mode == Mode::train;
  if (train && !rng && !frozen_masks) throw ConfigError("forward(): training mode needs an Rng or frozen masks");
  if (frozen_masks && frozen_masks->conv.size() != batch_size)
    throw ShapeError("forward(): frozen dropout masks cover " + std::to_string(frozen_masks->conv.size()) +
                     " samples, batch has " + std::to_string(batch_size));

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  const bool keep = cache != nullptr;
  c.mode = mode;
  c.conv.assign(keep ? batch_size : 0, {});

  // reshape (d) -> (d x 1), convolutions, concat
  std::vector<Matrix> seq(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const Matrix x = batch.row(static_cast<Eigen::Index>(b)).transpose();
    seq[b] = multi_scale_block(x, params.convs, keep ? &c.conv[b] : nullptr);
  }

  seq = batch_norm(seq, params.bn, mode, &c.bn);

  c.masks.conv.assign(batch_size, {});
  for (std::size_t b = 0; b < batch_size; ++b) {
    if (!train) continue;
    c.masks.conv[b] = frozen_masks ? frozen_masks->conv[b]
                                   : make_dropout_mask(seq[b].rows(), seq[b].cols(), cfg.dropout_conv, *rng);
    seq[b] = seq[b].cwiseProduct(c.masks.conv[b]);
  }

  if (keep) {
    c.gru.assign(batch_size, {});
    c.t_attn.assign(batch_size, {});
    c.c_attn.assign(batch_size, {});
    c.pool.assign(batch_size, {});
  }
  Matrix pooled(static_cast<Eigen::Index>(batch_size), cfg.recurrent_channels());
  for (std::size_t b = 0; b < batch_size; ++b) {
    Matrix h = bigru(seq[b], params.gru_fwd, params.gru_bwd, keep ? &c.gru[b] : nullptr);
    h = temporal_attention(h, params.t_attn, keep ? &c.t_attn[b] : nullptr);
    h = channel_attention(h, params.c_attn, keep ? &c.c_attn[b] : nullptr);
    pooled.row(static_cast<Eigen::Index>(b)) = global_max_pool(h, keep ? &c.pool[b] : nullptr);
  }

  Matrix hidden = dense(pooled, params.hidden, Activation::relu, &c.hidden);
  if (train) {
    c.masks.hidden = frozen_masks ? frozen_masks->hidden
                                  : make_dropout_mask(hidden.rows(), hidden.cols(), cfg.dropout_hidden, *rng);
    hidden = hidden.cwiseProduct(c.masks.hidden);
  }
  const Activation head = cfg.head == Head::binary ? Activation::sigmoid : Activation::softmax;
  return dense(hidden, params.out, head, &c.out);
}

ModelParams backward(const ModelParams& params, const ModelConfig& cfg, const ForwardCache& cache,
                     const Matrix& grad_out) {
  const bool train = cache.mode == Mode::train;
  ModelParams g = zeros_like(params);
  const Activation head = cfg.head == Head::binary ? Activation::sigmoid : Activation::softmax;
  Matrix dhidden = dense_backward(cache.out, params.out, head, grad_out, g.out);
  if (train) dhidden = dhidden.cwiseProduct(cache.masks.hidden);
  const Matrix dpooled = dense_backward(cache.hidden, params.hidden, Activation::relu, dhidden, g.hidden);

  const std::size_t batch_size = cache.gru.size();
  std::vector<Matrix> dseq(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    Matrix dh = global_max_pool_backward(cache.pool[b], dpooled.row(static_cast<Eigen::Index>(b)));
    dh = channel_attention_backward(cache.c_attn[b], params.c_attn, dh, g.c_attn);
    dh = temporal_attention_backward(cache.t_attn[b], params.t_attn, dh, g.t_attn);
    dh = bigru_backward(cache.gru[b], params.gru_fwd, params.gru_bwd, dh, g.gru_fwd, g.gru_bwd);
    if (train) dh = dh.cwiseProduct(cache.masks.conv[b]);
    dseq[b] = std::move(dh);
  }
  dseq = batch_norm_backward(cache.bn, params.bn, dseq, g.bn);
  for (std::size_t b = 0; b < batch_size; ++b) multi_scale_block_backward(cache.conv[b], params.convs, dseq[b], g.convs);

  if (!cfg.temporal_attention_bias) g.t_attn.bias.setZero();
  return g;
}

void update_running_stats(ModelParams& params, const ForwardCache& cache) { update_running_stats(params.bn, cache.bn); }

bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
  auto aa = const_cast<ModelParams&>(a).arrays();
  auto bb = const_cast<ModelParams&>(b).arrays();
  if (aa.size() != bb.size()) return false;
  for (std::size_t i = 0; i < aa.size(); ++i) {
    if (aa[i].shape != bb[i].shape) return false;
    if (std::memcmp(aa[i].data, bb[i].data, static_cast<std::size_t>(aa[i].size()) * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace cstafnet
