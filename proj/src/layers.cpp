#include "cstafnet/layers.hpp"

#include <algorithm>

namespace cstafnet {

namespace {

void push(std::vector<ArrayRef>& out, const std::string& prefix, const char* name, Matrix& m,
          std::vector<Eigen::Index> shape = {}, bool trainable = true) {
  if (shape.empty()) shape = {m.rows(), m.cols()};
  out.push_back({prefix + name, m.data(), std::move(shape), trainable});
}

void push(std::vector<ArrayRef>& out, const std::string& prefix, const char* name, RowVector& v,
          bool trainable = true) {
  out.push_back({prefix + name, v.data(), {v.size()}, trainable});
}

RowVector sigmoid(const RowVector& v) { return activation(Activation::sigmoid, v); }

}  // namespace

// ---------------------------------------------------------------------------
// Convolution

void ConvParams::list_arrays(const std::string& prefix, std::vector<ArrayRef>& out) {
  push(out, prefix, "weights", weights, {kernel, in_channels, weights.cols()});
  push(out, prefix, "bias", bias);
}

ConvParams make_conv(int kernel, int in_channels, int filters, Rng& rng) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("convolution kernel size must be odd, got " + std::to_string(kernel));
  if (in_channels < 1 || filters < 1) throw ConfigError("convolution needs at least one input channel and filter");
  ConvParams p;
  p.kernel = kernel;
  p.in_channels = in_channels;
  p.weights = glorot_init(kernel * in_channels, filters, rng);
  p.bias = RowVector::Zero(filters);
  return p;
}

Matrix conv1d_same(const Matrix& x, const ConvParams& p, Activation act, ConvCache* cache) {
  if (x.cols() != p.in_channels)
    throw ShapeError("conv1d_same(): input " + shape_string(x) + " has " + std::to_string(x.cols()) +
                     " channels, kernel expects " + std::to_string(p.in_channels));
  if (x.rows() < 1) throw ShapeError("conv1d_same(): empty sequence");
  const Eigen::Index steps = x.rows();
  const Eigen::Index cin = p.in_channels;
  const int half = (p.kernel - 1) / 2;
  Matrix patches = Matrix::Zero(steps, p.kernel * cin);
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (int tap = 0; tap < p.kernel; ++tap) {
      const Eigen::Index src = t + tap - half;
      if (src < 0 || src >= steps) continue;
      patches.block(t, tap * cin, 1, cin) = x.row(src);
    }
  }
  Matrix pre = matmul(patches, p.weights);
  pre.rowwise() += p.bias;
  Matrix out = activation(act, pre);
  if (cache) *cache = {std::move(patches), std::move(pre), out};
  return out;
}

Matrix conv1d_same_backward(const ConvCache& cache, const ConvParams& p, Activation act, const Matrix& grad_out,
                            ConvParams& grad) {
  const Matrix dpre = grad_out.cwiseProduct(activation_derivative(act, cache.pre, cache.out));
  grad.weights.noalias() += cache.patches.transpose() * dpre;
  grad.bias += dpre.colwise().sum();
  const Matrix dpatches = dpre * p.weights.transpose();
  const Eigen::Index steps = dpre.rows();
  const Eigen::Index cin = p.in_channels;
  const int half = (p.kernel - 1) / 2;
  Matrix dx = Matrix::Zero(steps, cin);
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (int tap = 0; tap < p.kernel; ++tap) {
      const Eigen::Index src = t + tap - half;
      if (src < 0 || src >= steps) continue;
      dx.row(src) += dpatches.block(t, tap * cin, 1, cin);
    }
  }
  return dx;
}

Matrix multi_scale_block(const Matrix& x, const std::vector<ConvParams>& convs, MultiScaleCache* cache) {
  if (convs.empty()) throw ConfigError("multi_scale_block(): no convolutions");
  const int filters = convs.front().filters();
  for (const auto& c : convs)
    if (c.filters() != filters)
      throw ShapeError("multi_scale_block(): filter counts differ (" + std::to_string(filters) + " vs " +
                       std::to_string(c.filters()) + ")");
  Matrix out(x.rows(), filters * static_cast<Eigen::Index>(convs.size()));
  if (cache) cache->convs.assign(convs.size(), {});
  for (std::size_t i = 0; i < convs.size(); ++i) {
    out.middleCols(static_cast<Eigen::Index>(i) * filters, filters) =
        conv1d_same(x, convs[i], Activation::relu, cache ? &cache->convs[i] : nullptr);
  }
  return out;
}

Matrix multi_scale_block_backward(const MultiScaleCache& cache, const std::vector<ConvParams>& convs,
                                  const Matrix& grad_out, std::vector<ConvParams>& grads) {
  const int filters = convs.front().filters();
  Matrix dx = Matrix::Zero(grad_out.rows(), convs.front().in_channels);
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const Matrix g = grad_out.middleCols(static_cast<Eigen::Index>(i) * filters, filters);
    dx += conv1d_same_backward(cache.convs[i], convs[i], Activation::relu, g, grads[i]);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization

void BatchNormParams::list_arrays(const std::string& prefix, std::vector<ArrayRef>& out) {
  push(out, prefix, "gamma", gamma);
  push(out, prefix, "beta", beta);
  push(out, prefix, "running_mean", running_mean, false);
  push(out, prefix, "running_var", running_var, false);
}

BatchNormParams make_batch_norm(int channels) {
  BatchNormParams p;
  p.gamma = RowVector::Ones(channels);
  p.beta = RowVector::Zero(channels);
  p.running_mean = RowVector::Zero(channels);
  p.running_var = RowVector::Ones(channels);
  return p;
}

std::vector<Matrix> batch_norm(const std::vector<Matrix>& x, const BatchNormParams& p, Mode mode,
                               BatchNormCache* cache) {
  if (x.empty()) throw ShapeError("batch_norm(): empty batch");
  const Eigen::Index channels = p.gamma.size();
  for (const auto& s : x)
    if (s.cols() != channels || s.rows() != x.front().rows())
      throw ShapeError("batch_norm(): sample " + shape_string(s) + " does not match " +
                       std::to_string(channels) + " channels");
  RowVector mean, var;
  if (mode == Mode::train) {
    if (x.size() < 2) throw ConfigError("batch_norm(): training mode needs a batch of at least 2");
    const double count = static_cast<double>(x.size() * static_cast<std::size_t>(x.front().rows()));
    mean = RowVector::Zero(channels);
    for (const auto& s : x) mean += s.colwise().sum();
    mean /= count;
    var = RowVector::Zero(channels);
    for (const auto& s : x) var += (s.rowwise() - mean).array().square().matrix().colwise().sum();
    var /= count;
  } else {
    mean = p.running_mean;
    var = p.running_var;
  }
  const RowVector inv_std = (var.array() + p.eps).rsqrt().matrix();
  std::vector<Matrix> out;
  out.reserve(x.size());
  std::vector<Matrix> xhat;
  xhat.reserve(x.size());
  for (const auto& s : x) {
    Matrix h = (s.rowwise() - mean).array().rowwise() * inv_std.array();
    Matrix y = (h.array().rowwise() * p.gamma.array()).rowwise() + p.beta.array();
    out.push_back(std::move(y));
    xhat.push_back(std::move(h));
  }
  if (cache) {
    cache->mode = mode;
    cache->xhat = std::move(xhat);
    cache->batch_mean = mean;
    cache->batch_var = var;
    cache->inv_std = inv_std;
  }
  return out;
}

std::vector<Matrix> batch_norm_backward(const BatchNormCache& cache, const BatchNormParams& p,
                                        const std::vector<Matrix>& grad_out, BatchNormParams& grad) {
  const Eigen::Index channels = p.gamma.size();
  RowVector sum_g = RowVector::Zero(channels);
  RowVector sum_gx = RowVector::Zero(channels);
  for (std::size_t b = 0; b < grad_out.size(); ++b) {
    sum_g += grad_out[b].colwise().sum();
    sum_gx += grad_out[b].cwiseProduct(cache.xhat[b]).colwise().sum();
  }
  grad.gamma += sum_gx;
  grad.beta += sum_g;

  std::vector<Matrix> dx;
  dx.reserve(grad_out.size());
  const RowVector scale = p.gamma.cwiseProduct(cache.inv_std);
  if (cache.mode == Mode::infer) {
    for (const auto& g : grad_out) dx.push_back(g.array().rowwise() * scale.array());
    return dx;
  }
  // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
  const double count = static_cast<double>(grad_out.size() * static_cast<std::size_t>(grad_out.front().rows()));
  const RowVector mean_g = sum_g / count;
  const RowVector mean_gx = sum_gx / count;
  for (std::size_t b = 0; b < grad_out.size(); ++b) {
    Matrix d = grad_out[b].rowwise() - mean_g;
    d -= (cache.xhat[b].array().rowwise() * mean_gx.array()).matrix();
    dx.push_back(d.array().rowwise() * scale.array());
  }
  return dx;
}

void update_running_stats(BatchNormParams& p, const BatchNormCache& cache) {
  if (cache.mode != Mode::train) return;
  p.running_mean = p.momentum * p.running_mean + (1.0 - p.momentum) * cache.batch_mean;
  p.running_var = p.momentum * p.running_var + (1.0 - p.momentum) * cache.batch_var;
}

// ---------------------------------------------------------------------------
// Dropout

void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
}

Matrix make_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  check_dropout_rate(rate);
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(rows, cols);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

Matrix dropout(const Matrix& x, double rate, Mode mode, Rng& rng, Matrix* mask_out) {
  check_dropout_rate(rate);
  if (mode == Mode::infer || rate == 0.0) {
    if (mask_out) *mask_out = Matrix::Ones(x.rows(), x.cols());
    return x;
  }
  Matrix mask = make_dropout_mask(x.rows(), x.cols(), rate, rng);
  Matrix out = x.cwiseProduct(mask);
  if (mask_out) *mask_out = std::move(mask);
  return out;
}

// ---------------------------------------------------------------------------
// GRU

void GruParams::list_arrays(const std::string& prefix, std::vector<ArrayRef>& out) {
  push(out, prefix, "input_weights", input_weights);
  push(out, prefix, "recurrent_weights", recurrent_weights);
  push(out, prefix, "bias", bias);
}

GruParams make_gru(int in_channels, int units, Rng& rng) {
  if (in_channels < 1 || units < 1) throw ConfigError("GRU needs at least one input channel and unit");
  GruParams p;
  p.input_weights.resize(in_channels, 3 * units);
  p.recurrent_weights.resize(units, 3 * units);
  // Each gate's block is initialized as its own (fan_in x units) matrix.
  for (int g = 0; g < 3; ++g) p.input_weights.middleCols(g * units, units) = glorot_init(in_channels, units, rng);
  for (int g = 0; g < 3; ++g) p.recurrent_weights.middleCols(g * units, units) = glorot_init(units, units, rng);
  p.bias = RowVector::Zero(3 * units);
  return p;
}

RowVector gru_step(const RowVector& x_t, const RowVector& h_prev, const GruParams& p) {
  const Eigen::Index u = p.units();
  if (x_t.size() != p.in_channels() || h_prev.size() != u)
    throw ShapeError("gru_step(): input width " + std::to_string(x_t.size()) + " / state width " +
                     std::to_string(h_prev.size()) + " do not match parameters (" + std::to_string(p.in_channels()) +
                     ", " + std::to_string(u) + ")");
  const RowVector xs = x_t * p.input_weights + p.bias;
  const RowVector hs = h_prev * p.recurrent_weights.leftCols(2 * u);
  const RowVector z = sigmoid(xs.head(u) + hs.head(u));
  const RowVector r = sigmoid(xs.segment(u, u) + hs.tail(u));
  const RowVector rh = r.cwiseProduct(h_prev);
  const RowVector cand = (xs.tail(u) + rh * p.recurrent_weights.rightCols(u)).array().tanh().matrix();
  return (RowVector::Ones(u) - z).cwiseProduct(h_prev) + z.cwiseProduct(cand);
}

Matrix gru_sequence(const Matrix& x, const GruParams& p, GruCache* cache) {
  if (x.cols() != p.in_channels())
    throw ShapeError("gru_sequence(): input " + shape_string(x) + " vs " + std::to_string(p.in_channels()) +
                     " expected channels");
  const Eigen::Index steps = x.rows();
  const Eigen::Index u = p.units();
  Matrix xs = matmul(x, p.input_weights);
  xs.rowwise() += p.bias;
  Matrix states = Matrix::Zero(steps + 1, u);
  Matrix z(steps, u), r(steps, u), cand(steps, u);
  const auto rec_zr = p.recurrent_weights.leftCols(2 * u);
  const auto rec_h = p.recurrent_weights.rightCols(u);
  for (Eigen::Index t = 0; t < steps; ++t) {
    const RowVector h_prev = states.row(t);
    const RowVector hs = h_prev * rec_zr;
    z.row(t) = sigmoid(xs.row(t).head(u) + hs.head(u));
    r.row(t) = sigmoid(xs.row(t).segment(u, u) + hs.tail(u));
    const RowVector rh = r.row(t).cwiseProduct(h_prev);
    cand.row(t) = (xs.row(t).tail(u) + rh * rec_h).array().tanh().matrix();
    states.row(t + 1) = (RowVector::Ones(u) - z.row(t)).cwiseProduct(h_prev) + z.row(t).cwiseProduct(cand.row(t));
  }
  Matrix out = states.bottomRows(steps);
  if (cache) *cache = {x, std::move(states), std::move(z), std::move(r), std::move(cand)};
  return out;
}

Matrix gru_sequence_backward(const GruCache& cache, const GruParams& p, const Matrix& grad_out, GruParams& grad) {
  const Eigen::Index steps = grad_out.rows();
  const Eigen::Index u = p.units();
  const auto rec_z = p.recurrent_weights.leftCols(u);
  const auto rec_r = p.recurrent_weights.middleCols(u, u);
  const auto rec_h = p.recurrent_weights.rightCols(u);
  // Gate pre-activation gradients [z | r | h] per step.
  Matrix dgates(steps, 3 * u);
  RowVector dh_next = RowVector::Zero(u);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const RowVector h_prev = cache.states.row(t);
    const RowVector z = cache.z.row(t);
    const RowVector r = cache.r.row(t);
    const RowVector c = cache.cand.row(t);
    const RowVector dh = grad_out.row(t) + dh_next;

    const RowVector dz = dh.cwiseProduct(c - h_prev);
    const RowVector dc = dh.cwiseProduct(z);
    RowVector dh_prev = dh.cwiseProduct(RowVector::Ones(u) - z);

    const RowVector dc_pre = dc.array() * (1.0 - c.array().square());
    const RowVector drh = dc_pre * rec_h.transpose();
    const RowVector dr = drh.cwiseProduct(h_prev);
    dh_prev += drh.cwiseProduct(r);

    const RowVector dz_pre = dz.array() * z.array() * (1.0 - z.array());
    const RowVector dr_pre = dr.array() * r.array() * (1.0 - r.array());
    dh_prev += dz_pre * rec_z.transpose() + dr_pre * rec_r.transpose();

    dgates.row(t) << dz_pre, dr_pre, dc_pre;
    dh_next = dh_prev;
  }
  const Matrix prev_states = cache.states.topRows(steps);
  grad.input_weights.noalias() += cache.input.transpose() * dgates;
  grad.bias += dgates.colwise().sum();
  grad.recurrent_weights.leftCols(2 * u).noalias() += prev_states.transpose() * dgates.leftCols(2 * u);
  const Matrix reset_states = cache.r.cwiseProduct(prev_states);
  grad.recurrent_weights.rightCols(u).noalias() += reset_states.transpose() * dgates.rightCols(u);
  return dgates * p.input_weights.transpose();
}

Matrix reverse_rows(const Matrix& x) { return x.colwise().reverse(); }

Matrix bigru(const Matrix& x, const GruParams& fwd, const GruParams& bwd, BiGruCache* cache) {
  if (fwd.units() != bwd.units() || fwd.in_channels() != bwd.in_channels())
    throw ShapeError("bigru(): forward and backward parameter shapes differ");
  const Eigen::Index u = fwd.units();
  Matrix out(x.rows(), 2 * u);
  out.leftCols(u) = gru_sequence(x, fwd, cache ? &cache->fwd : nullptr);
  out.rightCols(u) = reverse_rows(gru_sequence(reverse_rows(x), bwd, cache ? &cache->bwd : nullptr));
  return out;
}

Matrix bigru_backward(const BiGruCache& cache, const GruParams& fwd, const GruParams& bwd, const Matrix& grad_out,
                      GruParams& grad_fwd, GruParams& grad_bwd) {
  const Eigen::Index u = fwd.units();
  Matrix dx = gru_sequence_backward(cache.fwd, fwd, grad_out.leftCols(u), grad_fwd);
  dx += reverse_rows(gru_sequence_backward(cache.bwd, bwd, reverse_rows(grad_out.rightCols(u)), grad_bwd));
  return dx;
}

// ---------------------------------------------------------------------------
// Attention

void TemporalAttentionParams::list_arrays(const std::string& prefix, std::vector<ArrayRef>& out) {
  push(out, prefix, "weights", weights);
  push(out, prefix, "bias", bias);
}

TemporalAttentionParams make_temporal_attention(int steps, Rng& rng) {
  if (steps < 1) throw ConfigError("temporal attention needs at least one time step");
  return {glorot_init(steps, steps, rng), RowVector::Zero(steps)};
}

Matrix temporal_attention(const Matrix& h, const TemporalAttentionParams& p, TemporalAttentionCache* cache) {
  if (h.rows() != p.steps())
    throw ShapeError("temporal_attention(): sequence length " + std::to_string(h.rows()) + " vs fixed length " +
                     std::to_string(p.steps()));
  Matrix logits = matmul(p.weights, h);
  logits.colwise() += p.bias.transpose();
  Matrix attention = softmax(logits, 0);
  Matrix out = h.cwiseProduct(attention);
  if (cache) *cache = {h, std::move(attention)};
  return out;
}

Matrix temporal_attention_backward(const TemporalAttentionCache& cache, const TemporalAttentionParams& p,
                                   const Matrix& grad_out, TemporalAttentionParams& grad) {
  const Matrix dattention = grad_out.cwiseProduct(cache.input);
  const Matrix dlogits = softmax_backward(cache.attention, dattention, 0);
  grad.weights.noalias() += dlogits * cache.input.transpose();
  grad.bias += dlogits.rowwise().sum().transpose();
  Matrix dh = grad_out.cwiseProduct(cache.attention);
  dh.noalias() += p.weights.transpose() * dlogits;
  return dh;
}

void ChannelAttentionParams::list_arrays(const std::string& prefix, std::vector<ArrayRef>& out) {
  push(out, prefix, "w1", w1);
  push(out, prefix, "b1", b1);
  push(out, prefix, "w2", w2);
  push(out, prefix, "b2", b2);
}

ChannelAttentionParams make_channel_attention(int channels, int ratio, Rng& rng) {
  if (ratio < 1 || channels % ratio != 0)
    throw ConfigError("channel attention: " + std::to_string(channels) + " channels not divisible by ratio " +
                      std::to_string(ratio));
  const int hidden = channels / ratio;
  ChannelAttentionParams p;
  p.w1 = glorot_init(channels, hidden, rng);
  p.b1 = RowVector::Zero(hidden);
  p.w2 = glorot_init(hidden, channels, rng);
  p.b2 = RowVector::Zero(channels);
  return p;
}

Matrix channel_attention(const Matrix& h, const ChannelAttentionParams& p, ChannelAttentionCache* cache) {
  if (h.cols() != p.channels())
    throw ShapeError("channel_attention(): input " + shape_string(h) + " vs " + std::to_string(p.channels()) +
                     " channels");
  const RowVector squeeze = h.colwise().mean();
  const RowVector hidden_pre = squeeze * p.w1 + p.b1;
  const RowVector hidden = hidden_pre.cwiseMax(0.0);
  const RowVector scale = sigmoid(hidden * p.w2 + p.b2);
  Matrix out = h.array().rowwise() * scale.array();
  if (cache) *cache = {h, squeeze, hidden_pre, hidden, scale};
  return out;
}

Matrix channel_attention_backward(const ChannelAttentionCache& cache, const ChannelAttentionParams& p,
                                  const Matrix& grad_out, ChannelAttentionParams& grad) {
  const RowVector dscale = grad_out.cwiseProduct(cache.input).colwise().sum();
  const RowVector dout_pre = dscale.array() * cache.scale.array() * (1.0 - cache.scale.array());
  grad.w2.noalias() += cache.hidden.transpose() * dout_pre;
  grad.b2 += dout_pre;
  const RowVector dhidden = dout_pre * p.w2.transpose();
  const RowVector dhidden_pre = dhidden.cwiseProduct(activation_derivative(Activation::relu, cache.hidden_pre, cache.hidden));
  grad.w1.noalias() += cache.squeeze.transpose() * dhidden_pre;
  grad.b1 += dhidden_pre;
  const RowVector dsqueeze = dhidden_pre * p.w1.transpose();
  Matrix dh = grad_out.array().rowwise() * cache.scale.array();
  dh.rowwise() += dsqueeze / static_cast<double>(cache.input.rows());
  return dh;
}

// ---------------------------------------------------------------------------
// Pooling and dense

RowVector global_max_pool(const Matrix& h, MaxPoolCache* cache) {
  if (h.rows() < 1) throw ShapeError("global_max_pool(): empty sequence");
  RowVector out(h.cols());
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(h.cols()));
  for (Eigen::Index c = 0; c < h.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index t = 1; t < h.rows(); ++t)
      if (h(t, c) > h(best, c)) best = t;
    argmax[static_cast<std::size_t>(c)] = best;
    out(c) = h(best, c);
  }
  if (cache) *cache = {h.rows(), std::move(argmax)};
  return out;
}

Matrix global_max_pool_backward(const MaxPoolCache& cache, const RowVector& grad_out) {
  Matrix dh = Matrix::Zero(cache.steps, grad_out.size());
  for (Eigen::Index c = 0; c < grad_out.size(); ++c) dh(cache.argmax[static_cast<std::size_t>(c)], c) = grad_out(c);
  return dh;
}

void DenseParams::list_arrays(const std::string& prefix, std::vector<ArrayRef>& out) {
  push(out, prefix, "weights", weights);
  push(out, prefix, "bias", bias);
}

DenseParams make_dense(int in, int out, Rng& rng) { return {glorot_init(in, out, rng), RowVector::Zero(out)}; }

Matrix dense(const Matrix& x, const DenseParams& p, Activation act, DenseCache* cache) {
  if (x.cols() != p.weights.rows())
    throw ShapeError("dense(): input " + shape_string(x) + " vs weights " + shape_string(p.weights));
  Matrix pre = matmul(x, p.weights);
  pre.rowwise() += p.bias;
  Matrix out = act == Activation::softmax ? softmax(pre, 1) : activation(act, pre);
  if (cache) *cache = {x, std::move(pre), out};
  return out;
}

Matrix dense_backward(const DenseCache& cache, const DenseParams& p, Activation act, const Matrix& grad_out,
                      DenseParams& grad) {
  const Matrix dpre = act == Activation::softmax ? softmax_backward(cache.out, grad_out, 1)
                                                 : Matrix(grad_out.cwiseProduct(activation_derivative(act, cache.pre, cache.out)));
  grad.weights.noalias() += cache.input.transpose() * dpre;
  grad.bias += dpre.colwise().sum();
  return dpre * p.weights.transpose();
}

}  // namespace cstafnet
