#pragma once

// Layer kernels with hand-derived backward passes.
//
// Conventions: a per-sample sequence is a (T x C) row-major matrix, row t is
// time step t. Weights multiply from the right (x * W), so a dense map from
// `in` to `out` features stores an (in x out) matrix. Every *_backward takes
// the cache filled by the matching forward, adds parameter gradients into
// `grad` (same struct type as the parameters) and returns the gradient with
// respect to the layer input.

#include <string>
#include <vector>

#include "cstafnet/numerics.hpp"

namespace cstafnet {

enum class Mode { train, infer };

// Flat view of one parameter array, used by the optimizer and checkpoints.
template <typename T>
struct BasicArrayRef {
  std::string name;
  T* data = nullptr;
  std::vector<Eigen::Index> shape;
  bool trainable = true;

  Eigen::Index size() const {
    Eigen::Index n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  auto flat() const { return Eigen::Map<Eigen::Matrix<std::remove_const_t<T>, Eigen::Dynamic, 1>>(data, size()); }
};
using ArrayRef = BasicArrayRef<double>;

// ---------------------------------------------------------------------------
// Convolution

struct ConvParams {
  // Row (tap * in_channels + c) holds the weights of kernel tap `tap` for
  // input channel c; one column per filter.
  Matrix weights;
  RowVector bias;
  int kernel = 0;
  int in_channels = 0;

  int filters() const { return static_cast<int>(weights.cols()); }
  void list_arrays(const std::string& prefix, std::vector<ArrayRef>& out);
};

ConvParams make_conv(int kernel, int in_channels, int filters, Rng& rng);

struct ConvCache {
  Matrix patches;  // T x (kernel * in_channels)
  Matrix pre;
  Matrix out;
};

// Zero-padded ("same") correlation: (k - 1) / 2 zeros on both ends, output
// length equals input length.
Matrix conv1d_same(const Matrix& x, const ConvParams& p, Activation act, ConvCache* cache = nullptr);
Matrix conv1d_same_backward(const ConvCache& cache, const ConvParams& p, Activation act, const Matrix& grad_out,
                            ConvParams& grad);

struct MultiScaleCache {
  std::vector<ConvCache> convs;
};

// Parallel ReLU convolutions concatenated along channels in the given order.
Matrix multi_scale_block(const Matrix& x, const std::vector<ConvParams>& convs, MultiScaleCache* cache = nullptr);
Matrix multi_scale_block_backward(const MultiScaleCache& cache, const std::vector<ConvParams>& convs,
                                  const Matrix& grad_out, std::vector<ConvParams>& grads);

// ---------------------------------------------------------------------------
// Batch normalization over batch and time, per channel.

struct BatchNormParams {
  RowVector gamma;
  RowVector beta;
  RowVector running_mean;
  RowVector running_var;
  double eps = 1e-5;
  double momentum = 0.9;

  void list_arrays(const std::string& prefix, std::vector<ArrayRef>& out);
};

BatchNormParams make_batch_norm(int channels);

struct BatchNormCache {
  Mode mode = Mode::infer;
  std::vector<Matrix> xhat;
  RowVector batch_mean;
  RowVector batch_var;
  RowVector inv_std;
};

std::vector<Matrix> batch_norm(const std::vector<Matrix>& x, const BatchNormParams& p, Mode mode,
                               BatchNormCache* cache = nullptr);
std::vector<Matrix> batch_norm_backward(const BatchNormCache& cache, const BatchNormParams& p,
                                        const std::vector<Matrix>& grad_out, BatchNormParams& grad);
// running <- momentum * running + (1 - momentum) * batch
void update_running_stats(BatchNormParams& p, const BatchNormCache& cache);

// ---------------------------------------------------------------------------
// Dropout (inverted)

// Entries are 0 with probability `rate`, else 1 / (1 - rate).
Matrix make_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);
Matrix dropout(const Matrix& x, double rate, Mode mode, Rng& rng, Matrix* mask_out = nullptr);
void check_dropout_rate(double rate);

// ---------------------------------------------------------------------------
// GRU

struct GruParams {
  // Column blocks [z | r | h] of width `units` in all three arrays.
  Matrix input_weights;      // C_in x 3U
  Matrix recurrent_weights;  // U x 3U
  RowVector bias;            // 3U

  int units() const { return static_cast<int>(recurrent_weights.rows()); }
  int in_channels() const { return static_cast<int>(input_weights.rows()); }
  void list_arrays(const std::string& prefix, std::vector<ArrayRef>& out);
};

GruParams make_gru(int in_channels, int units, Rng& rng);

// z = s(x Uz + h Rz + bz); r = s(x Ur + h Rr + br);
// c = tanh(x Uh + (r . h) Rh + bh); h' = (1 - z) . h + z . c
RowVector gru_step(const RowVector& x_t, const RowVector& h_prev, const GruParams& p);

struct GruCache {
  Matrix input;   // T x C_in
  Matrix states;  // (T + 1) x U, row 0 is the zero initial state
  Matrix z, r, cand;
};

// Runs t = 0..T-1 from a zero state and returns all hidden states (T x U).
Matrix gru_sequence(const Matrix& x, const GruParams& p, GruCache* cache = nullptr);
Matrix gru_sequence_backward(const GruCache& cache, const GruParams& p, const Matrix& grad_out, GruParams& grad);

struct BiGruCache {
  GruCache fwd;
  GruCache bwd;  // over the time-reversed input
};

// Output row t is [forward state t | backward state t] (T x 2U).
Matrix bigru(const Matrix& x, const GruParams& fwd, const GruParams& bwd, BiGruCache* cache = nullptr);
Matrix bigru_backward(const BiGruCache& cache, const GruParams& fwd, const GruParams& bwd, const Matrix& grad_out,
                      GruParams& grad_fwd, GruParams& grad_bwd);

Matrix reverse_rows(const Matrix& x);

// ---------------------------------------------------------------------------
// Attention

struct TemporalAttentionParams {
  Matrix weights;  // T x T
  RowVector bias;  // T, added to logit row t

  int steps() const { return static_cast<int>(weights.rows()); }
  void list_arrays(const std::string& prefix, std::vector<ArrayRef>& out);
};

TemporalAttentionParams make_temporal_attention(int steps, Rng& rng);

struct TemporalAttentionCache {
  Matrix input;
  Matrix attention;  // T x C, each column sums to 1
};

// logits = W H + b (per column); A = softmax over time; out = H . A
Matrix temporal_attention(const Matrix& h, const TemporalAttentionParams& p, TemporalAttentionCache* cache = nullptr);
Matrix temporal_attention_backward(const TemporalAttentionCache& cache, const TemporalAttentionParams& p,
                                   const Matrix& grad_out, TemporalAttentionParams& grad);

struct ChannelAttentionParams {
  Matrix w1;  // C x C/r
  RowVector b1;
  Matrix w2;  // C/r x C
  RowVector b2;

  int channels() const { return static_cast<int>(w1.rows()); }
  void list_arrays(const std::string& prefix, std::vector<ArrayRef>& out);
};

ChannelAttentionParams make_channel_attention(int channels, int ratio, Rng& rng);

struct ChannelAttentionCache {
  Matrix input;
  RowVector squeeze;  // temporal mean s
  RowVector hidden_pre;
  RowVector hidden;
  RowVector scale;  // s' in (0, 1)
};

// s = mean over time; s' = sigmoid(relu(s W1 + b1) W2 + b2); out = H . s'
Matrix channel_attention(const Matrix& h, const ChannelAttentionParams& p, ChannelAttentionCache* cache = nullptr);
Matrix channel_attention_backward(const ChannelAttentionCache& cache, const ChannelAttentionParams& p,
                                  const Matrix& grad_out, ChannelAttentionParams& grad);

// ---------------------------------------------------------------------------
// Pooling and dense

struct MaxPoolCache {
  Eigen::Index steps = 0;
  std::vector<Eigen::Index> argmax;  // first maximum per channel
};

RowVector global_max_pool(const Matrix& h, MaxPoolCache* cache = nullptr);
Matrix global_max_pool_backward(const MaxPoolCache& cache, const RowVector& grad_out);

struct DenseParams {
  Matrix weights;  // in x out
  RowVector bias;

  void list_arrays(const std::string& prefix, std::vector<ArrayRef>& out);
};

DenseParams make_dense(int in, int out, Rng& rng);

struct DenseCache {
  Matrix input;
  Matrix pre;
  Matrix out;
};

// Row-wise activation(x W + b); x is (batch x in). Softmax is per row.
Matrix dense(const Matrix& x, const DenseParams& p, Activation act, DenseCache* cache = nullptr);
Matrix dense_backward(const DenseCache& cache, const DenseParams& p, Activation act, const Matrix& grad_out,
                      DenseParams& grad);

// Copy of `p` with every array zeroed; used as a gradient accumulator.
template <typename Params>
Params zeros_like(const Params& p) {
  Params z = p;
  std::vector<ArrayRef> arrays;
  z.list_arrays("", arrays);
  for (auto& a : arrays) a.flat().setZero();
  return z;
}

}  // namespace cstafnet
