#pragma once

// Dense kernel layer: Eigen row-major matrices carry every activation.
// A per-sample activation is (time x channels); a batch is a std::vector of
// those, or a (batch x features) matrix once time has been pooled away.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cstafnet/errors.hpp"

namespace cstafnet {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;

enum class Activation { linear, relu, sigmoid, tanh, softmax };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

std::string shape_string(Eigen::Index rows, Eigen::Index cols);

template <typename Derived>
std::string shape_string(const Eigen::DenseBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

// Counter-based generator: output i is a SplitMix64 finalization of
// (key + i * golden). Same seed and call sequence give the same stream on
// every platform; no hidden state beyond the counter.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  // 53-bit uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return counter_; }

private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Fisher-Yates driven by Rng::uniform_index.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(items[i - 1], items[j]);
  }
}

Matrix matmul(const Matrix& a, const Matrix& b);

template <typename Derived>
MatrixX<typename Derived::Scalar> activation(Activation kind, const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  switch (kind) {
    case Activation::linear:
      return x;
    case Activation::relu:
      return x.cwiseMax(Scalar(0));
    case Activation::sigmoid:
      return x.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
    case Activation::tanh:
      return x.array().tanh().matrix();
    case Activation::softmax:
      break;
  }
  throw ConfigError("activation(): softmax needs an axis, use softmax()");
}

// Derivative of an elementwise activation, expressed through its input
// (pre) and output (out) so callers can use whichever they cached.
template <typename D1, typename D2>
MatrixX<typename D1::Scalar> activation_derivative(Activation kind, const Eigen::MatrixBase<D1>& pre,
                                                   const Eigen::MatrixBase<D2>& out) {
  using Scalar = typename D1::Scalar;
  switch (kind) {
    case Activation::linear:
      return MatrixX<Scalar>::Ones(pre.rows(), pre.cols());
    case Activation::relu:
      return pre.unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
    case Activation::sigmoid:
      return out.array() * (Scalar(1) - out.array());
    case Activation::tanh:
      return Scalar(1) - out.array().square();
    case Activation::softmax:
      break;
  }
  throw ConfigError("activation_derivative(): softmax is not elementwise");
}

// Softmax along `axis` (0 = down each column, 1 = across each row), shifted
// by the slice maximum.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& x, int axis) {
  using Scalar = typename Derived::Scalar;
  if (axis != 0 && axis != 1) throw ShapeError("softmax(): axis must be 0 or 1, got " + std::to_string(axis));
  MatrixX<Scalar> out(x.rows(), x.cols());
  if (axis == 1) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Scalar m = x.row(i).maxCoeff();
      out.row(i) = (x.row(i).array() - m).exp().matrix();
      out.row(i) /= out.row(i).sum();
    }
  } else {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const Scalar m = x.col(j).maxCoeff();
      out.col(j) = (x.col(j).array() - m).exp().matrix();
      out.col(j) /= out.col(j).sum();
    }
  }
  return out;
}

// Backward of softmax along `axis`: given dL/dP returns dL/dlogits.
template <typename D1, typename D2>
MatrixX<typename D1::Scalar> softmax_backward(const Eigen::MatrixBase<D1>& probs, const Eigen::MatrixBase<D2>& grad,
                                              int axis) {
  using Scalar = typename D1::Scalar;
  MatrixX<Scalar> gp = probs.cwiseProduct(grad);
  MatrixX<Scalar> out(probs.rows(), probs.cols());
  if (axis == 1) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
      out.row(i) = gp.row(i) - probs.row(i) * gp.row(i).sum();
  } else {
    for (Eigen::Index j = 0; j < probs.cols(); ++j)
      out.col(j) = gp.col(j) - probs.col(j) * gp.col(j).sum();
  }
  return out;
}

// Uniform in +-sqrt(6 / (rows + cols)).
Matrix glorot_init(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// Central differences of f around x, one coordinate at a time.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-5);

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

template <typename D1, typename D2>
double max_relative_error(const Eigen::DenseBase<D1>& a, const Eigen::DenseBase<D2>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("max_relative_error(): " + shape_string(a) + " vs " + shape_string(b));
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) worst = std::max(worst, relative_error(a(i, j), b(i, j)));
  return worst;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.derived().allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& x, const std::string& what) {
  if (!all_finite(x)) throw NumericError(what + ": non-finite value");
}

}  // namespace cstafnet
