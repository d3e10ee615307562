#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cstafnet/numerics.hpp"

using namespace cstafnet;

TEST_CASE("matmul small products") {
  Matrix id = Matrix::Identity(2, 2);
  Matrix b(2, 2);
  b << 3, 4, 5, 6;
  CHECK(matmul(id, b) == b);

  Matrix row(1, 2), col(2, 1);
  row << 1, 2;
  col << 3, 4;
  CHECK(matmul(row, col)(0, 0) == 11.0);

  CHECK(matmul(Matrix::Zero(2, 3), Matrix::Random(3, 4)).isZero(0.0));
  CHECK_THROWS_AS(matmul(Matrix::Zero(2, 3), Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("elementwise activations") {
  Matrix x(1, 3);
  x << -1, 0, 2;
  Matrix expected(1, 3);
  expected << 0, 0, 2;
  CHECK(activation(Activation::relu, x) == expected);
  CHECK(activation(Activation::sigmoid, Matrix::Zero(1, 1))(0, 0) == 0.5);
  CHECK(activation(Activation::tanh, Matrix::Zero(1, 1))(0, 0) == 0.0);
  CHECK_THROWS_AS(activation(Activation::softmax, x), ConfigError);
  CHECK(activation_from_string("relu") == Activation::relu);
  CHECK_THROWS_AS(activation_from_string("gelu"), ConfigError);
}

TEST_CASE("softmax values and stability") {
  Matrix zeros = Matrix::Zero(1, 3);
  Matrix p = softmax(zeros, 1);
  for (int j = 0; j < 3; ++j) CHECK(p(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Matrix big(1, 2);
  big << 1000, 1000;
  p = softmax(big, 1);
  CHECK(p(0, 0) == 0.5);
  CHECK(p(0, 1) == 0.5);

  Matrix l3(1, 2);
  l3 << 0, std::log(3.0);
  p = softmax(l3, 1);
  CHECK(std::abs(p(0, 0) - 0.25) < 1e-15);
  CHECK(std::abs(p(0, 1) - 0.75) < 1e-15);

  // Axis 0 normalizes columns.
  Matrix m(2, 2);
  m << 0, 0, std::log(3.0), 0;
  p = softmax(m, 0);
  CHECK(std::abs(p(1, 0) - 0.75) < 1e-15);
  CHECK(p(0, 1) == 0.5);
  CHECK_THROWS_AS(softmax(m, 2), ShapeError);
}

TEST_CASE("rng is deterministic per seed and stream") {
  Rng a(5, 1), b(5, 1), c(5, 2), d(6, 1);
  bool differs_stream = false, differs_seed = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    differs_stream |= va != c.next_u64();
    differs_seed |= va != d.next_u64();
  }
  CHECK(differs_stream);
  CHECK(differs_seed);

  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.uniform_index(7) < 7u);
  }
}

TEST_CASE("shuffle yields a permutation and is reproducible") {
  std::vector<int> a(50), b;
  std::iota(a.begin(), a.end(), 0);
  b = a;
  Rng r1(11), r2(11);
  shuffle(a, r1);
  shuffle(b, r2);
  CHECK(a == b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("glorot init bounds and determinism") {
  Rng r(3);
  Matrix one = glorot_init(1, 1, r);
  CHECK(std::abs(one(0, 0)) <= std::sqrt(3.0));

  Rng r1(9), r2(9);
  CHECK(glorot_init(4, 5, r1) == glorot_init(4, 5, r2));

  Rng r3(4);
  Matrix big = glorot_init(100, 100, r3);
  CHECK(big.cwiseAbs().maxCoeff() <= 0.17320508075688773);
}

TEST_CASE("finite differences") {
  Matrix x(2, 1);
  x << 1, 2;
  Matrix g = finite_diff_grad([](const Matrix& v) { return v.squaredNorm(); }, x);
  CHECK(std::abs(g(0, 0) - 2.0) < 1e-6);
  CHECK(std::abs(g(1, 0) - 4.0) < 1e-6);

  CHECK(finite_diff_grad([](const Matrix&) { return 3.0; }, x).isZero(0.0));

  Matrix s = finite_diff_grad([](const Matrix& v) { return v.sum(); }, Matrix::Random(3, 2));
  CHECK((s.array() - 1.0).abs().maxCoeff() < 1e-9);

  CHECK_THROWS_AS(finite_diff_grad([](const Matrix&) { return std::nan(""); }, x), NumericError);
}

TEST_CASE("relative error helpers") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == 0.5);
  CHECK(relative_error(0.0, 0.0) == 0.0);
  Matrix a = Matrix::Ones(2, 2), b = Matrix::Ones(2, 3);
  CHECK_THROWS_AS(max_relative_error(a, b), ShapeError);
  Matrix inf = Matrix::Ones(1, 1) * std::numeric_limits<double>::infinity();
  CHECK_FALSE(all_finite(inf));
  CHECK_THROWS_AS(require_finite(inf, "x"), NumericError);
}
