#include <doctest.h>

#include <cmath>

#include "cstafnet/binary_io.hpp"
#include "cstafnet/model.hpp"
#include "support.hpp"

using namespace cstafnet;

TEST_CASE("default architecture shapes and parameter count") {
  const ModelConfig cfg;
  ModelParams p = build_model(cfg);
  REQUIRE(p.convs.size() == 3);
  std::vector<ArrayRef> arrays = p.arrays();
  CHECK(arrays[0].name == "conv3.weights");
  CHECK(arrays[0].shape == std::vector<Eigen::Index>{3, 1, 64});
  CHECK(arrays[2].shape == std::vector<Eigen::Index>{5, 1, 64});
  CHECK(arrays[4].shape == std::vector<Eigen::Index>{7, 1, 64});
  CHECK(p.out.weights.size() + p.out.bias.size() == 1935);
  CHECK(p.gru_fwd.input_weights.rows() == 192);
  CHECK(p.c_attn.w1.cols() == 16);
  CHECK(p.parameter_count() == 126571);
  CHECK(p.parameter_count(false) == 126571 + 2 * 192);
}

TEST_CASE("array order follows the field order") {
  ModelParams p = build_model(ModelConfig{});
  std::vector<std::string> prefixes;
  for (const auto& a : p.arrays()) {
    const std::string prefix = a.name.substr(0, a.name.find('.'));
    if (prefixes.empty() || prefixes.back() != prefix) prefixes.push_back(prefix);
  }
  CHECK(prefixes ==
        std::vector<std::string>{"conv3", "conv5", "conv7", "bn", "gru_fwd", "gru_bwd", "t_attn", "c_attn", "hidden", "out"});
}

TEST_CASE("build is deterministic per seed") {
  ModelConfig cfg = tiny_config();
  CHECK(bitwise_equal(build_model(cfg), build_model(cfg)));
  ModelConfig other = cfg;
  other.seed += 1;
  CHECK_FALSE(bitwise_equal(build_model(cfg), build_model(other)));
}

TEST_CASE("config validation names the constraint") {
  ModelConfig c;
  c.gru_units = 5;
  c.attention_ratio = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  ModelConfig k;
  k.kernel_sizes = {3, 4};
  CHECK_THROWS_AS(k.validate(), ConfigError);
  ModelConfig shortin;
  shortin.input_length = 5;
  CHECK_THROWS_AS(shortin.validate(), ConfigError);
  ModelConfig bin;
  bin.head = Head::binary;
  try {
    bin.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  bin.classes = 2;
  CHECK_NOTHROW(bin.validate());
  CHECK(ModelConfig::from_json(bin.to_json()) == bin);
}

TEST_CASE("forward output contract") {
  const ModelConfig cfg;
  ModelParams p = build_model(cfg);
  Rng rng(1);
  const Matrix x = Matrix::Random(3, 60);
  const Matrix y = forward(p, cfg, x, Mode::infer, nullptr);
  CHECK(y.rows() == 3);
  CHECK(y.cols() == 15);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(y.row(i).sum() - 1.0) < 1e-12);

  Matrix same(2, 60);
  same.row(0) = x.row(0);
  same.row(1) = x.row(0);
  const Matrix ys = forward(p, cfg, same, Mode::infer, nullptr);
  CHECK(ys.row(0) == ys.row(1));
  CHECK(forward(p, cfg, x, Mode::infer, nullptr) == y);

  const Matrix yt = forward(p, cfg, x, Mode::train, &rng);
  CHECK(yt.rows() == 3);
  CHECK_THROWS_AS(forward(p, cfg, Matrix::Random(3, 59), Mode::infer, nullptr), ShapeError);
}

TEST_CASE("binary head outputs probabilities") {
  ModelConfig cfg = tiny_config();
  cfg.head = Head::binary;
  cfg.classes = 2;
  ModelParams p = build_model(cfg);
  const Matrix y = forward(p, cfg, Matrix::Random(4, 12) * 3.0, Mode::infer, nullptr);
  CHECK(y.cols() == 1);
  CHECK((y.array() > 0.0).all());
  CHECK((y.array() < 1.0).all());
}

TEST_CASE("softmax head property over random parameters") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ModelConfig cfg = tiny_config();
    cfg.seed = seed;
    ModelParams p = build_model(cfg);
    Rng rng(seed, 5);
    Matrix x(3, 12);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * rng.normal();
    const Matrix y = forward(p, cfg, x, Mode::infer, nullptr);
    for (Eigen::Index i = 0; i < y.rows(); ++i) CHECK(std::abs(y.row(i).sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  testing::TempDir dir;
  const ModelConfig cfg;
  ModelParams p = build_model(cfg);
  p.bn.running_mean.setConstant(0.25);
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(p, cfg, path, {{"note", "x"}});
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.config == cfg);
  CHECK(bitwise_equal(ck.params, p));
  CHECK(ck.extra["note"] == "x");

  auto bytes = bin::read_file(path);
  auto header = bytes;
  header[2] ^= 0x01;
  CHECK_THROWS_AS(deserialize_checkpoint(header), CheckpointError);
  auto payload = bytes;
  payload[payload.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(deserialize_checkpoint(payload), CheckpointError);
  auto version = bytes;
  version[8] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(version), CheckpointError);
  auto truncated = bytes;
  truncated.resize(40);
  try {
    deserialize_checkpoint(truncated);
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
  CHECK_THROWS_AS(load_checkpoint(dir.file("absent.ckpt")), Error);

  // A loaded model still rejects inputs of the wrong width.
  CHECK_THROWS_AS(forward(ck.params, ck.config, Matrix::Random(2, 12), Mode::infer, nullptr), ShapeError);
}
