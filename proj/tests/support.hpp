#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "cstafnet/numerics.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cstafnet_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Well-separated Gaussian blobs: class c has every feature centred on
// 3 * (c - (classes - 1) / 2) with per-feature offsets, unit noise * spread.
inline void separable_blobs(int n, int features, int classes, std::uint64_t seed, cstafnet::Matrix& x,
                            std::vector<int>& y, double spread = 0.3) {
  cstafnet::Rng rng(seed, 99);
  x.resize(n, features);
  y.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const int c = i % classes;
    y[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < features; ++j) {
      const double centre = 3.0 * (c - (classes - 1) / 2.0) * ((j % 2) ? 1.0 : -1.0);
      x(i, j) = centre + spread * rng.normal();
    }
  }
}

}  // namespace testing
