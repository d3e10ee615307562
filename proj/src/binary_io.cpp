#include "cstafnet/binary_io.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>

namespace cstafnet::bin {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

namespace {

void write_bytes_atomic(const std::string& path, const char* data, std::size_t n) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp + "'");
    out.write(data, static_cast<std::streamsize>(n));
    if (!out) throw ConfigError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ConfigError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace

void write_file_atomic(const std::string& path, const std::vector<std::uint8_t>& data) {
  write_bytes_atomic(path, reinterpret_cast<const char*>(data.data()), data.size());
}

void write_text_file_atomic(const std::string& path, const std::string& text) {
  write_bytes_atomic(path, text.data(), text.size());
}

}  // namespace cstafnet::bin
