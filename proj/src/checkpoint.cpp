#include <string_view>

#include "cstafnet/binary_io.hpp"
#include "cstafnet/model.hpp"

namespace cstafnet {

namespace {

constexpr std::string_view kMagic = "CSTAFNET";
constexpr std::uint8_t kVersion = 1;

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                                               const nlohmann::json& extra) {
  nlohmann::json block;
  block["model"] = cfg.to_json();
  block["extra"] = extra;

  bin::Writer w;
  w.bytes(kMagic);
  w.u8(kVersion);
  w.text(block.dump());
  auto arrays = const_cast<ModelParams&>(params).arrays();
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    w.u32(static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) w.u32(static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < a.size(); ++i) w.f64(a.data[i]);
  }
  const std::size_t header = kMagic.size() + 1;
  const auto& bytes = w.data();
  w.u64(bin::fnv1a64(bytes.data() + header, bytes.size() - header));
  return w.data();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  using Reader = bin::Reader<CheckpointError>;
  const std::size_t header = kMagic.size() + 1;
  if (bytes.size() < header + 8)
    throw CheckpointError("checkpoint: truncated, " + std::to_string(bytes.size()) + " bytes at byte offset 0");
  Reader r(bytes.data(), bytes.size() - 8, "checkpoint");
  const std::string_view magic = r.bytes(kMagic.size());
  for (std::size_t i = 0; i < kMagic.size(); ++i)
    if (magic[i] != kMagic[i]) throw CheckpointError("checkpoint: bad magic at byte offset " + std::to_string(i));
  const std::uint8_t version = r.u8();
  if (version != kVersion)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version) + " at byte offset " +
                          std::to_string(kMagic.size()));

  Reader tail(bytes.data() + bytes.size() - 8, 8, "checkpoint");
  const std::uint64_t stored = tail.u64();
  const std::uint64_t actual = bin::fnv1a64(bytes.data() + header, bytes.size() - header - 8);
  if (stored != actual)
    throw CheckpointError("checkpoint: checksum mismatch at byte offset " + std::to_string(bytes.size() - 8));

  Checkpoint ck;
  const std::size_t block_offset = r.offset();
  try {
    const nlohmann::json block = nlohmann::json::parse(r.text());
    ck.config = ModelConfig::from_json(block.at("model"));
    ck.extra = block.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint: bad config block at byte offset " + std::to_string(block_offset) + ": " +
                          e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint: bad config block at byte offset " + std::to_string(block_offset) + ": " +
                          e.what());
  }
  try {
    ck.params = build_model(ck.config);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: embedded config is invalid: ") + e.what());
  }

  auto arrays = ck.params.arrays();
  const std::size_t count_offset = r.offset();
  if (r.u32() != arrays.size())
    throw CheckpointError("checkpoint: array count does not match config at byte offset " + std::to_string(count_offset));
  for (auto& a : arrays) {
    const std::size_t at = r.offset();
    const std::uint32_t rank = r.u32();
    std::vector<Eigen::Index> shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape != a.shape) throw CheckpointError("checkpoint: shape of '" + a.name + "' differs from config at byte offset " + std::to_string(at));
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data[i] = r.f64();
  }
  if (r.remaining() != 0) r.fail("unexpected trailing bytes");
  return ck;
}

void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const std::string& path,
                     const nlohmann::json& extra) {
  bin::write_file_atomic(path, serialize_checkpoint(params, cfg, extra));
}

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(bin::read_file(path)); }

}  // namespace cstafnet
