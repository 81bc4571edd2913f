#include "dfmim/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <map>

#include "binio.hpp"
#include "dfmim/errors.hpp"
#include "fileio.hpp"

namespace dfmim::cli {

namespace {

constexpr std::string_view kMagic = "DFMX";

std::uint32_t checksum(std::string_view payload) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in pieces.
  while (!payload.empty()) {
    const auto n = std::min<std::size_t>(payload.size(), 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(n));
    payload.remove_prefix(n);
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string encode_checkpoint(const model::DfmimModel& model) {
  std::string payload;
  binio::put_str(payload, model.config().to_text());
  binio::put_u64(payload, model.config().seed);
  const auto params = model.named_parameters();
  binio::put_u32(payload, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    binio::put_str(payload, name);
    binio::put_u32(payload, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) binio::put_u64(payload, d);
    for (double v : t.data()) binio::put_f64(payload, v);
  }
  std::string out(kMagic);
  binio::put_u32(out, kCheckpointVersion);
  binio::put_u32(out, checksum(payload));
  binio::put_u64(out, payload.size());
  out += payload;
  return out;
}

model::DfmimModel decode_checkpoint(const std::string& bytes) {
  binio::Reader header(bytes);
  if (bytes.size() < 4 || header.bytes(4) != kMagic) throw CorruptFile("not a checkpoint (bad magic)");
  const auto version = header.u32();
  if (version != kCheckpointVersion)
    throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  const auto crc = header.u32();
  const auto size = header.u64();
  if (header.remaining() != size) throw CorruptFile("checkpoint payload is truncated or padded");
  const std::string_view payload = header.bytes(size);
  if (checksum(payload) != crc) throw CorruptFile("checkpoint checksum mismatch");

  binio::Reader r(payload);
  model::DfmimConfig cfg;
  try {
    cfg = model::DfmimConfig::from_text(r.str());
  } catch (const ConfigError& e) {
    throw CorruptFile(std::string("checkpoint config: ") + e.what());
  }
  cfg.seed = r.u64();
  model::DfmimModel m(cfg);

  std::map<std::string, ad::Tensor> slots;
  for (auto& [name, t] : m.named_parameters()) slots.emplace(name, t);
  const auto count = r.u32();
  if (count != slots.size())
    throw ShapeError("checkpoint holds " + std::to_string(count) + " arrays, model has " +
                     std::to_string(slots.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    auto it = slots.find(name);
    if (it == slots.end()) throw ShapeError("checkpoint array '" + name + "' has no model slot");
    ad::Shape shape(r.u32());
    for (auto& d : shape) d = r.u64();
    if (shape != it->second.shape())
      throw ShapeError("checkpoint array '" + name + "' has shape " + ad::to_string(shape) + ", model expects " +
                       ad::to_string(it->second.shape()));
    for (double& v : it->second.data()) v = r.f64();
    slots.erase(it);
  }
  if (!r.done()) throw CorruptFile("trailing bytes in checkpoint payload");
  return m;
}

void save_checkpoint(const model::DfmimModel& model, const std::filesystem::path& path) {
  fileio::write_all(path, encode_checkpoint(model));
}

model::DfmimModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(fileio::read_all(path));
}

model::DfmimModel load_checkpoint(const std::filesystem::path& path, const model::DfmimConfig& expected) {
  auto m = load_checkpoint(path);
  const auto& a = m.config();
  const auto& b = expected;
  const bool same = a.task == b.task && a.n_grid == b.n_grid && a.p == b.p && a.K == b.K && a.C == b.C &&
                    a.n_enc == b.n_enc && a.heads == b.heads && a.ff_dim == b.ff_dim &&
                    a.micro_width == b.micro_width && a.micro_depth == b.micro_depth &&
                    a.head_width == b.head_width && a.transform == b.transform &&
                    a.positional_encoding == b.positional_encoding;
  if (!same)
    throw ShapeError("checkpoint " + path.string() + " was written for a different model architecture");
  return m;
}

}  // namespace dfmim::cli
