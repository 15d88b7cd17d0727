#pragma once

// Checkpoint layout (little-endian):
//   "LFMC" | version u32 | records until EOF
//   record: name_len u16 | name | rank u8 | dims u32 x rank | f32 payload

#include <filesystem>
#include <string>
#include <vector>

#include "lfm/binary_io.hpp"
#include "lfm/errors.hpp"
#include "lfm/nn/tensor.hpp"

namespace lfm::nn {

inline constexpr char kCheckpointMagic[4] = {'L', 'F', 'M', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const ParamSet<T>& params) {
  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  for (const auto& e : params) {
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.text(e.name);
    w.u8(static_cast<std::uint8_t>(e.tensor.shape.size()));
    for (auto d : e.tensor.shape) w.u32(static_cast<std::uint32_t>(d));
    for (T v : e.tensor.values) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

inline std::vector<CheckpointRecord> decode_checkpoint(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes));
  if (r.text(4, "magic") != std::string(kCheckpointMagic, 4))
    throw FormatError("bad checkpoint magic", 0);
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  std::vector<CheckpointRecord> out;
  while (!r.at_end()) {
    CheckpointRecord rec;
    const auto len = r.u16("name length");
    rec.name = r.text(len, "name");
    const auto rank = r.u8("rank");
    for (int i = 0; i < rank; ++i) rec.shape.push_back(r.u32("dims"));
    rec.values.resize(element_count(rec.shape));
    for (auto& v : rec.values) v = r.f32("payload");
    out.push_back(std::move(rec));
  }
  return out;
}

template <typename T>
void save_checkpoint(const ParamSet<T>& params, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(params));
}

/// Loads values into an existing ParamSet; names and shapes must match exactly.
template <typename T>
void load_checkpoint(ParamSet<T>& params, const std::filesystem::path& path) {
  const auto records = decode_checkpoint(read_file_bytes(path));
  if (records.size() != params.size())
    throw StructuralError("checkpoint has " + std::to_string(records.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  for (const auto& rec : records) {
    if (!params.contains(rec.name)) throw StructuralError("checkpoint tensor " + rec.name + " unknown to model");
    auto& t = params.at(rec.name);
    if (t.shape != rec.shape)
      throw StructuralError("checkpoint tensor " + rec.name + " has shape " + to_string(rec.shape) +
                            ", model expects " + to_string(t.shape));
    for (std::size_t i = 0; i < rec.values.size(); ++i) t.values[i] = static_cast<T>(rec.values[i]);
  }
  params.zero_grad();
}

}  // namespace lfm::nn
