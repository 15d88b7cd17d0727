#pragma once

// Dataset container and its binary file format (little-endian):
//   "LFMD" | version u32 = 1 | count u32 | H u16 | W u16 | C u16 | n_cams u16
//   then per record: identity u32 | camera u16 | pixels u8 x (C*H*W), channel-first.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lfm/binary_io.hpp"
#include "lfm/errors.hpp"
#include "lfm/image_io.hpp"

namespace lfm::data {

inline constexpr char kDatasetMagic[4] = {'L', 'F', 'M', 'D'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint16_t kImageHeight = 64;
inline constexpr std::uint16_t kImageWidth = 32;
inline constexpr std::uint16_t kImageChannels = 3;
inline constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 2 * 4;
inline constexpr std::size_t kPixelsPerSample =
    std::size_t{kImageChannels} * kImageHeight * kImageWidth;
inline constexpr std::size_t kRecordBytes = 4 + 2 + kPixelsPerSample;

struct Sample {
  std::uint32_t identity = 0;
  std::uint16_t camera = 0;
  std::vector<std::uint8_t> pixels;  // C x H x W

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::uint16_t n_cams = 0;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ByteWriter w;
  w.bytes(kDatasetMagic, 4);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.samples.size()));
  w.u16(kImageHeight);
  w.u16(kImageWidth);
  w.u16(kImageChannels);
  w.u16(ds.n_cams);
  for (const auto& s : ds.samples) {
    if (s.pixels.size() != kPixelsPerSample) throw StructuralError("sample has wrong pixel count");
    if (s.camera >= ds.n_cams) throw StructuralError("sample camera outside [0, n_cams)");
    w.u32(s.identity);
    w.u16(s.camera);
    w.bytes(s.pixels.data(), s.pixels.size());
  }
  return w.buffer();
}

/// Decodes a whole dataset or throws; never returns a partial result.
inline Dataset decode_dataset(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes));
  if (r.text(4, "magic") != std::string(kDatasetMagic, 4)) throw FormatError("bad dataset magic", 0);
  const auto version = r.u32("version");
  if (version != kDatasetVersion)
    throw FormatError("unsupported dataset version " + std::to_string(version), 4);
  const auto count = r.u32("count");
  const auto h = r.u16("height");
  const auto w = r.u16("width");
  const auto c = r.u16("channels");
  if (h != kImageHeight || w != kImageWidth || c != kImageChannels)
    throw FormatError("dataset image geometry must be 3x64x32", 12);
  Dataset ds;
  ds.n_cams = r.u16("n_cams");
  ds.samples.resize(count);
  for (auto& s : ds.samples) {
    const auto record_at = r.offset();
    s.identity = r.u32("identity");
    s.camera = r.u16("camera");
    if (s.camera >= ds.n_cams) throw FormatError("camera index outside [0, n_cams)", record_at + 4);
    s.pixels.resize(kPixelsPerSample);
    r.bytes(s.pixels.data(), s.pixels.size(), "pixels");
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last record", r.offset());
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file_bytes(path, encode_dataset(ds));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file_bytes(path));
}

/// Imports `path,identity,camera` rows (optional header) of 32x64 binary
/// PPM images. Relative paths resolve against the manifest's directory.
inline Dataset import_csv_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  std::uint16_t max_cam = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("path,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string path, id, cam;
    if (!std::getline(ss, path, ',') || !std::getline(ss, id, ',') || !std::getline(ss, cam))
      throw InputError("manifest line " + std::to_string(lineno) + ": expected path,identity,camera");
    std::filesystem::path p(path);
    if (p.is_relative()) p = manifest.parent_path() / p;
    const auto img = read_pnm(p);
    if (img.channels != 3 || img.width != kImageWidth || img.height != kImageHeight)
      throw InputError("manifest line " + std::to_string(lineno) + ": image must be a 32x64 PPM");
    Sample s;
    try {
      s.identity = static_cast<std::uint32_t>(std::stoul(id));
      s.camera = static_cast<std::uint16_t>(std::stoul(cam));
    } catch (const std::exception&) {
      throw InputError("manifest line " + std::to_string(lineno) + ": bad identity or camera");
    }
    s.pixels.resize(kPixelsPerSample);
    const std::size_t plane = std::size_t{kImageHeight} * kImageWidth;
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t c = 0; c < 3; ++c) s.pixels[c * plane + i] = img.data[i * 3 + c];
    max_cam = std::max(max_cam, s.camera);
    ds.samples.push_back(std::move(s));
  }
  ds.n_cams = static_cast<std::uint16_t>(max_cam + 1);
  return ds;
}

}  // namespace lfm::data
