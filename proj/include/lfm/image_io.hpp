#pragma once

// Binary PGM (P5) / PPM (P6) read and write, 8-bit only.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lfm/binary_io.hpp"
#include "lfm/errors.hpp"

namespace lfm {

struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;        // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> data;  // interleaved, row-major
};

inline std::vector<std::uint8_t> encode_pnm(const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw StructuralError("PNM supports 1 or 3 channels");
  if (img.data.size() != img.width * img.height * img.channels)
    throw StructuralError("image buffer size mismatch");
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

inline void write_pnm(const std::filesystem::path& path, const Image8& img) {
  write_file_bytes(path, encode_pnm(img));
}

inline Image8 read_pnm(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_ws();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("bad PNM header", pos);
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw FormatError("not a binary PGM/PPM file: " + path.string(), 0);
  Image8 img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  img.width = number();
  img.height = number();
  if (number() != 255) throw FormatError("only maxval 255 is supported", pos);
  ++pos;  // single whitespace before raster
  const std::size_t n = img.width * img.height * img.channels;
  if (bytes.size() - pos < n) throw FormatError("truncated PNM raster", pos);
  img.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

}  // namespace lfm
