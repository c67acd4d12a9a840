#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "viewuq/core/error.hpp"
#include "viewuq/render/colormap.hpp"
#include "viewuq/render/image.hpp"

namespace viewuq {

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Raster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;

  Raster() = default;
  Raster(std::size_t h, std::size_t w) : height(h), width(w), rgb(3 * h * w, 0) {}
  Rgb8 pixel(std::size_t y, std::size_t x) const {
    const std::size_t o = 3 * (y * width + x);
    return {rgb[o], rgb[o + 1], rgb[o + 2]};
  }
  void set(std::size_t y, std::size_t x, Rgb8 c) {
    const std::size_t o = 3 * (y * width + x);
    rgb[o] = c[0];
    rgb[o + 1] = c[1];
    rgb[o + 2] = c[2];
  }
};

namespace png_detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& body) {
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

inline constexpr std::array<std::uint8_t, 8> kSignature = {137, 80, 78, 71, 13, 10, 26, 10};

}  // namespace png_detail

/// Encodes 8-bit RGB, filter type 0 on every row, zlib level 6.
inline std::vector<std::uint8_t> encode_png(const Raster& img) {
  using namespace png_detail;
  std::vector<std::uint8_t> raw;
  raw.reserve(img.height * (1 + 3 * img.width));
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back(0);
    const auto* row = img.rgb.data() + 3 * y * img.width;
    raw.insert(raw.end(), row, row + 3 * img.width);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw IoError("png: zlib compression failed");
  }
  z.resize(zlen);

  std::vector<std::uint8_t> out(kSignature.begin(), kSignature.end());
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(img.width));
  put_u32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // depth 8, truecolor, deflate, filter 0, no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

/// Decodes the subset written by encode_png (8-bit RGB, non-interlaced);
/// all five row filters are accepted.
inline Raster decode_png(const std::vector<std::uint8_t>& bytes) {
  using namespace png_detail;
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature.data(), 8) != 0) {
    throw IoError("png: bad signature");
  }
  std::size_t pos = 8, width = 0, height = 0;
  std::vector<std::uint8_t> z;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = get_u32(bytes.data() + pos);
    const std::string type(reinterpret_cast<const char*>(bytes.data() + pos + 4), 4);
    if (pos + 12 + len > bytes.size()) throw IoError("png: truncated chunk " + type);
    const std::uint8_t* body = bytes.data() + pos + 8;
    if (type == "IHDR") {
      width = get_u32(body);
      height = get_u32(body + 4);
      if (body[8] != 8 || body[9] != 2 || body[12] != 0) throw IoError("png: only 8-bit RGB is supported");
    } else if (type == "IDAT") {
      z.insert(z.end(), body, body + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  const std::size_t stride = 3 * width;
  std::vector<std::uint8_t> raw(height * (stride + 1));
  uLongf rawlen = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &rawlen, z.data(), static_cast<uLong>(z.size())) != Z_OK || rawlen != raw.size()) {
    throw IoError("png: corrupt image data");
  }
  Raster img(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
    std::uint8_t* dst = img.rgb.data() + y * stride;
    const std::uint8_t* up = y ? img.rgb.data() + (y - 1) * stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= 3 ? dst[i - 3] : 0;
      const int b = up ? up[i] : 0;
      const int c = (up && i >= 3) ? up[i - 3] : 0;
      int pred = 0;
      switch (filter) {
        case 0: pred = 0; break;
        case 1: pred = a; break;
        case 2: pred = b; break;
        case 3: pred = (a + b) / 2; break;
        case 4: {
          const int p = a + b - c, pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          break;
        }
        default: throw IoError("png: unknown row filter");
      }
      dst[i] = static_cast<std::uint8_t>(src[i] + pred);
    }
  }
  return img;
}

inline void write_png(const std::filesystem::path& path, const Raster& img) {
  const auto bytes = encode_png(img);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

inline Raster read_png(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

/// Model space [-1, 1] to 8-bit display: round(255 * clamp((v + 1) / 2)).
inline std::uint8_t to_display_u8(float v) {
  const double d = std::clamp((static_cast<double>(v) + 1.0) * 0.5, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(d * 255.0 + 0.5));
}

inline Raster to_raster(const RgbImage& img) {
  Raster r(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      r.set(y, x, {to_display_u8(img.at(0, y, x)), to_display_u8(img.at(1, y, x)), to_display_u8(img.at(2, y, x))});
    }
  }
  return r;
}

/// Colors a nonnegative map with viridis over [0, max(map)]; an all-zero map
/// becomes the t = 0 color.
inline Raster colorize(const ImageMap& map) {
  const double hi = map.max();
  Raster r(map.height, map.width);
  for (std::size_t y = 0; y < map.height; ++y) {
    for (std::size_t x = 0; x < map.width; ++x) {
      r.set(y, x, viridis(normalize_to_unit(map.data[y * map.width + x], 0.0, hi)));
    }
  }
  return r;
}

}  // namespace viewuq
