#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "wavefuse/common.hpp"

namespace wavefuse {

// Interleaved 8-bit RGB raster, row major.
struct ImageU8 {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // 3 * width * height

  std::uint8_t* pixel(std::size_t x, std::size_t y) { return rgb.data() + 3 * (y * width + x); }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const {
    return rgb.data() + 3 * (y * width + x);
  }

  static ImageU8 filled(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g,
                        std::uint8_t b) {
    ImageU8 img;
    img.width = w;
    img.height = h;
    img.rgb.resize(3 * w * h);
    for (std::size_t i = 0; i < w * h; ++i) {
      img.rgb[3 * i] = r;
      img.rgb[3 * i + 1] = g;
      img.rgb[3 * i + 2] = b;
    }
    return img;
  }
};

// Minimal PNG codec: 8-bit RGB, non-interlaced. The writer always emits
// filter 0 rows; the reader handles all five standard filters.
namespace detail {

inline void png_u32be(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

inline std::uint32_t png_rd32be(const std::string& b, std::size_t pos) {
  if (pos + 4 > b.size()) throw FormatError("png: truncated");
  const auto* p = reinterpret_cast<const unsigned char*>(b.data() + pos);
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void png_chunk(std::string& out, const char type[4], const std::string& body) {
  png_u32be(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t start = out.size();
  out.append(type, 4);
  out += body;
  const auto crc =
      ::crc32(0, reinterpret_cast<const Bytef*>(out.data() + start),
              static_cast<uInt>(out.size() - start));
  png_u32be(out, static_cast<std::uint32_t>(crc));
}

inline int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace detail

inline std::string encode_png(const ImageU8& img) {
  if (img.width == 0 || img.height == 0 || img.rgb.size() != 3 * img.width * img.height)
    throw FormatError("png: invalid image buffer");
  const std::size_t stride = img.width * 3;
  std::vector<std::uint8_t> raw((stride + 1) * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    raw[y * (stride + 1)] = 0;  // filter 0
    std::memcpy(raw.data() + y * (stride + 1) + 1, img.rgb.data() + y * stride, stride);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw FormatError("png: deflate failed");

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  detail::png_u32be(ihdr, static_cast<std::uint32_t>(img.width));
  detail::png_u32be(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr += '\x08';  // bit depth
  ihdr += '\x02';  // color type RGB
  ihdr += '\x00';
  ihdr += '\x00';
  ihdr += '\x00';
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT",
                    std::string(reinterpret_cast<char*>(comp.data()), comp_len));
  detail::png_chunk(out, "IEND", "");
  return out;
}

inline ImageU8 decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 8, "\x89PNG\r\n\x1a\n", 8) != 0)
    throw FormatError("png: bad signature");
  std::size_t pos = 8;
  ImageU8 img;
  std::string idat;
  bool have_ihdr = false;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = detail::png_rd32be(bytes, pos);
    const std::string type = bytes.substr(pos + 4, 4);
    const std::size_t body = pos + 8;
    if (body + len + 4 > bytes.size()) throw FormatError("png: truncated chunk " + type);
    if (type == "IHDR") {
      img.width = detail::png_rd32be(bytes, body);
      img.height = detail::png_rd32be(bytes, body + 4);
      const int depth = static_cast<unsigned char>(bytes[body + 8]);
      const int color = static_cast<unsigned char>(bytes[body + 9]);
      const int interlace = static_cast<unsigned char>(bytes[body + 12]);
      if (depth != 8 || color != 2 || interlace != 0)
        throw FormatError("png: unsupported format (need 8-bit RGB, non-interlaced)");
      have_ihdr = true;
    } else if (type == "IDAT") {
      idat += bytes.substr(body, len);
    } else if (type == "IEND") {
      break;
    }
    pos = body + len + 4;  // skip CRC
  }
  if (!have_ihdr || img.width == 0 || img.height == 0)
    throw FormatError("png: missing IHDR");

  const std::size_t stride = img.width * 3;
  std::vector<std::uint8_t> raw((stride + 1) * img.height);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, reinterpret_cast<const Bytef*>(idat.data()),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw FormatError("png: inflate failed");

  img.rgb.resize(stride * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
    std::uint8_t* dst = img.rgb.data() + y * stride;
    const std::uint8_t* up = y > 0 ? img.rgb.data() + (y - 1) * stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= 3 ? dst[i - 3] : 0;
      const int b = up ? up[i] : 0;
      const int c = (up && i >= 3) ? up[i - 3] : 0;
      int v = src[i];
      switch (filter) {
        case 0:
          break;
        case 1:
          v += a;
          break;
        case 2:
          v += b;
          break;
        case 3:
          v += (a + b) / 2;
          break;
        case 4:
          v += detail::paeth(a, b, c);
          break;
        default:
          throw FormatError("png: unknown filter " + std::to_string(filter));
      }
      dst[i] = static_cast<std::uint8_t>(v & 0xff);
    }
  }
  return img;
}

}  // namespace wavefuse
