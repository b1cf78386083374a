#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "s2a/common.hpp"
#include "s2a/raster.hpp"

namespace s2a {

namespace detail {

inline void png_chunk(std::ostream& os, const char type[4], const std::vector<std::uint8_t>& body) {
  auto be32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  be32(static_cast<std::uint32_t>(body.size()));
  os.write(type, 4);
  if (!body.empty()) os.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!body.empty()) crc = crc32(crc, body.data(), static_cast<uInt>(body.size()));
  be32(static_cast<std::uint32_t>(crc));
}

}  // namespace detail

// 8-bit PNG, grayscale (channels=1) or RGB (channels=3).
inline void write_png8(const std::string& path, int width, int height, int channels,
                       const std::vector<std::uint8_t>& pixels) {
  require(channels == 1 || channels == 3, Err::BadDims, "png supports 1 or 3 channels");
  require(pixels.size() == static_cast<std::size_t>(width) * height * channels, Err::BadDims,
          "pixel buffer size mismatch");
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Err::IoFailure, "cannot open for writing: " + path);

  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  os.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr(13);
  auto put_be = [&](std::size_t off, std::uint32_t v) {
    ihdr[off] = static_cast<std::uint8_t>(v >> 24);
    ihdr[off + 1] = static_cast<std::uint8_t>(v >> 16);
    ihdr[off + 2] = static_cast<std::uint8_t>(v >> 8);
    ihdr[off + 3] = static_cast<std::uint8_t>(v);
  };
  put_be(0, static_cast<std::uint32_t>(width));
  put_be(4, static_cast<std::uint32_t>(height));
  ihdr[8] = 8;                                   // bit depth
  ihdr[9] = (channels == 1) ? 0 : 2;             // gray / truecolor
  ihdr[10] = ihdr[11] = ihdr[12] = 0;
  detail::png_chunk(os, "IHDR", ihdr);

  // filter byte 0 per scanline
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + static_cast<std::size_t>(width) * channels));
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);
    const std::uint8_t* row = pixels.data() + static_cast<std::size_t>(r) * width * channels;
    raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * channels);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(bound);
  int rc = compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6);
  require(rc == Z_OK, Err::IoFailure, "zlib compression failed");
  comp.resize(bound);
  detail::png_chunk(os, "IDAT", comp);
  detail::png_chunk(os, "IEND", {});
  require(os.good(), Err::IoFailure, "write failed: " + path);
}

struct Stretch {
  enum Kind { None, Percentile } kind = None;
  double lo = 2.0, hi = 98.0;

  static Stretch none() { return Stretch{None, 0, 0}; }
  static Stretch percentile(double lo = 2.0, double hi = 98.0) { return Stretch{Percentile, lo, hi}; }
};

// Linear-interpolated percentile of a copy of the values.
inline double percentile_of(std::vector<float> v, double q) {
  require(!v.empty(), Err::BadDims, "percentile of empty set");
  std::sort(v.begin(), v.end());
  double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  std::size_t i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  double frac = pos - static_cast<double>(i);
  return v[i] * (1.0 - frac) + v[i + 1] * frac;
}

namespace detail {
inline void stretch_to_bytes(const float* plane, std::size_t n, const Stretch& s,
                             std::uint8_t* out, int stride) {
  double lo = 0.0, hi = 1.0;
  if (s.kind == Stretch::Percentile) {
    std::vector<float> copy(plane, plane + n);
    lo = percentile_of(copy, s.lo);
    hi = percentile_of(copy, s.hi);
  }
  double inv = (hi > lo) ? 1.0 / (hi - lo) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = (static_cast<double>(plane[i]) - lo) * inv;
    t = std::clamp(t, 0.0, 1.0);
    out[i * stride] = static_cast<std::uint8_t>(std::lround(t * 255.0));
  }
}
}  // namespace detail

// Export one band as grayscale or three bands as an RGB composite.
inline void export_png(const MultiBandRaster& r, const std::vector<std::string>& band_combo,
                       const Stretch& stretch, const std::string& path) {
  require(band_combo.size() == 1 || band_combo.size() == 3, Err::BadDims,
          "band combo must name 1 or 3 bands");
  int channels = static_cast<int>(band_combo.size());
  std::vector<int> idx;
  for (const auto& lab : band_combo) idx.push_back(r.band_or_throw(lab));

  std::size_t n = r.plane_size();
  std::vector<std::uint8_t> pixels(n * channels);
  for (int ch = 0; ch < channels; ++ch)
    detail::stretch_to_bytes(r.plane(idx[ch]), n, stretch, pixels.data() + ch, channels);
  write_png8(path, r.width, r.height, channels, pixels);
}

}  // namespace s2a
