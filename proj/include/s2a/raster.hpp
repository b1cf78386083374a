#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "s2a/common.hpp"

namespace s2a {

// B-plane floating point image, plane-major then row-major. The single
// interchange carrier for scenes, predictions, masks and index maps.
struct MultiBandRaster {
  int bands = 0;
  int height = 0;
  int width = 0;
  std::vector<std::string> labels;
  std::vector<float> data;

  MultiBandRaster() = default;
  MultiBandRaster(int b, int m, int n, std::vector<std::string> labs)
      : bands(b), height(m), width(n), labels(std::move(labs)),
        data(static_cast<std::size_t>(b) * m * n, 0.0f) {
    require(static_cast<int>(labels.size()) == bands, Err::BadDims,
            "label count must equal band count");
  }

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  float* plane(int b) { return data.data() + static_cast<std::size_t>(b) * plane_size(); }
  const float* plane(int b) const {
    return data.data() + static_cast<std::size_t>(b) * plane_size();
  }
  float& at(int b, int r, int c) { return data[(static_cast<std::size_t>(b) * height + r) * width + c]; }
  float at(int b, int r, int c) const {
    return data[(static_cast<std::size_t>(b) * height + r) * width + c];
  }

  int find_band(const std::string& label) const {
    for (int b = 0; b < bands; ++b)
      if (labels[b] == label) return b;
    return -1;
  }

  int band_or_throw(const std::string& label) const {
    int b = find_band(label);
    require(b >= 0, Err::UnknownBand, "no band named '" + label + "'");
    return b;
  }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;  // strictly 0 or 1

  BinaryMask() = default;
  BinaryMask(int m, int n) : height(m), width(n), values(static_cast<std::size_t>(m) * n, 0) {}

  std::uint8_t& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values) n += v;
    return n;
  }
};

// ---------------------------------------------------------------------------
// MBR container: magic "MBR1" | u32 B | u32 M | u32 N | u32 label block length
// | labels joined by '\n' | B*M*N little-endian f32, plane-major, row-major.
// ---------------------------------------------------------------------------

namespace detail {
inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}
}  // namespace detail

inline void write_mbr(const MultiBandRaster& r, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Err::IoFailure, "cannot open for writing: " + path);
  os.write("MBR1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(r.bands));
  detail::put_u32(os, static_cast<std::uint32_t>(r.height));
  detail::put_u32(os, static_cast<std::uint32_t>(r.width));
  std::string labs;
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    if (i) labs += '\n';
    labs += r.labels[i];
  }
  detail::put_u32(os, static_cast<std::uint32_t>(labs.size()));
  os.write(labs.data(), static_cast<std::streamsize>(labs.size()));
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(r.data.data()),
           static_cast<std::streamsize>(r.data.size() * 4));
  require(os.good(), Err::IoFailure, "write failed: " + path);
}

inline MultiBandRaster read_mbr(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), Err::IoFailure, "cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4)) fail(Err::MagicMismatch, "file too short for magic: " + path);
  if (std::memcmp(magic, "MBR", 3) != 0) fail(Err::MagicMismatch, "not an MBR file: " + path);
  if (magic[3] != '1') fail(Err::UnsupportedVersion, std::string("MBR version '") + magic[3] + "'");
  std::uint32_t b, m, n, lablen;
  if (!detail::get_u32(is, b) || !detail::get_u32(is, m) || !detail::get_u32(is, n) ||
      !detail::get_u32(is, lablen))
    fail(Err::TruncatedPayload, "truncated header: " + path);
  std::string labs(lablen, '\0');
  if (lablen && !is.read(labs.data(), lablen)) fail(Err::TruncatedPayload, "truncated labels: " + path);

  std::vector<std::string> labels;
  if (!labs.empty()) {
    std::size_t start = 0;
    for (;;) {
      std::size_t nl = labs.find('\n', start);
      if (nl == std::string::npos) {
        labels.push_back(labs.substr(start));
        break;
      }
      labels.push_back(labs.substr(start, nl - start));
      start = nl + 1;
    }
  }
  require(labels.size() == b, Err::TruncatedPayload, "label count does not match band count");

  MultiBandRaster r(static_cast<int>(b), static_cast<int>(m), static_cast<int>(n), labels);
  std::size_t want = r.data.size() * 4;
  if (!is.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(want)))
    fail(Err::TruncatedPayload, "declared payload exceeds file length: " + path);
  return r;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Minimum subtraction, maximum division; a constant plane maps to all zeros so
// degenerate patches carry no attention signal.
inline void normalize_unit_inplace(float* v, std::size_t n) {
  float mn = v[0], mx = v[0];
  for (std::size_t i = 0; i < n; ++i) {
    require(std::isfinite(v[i]), Err::NonFiniteInput, "normalize_unit saw non-finite value");
    mn = std::min(mn, v[i]);
    mx = std::max(mx, v[i]);
  }
  if (mx == mn) {
    std::fill(v, v + n, 0.0f);
    return;
  }
  float inv = 1.0f / (mx - mn);
  for (std::size_t i = 0; i < n; ++i) v[i] = (v[i] - mn) * inv;
}

inline std::vector<float> normalize_unit(const std::vector<float>& plane) {
  require(!plane.empty(), Err::BadDims, "empty plane");
  std::vector<float> out = plane;
  normalize_unit_inplace(out.data(), out.size());
  return out;
}

struct ScaleMode {
  enum Kind { Bitdepth, PerSceneMinMax } kind = PerSceneMinMax;
  int bits = 8;

  static ScaleMode bitdepth(int n) { return ScaleMode{Bitdepth, n}; }
  static ScaleMode minmax() { return ScaleMode{PerSceneMinMax, 0}; }
};

inline MultiBandRaster radiometric_scale(const MultiBandRaster& r, const ScaleMode& mode) {
  require(r.all_finite(), Err::NonFiniteInput, "radiometric_scale saw non-finite value");
  MultiBandRaster out = r;
  if (mode.kind == ScaleMode::Bitdepth) {
    float denom = static_cast<float>((1ull << mode.bits) - 1);
    for (float& v : out.data) v = std::clamp(v / denom, 0.0f, 1.0f);
  } else {
    // joint min/max over all bands
    normalize_unit_inplace(out.data.data(), out.data.size());
  }
  return out;
}

}  // namespace s2a
