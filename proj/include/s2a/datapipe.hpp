#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "s2a/common.hpp"
#include "s2a/raster.hpp"
#include "s2a/resample.hpp"
#include "s2a/rng.hpp"

namespace s2a {

inline constexpr int kDefaultCropSize = 64;
inline constexpr int kDefaultCropStride = 16;
inline constexpr int kDefaultCoarseFactor = 4;

// One training example: 3-band source composite (G, R, NIR order fixed), the
// true SWIR patch, and the upsampled coarse SWIR patch, all size x size.
struct PairedCrop {
  int size = 0;
  std::vector<float> z;        // 3 * size * size
  std::vector<float> y;        // size * size
  std::vector<float> y_tilde;  // size * size
  int scene = 0, row = 0, col = 0;
};

struct CropDataset {
  std::vector<PairedCrop> crops;
  std::string split = "train";
  std::uint64_t seed = 0;
  int size = kDefaultCropSize;
};

// Window origins along one axis: stride progression plus a clamped final
// origin so the last window ends exactly at the scene edge.
inline std::vector<int> window_origins(int extent, int size, int stride) {
  require(size <= extent, Err::CropLargerThanScene, "window larger than scene extent");
  require(stride >= 1, Err::BadConfig, "stride must be >= 1");
  std::vector<int> out;
  for (int o = 0; o + size <= extent; o += stride) out.push_back(o);
  if (out.back() != extent - size) out.push_back(extent - size);
  return out;
}

namespace detail {

inline void copy_window(const float* plane, int width, int r0, int c0, int size, float* dst) {
  for (int r = 0; r < size; ++r)
    std::copy_n(plane + static_cast<std::size_t>(r0 + r) * width + c0, size,
                dst + static_cast<std::size_t>(r) * size);
}

}  // namespace detail

// Degrade-then-restore pipeline used when no real coarse band exists:
// area-average downsample by f, bicubic upsample back, clamp to [0,1]
// (bicubic overshoot would otherwise leave the radiometric range).
inline Plane simulate_coarse_band(const Plane& y, int factor) {
  Plane up = upsample_bicubic(downsample(y, factor), factor);
  for (auto& v : up.v) v = std::clamp(v, 0.0f, 1.0f);
  return up;
}

// One crop at an explicit offset, with y_tilde simulated from the crop's own
// SWIR window. Used when materializing a dataset from a manifest.
inline PairedCrop crop_at(const MultiBandRaster& source, const MultiBandRaster& target, int row,
                          int col, int size, int factor, int scene_index = 0) {
  require(source.height == target.height && source.width == target.width, Err::DimensionMismatch,
          "source/target dims differ");
  require(row >= 0 && col >= 0 && row + size <= source.height && col + size <= source.width,
          Err::CropLargerThanScene, "crop window out of bounds");
  require(size % factor == 0, Err::NonDivisibleDims, "crop size must be divisible by factor");
  std::size_t pix = static_cast<std::size_t>(size) * size;
  PairedCrop crop;
  crop.size = size;
  crop.scene = scene_index;
  crop.row = row;
  crop.col = col;
  crop.z.resize(3 * pix);
  crop.y.resize(pix);
  detail::copy_window(source.plane(source.band_or_throw("G")), source.width, row, col, size,
                      crop.z.data());
  detail::copy_window(source.plane(source.band_or_throw("R")), source.width, row, col, size,
                      crop.z.data() + pix);
  detail::copy_window(source.plane(source.band_or_throw("NIR")), source.width, row, col, size,
                      crop.z.data() + 2 * pix);
  detail::copy_window(target.plane(target.band_or_throw("SWIR")), target.width, row, col, size,
                      crop.y.data());
  Plane yp(size, size);
  yp.v = crop.y;
  crop.y_tilde = simulate_coarse_band(yp, factor).v;
  return crop;
}

// Slices size x size windows at the given stride (clamped at the far edges)
// out of aligned source/target scenes. `coarse`, when present, supplies
// y_tilde via scene-level bicubic upsampling; otherwise y_tilde is simulated
// per crop from the crop's own SWIR.
inline CropDataset extract_paired_crops(const MultiBandRaster& source,
                                        const MultiBandRaster& target,
                                        const MultiBandRaster* coarse, int size, int stride,
                                        int factor = kDefaultCoarseFactor, int scene_index = 0) {
  require(source.height == target.height && source.width == target.width, Err::DimensionMismatch,
          "source/target dims differ");
  const float* g = source.plane(source.band_or_throw("G"));
  const float* r = source.plane(source.band_or_throw("R"));
  const float* nir = source.plane(source.band_or_throw("NIR"));
  const float* swir = target.plane(target.band_or_throw("SWIR"));
  require(size >= 1 && size <= source.height && size <= source.width, Err::CropLargerThanScene,
          "crop size exceeds scene");
  require(size % factor == 0, Err::NonDivisibleDims, "crop size must be divisible by factor");

  Plane ytil_scene;  // only populated when a real coarse band is given
  if (coarse) {
    require(source.height % coarse->height == 0 && source.width % coarse->width == 0,
            Err::DimensionMismatch, "coarse dims must divide scene dims");
    int f = source.height / coarse->height;
    require(f >= 1 && source.width / coarse->width == f, Err::DimensionMismatch,
            "coarse factor differs between axes");
    factor = f;
    const float* cs =
        coarse->bands == 1 ? coarse->plane(0) : coarse->plane(coarse->band_or_throw("SWIR"));
    Plane cp(coarse->height, coarse->width);
    std::copy_n(cs, cp.size(), cp.v.begin());
    ytil_scene = upsample_bicubic(cp, f);
    for (auto& v : ytil_scene.v) v = std::clamp(v, 0.0f, 1.0f);
  }

  auto rows = window_origins(source.height, size, stride);
  auto cols = window_origins(source.width, size, stride);
  CropDataset ds;
  ds.size = size;
  ds.crops.reserve(rows.size() * cols.size());
  std::size_t pix = static_cast<std::size_t>(size) * size;
  for (int r0 : rows)
    for (int c0 : cols) {
      PairedCrop crop;
      crop.size = size;
      crop.scene = scene_index;
      crop.row = r0;
      crop.col = c0;
      crop.z.resize(3 * pix);
      crop.y.resize(pix);
      crop.y_tilde.resize(pix);
      detail::copy_window(g, source.width, r0, c0, size, crop.z.data());
      detail::copy_window(r, source.width, r0, c0, size, crop.z.data() + pix);
      detail::copy_window(nir, source.width, r0, c0, size, crop.z.data() + 2 * pix);
      detail::copy_window(swir, target.width, r0, c0, size, crop.y.data());
      if (coarse) {
        detail::copy_window(ytil_scene.v.data(), ytil_scene.width, r0, c0, size,
                            crop.y_tilde.data());
      } else {
        Plane yp(size, size);
        yp.v = crop.y;
        crop.y_tilde = simulate_coarse_band(yp, factor).v;
      }
      ds.crops.push_back(std::move(crop));
    }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic scene oracle
// ---------------------------------------------------------------------------

struct SynthScene {
  MultiBandRaster source;  // bands G, R, NIR
  MultiBandRaster target;  // band SWIR
  BinaryMask water;
  BinaryMask bright;
};

namespace detail {

// Smooth field in [0,1]: mixture of random low-frequency cosines, min-max
// normalized over the plane.
inline Plane cosine_field(int height, int width, Rng& rng) {
  constexpr int kTerms = 6;
  Plane p(height, width);
  std::array<double, kTerms> fr, fc, ph, amp;
  for (int t = 0; t < kTerms; ++t) {
    fr[t] = rng.uniform(0.5, 3.5);
    fc[t] = rng.uniform(0.5, 3.5);
    ph[t] = rng.uniform(0.0, 6.283185307179586);
    amp[t] = rng.uniform(0.5, 1.0);
  }
  double mn = 1e300, mx = -1e300;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      double v = 0;
      for (int t = 0; t < kTerms; ++t)
        v += amp[t] * std::cos(6.283185307179586 * (fr[t] * r / height + fc[t] * c / width) + ph[t]);
      p.v[static_cast<std::size_t>(r) * width + c] = static_cast<float>(v);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
  float lo = static_cast<float>(mn), hi = static_cast<float>(mx);
  float span = hi - lo;
  for (auto& v : p.v) v = span > 0 ? (v - lo) / span : 0.0f;
  return p;
}

struct Shape {
  bool disk = false;
  int r0 = 0, c0 = 0, r1 = 0, c1 = 0;  // bounding box, inclusive-exclusive
  double cr = 0, cc = 0, rad = 0;
  float s = 0;  // per-shape brightness draw

  bool contains(int r, int c) const {
    if (!disk) return r >= r0 && r < r1 && c >= c0 && c < c1;
    double dr = r - cr, dc = c - cc;
    return dr * dr + dc * dc <= rad * rad;
  }
};

// Place `count` shapes whose bounding boxes keep a >=3 px gap from all
// previously placed shapes (of any class), so no pixel ever belongs to two
// classes. Failed placements are skipped after a bounded retry.
inline std::vector<Shape> place_shapes(int height, int width, int count, int lo, int hi,
                                       std::vector<Shape>& all, Rng& rng) {
  std::vector<Shape> placed;
  const int margin = 2, gap = 3;
  for (int i = 0; i < count; ++i) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      Shape s;
      s.disk = rng.below(2) == 1;
      int sh = static_cast<int>(rng.range(lo, hi));
      int sw = static_cast<int>(rng.range(lo, hi));
      if (s.disk) sw = sh;
      if (height - margin * 2 < sh || width - margin * 2 < sw) break;
      s.r0 = rng.range(margin, height - margin - sh);
      s.c0 = rng.range(margin, width - margin - sw);
      s.r1 = s.r0 + sh;
      s.c1 = s.c0 + sw;
      if (s.disk) {
        s.cr = s.r0 + (sh - 1) / 2.0;
        s.cc = s.c0 + (sw - 1) / 2.0;
        s.rad = sh / 2.0;
      }
      s.s = static_cast<float>(rng.uniform());
      bool clash = false;
      for (const auto& o : all)
        if (s.r0 - gap < o.r1 && o.r0 - gap < s.r1 && s.c0 - gap < o.c1 && o.c0 - gap < s.c1) {
          clash = true;
          break;
        }
      if (clash) continue;
      all.push_back(s);
      placed.push_back(s);
      break;
    }
  }
  return placed;
}

}  // namespace detail

// Deterministic scene pair: smooth per-band cosine backgrounds plus flat
// water / vegetation / bright patches, and a SWIR target derived from the
// source by a fixed pointwise mixing formula. Keeping the target sharp
// matters: its fine structure (patch edges) is carried by the full-resolution
// source bands but not by a coarse SWIR, so upsampling baselines cannot
// saturate the task. Band amplitudes are chosen so that
// MNDWI = (G-SWIR)/(G+SWIR) is positive exactly on water pixels and negative
// everywhere else.
inline SynthScene synth_scene(std::uint64_t seed, int height, int width,
                              int factor = kDefaultCoarseFactor) {
  require(height >= 64 && width >= 64, Err::BadDims, "scene must be at least 64x64");
  require(factor >= 1 && height % factor == 0 && width % factor == 0, Err::BadDims,
          "scene dims must be divisible by the coarse factor");
  Rng rng(seed);
  std::size_t pix = static_cast<std::size_t>(height) * width;

  Plane fg = detail::cosine_field(height, width, rng);
  Plane fr = detail::cosine_field(height, width, rng);
  Plane fn = detail::cosine_field(height, width, rng);
  std::vector<float> G(pix), R(pix), NIR(pix);
  for (std::size_t i = 0; i < pix; ++i) {
    G[i] = 0.10f + 0.10f * fg.v[i];    // [0.10, 0.20]
    R[i] = 0.55f + 0.13f * fr.v[i];    // [0.55, 0.68]
    NIR[i] = 0.60f + 0.15f * fn.v[i];  // [0.60, 0.75]
  }

  int area = height * width;
  int n_water = std::max(1, area / 8192);
  int n_veg = std::max(1, area / 10922);
  int n_cloud = std::max(1, area / 16384);
  std::vector<detail::Shape> all;
  auto water_shapes = detail::place_shapes(height, width, n_water, 10, 28, all, rng);
  auto veg_shapes = detail::place_shapes(height, width, n_veg, 8, 24, all, rng);
  auto cloud_shapes = detail::place_shapes(height, width, n_cloud, 8, 20, all, rng);

  BinaryMask water(height, width), bright(height, width);
  auto paint = [&](const detail::Shape& s, float gv, float rv, float nv, BinaryMask* mask) {
    for (int r = s.r0; r < s.r1; ++r)
      for (int c = s.c0; c < s.c1; ++c)
        if (s.contains(r, c)) {
          std::size_t i = static_cast<std::size_t>(r) * width + c;
          G[i] = gv;
          R[i] = rv;
          NIR[i] = nv;
          if (mask) mask->values[i] = 1;
        }
  };
  for (const auto& s : water_shapes)
    paint(s, 0.70f + 0.10f * s.s, 0.08f + 0.04f * s.s, 0.04f + 0.04f * s.s, &water);
  for (const auto& s : veg_shapes)
    paint(s, 0.10f + 0.10f * s.s, 0.30f + 0.05f * s.s, 0.80f + 0.10f * s.s, nullptr);
  for (const auto& s : cloud_shapes)
    paint(s, 0.55f + 0.05f * s.s, 0.80f + 0.10f * s.s, 0.80f + 0.10f * s.s, &bright);

  Plane y(height, width);
  for (std::size_t i = 0; i < pix; ++i) {
    float v = 0.10f * G[i] + 0.35f * R[i] + 0.55f * NIR[i] - 0.5f * water.values[i] + 0.2f * bright.values[i];
    y.v[i] = std::clamp(v, 0.0f, 1.0f);
  }

  SynthScene out;
  out.source = MultiBandRaster(3, height, width, {"G", "R", "NIR"});
  std::copy(G.begin(), G.end(), out.source.plane(0));
  std::copy(R.begin(), R.end(), out.source.plane(1));
  std::copy(NIR.begin(), NIR.end(), out.source.plane(2));
  out.target = MultiBandRaster(1, height, width, {"SWIR"});
  std::copy(y.v.begin(), y.v.end(), out.target.plane(0));
  out.water = std::move(water);
  out.bright = std::move(bright);
  return out;
}

// Single-file scene layout used on disk: the four bands plus the generating
// masks (stored as 0/1 planes) so downstream index checks need no side files.
inline MultiBandRaster pack_scene(const SynthScene& s) {
  MultiBandRaster r(6, s.source.height, s.source.width, {"G", "R", "NIR", "SWIR", "WATER", "BRIGHT"});
  std::copy_n(s.source.plane(0), r.plane_size(), r.plane(0));
  std::copy_n(s.source.plane(1), r.plane_size(), r.plane(1));
  std::copy_n(s.source.plane(2), r.plane_size(), r.plane(2));
  std::copy_n(s.target.plane(0), r.plane_size(), r.plane(3));
  for (std::size_t i = 0; i < r.plane_size(); ++i) r.plane(4)[i] = static_cast<float>(s.water.values[i]);
  for (std::size_t i = 0; i < r.plane_size(); ++i) r.plane(5)[i] = static_cast<float>(s.bright.values[i]);
  return r;
}

// Pull the 3-band source and 1-band target views back out of a packed scene.
inline void unpack_scene(const MultiBandRaster& packed, MultiBandRaster& source,
                         MultiBandRaster& target) {
  source = MultiBandRaster(3, packed.height, packed.width, {"G", "R", "NIR"});
  target = MultiBandRaster(1, packed.height, packed.width, {"SWIR"});
  std::copy_n(packed.plane(packed.band_or_throw("G")), packed.plane_size(), source.plane(0));
  std::copy_n(packed.plane(packed.band_or_throw("R")), packed.plane_size(), source.plane(1));
  std::copy_n(packed.plane(packed.band_or_throw("NIR")), packed.plane_size(), source.plane(2));
  std::copy_n(packed.plane(packed.band_or_throw("SWIR")), packed.plane_size(), target.plane(0));
}

// ---------------------------------------------------------------------------
// Splitting and manifests
// ---------------------------------------------------------------------------

// Deterministic shuffled partition. Base sizes are floors of fraction*n; the
// remainder is handed out round-robin in (train, val, test) order.
inline std::array<CropDataset, 3> split_dataset(const CropDataset& ds, double f_train,
                                                double f_val, double f_test, std::uint64_t seed) {
  require(f_train >= 0 && f_val >= 0 && f_test >= 0, Err::BadFractions, "fractions must be >= 0");
  require(std::abs(f_train + f_val + f_test - 1.0) <= 1e-9, Err::BadFractions,
          "fractions must sum to 1");
  std::size_t n = ds.crops.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);

  std::array<std::size_t, 3> want{static_cast<std::size_t>(f_train * static_cast<double>(n)),
                                  static_cast<std::size_t>(f_val * static_cast<double>(n)),
                                  static_cast<std::size_t>(f_test * static_cast<double>(n))};
  std::size_t assigned = want[0] + want[1] + want[2];
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++want[k];

  std::array<CropDataset, 3> out;
  const char* names[3] = {"train", "val", "test"};
  std::size_t cursor = 0;
  for (int k = 0; k < 3; ++k) {
    out[k].split = names[k];
    out[k].seed = seed;
    out[k].size = ds.size;
    out[k].crops.reserve(want[k]);
    for (std::size_t i = 0; i < want[k]; ++i) out[k].crops.push_back(ds.crops[idx[cursor++]]);
  }
  return out;
}

struct ManifestEntry {
  std::string scene_path;
  int row = 0, col = 0;
};

struct Manifest {
  int size = kDefaultCropSize;
  int stride = kDefaultCropStride;
  int factor = kDefaultCoarseFactor;
  std::vector<ManifestEntry> entries;
};

inline void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream f(path);
  require(static_cast<bool>(f), Err::IoFailure, "cannot open manifest for writing: " + path);
  f << "s2a-manifest v1\n";
  f << "size " << m.size << " stride " << m.stride << " factor " << m.factor << "\n";
  for (const auto& e : m.entries) f << e.scene_path << "\t" << e.row << "\t" << e.col << "\n";
  require(static_cast<bool>(f), Err::IoFailure, "manifest write failed: " + path);
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), Err::IoFailure, "cannot open manifest: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(f, line)), Err::TruncatedPayload, "empty manifest");
  require(line == "s2a-manifest v1", Err::MagicMismatch, "not a dataset manifest: " + path);
  Manifest m;
  std::string key;
  require(static_cast<bool>(std::getline(f, line)), Err::TruncatedPayload, "manifest missing header");
  std::istringstream hdr(line);
  require(static_cast<bool>(hdr >> key >> m.size) && key == "size" &&
              static_cast<bool>(hdr >> key >> m.stride) && key == "stride" &&
              static_cast<bool>(hdr >> key >> m.factor) && key == "factor",
          Err::TruncatedPayload, "malformed manifest header");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
    require(t1 != std::string::npos && t2 != std::string::npos, Err::TruncatedPayload,
            "malformed manifest entry: " + line);
    ManifestEntry e;
    e.scene_path = line.substr(0, t1);
    e.row = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
    e.col = std::stoi(line.substr(t2 + 1));
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace s2a
