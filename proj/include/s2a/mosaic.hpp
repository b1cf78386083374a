#pragma once

#include <cmath>
#include <functional>
#include <thread>
#include <utility>
#include <vector>

#include "s2a/attention.hpp"
#include "s2a/common.hpp"
#include "s2a/datapipe.hpp"
#include "s2a/nn.hpp"
#include "s2a/raster.hpp"
#include "s2a/resample.hpp"
#include "s2a/tensor.hpp"

namespace s2a {

struct TilePlan {
  int patch = kDefaultCropSize;
  int stride = kDefaultCropStride;
  std::vector<std::pair<int, int>> origins;
};

inline TilePlan plan_tiles(int height, int width, int patch = kDefaultCropSize,
                           int stride = kDefaultCropStride) {
  TilePlan plan;
  plan.patch = patch;
  plan.stride = stride;
  auto rows = window_origins(height, patch, stride);
  auto cols = window_origins(width, patch, stride);
  plan.origins.reserve(rows.size() * cols.size());
  for (int r : rows)
    for (int c : cols) plan.origins.emplace_back(r, c);
  return plan;
}

// Separable Gaussian blending weights, peaked at the patch center.
struct FeatherWeights {
  int patch = 0;
  std::vector<double> w;  // patch * patch, strictly positive

  explicit FeatherWeights(int patch_size, double sigma = 0.0) : patch(patch_size) {
    require(patch >= 1, Err::BadDims, "feather patch must be >= 1");
    if (sigma <= 0.0) sigma = patch / 4.0;
    double ctr = (patch - 1) / 2.0;
    std::vector<double> axis(patch);
    for (int i = 0; i < patch; ++i) {
      double d = i - ctr;
      axis[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    w.resize(static_cast<std::size_t>(patch) * patch);
    for (int r = 0; r < patch; ++r)
      for (int c = 0; c < patch; ++c) w[static_cast<std::size_t>(r) * patch + c] = axis[r] * axis[c];
  }
};

// One tile evaluation: 3-band source patch + 1-band attention patch in, one
// synthesized band out (row-major patch plane).
using TileFn =
    std::function<std::vector<float>(const std::vector<float>& z3, const std::vector<float>& a1, int patch)>;

// Wraps the trained pair into a TileFn: the critic's taps on the attention
// source produce A_s, which conditions the generator.
template <class T>
TileFn make_model_tile_fn(const ParamStoreT<T>& gen, const ParamStoreT<T>& disc,
                          const NetConfig& cfg, AttentionVariant variant) {
  return [&gen, &disc, cfg, variant](const std::vector<float>& z3, const std::vector<float>& a1,
                                     int patch) {
    std::size_t pix = static_cast<std::size_t>(patch) * patch;
    TensorT<T> zt(1, 3, patch, patch), at(1, 1, patch, patch);
    for (std::size_t i = 0; i < 3 * pix; ++i) zt.d[i] = static_cast<T>(z3[i]);
    for (std::size_t i = 0; i < pix; ++i) at.d[i] = static_cast<T>(a1[i]);
    auto taps = discriminator_forward(disc, cfg, ad::constant(std::move(at))).taps;
    auto a_s = spatial_attention(taps, variant);
    auto out = generator_forward(gen, cfg, ad::constant(std::move(zt)), a_s);
    std::vector<float> res(pix);
    for (std::size_t i = 0; i < pix; ++i) res[i] = static_cast<float>(out->v.d[i]);
    return res;
  };
}

// Feather-weighted tiled inference. Tile contents may be computed on several
// threads; accumulation runs in plan order so the result is independent of
// the thread count.
inline MultiBandRaster synthesize_scene(const TileFn& tile_fn, const MultiBandRaster& source,
                                        const Plane& attention_source, const TilePlan& plan,
                                        const FeatherWeights& feather, int threads = 1) {
  require(source.height == attention_source.height && source.width == attention_source.width,
          Err::ShapeMismatch, "attention source dims must match scene");
  require(feather.patch == plan.patch, Err::ShapeMismatch, "feather size must match patch size");
  const float* g = source.plane(source.band_or_throw("G"));
  const float* r = source.plane(source.band_or_throw("R"));
  const float* nir = source.plane(source.band_or_throw("NIR"));
  int patch = plan.patch;
  std::size_t pix = static_cast<std::size_t>(patch) * patch;

  std::vector<std::vector<float>> outputs(plan.origins.size());
  auto run_tile = [&](std::size_t t) {
    auto [r0, c0] = plan.origins[t];
    std::vector<float> z(3 * pix), a(pix);
    detail::copy_window(g, source.width, r0, c0, patch, z.data());
    detail::copy_window(r, source.width, r0, c0, patch, z.data() + pix);
    detail::copy_window(nir, source.width, r0, c0, patch, z.data() + 2 * pix);
    detail::copy_window(attention_source.v.data(), attention_source.width, r0, c0, patch, a.data());
    outputs[t] = tile_fn(z, a, patch);
    require(outputs[t].size() == pix, Err::ShapeMismatch, "tile function returned wrong size");
  };
  if (threads <= 1 || plan.origins.size() < 2) {
    for (std::size_t t = 0; t < plan.origins.size(); ++t) run_tile(t);
  } else {
    std::size_t nthreads = std::min<std::size_t>(threads, plan.origins.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < nthreads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < plan.origins.size(); t += nthreads) run_tile(t);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<double> num(static_cast<std::size_t>(source.height) * source.width, 0.0);
  std::vector<double> den(num.size(), 0.0);
  for (std::size_t t = 0; t < plan.origins.size(); ++t) {
    auto [r0, c0] = plan.origins[t];
    for (int pr = 0; pr < patch; ++pr)
      for (int pc = 0; pc < patch; ++pc) {
        std::size_t at = static_cast<std::size_t>(r0 + pr) * source.width + (c0 + pc);
        double wgt = feather.w[static_cast<std::size_t>(pr) * patch + pc];
        num[at] += wgt * outputs[t][static_cast<std::size_t>(pr) * patch + pc];
        den[at] += wgt;
      }
  }

  MultiBandRaster out(1, source.height, source.width, {"SWIR"});
  for (std::size_t i = 0; i < num.size(); ++i) {
    require(den[i] > 0.0, Err::UncoveredPixels, "tile plan left a pixel uncovered");
    out.data[i] = static_cast<float>(num[i] / den[i]);
  }
  return out;
}

// Where the generator's conditioning map comes from at inference time.
struct AttentionSourceMode {
  enum Kind { CoarseSwir, Substitute } kind = CoarseSwir;
  std::string band;  // for Substitute
};

inline AttentionSourceMode parse_attention_source(const std::string& s) {
  if (s == "coarse") return {AttentionSourceMode::CoarseSwir, ""};
  if (s.rfind("band:", 0) == 0 && s.size() > 5) return {AttentionSourceMode::Substitute, s.substr(5)};
  fail(Err::BadConfig, "attention source must be 'coarse' or 'band:<NAME>', got '" + s + "'");
}

// coarse mode: bicubic-upsampled coarse SWIR (simulated from the scene's own
// SWIR when no coarse raster is supplied); substitute mode: a named
// high-resolution band passed through unchanged.
inline Plane attention_source_select(const MultiBandRaster& scene, const MultiBandRaster* coarse,
                                     int factor, const AttentionSourceMode& mode) {
  Plane out(scene.height, scene.width);
  if (mode.kind == AttentionSourceMode::Substitute) {
    const float* b = scene.plane(scene.band_or_throw(mode.band));
    std::copy_n(b, out.size(), out.v.begin());
    return out;
  }
  if (coarse) {
    require(scene.height % coarse->height == 0 && scene.width % coarse->width == 0,
            Err::DimensionMismatch, "coarse dims must divide scene dims");
    int f = scene.height / coarse->height;
    require(f >= 1 && scene.width / coarse->width == f, Err::DimensionMismatch,
            "coarse factor differs between axes");
    const float* cs =
        coarse->bands == 1 ? coarse->plane(0) : coarse->plane(coarse->band_or_throw("SWIR"));
    Plane cp(coarse->height, coarse->width);
    std::copy_n(cs, cp.size(), cp.v.begin());
    Plane up = upsample_bicubic(cp, f);
    for (auto& v : up.v) v = std::clamp(v, 0.0f, 1.0f);
    return up;
  }
  const float* swir = scene.plane(scene.band_or_throw("SWIR"));
  Plane sp(scene.height, scene.width);
  std::copy_n(swir, sp.size(), sp.v.begin());
  return simulate_coarse_band(sp, factor);
}

inline void clamp01(MultiBandRaster& r) {
  for (auto& v : r.data) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace s2a
