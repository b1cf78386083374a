#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "s2a/common.hpp"
#include "s2a/raster.hpp"

namespace s2a {

namespace detail {

// Neumaier-compensated accumulation so aggregate metrics are order-stable.
struct Kahan {
  double sum = 0.0, comp = 0.0;
  void add(double v) {
    double t = sum + v;
    comp += std::fabs(sum) >= std::fabs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

inline void check_same_dims(std::size_t a, std::size_t b) {
  require(a == b && a > 0, Err::ShapeMismatch, "metric inputs must share nonempty dims");
}

}  // namespace detail

inline double mse(const float* pred, const float* gt, std::size_t n) {
  detail::Kahan acc;
  for (std::size_t i = 0; i < n; ++i) {
    double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    acc.add(d * d);
  }
  return acc.value() / static_cast<double>(n);
}

inline double rmse(const std::vector<float>& pred, const std::vector<float>& gt) {
  detail::check_same_dims(pred.size(), gt.size());
  return std::sqrt(mse(pred.data(), gt.data(), pred.size()));
}

// +inf sentinel when the images agree exactly.
inline double psnr(const std::vector<float>& pred, const std::vector<float>& gt,
                   double peak = 1.0) {
  detail::check_same_dims(pred.size(), gt.size());
  double m = mse(pred.data(), gt.data(), pred.size());
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

// Signal-to-reconstruction error: mean-signal power over reconstruction MSE.
inline double sre(const std::vector<float>& pred, const std::vector<float>& gt) {
  detail::check_same_dims(pred.size(), gt.size());
  detail::Kahan mean_acc;
  for (float v : gt) mean_acc.add(v);
  double mu = mean_acc.value() / static_cast<double>(gt.size());
  require(mu != 0.0, Err::ZeroMeanSignal, "sre undefined for zero-mean reference");
  double m = mse(pred.data(), gt.data(), pred.size());
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(mu * mu / m);
}

// Mean SSIM over dense 8x8 uniform sliding windows, in percent.
inline double ssim_percent(const std::vector<float>& pred, const std::vector<float>& gt,
                           int height, int width, double peak = 1.0, int win = 8) {
  detail::check_same_dims(pred.size(), gt.size());
  require(static_cast<std::size_t>(height) * width == pred.size(), Err::ShapeMismatch,
          "ssim: dims do not match buffer");
  require(height >= win && width >= win, Err::BadDims, "ssim: image smaller than window");
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const double inv_n = 1.0 / (win * win);
  detail::Kahan total;
  std::size_t windows = 0;
  for (int r0 = 0; r0 + win <= height; ++r0)
    for (int c0 = 0; c0 + win <= width; ++c0) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int r = r0; r < r0 + win; ++r)
        for (int c = c0; c < c0 + win; ++c) {
          double a = pred[static_cast<std::size_t>(r) * width + c];
          double b = gt[static_cast<std::size_t>(r) * width + c];
          sa += a;
          sb += b;
          saa += a * a;
          sbb += b * b;
          sab += a * b;
        }
      double ma = sa * inv_n, mb = sb * inv_n;
      double va = saa * inv_n - ma * ma, vb = sbb * inv_n - mb * mb;
      double cov = sab * inv_n - ma * mb;
      double s = ((2 * ma * mb + c1) * (2 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (va + vb + c2));
      total.add(s);
      ++windows;
    }
  return 100.0 * total.value() / static_cast<double>(windows);
}

// Mean spectral angle in degrees between per-pixel band vectors. Stacks are
// band-major planes of equal shape; zero-norm pixels are skipped and counted.
struct SamResult {
  double degrees = 0.0;
  std::size_t skipped = 0;
};

inline SamResult sam_degrees(const std::vector<const float*>& a, const std::vector<const float*>& b,
                             std::size_t pixels) {
  require(!a.empty() && a.size() == b.size(), Err::ShapeMismatch,
          "sam: stacks must have the same nonzero band count");
  detail::Kahan acc;
  std::size_t used = 0, skipped = 0;
  std::size_t bands = a.size();
  for (std::size_t p = 0; p < pixels; ++p) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < bands; ++k) {
      double x = a[k][p], y = b[k][p];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) {
      ++skipped;
      continue;
    }
    double cosv = dot / (std::sqrt(na) * std::sqrt(nb));
    cosv = std::min(1.0, std::max(-1.0, cosv));
    acc.add(std::acos(cosv));
    ++used;
  }
  require(used > 0, Err::AllPixelsDegenerate, "sam: every pixel had a zero-norm vector");
  return {acc.value() / static_cast<double>(used) * (180.0 / M_PI), skipped};
}

// (G - SWIR) / (G + SWIR), with 0/0 defined as 0.
inline std::vector<float> mndwi(const std::vector<float>& g, const std::vector<float>& swir) {
  detail::check_same_dims(g.size(), swir.size());
  std::vector<float> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = static_cast<double>(g[i]) + swir[i];
    out[i] = s == 0.0 ? 0.0f : static_cast<float>((static_cast<double>(g[i]) - swir[i]) / s);
  }
  return out;
}

inline BinaryMask threshold_mask(const std::vector<float>& plane, int height, int width, float t) {
  require(static_cast<std::size_t>(height) * width == plane.size(), Err::ShapeMismatch,
          "threshold_mask: dims do not match buffer");
  BinaryMask m(height, width);
  for (std::size_t i = 0; i < plane.size(); ++i) {
    require(std::isfinite(plane[i]), Err::NonFiniteInput, "threshold_mask saw non-finite value");
    m.values[i] = plane[i] > t ? 1 : 0;
  }
  return m;
}

// |a AND b| / |a OR b|; two empty masks compare equal (1).
inline double iou(const BinaryMask& a, const BinaryMask& b) {
  require(a.height == b.height && a.width == b.width, Err::ShapeMismatch, "iou: dims differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    inter += a.values[i] & b.values[i];
    uni += a.values[i] | b.values[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct MetricReport {
  double rmse = 0, psnr_db = 0, sre_db = 0, ssim_percent = 0, sam_deg = 0;
  std::size_t sam_skipped = 0;
  double mndwi_iou = -1;  // -1 when not computed
  double scale_peak = 1.0;
};

// Full quality report for a predicted SWIR plane against ground truth. SAM
// vectors stack the (synthesized-or-true) SWIR with the shared true bands so
// only the synthesized component differs.
inline MetricReport evaluate_report(const std::vector<float>& pred_swir,
                                    const std::vector<float>& gt_swir,
                                    const MultiBandRaster& source, int height, int width,
                                    double peak = 1.0, double mndwi_threshold = 0.0) {
  require(static_cast<std::size_t>(height) * width == pred_swir.size(), Err::ShapeMismatch,
          "evaluate_report: dims do not match prediction");
  detail::check_same_dims(pred_swir.size(), gt_swir.size());
  require(source.height == height && source.width == width, Err::ShapeMismatch,
          "evaluate_report: source scene dims differ");
  MetricReport r;
  r.scale_peak = peak;
  r.rmse = rmse(pred_swir, gt_swir);
  r.psnr_db = psnr(pred_swir, gt_swir, peak);
  r.sre_db = sre(pred_swir, gt_swir);
  r.ssim_percent = ssim_percent(pred_swir, gt_swir, height, width, peak);

  const float* g = source.plane(source.band_or_throw("G"));
  const float* red = source.plane(source.band_or_throw("R"));
  const float* nir = source.plane(source.band_or_throw("NIR"));
  auto s = sam_degrees({pred_swir.data(), nir, red, g}, {gt_swir.data(), nir, red, g},
                       pred_swir.size());
  r.sam_deg = s.degrees;
  r.sam_skipped = s.skipped;

  std::vector<float> gvec(g, g + pred_swir.size());
  auto m_pred = threshold_mask(mndwi(gvec, pred_swir), height, width,
                               static_cast<float>(mndwi_threshold));
  auto m_gt = threshold_mask(mndwi(gvec, gt_swir), height, width,
                             static_cast<float>(mndwi_threshold));
  r.mndwi_iou = iou(m_pred, m_gt);
  return r;
}

// Aligned-column table, one row per report, column order fixed.
inline std::string metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::string out = "name                 RMSE      SSIM(%)   SRE(dB)   PSNR(dB)  SAM(deg)  IoU\n";
  char buf[256];
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof(buf), "%-20s %-9.5f %-9.3f %-9.3f %-9.3f %-9.4f %-9.4f\n",
                  name.c_str(), r.rmse, r.ssim_percent, r.sre_db, r.psnr_db, r.sam_deg,
                  r.mndwi_iou);
    out += buf;
  }
  return out;
}

}  // namespace s2a
