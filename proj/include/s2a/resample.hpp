#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "s2a/common.hpp"

namespace s2a {

// Single-plane image carried as a flat row-major buffer.
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<float> v;

  Plane() = default;
  Plane(int m, int n, float fill = 0.0f) : height(m), width(n), v(static_cast<std::size_t>(m) * n, fill) {}

  float& at(int r, int c) { return v[static_cast<std::size_t>(r) * width + c]; }
  float at(int r, int c) const { return v[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return v.size(); }
};

// Area-average pooling over f x f blocks.
inline Plane downsample(const Plane& p, int f) {
  require(f >= 1, Err::BadDims, "factor must be >= 1");
  require(p.height % f == 0 && p.width % f == 0, Err::NonDivisibleDims,
          "plane dims must be divisible by the factor");
  Plane out(p.height / f, p.width / f);
  double inv = 1.0 / (static_cast<double>(f) * f);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c) {
      double acc = 0.0;
      for (int dr = 0; dr < f; ++dr)
        for (int dc = 0; dc < f; ++dc) acc += p.at(r * f + dr, c * f + dc);
      out.at(r, c) = static_cast<float>(acc * inv);
    }
  return out;
}

namespace detail {
// Catmull-Rom (cubic convolution, a = -0.5)
inline void catmull_rom_weights(double t, double w[4]) {
  double t2 = t * t, t3 = t2 * t;
  w[0] = -0.5 * t3 + t2 - 0.5 * t;
  w[1] = 1.5 * t3 - 2.5 * t2 + 1.0;
  w[2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t;
  w[3] = 0.5 * t3 - 0.5 * t2;
}
}  // namespace detail

// Separable bicubic interpolation with edge replication; exact on constants
// and, away from edges, on linear ramps.
inline Plane upsample_bicubic(const Plane& p, int f) {
  require(f >= 1, Err::BadDims, "factor must be >= 1");
  for (float x : p.v) require(std::isfinite(x), Err::NonFiniteInput, "upsample saw non-finite value");
  if (f == 1) return p;

  int M = p.height, N = p.width;
  int OM = M * f, ON = N * f;

  // horizontal pass
  Plane tmp(M, ON);
  std::vector<int> cidx(static_cast<std::size_t>(ON) * 4);
  std::vector<double> cw(static_cast<std::size_t>(ON) * 4);
  for (int oc = 0; oc < ON; ++oc) {
    double src = (oc + 0.5) / f - 0.5;
    int base = static_cast<int>(std::floor(src));
    double t = src - base;
    double w[4];
    detail::catmull_rom_weights(t, w);
    for (int k = 0; k < 4; ++k) {
      cidx[oc * 4 + k] = std::clamp(base - 1 + k, 0, N - 1);
      cw[oc * 4 + k] = w[k];
    }
  }
  for (int r = 0; r < M; ++r)
    for (int oc = 0; oc < ON; ++oc) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += cw[oc * 4 + k] * p.at(r, cidx[oc * 4 + k]);
      tmp.at(r, oc) = static_cast<float>(acc);
    }

  // vertical pass
  Plane out(OM, ON);
  for (int orow = 0; orow < OM; ++orow) {
    double src = (orow + 0.5) / f - 0.5;
    int base = static_cast<int>(std::floor(src));
    double t = src - base;
    double w[4];
    detail::catmull_rom_weights(t, w);
    int ridx[4];
    for (int k = 0; k < 4; ++k) ridx[k] = std::clamp(base - 1 + k, 0, M - 1);
    for (int oc = 0; oc < ON; ++oc) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += w[k] * tmp.at(ridx[k], oc);
      out.at(orow, oc) = static_cast<float>(acc);
    }
  }
  return out;
}

// 3x3 box blur with clamped (replicated) edges.
inline Plane box_blur3(const Plane& p) {
  Plane out(p.height, p.width);
  for (int r = 0; r < p.height; ++r)
    for (int c = 0; c < p.width; ++c) {
      double acc = 0.0;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          int rr = std::clamp(r + dr, 0, p.height - 1);
          int cc = std::clamp(c + dc, 0, p.width - 1);
          acc += p.at(rr, cc);
        }
      out.at(r, c) = static_cast<float>(acc / 9.0);
    }
  return out;
}

}  // namespace s2a
