#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "s2a/common.hpp"

namespace s2a {

// Dense 4-d tensor, layout [batch, channel, height, width], row-major.
// Scalars are [1,1,1,1]; per-sample scalars [B,1,1,1]; conv weights
// [out_ch, in_ch, k, k]; 1x1 "linear" weights [out, in, 1, 1].
template <class T>
struct TensorT {
  int n = 1, c = 1, h = 1, w = 1;
  std::vector<T> d;

  TensorT() : d(1, T(0)) {}
  TensorT(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_),
        d(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t numel() const { return d.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  T* pl(int b, int ch) { return d.data() + (static_cast<std::size_t>(b) * c + ch) * plane(); }
  const T* pl(int b, int ch) const {
    return d.data() + (static_cast<std::size_t>(b) * c + ch) * plane();
  }

  T& at(int b, int ch, int y, int x) {
    return d[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x];
  }
  T at(int b, int ch, int y, int x) const {
    return d[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x];
  }

  bool same_shape(const TensorT& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  bool all_finite() const {
    for (T x : d)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  static TensorT full(int n, int c, int h, int w, T v) { return TensorT(n, c, h, w, v); }
};

using Tensor = TensorT<float>;

}  // namespace s2a
