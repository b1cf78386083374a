#pragma once

// Reverse-mode autodiff on a dynamic tape. Every primitive's VJP is itself
// expressed through these primitives, so gradients are ordinary graph nodes
// and can be differentiated again (required for the gradient-penalty term,
// whose parameter gradient is a derivative of an input-gradient norm).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "s2a/common.hpp"
#include "s2a/tensor.hpp"

namespace s2a::ad {

template <class T>
struct NodeT;

template <class T>
using Ptr = std::shared_ptr<NodeT<T>>;

template <class T>
struct NodeT {
  TensorT<T> v;
  bool ng = false;  // participates in differentiation
  std::vector<Ptr<T>> parents;
  // Maps the cotangent of this node to cotangents of its parents, building
  // new graph nodes. Entries may be null for parents that need no gradient.
  std::function<std::vector<Ptr<T>>(const Ptr<T>& self, const Ptr<T>& gout)> vjp;
};

template <class T>
Ptr<T> leaf(TensorT<T> value, bool needs_grad) {
  auto node = std::make_shared<NodeT<T>>();
  node->v = std::move(value);
  node->ng = needs_grad;
  return node;
}

template <class T>
Ptr<T> constant(TensorT<T> value) {
  return leaf(std::move(value), false);
}

template <class T>
Ptr<T> detach(const Ptr<T>& x) {
  return constant(x->v);
}

namespace detail {

template <class T>
Ptr<T> make_op(TensorT<T> value, std::vector<Ptr<T>> parents,
               std::function<std::vector<Ptr<T>>(const Ptr<T>&, const Ptr<T>&)> vjp) {
  auto node = std::make_shared<NodeT<T>>();
  node->v = std::move(value);
  node->parents = std::move(parents);
  for (const auto& p : node->parents) node->ng = node->ng || p->ng;
  if (node->ng) node->vjp = std::move(vjp);
  return node;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise primitives
// ---------------------------------------------------------------------------

template <class T>
Ptr<T> add(const Ptr<T>& a, const Ptr<T>& b) {
  require(a->v.same_shape(b->v), Err::ShapeMismatch, "add: shapes differ");
  TensorT<T> out = a->v;
  for (std::size_t i = 0; i < out.numel(); ++i) out.d[i] += b->v.d[i];
  return detail::make_op<T>(std::move(out), {a, b},
                            [](const Ptr<T>&, const Ptr<T>& g) {
                              return std::vector<Ptr<T>>{g, g};
                            });
}

template <class T>
Ptr<T> mul(const Ptr<T>& a, const Ptr<T>& b) {
  require(a->v.same_shape(b->v), Err::ShapeMismatch, "mul: shapes differ");
  TensorT<T> out = a->v;
  for (std::size_t i = 0; i < out.numel(); ++i) out.d[i] *= b->v.d[i];
  return detail::make_op<T>(std::move(out), {a, b},
                            [a, b](const Ptr<T>&, const Ptr<T>& g) {
                              return std::vector<Ptr<T>>{mul(g, b), mul(g, a)};
                            });
}

template <class T>
Ptr<T> scale(const Ptr<T>& a, T s) {
  TensorT<T> out = a->v;
  for (auto& x : out.d) x *= s;
  return detail::make_op<T>(std::move(out), {a},
                            [s](const Ptr<T>&, const Ptr<T>& g) {
                              return std::vector<Ptr<T>>{scale(g, s)};
                            });
}

template <class T>
Ptr<T> add_const(const Ptr<T>& a, T s) {
  TensorT<T> out = a->v;
  for (auto& x : out.d) x += s;
  return detail::make_op<T>(std::move(out), {a},
                            [](const Ptr<T>&, const Ptr<T>& g) {
                              return std::vector<Ptr<T>>{g};
                            });
}

template <class T>
Ptr<T> neg(const Ptr<T>& a) {
  return scale(a, T(-1));
}

template <class T>
Ptr<T> sub(const Ptr<T>& a, const Ptr<T>& b) {
  return add(a, neg(b));
}

// Elementwise unary ops whose local derivative is a constant mask (the mask
// is treated as locally constant, as usual for piecewise-linear functions).
template <class T>
Ptr<T> relu(const Ptr<T>& a) {
  TensorT<T> out = a->v, mask = a->v;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    mask.d[i] = out.d[i] > T(0) ? T(1) : T(0);
    out.d[i] = std::max(out.d[i], T(0));
  }
  auto mk = constant(std::move(mask));
  return detail::make_op<T>(std::move(out), {a},
                            [mk](const Ptr<T>&, const Ptr<T>& g) {
                              return std::vector<Ptr<T>>{mul(g, mk)};
                            });
}

template <class T>
Ptr<T> leaky_relu(const Ptr<T>& a, T slope) {
  TensorT<T> out = a->v, mask = a->v;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    bool pos = out.d[i] > T(0);
    mask.d[i] = pos ? T(1) : slope;
    if (!pos) out.d[i] *= slope;
  }
  auto mk = constant(std::move(mask));
  return detail::make_op<T>(std::move(out), {a},
                            [mk](const Ptr<T>&, const Ptr<T>& g) {
                              return std::vector<Ptr<T>>{mul(g, mk)};
                            });
}

template <class T>
Ptr<T> absval(const Ptr<T>& a) {
  TensorT<T> out = a->v, mask = a->v;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    mask.d[i] = out.d[i] > T(0) ? T(1) : (out.d[i] < T(0) ? T(-1) : T(0));
    out.d[i] = std::abs(out.d[i]);
  }
  auto mk = constant(std::move(mask));
  return detail::make_op<T>(std::move(out), {a},
                            [mk](const Ptr<T>&, const Ptr<T>& g) {
                              return std::vector<Ptr<T>>{mul(g, mk)};
                            });
}

template <class T>
Ptr<T> recip0(const Ptr<T>& a);

template <class T>
Ptr<T> sigmoid(const Ptr<T>& a) {
  TensorT<T> out = a->v;
  for (auto& x : out.d) x = T(1) / (T(1) + std::exp(-x));
  return detail::make_op<T>(std::move(out), {a},
                            [](const Ptr<T>& self, const Ptr<T>& g) {
                              // g * s * (1 - s); self stays a live graph node so
                              // higher derivatives flow through it
                              return std::vector<Ptr<T>>{
                                  mul(g, mul(self, add_const(neg(self), T(1))))};
                            });
}

template <class T>
Ptr<T> sqrtv(const Ptr<T>& a) {
  TensorT<T> out = a->v;
  for (auto& x : out.d) x = std::sqrt(x);
  return detail::make_op<T>(std::move(out), {a},
                            [](const Ptr<T>& self, const Ptr<T>& g) {
                              // g / (2 sqrt(a)); rebuilt from the output so higher
                              // derivatives stay available
                              return std::vector<Ptr<T>>{
                                  scale(mul(g, recip0(self)), T(0.5))};
                            });
}

// Elementwise reciprocal with 0 -> 0 (used for the degenerate min==max rule).
template <class T>
Ptr<T> recip0(const Ptr<T>& a) {
  TensorT<T> out = a->v;
  for (auto& x : out.d) x = (x == T(0)) ? T(0) : T(1) / x;
  return detail::make_op<T>(std::move(out), {a},
                            [](const Ptr<T>& self, const Ptr<T>& g) {
                              // d(1/x)/dx = -1/x^2 = -y^2; masked zeros give 0
                              return std::vector<Ptr<T>>{neg(mul(g, mul(self, self)))};
                            });
}

// ---------------------------------------------------------------------------
// Broadcast / reduce (adjoint pair). Source/target axes must match or be 1;
// spatial dims either match or collapse to 1x1 jointly.
// ---------------------------------------------------------------------------

template <class T>
Ptr<T> bsum(const Ptr<T>& a, int n, int c, int h, int w);

template <class T>
Ptr<T> bcast(const Ptr<T>& a, int n, int c, int h, int w) {
  const auto& x = a->v;
  require((x.n == n || x.n == 1) && (x.c == c || x.c == 1), Err::ShapeMismatch,
          "bcast: incompatible batch/channel dims");
  require((x.h == h && x.w == w) || (x.h == 1 && x.w == 1), Err::ShapeMismatch,
          "bcast: spatial dims must match or be 1x1");
  TensorT<T> out(n, c, h, w);
  std::size_t pl = out.plane();
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x.pl(x.n == 1 ? 0 : b, x.c == 1 ? 0 : ch);
      T* dst = out.pl(b, ch);
      if (x.h == 1 && x.w == 1)
        std::fill(dst, dst + pl, src[0]);
      else
        std::copy(src, src + pl, dst);
    }
  int xn = x.n, xc = x.c, xh = x.h, xw = x.w;
  return detail::make_op<T>(std::move(out), {a},
                            [xn, xc, xh, xw](const Ptr<T>&, const Ptr<T>& g) {
                              return std::vector<Ptr<T>>{bsum(g, xn, xc, xh, xw)};
                            });
}

template <class T>
Ptr<T> bsum(const Ptr<T>& a, int n, int c, int h, int w) {
  const auto& x = a->v;
  require((x.n == n || n == 1) && (x.c == c || c == 1), Err::ShapeMismatch,
          "bsum: incompatible batch/channel dims");
  require((x.h == h && x.w == w) || (h == 1 && w == 1), Err::ShapeMismatch,
          "bsum: spatial dims must match or be 1x1");
  TensorT<T> out(n, c, h, w);
  bool squash_hw = (h == 1 && w == 1 && (x.h != 1 || x.w != 1));
  std::size_t pl = x.plane();
  for (int b = 0; b < x.n; ++b)
    for (int ch = 0; ch < x.c; ++ch) {
      const T* src = x.pl(b, ch);
      T* dst = out.pl(n == 1 ? 0 : b, c == 1 ? 0 : ch);
      if (squash_hw) {
        T acc = T(0);
        for (std::size_t i = 0; i < pl; ++i) acc += src[i];
        dst[0] += acc;
      } else {
        for (std::size_t i = 0; i < pl; ++i) dst[i] += src[i];
      }
    }
  int xn = x.n, xc = x.c, xh = x.h, xw = x.w;
  return detail::make_op<T>(std::move(out), {a},
                            [xn, xc, xh, xw](const Ptr<T>&, const Ptr<T>& g) {
                              return std::vector<Ptr<T>>{bcast(g, xn, xc, xh, xw)};
                            });
}

template <class T>
Ptr<T> sum_all(const Ptr<T>& a) {
  return bsum(a, 1, 1, 1, 1);
}

template <class T>
Ptr<T> mean_all(const Ptr<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a->v.numel()));
}

template <class T>
Ptr<T> channel_sum(const Ptr<T>& a) {
  return bsum(a, a->v.n, 1, a->v.h, a->v.w);
}

template <class T>
Ptr<T> per_sample_sum(const Ptr<T>& a) {
  return bsum(a, a->v.n, 1, 1, 1);
}

template <class T>
Ptr<T> global_avg_pool(const Ptr<T>& a) {
  return scale(bsum(a, a->v.n, a->v.c, 1, 1), T(1) / static_cast<T>(a->v.plane()));
}

// ---------------------------------------------------------------------------
// Per-plane extrema (argext treated as locally constant)
// ---------------------------------------------------------------------------

namespace detail {
template <class T, class Cmp>
Ptr<T> plane_ext(const Ptr<T>& a, Cmp better) {
  const auto& x = a->v;
  TensorT<T> out(x.n, x.c, 1, 1);
  TensorT<T> mask(x.n, x.c, x.h, x.w, T(0));
  std::size_t pl = x.plane();
  for (int b = 0; b < x.n; ++b)
    for (int ch = 0; ch < x.c; ++ch) {
      const T* src = x.pl(b, ch);
      std::size_t best = 0;
      for (std::size_t i = 1; i < pl; ++i)
        if (better(src[i], src[best])) best = i;
      out.at(b, ch, 0, 0) = src[best];
      mask.pl(b, ch)[best] = T(1);
    }
  auto mk = constant(std::move(mask));
  int n = x.n, c = x.c, h = x.h, w = x.w;
  return make_op<T>(std::move(out), {a},
                    [mk, n, c, h, w](const Ptr<T>&, const Ptr<T>& g) {
                      return std::vector<Ptr<T>>{mul(bcast(g, n, c, h, w), mk)};
                    });
}
}  // namespace detail

template <class T>
Ptr<T> plane_min(const Ptr<T>& a) {
  return detail::plane_ext(a, [](T x, T y) { return x < y; });
}

template <class T>
Ptr<T> plane_max(const Ptr<T>& a) {
  return detail::plane_ext(a, [](T x, T y) { return x > y; });
}

// Min subtraction / max division per (sample, channel) plane; a constant
// plane maps to all zeros.
template <class T>
Ptr<T> plane_norm01(const Ptr<T>& a) {
  int n = a->v.n, c = a->v.c, h = a->v.h, w = a->v.w;
  auto mn = plane_min(a);
  auto rng_inv = recip0(sub(plane_max(a), mn));
  return mul(sub(a, bcast(mn, n, c, h, w)), bcast(rng_inv, n, c, h, w));
}

// ---------------------------------------------------------------------------
// Channel concat / slice
// ---------------------------------------------------------------------------

template <class T>
Ptr<T> slice_c(const Ptr<T>& a, int c0, int len);

template <class T>
Ptr<T> concat_c(const std::vector<Ptr<T>>& parts) {
  require(!parts.empty(), Err::ShapeMismatch, "concat_c: no inputs");
  if (parts.size() == 1) return parts[0];
  int n = parts[0]->v.n, h = parts[0]->v.h, w = parts[0]->v.w, c = 0;
  for (const auto& p : parts) {
    require(p->v.n == n && p->v.h == h && p->v.w == w, Err::ShapeMismatch,
            "concat_c: mismatched dims");
    c += p->v.c;
  }
  TensorT<T> out(n, c, h, w);
  std::size_t pl = out.plane();
  for (int b = 0; b < n; ++b) {
    int ch = 0;
    for (const auto& p : parts) {
      std::copy(p->v.pl(b, 0), p->v.pl(b, 0) + p->v.c * pl, out.pl(b, ch));
      ch += p->v.c;
    }
  }
  std::vector<int> widths;
  for (const auto& p : parts) widths.push_back(p->v.c);
  return detail::make_op<T>(std::move(out), parts,
                            [widths](const Ptr<T>&, const Ptr<T>& g) {
                              std::vector<Ptr<T>> gs;
                              int off = 0;
                              for (int wd : widths) {
                                gs.push_back(slice_c(g, off, wd));
                                off += wd;
                              }
                              return gs;
                            });
}

template <class T>
Ptr<T> slice_c(const Ptr<T>& a, int c0, int len) {
  const auto& x = a->v;
  require(c0 >= 0 && len >= 1 && c0 + len <= x.c, Err::ShapeMismatch, "slice_c: bad range");
  TensorT<T> out(x.n, len, x.h, x.w);
  std::size_t pl = x.plane();
  for (int b = 0; b < x.n; ++b)
    std::copy(x.pl(b, c0), x.pl(b, c0) + len * pl, out.pl(b, 0));
  int xc = x.c, xn = x.n, xh = x.h, xw = x.w;
  return detail::make_op<T>(std::move(out), {a},
                            [c0, len, xc, xn, xh, xw](const Ptr<T>&, const Ptr<T>& g) {
                              // embed g back into a zero tensor of the input shape
                              std::vector<Ptr<T>> parts;
                              if (c0 > 0) parts.push_back(constant(TensorT<T>(xn, c0, xh, xw)));
                              parts.push_back(g);
                              if (c0 + len < xc)
                                parts.push_back(constant(TensorT<T>(xn, xc - c0 - len, xh, xw)));
                              return std::vector<Ptr<T>>{concat_c(parts)};
                            });
}

// ---------------------------------------------------------------------------
// Convolution family. Stride 1, odd kernel, symmetric "same" padding
// pad = dilation * (k-1) / 2, so spatial dims are preserved everywhere.
// The three kernels below realize one trilinear form <conv(x,w), g> and are
// each other's adjoints, which closes the VJP table at any derivative order.
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// col[(ci,u,v), p] = x_b[ci, py + u*d - P, px + v*d - P]  (0 outside)
template <class T>
void im2col(const TensorT<T>& x, int b, int k, int dil, TensorT<T>& col_buf) {
  int H = x.h, W = x.w, P = dil * (k - 1) / 2;
  std::size_t hw = x.plane();
  T* col = col_buf.d.data();
  std::size_t row = 0;
  for (int ci = 0; ci < x.c; ++ci) {
    const T* src = x.pl(b, ci);
    for (int u = 0; u < k; ++u)
      for (int v = 0; v < k; ++v, ++row) {
        T* dst = col + row * hw;
        int dy = u * dil - P, dx = v * dil - P;
        for (int y = 0; y < H; ++y) {
          int yy = y + dy;
          T* drow = dst + static_cast<std::size_t>(y) * W;
          if (yy < 0 || yy >= H) {
            std::fill(drow, drow + W, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(yy) * W;
          int x0 = std::min(W, std::max(0, -dx));
          int x1 = std::max(x0, std::min(W, W - dx));
          if (x0 > 0) std::fill(drow, drow + x0, T(0));
          if (x1 > x0) std::copy(srow + x0 + dx, srow + x1 + dx, drow + x0);
          if (x1 < W) std::fill(drow + x1, drow + W, T(0));
        }
      }
  }
}

// out[b] = W [Co, Ci*k*k] x col(x_b) [Ci*k*k, HW]
template <class T>
TensorT<T> conv_value(const TensorT<T>& x, const TensorT<T>& w, int dil) {
  int k = w.h, Co = w.n, Ci = w.c;
  require(k == w.w && k % 2 == 1, Err::ShapeMismatch, "conv: kernel must be square and odd");
  require(Ci == x.c, Err::ShapeMismatch, "conv: input channel mismatch");
  TensorT<T> out(x.n, Co, x.h, x.w);
  std::size_t hw = x.plane();
  Eigen::Map<const RowMat<T>> wm(w.d.data(), Co, static_cast<Eigen::Index>(Ci) * k * k);
  if (k == 1) {
    for (int b = 0; b < x.n; ++b) {
      Eigen::Map<const RowMat<T>> xm(x.pl(b, 0), Ci, static_cast<Eigen::Index>(hw));
      Eigen::Map<RowMat<T>> om(out.pl(b, 0), Co, static_cast<Eigen::Index>(hw));
      om.noalias() = wm * xm;
    }
    return out;
  }
  TensorT<T> col(1, 1, Ci * k * k, static_cast<int>(hw));
  for (int b = 0; b < x.n; ++b) {
    im2col(x, b, k, dil, col);
    Eigen::Map<const RowMat<T>> cm(col.d.data(), static_cast<Eigen::Index>(Ci) * k * k,
                                   static_cast<Eigen::Index>(hw));
    Eigen::Map<RowMat<T>> om(out.pl(b, 0), Co, static_cast<Eigen::Index>(hw));
    om.noalias() = wm * cm;
  }
  return out;
}

// gw[o,c,u,v] = sum_{b,p} g[b,o,p] * x[b,c, p + (u,v)*d - P]
template <class T>
TensorT<T> conv_dw_value(const TensorT<T>& x, const TensorT<T>& g, int k, int dil) {
  int Ci = x.c, Co = g.c;
  require(x.n == g.n && x.h == g.h && x.w == g.w, Err::ShapeMismatch, "conv_dw: dims differ");
  TensorT<T> gw(Co, Ci, k, k);
  std::size_t hw = x.plane();
  Eigen::Map<RowMat<T>> gwm(gw.d.data(), Co, static_cast<Eigen::Index>(Ci) * k * k);
  if (k == 1) {
    for (int b = 0; b < x.n; ++b) {
      Eigen::Map<const RowMat<T>> gm(g.pl(b, 0), Co, static_cast<Eigen::Index>(hw));
      Eigen::Map<const RowMat<T>> xm(x.pl(b, 0), Ci, static_cast<Eigen::Index>(hw));
      gwm.noalias() += gm * xm.transpose();
    }
    return gw;
  }
  TensorT<T> col(1, 1, Ci * k * k, static_cast<int>(hw));
  for (int b = 0; b < x.n; ++b) {
    im2col(x, b, k, dil, col);
    Eigen::Map<const RowMat<T>> cm(col.d.data(), static_cast<Eigen::Index>(Ci) * k * k,
                                   static_cast<Eigen::Index>(hw));
    Eigen::Map<const RowMat<T>> gm(g.pl(b, 0), Co, static_cast<Eigen::Index>(hw));
    gwm.noalias() += gm * cm.transpose();
  }
  return gw;
}

// weight with swapped in/out channels and spatially flipped taps
template <class T>
TensorT<T> flip_transpose_weight(const TensorT<T>& w) {
  int Co = w.n, Ci = w.c, k = w.h;
  TensorT<T> wf(Ci, Co, k, k);
  for (int o = 0; o < Co; ++o)
    for (int c = 0; c < Ci; ++c)
      for (int u = 0; u < k; ++u)
        for (int v = 0; v < k; ++v)
          wf.at(c, o, u, v) = w.at(o, c, k - 1 - u, k - 1 - v);
  return wf;
}

}  // namespace detail

template <class T>
Ptr<T> conv_dx(const Ptr<T>& g, const Ptr<T>& w, int dil);
template <class T>
Ptr<T> conv_dw(const Ptr<T>& x, const Ptr<T>& g, int k, int dil);

// y = conv(x, w): x [B,Ci,H,W], w [Co,Ci,k,k] -> y [B,Co,H,W]
template <class T>
Ptr<T> conv(const Ptr<T>& x, const Ptr<T>& w, int dil = 1) {
  auto out = detail::conv_value(x->v, w->v, dil);
  int k = w->v.h;
  return detail::make_op<T>(std::move(out), {x, w},
                            [x, w, k, dil](const Ptr<T>&, const Ptr<T>& g) {
                              return std::vector<Ptr<T>>{conv_dx(g, w, dil),
                                                         conv_dw(x, g, k, dil)};
                            });
}

// adjoint of conv in x: gx [B,Ci,H,W] from g [B,Co,H,W]
template <class T>
Ptr<T> conv_dx(const Ptr<T>& g, const Ptr<T>& w, int dil) {
  auto out = detail::conv_value(g->v, detail::flip_transpose_weight(w->v), dil);
  int k = w->v.h;
  return detail::make_op<T>(std::move(out), {g, w},
                            [g, w, k, dil](const Ptr<T>&, const Ptr<T>& u) {
                              return std::vector<Ptr<T>>{conv(u, w, dil),
                                                         conv_dw(u, g, k, dil)};
                            });
}

// adjoint of conv in w: gw [Co,Ci,k,k] from x [B,Ci,H,W], g [B,Co,H,W]
template <class T>
Ptr<T> conv_dw(const Ptr<T>& x, const Ptr<T>& g, int k, int dil) {
  auto out = detail::conv_dw_value(x->v, g->v, k, dil);
  return detail::make_op<T>(std::move(out), {x, g},
                            [x, g, k, dil](const Ptr<T>&, const Ptr<T>& v) {
                              return std::vector<Ptr<T>>{conv_dx(g, v, dil),
                                                         conv(x, v, dil)};
                            });
}

// Convolution plus per-output-channel bias [1,Co,1,1].
template <class T>
Ptr<T> conv_bias(const Ptr<T>& x, const Ptr<T>& w, const Ptr<T>& b, int dil = 1) {
  auto y = conv(x, w, dil);
  return add(y, bcast(b, y->v.n, y->v.c, y->v.h, y->v.w));
}

// ---------------------------------------------------------------------------
// Backward pass: returns d(root)/d(wrt_i) as graph nodes (differentiable).
// ---------------------------------------------------------------------------

template <class T>
std::vector<Ptr<T>> grad(const Ptr<T>& root, const std::vector<Ptr<T>>& wrt) {
  require(root->v.numel() == 1, Err::ShapeMismatch, "grad: root must be scalar");

  // topological order over the differentiable subgraph
  std::vector<Ptr<T>> order;
  std::unordered_set<NodeT<T>*> seen;
  if (root->ng) {
    std::vector<std::pair<Ptr<T>, std::size_t>> stack{{root, 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        auto p = node->parents[idx++];
        if (p->ng && !seen.count(p.get())) {
          seen.insert(p.get());
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::unordered_map<NodeT<T>*, Ptr<T>> cot;
  cot[root.get()] = constant(TensorT<T>::full(1, 1, 1, 1, T(1)));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Ptr<T>& node = *it;
    auto found = cot.find(node.get());
    if (found == cot.end() || !node->vjp) continue;
    auto gs = node->vjp(node, found->second);
    require(gs.size() == node->parents.size(), Err::ShapeMismatch, "vjp arity mismatch");
    for (std::size_t i = 0; i < gs.size(); ++i) {
      const auto& p = node->parents[i];
      if (!p->ng || !gs[i]) continue;
      auto& slot = cot[p.get()];
      slot = slot ? add(slot, gs[i]) : gs[i];
    }
  }

  std::vector<Ptr<T>> out;
  out.reserve(wrt.size());
  for (const auto& wnode : wrt) {
    auto found = cot.find(wnode.get());
    if (found != cot.end())
      out.push_back(found->second);
    else
      out.push_back(constant(TensorT<T>(wnode->v.n, wnode->v.c, wnode->v.h, wnode->v.w)));
  }
  return out;
}

}  // namespace s2a::ad
