#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "s2a/attention.hpp"
#include "s2a/autodiff.hpp"
#include "s2a/common.hpp"
#include "s2a/rng.hpp"
#include "s2a/tensor.hpp"

namespace s2a {

struct LossWeights {
  float gp = 10.0f;
  float sa = 0.1f;
  float da = 0.1f;
  float pixel = 100.0f;
};

// Per-pixel mean squared error between two equally shaped volumes.
template <class T>
ad::Ptr<T> mse_loss(const ad::Ptr<T>& a, const ad::Ptr<T>& b) {
  require(a->v.same_shape(b->v), Err::ShapeMismatch, "mse_loss: shape mismatch");
  auto d = ad::sub(a, b);
  return ad::mean_all(ad::mul(d, d));
}

// Attention-map consistency between synthesized and real bands.
template <class T>
ad::Ptr<T> spatial_attention_loss(const ad::Ptr<T>& a_fake, const ad::Ptr<T>& a_real) {
  return mse_loss(a_fake, a_real);
}

// Attention-map consistency between the upsampled coarse band and the real one.
template <class T>
ad::Ptr<T> domain_adaptation_loss(const ad::Ptr<T>& a_up, const ad::Ptr<T>& a_real) {
  return mse_loss(a_up, a_real);
}

template <class T>
ad::Ptr<T> pixel_loss(const ad::Ptr<T>& xhat, const ad::Ptr<T>& y) {
  return mse_loss(xhat, y);
}

// E[(||d score(x~)/d x~||_2 - 1)^2] with x~ = eps*real + (1-eps)*fake, one
// eps per sample. The returned node still depends on the critic parameters,
// so differentiating it trains the critic toward unit gradient norm.
// `mean_norm_out`, when given, receives the batch-mean gradient norm for
// stability logging.
template <class T, class Critic>
ad::Ptr<T> gradient_penalty(Critic&& critic, const TensorT<T>& real, const TensorT<T>& fake,
                            const std::vector<T>& eps, ad::Ptr<T>* mean_norm_out = nullptr) {
  require(real.same_shape(fake), Err::ShapeMismatch, "gradient_penalty: real/fake shape mismatch");
  require(static_cast<int>(eps.size()) == real.n, Err::ShapeMismatch,
          "gradient_penalty: need one epsilon per sample");
  TensorT<T> mixv = real;
  std::size_t per = mixv.numel() / static_cast<std::size_t>(mixv.n);
  for (int b = 0; b < mixv.n; ++b) {
    T e = eps[static_cast<std::size_t>(b)];
    for (std::size_t i = 0; i < per; ++i) {
      std::size_t at = static_cast<std::size_t>(b) * per + i;
      mixv.d[at] = e * real.d[at] + (T(1) - e) * fake.d[at];
    }
  }
  auto mix = ad::leaf(std::move(mixv), true);
  auto score = std::forward<Critic>(critic)(mix);
  auto g = ad::grad<T>(ad::sum_all(score), {mix})[0];
  auto norms = ad::sqrtv(ad::per_sample_sum(ad::mul(g, g)));
  if (mean_norm_out) *mean_norm_out = ad::mean_all(norms);
  auto off = ad::add_const(norms, T(-1));
  return ad::mean_all(ad::mul(off, off));
}

template <class T, class Critic>
ad::Ptr<T> gradient_penalty(Critic&& critic, const TensorT<T>& real, const TensorT<T>& fake,
                            Rng& rng, ad::Ptr<T>* mean_norm_out = nullptr) {
  std::vector<T> eps(static_cast<std::size_t>(real.n));
  for (auto& e : eps) e = static_cast<T>(rng.uniform());
  return gradient_penalty(std::forward<Critic>(critic), real, fake, eps, mean_norm_out);
}

// Scalar snapshot of one optimization step, for logs and stability checks.
struct LossReport {
  double d_real = 0, d_fake = 0, gp = 0, sa = 0, da = 0, d_total = 0;
  double g_adv = 0, pixel = 0, g_total = 0;
  double critic_grad_norm = 0;
};

template <class T>
struct CriticLossParts {
  ad::Ptr<T> total;
  ad::Ptr<T> wass_fake, wass_real, gp, sa, da;
};

// mean D(fake) - mean D(real) + weighted penalty and consistency terms.
template <class T>
ad::Ptr<T> critic_objective(const ad::Ptr<T>& score_real, const ad::Ptr<T>& score_fake,
                            const ad::Ptr<T>& gp, const ad::Ptr<T>& l_sa, const ad::Ptr<T>& l_da,
                            const LossWeights& w) {
  return ad::add(ad::sub(ad::mean_all(score_fake), ad::mean_all(score_real)),
                 ad::add(ad::scale(gp, static_cast<T>(w.gp)),
                         ad::add(ad::scale(l_sa, static_cast<T>(w.sa)),
                                 ad::scale(l_da, static_cast<T>(w.da)))));
}

// -mean D(fake) + weighted pixel loss.
template <class T>
ad::Ptr<T> generator_objective(const ad::Ptr<T>& score_fake, const ad::Ptr<T>& l_pixel,
                               const LossWeights& w) {
  return ad::add(ad::neg(ad::mean_all(score_fake)), ad::scale(l_pixel, static_cast<T>(w.pixel)));
}

// Full critic objective with components kept for logging. `sa` compares the
// critic's map on the synthesized band against the real one; `da` does the
// same for the upsampled coarse band.
template <class T>
CriticLossParts<T> critic_loss(const ad::Ptr<T>& score_real, const ad::Ptr<T>& score_fake,
                               const ad::Ptr<T>& gp, const ad::Ptr<T>& att_real,
                               const ad::Ptr<T>& att_fake, const ad::Ptr<T>& att_degraded,
                               const LossWeights& w) {
  CriticLossParts<T> p;
  p.wass_fake = ad::mean_all(score_fake);
  p.wass_real = ad::mean_all(score_real);
  p.gp = gp;
  p.sa = spatial_attention_loss(att_fake, att_real);
  p.da = domain_adaptation_loss(att_degraded, att_real);
  p.total = critic_objective(score_real, score_fake, p.gp, p.sa, p.da, w);
  return p;
}

template <class T>
struct GeneratorLossParts {
  ad::Ptr<T> total;
  ad::Ptr<T> adv, pixel;
};

template <class T>
GeneratorLossParts<T> generator_loss(const ad::Ptr<T>& score_fake, const ad::Ptr<T>& fake,
                                     const ad::Ptr<T>& target, const LossWeights& w) {
  GeneratorLossParts<T> p;
  p.adv = ad::neg(ad::mean_all(score_fake));
  p.pixel = pixel_loss(fake, target);
  p.total = generator_objective(score_fake, p.pixel, w);
  return p;
}

}  // namespace s2a
