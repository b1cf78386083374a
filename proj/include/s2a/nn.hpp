#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "s2a/autodiff.hpp"
#include "s2a/common.hpp"
#include "s2a/rng.hpp"
#include "s2a/tensor.hpp"

namespace s2a {

enum class Conditioning { Concat, Multiply };

inline Conditioning conditioning_from_string(const std::string& s) {
  if (s == "concat") return Conditioning::Concat;
  if (s == "multiply") return Conditioning::Multiply;
  fail(Err::UnknownConditioningMode, "conditioning must be 'concat' or 'multiply', got '" + s + "'");
}

inline const char* to_string(Conditioning c) {
  return c == Conditioning::Concat ? "concat" : "multiply";
}

// Architecture hyperparameters shared by generator and discriminator.
struct NetConfig {
  int rdb_count = 6;        // K
  int rdb_channels = 128;   // C
  int rdb_layers = 4;       // dense convs per block
  int rdb_growth = 32;      // channels added per dense conv
  int ca_reduction = 16;    // channel attention squeeze factor
  std::vector<int> dilations = {3, 5, 7};
  int encoder_mid = 64;
  int decoder_mid = 64;
  int mlp_hidden1 = 32;
  int mlp_hidden2 = 16;
  float leaky_slope = 0.2f;
  Conditioning conditioning = Conditioning::Concat;

  int generator_in_channels() const { return conditioning == Conditioning::Concat ? 4 : 3; }
  int taps_per_pass() const { return rdb_count + 2; }

  void validate() const {
    require(rdb_count >= 1, Err::BadConfig, "rdb_count must be >= 1");
    require(rdb_channels % ca_reduction == 0, Err::BadConfig,
            "rdb_channels must be divisible by ca_reduction");
    for (std::size_t i = 1; i < dilations.size(); ++i)
      require(dilations[i] > dilations[i - 1], Err::BadConfig, "dilations must be strictly increasing");
    require(!dilations.empty(), Err::BadConfig, "need at least one dilation");
  }

  bool operator==(const NetConfig& o) const {
    return rdb_count == o.rdb_count && rdb_channels == o.rdb_channels &&
           rdb_layers == o.rdb_layers && rdb_growth == o.rdb_growth &&
           ca_reduction == o.ca_reduction && dilations == o.dilations &&
           encoder_mid == o.encoder_mid && decoder_mid == o.decoder_mid &&
           mlp_hidden1 == o.mlp_hidden1 && mlp_hidden2 == o.mlp_hidden2 &&
           leaky_slope == o.leaky_slope && conditioning == o.conditioning;
  }
};

// Ordered, named parameter table. Order is the allocation order and is what
// checkpoints and the optimizer iterate over.
template <class T>
struct ParamStoreT {
  std::vector<std::pair<std::string, ad::Ptr<T>>> items;
  std::map<std::string, std::size_t> index;

  ad::Ptr<T> add(const std::string& name, TensorT<T> init) {
    require(!index.count(name), Err::BadConfig, "duplicate parameter: " + name);
    auto node = ad::leaf(std::move(init), true);
    index[name] = items.size();
    items.emplace_back(name, node);
    return node;
  }

  const ad::Ptr<T>& get(const std::string& name) const {
    auto it = index.find(name);
    require(it != index.end(), Err::BadConfig, "unknown parameter: " + name);
    return items[it->second].second;
  }

  std::vector<ad::Ptr<T>> nodes() const {
    std::vector<ad::Ptr<T>> out;
    out.reserve(items.size());
    for (const auto& [name, node] : items) out.push_back(node);
    return out;
  }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& [name, node] : items) n += node->v.numel();
    return n;
  }
};

using ParamStore = ParamStoreT<float>;

namespace detail {

template <class T>
TensorT<T> init_weight(int co, int ci, int k, Rng& rng) {
  TensorT<T> w(co, ci, k, k);
  for (auto& v : w.d) v = static_cast<T>(rng.truncated_normal(0.02));
  return w;
}

template <class T>
TensorT<T> init_bias(int c) {
  return TensorT<T>(1, c, 1, 1);  // zeros
}

template <class T>
void add_conv(ParamStoreT<T>& ps, const std::string& name, int co, int ci, int k, Rng& rng) {
  ps.add(name + ".w", init_weight<T>(co, ci, k, rng));
  ps.add(name + ".b", init_bias<T>(co));
}

}  // namespace detail

// Backbone shared by both networks: encoder (2 convs), K x (RDB + channel
// attention), decoder (2 convs), 1x1 global skip from the network input.
template <class T>
void init_backbone_params(ParamStoreT<T>& ps, const NetConfig& cfg, int in_ch, int out_ch,
                          Rng& rng) {
  cfg.validate();
  int C = cfg.rdb_channels;
  detail::add_conv(ps, "enc0", cfg.encoder_mid, in_ch, 3, rng);
  detail::add_conv(ps, "enc1", C, cfg.encoder_mid, 3, rng);
  for (int i = 0; i < cfg.rdb_count; ++i) {
    std::string rdb = "rdb" + std::to_string(i);
    for (int l = 0; l < cfg.rdb_layers; ++l)
      detail::add_conv(ps, rdb + ".lay" + std::to_string(l), cfg.rdb_growth,
                       C + l * cfg.rdb_growth, 3, rng);
    detail::add_conv(ps, rdb + ".fuse", C, C + cfg.rdb_layers * cfg.rdb_growth, 1, rng);
    int squeezed = C / cfg.ca_reduction;
    for (int d : cfg.dilations)
      detail::add_conv(ps, rdb + ".ca.pyr" + std::to_string(d), squeezed, C, 3, rng);
    detail::add_conv(ps, rdb + ".ca.fuse", C,
                     squeezed * static_cast<int>(cfg.dilations.size()), 3, rng);
  }
  detail::add_conv(ps, "dec0", cfg.decoder_mid, C, 3, rng);
  detail::add_conv(ps, "dec1", out_ch, cfg.decoder_mid, 3, rng);
  detail::add_conv(ps, "skip", out_ch, in_ch, 1, rng);
}

template <class T>
ParamStoreT<T> init_generator_params(const NetConfig& cfg, Rng& rng) {
  ParamStoreT<T> ps;
  init_backbone_params(ps, cfg, cfg.generator_in_channels(), 1, rng);
  return ps;
}

template <class T>
ParamStoreT<T> init_discriminator_params(const NetConfig& cfg, Rng& rng) {
  ParamStoreT<T> ps;
  init_backbone_params(ps, cfg, 1, cfg.decoder_mid, rng);
  detail::add_conv(ps, "mlp0", cfg.mlp_hidden1, cfg.decoder_mid, 1, rng);
  detail::add_conv(ps, "mlp1", cfg.mlp_hidden2, cfg.mlp_hidden1, 1, rng);
  detail::add_conv(ps, "mlp2", 1, cfg.mlp_hidden2, 1, rng);
  return ps;
}

// ---------------------------------------------------------------------------
// Forward definitions
// ---------------------------------------------------------------------------

namespace detail {
template <class T>
ad::Ptr<T> conv_named(const ParamStoreT<T>& ps, const std::string& name, const ad::Ptr<T>& x,
                      int dil = 1) {
  return ad::conv_bias(x, ps.get(name + ".w"), ps.get(name + ".b"), dil);
}
}  // namespace detail

// Dense block: each 3x3 layer consumes the concat of the block input and all
// prior layer outputs; 1x1 fusion maps back to C; local residual adds input.
template <class T>
ad::Ptr<T> rdb_forward(const ParamStoreT<T>& ps, const std::string& prefix, const NetConfig& cfg,
                       const ad::Ptr<T>& x) {
  require(x->v.c == cfg.rdb_channels, Err::ShapeMismatch, "rdb_forward: channel count mismatch");
  std::vector<ad::Ptr<T>> feats{x};
  for (int l = 0; l < cfg.rdb_layers; ++l) {
    auto h = ad::relu(detail::conv_named(ps, prefix + ".lay" + std::to_string(l), ad::concat_c(feats)));
    feats.push_back(h);
  }
  auto fused = detail::conv_named(ps, prefix + ".fuse", ad::concat_c(feats));
  return ad::add(x, fused);
}

// Laplacian channel attention: GAP, parallel dilated 3x3 convs squeezing C ->
// C/r (padding equals dilation so the pooled 1x1 map survives), concat, 3x3
// fusion back to C, sigmoid. Returns the [B,C,1,1] coefficients.
template <class T>
ad::Ptr<T> channel_attention(const ParamStoreT<T>& ps, const std::string& prefix,
                             const NetConfig& cfg, const ad::Ptr<T>& f) {
  require(f->v.c % cfg.ca_reduction == 0, Err::ShapeMismatch,
          "channel_attention: channels not divisible by reduction");
  auto pooled = ad::global_avg_pool(f);
  std::vector<ad::Ptr<T>> pyramid;
  for (int d : cfg.dilations)
    pyramid.push_back(ad::relu(detail::conv_named(ps, prefix + ".pyr" + std::to_string(d), pooled, d)));
  auto fused = detail::conv_named(ps, prefix + ".fuse", ad::concat_c(pyramid));
  return ad::sigmoid(fused);
}

template <class T>
ad::Ptr<T> channel_attention_apply(const ParamStoreT<T>& ps, const std::string& prefix,
                                   const NetConfig& cfg, const ad::Ptr<T>& f) {
  auto coeff = channel_attention(ps, prefix, cfg, f);
  return ad::mul(f, ad::bcast(coeff, f->v.n, f->v.c, f->v.h, f->v.w));
}

// Shared backbone; fills `taps` (encoder output, each modulated RDB output,
// decoder output with the global skip added) when requested.
template <class T>
ad::Ptr<T> backbone_forward(const ParamStoreT<T>& ps, const NetConfig& cfg, const ad::Ptr<T>& in,
                            std::vector<ad::Ptr<T>>* taps) {
  auto e0 = ad::relu(detail::conv_named(ps, "enc0", in));
  auto e1 = ad::relu(detail::conv_named(ps, "enc1", e0));
  if (taps) taps->push_back(e1);
  auto x = e1;
  for (int i = 0; i < cfg.rdb_count; ++i) {
    std::string rdb = "rdb" + std::to_string(i);
    x = rdb_forward(ps, rdb, cfg, x);
    x = channel_attention_apply(ps, rdb + ".ca", cfg, x);
    if (taps) taps->push_back(x);
  }
  auto d0 = ad::relu(detail::conv_named(ps, "dec0", x));
  auto d1 = detail::conv_named(ps, "dec1", d0);
  auto out = ad::add(d1, detail::conv_named(ps, "skip", in));
  if (taps) taps->push_back(out);
  return out;
}

// Generator: conditions the source composite on a spatial attention map,
// either as a fourth input channel or by per-pixel modulation of the bands.
template <class T>
ad::Ptr<T> generator_forward(const ParamStoreT<T>& ps, const NetConfig& cfg, const ad::Ptr<T>& z,
                             const ad::Ptr<T>& a_s) {
  require(z->v.c == 3, Err::ShapeMismatch, "generator: source composite must have 3 channels");
  require(a_s->v.c == 1 && a_s->v.h == z->v.h && a_s->v.w == z->v.w && a_s->v.n == z->v.n,
          Err::ShapeMismatch, "generator: attention map dims must match source");
  ad::Ptr<T> in;
  if (cfg.conditioning == Conditioning::Concat)
    in = ad::concat_c<T>({z, a_s});
  else
    in = ad::mul(z, ad::bcast(a_s, z->v.n, 3, z->v.h, z->v.w));
  return backbone_forward(ps, cfg, in, static_cast<std::vector<ad::Ptr<T>>*>(nullptr));
}

template <class T>
struct DiscOutput {
  ad::Ptr<T> score;                // [B,1,1,1], unbounded critic value
  std::vector<ad::Ptr<T>> taps;    // K+2 activation volumes
};

// Critic: backbone on a single-channel image, then GAP + 3-layer MLP with
// leaky ReLU and no activation on the output.
template <class T>
DiscOutput<T> discriminator_forward(const ParamStoreT<T>& ps, const NetConfig& cfg,
                                    const ad::Ptr<T>& x) {
  require(x->v.c == 1, Err::ShapeMismatch, "discriminator: input must have 1 channel");
  DiscOutput<T> out;
  auto feat = backbone_forward(ps, cfg, x, &out.taps);
  auto pooled = ad::global_avg_pool(feat);
  auto m0 = ad::leaky_relu(detail::conv_named(ps, "mlp0", pooled), static_cast<T>(cfg.leaky_slope));
  auto m1 = ad::leaky_relu(detail::conv_named(ps, "mlp1", m0), static_cast<T>(cfg.leaky_slope));
  out.score = detail::conv_named(ps, "mlp2", m1);
  return out;
}

}  // namespace s2a
