#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "s2a/attention.hpp"
#include "s2a/autodiff.hpp"
#include "s2a/common.hpp"
#include "s2a/datapipe.hpp"
#include "s2a/losses.hpp"
#include "s2a/nn.hpp"
#include "s2a/rng.hpp"
#include "s2a/tensor.hpp"

namespace s2a {

struct TrainConfig {
  NetConfig net;
  LossWeights weights;
  AttentionVariant attention = AttentionVariant::V3;
  int batch = 16;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  int pretrain_epochs = 2;
  int critic_updates_per_gen = 1;
  int adv_steps = 2000;
  std::uint64_t seed = 0;
  int factor = kDefaultCoarseFactor;
  int checkpoint_every = 500;
  int eval_every = 100;
  std::string out_dir = ".";

  void validate() const {
    net.validate();
    require(lr >= 0, Err::BadConfig, "learning rate must be >= 0");
    require(batch >= 1, Err::BadConfig, "batch size must be >= 1");
    require(pretrain_epochs >= 0 && adv_steps >= 0, Err::BadConfig, "step counts must be >= 0");
    require(critic_updates_per_gen >= 1, Err::BadConfig, "critic ratio must be >= 1");
    require(weights.gp >= 0 && weights.sa >= 0 && weights.da >= 0 && weights.pixel >= 0,
            Err::BadConfig, "loss weights must be nonnegative");
  }
};

// Adam moments stored parallel to the parameter store's allocation order.
template <class T>
struct AdamStateT {
  std::vector<std::vector<T>> m, v;
  std::uint64_t t = 0;

  void init(const ParamStoreT<T>& ps) {
    m.clear();
    v.clear();
    for (const auto& [name, node] : ps.items) {
      m.emplace_back(node->v.numel(), T(0));
      v.emplace_back(node->v.numel(), T(0));
    }
  }

  void step(ParamStoreT<T>& ps, const std::vector<ad::Ptr<T>>& grads, double lr, double b1,
            double b2, double eps = 1e-8) {
    require(grads.size() == ps.items.size(), Err::ShapeMismatch, "adam: gradient count mismatch");
    ++t;
    double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < ps.items.size(); ++i) {
      auto& p = ps.items[i].second->v.d;
      const auto& g = grads[i]->v.d;
      require(g.size() == p.size(), Err::ShapeMismatch, "adam: gradient shape mismatch");
      for (std::size_t j = 0; j < p.size(); ++j) {
        double gj = g[j];
        double mj = b1 * m[i][j] + (1.0 - b1) * gj;
        double vj = b2 * v[i][j] + (1.0 - b2) * gj * gj;
        m[i][j] = static_cast<T>(mj);
        v[i][j] = static_cast<T>(vj);
        p[j] -= static_cast<T>(lr * (mj / c1) / (std::sqrt(vj / c2) + eps));
      }
    }
  }
};

using AdamState = AdamStateT<float>;

struct TrainState {
  NetConfig net;
  AttentionVariant attention = AttentionVariant::V3;
  int factor = kDefaultCoarseFactor;
  ParamStore gen, disc;
  AdamState gen_opt, disc_opt;
  Rng rng;
  std::uint64_t pretrain_batches = 0;
  std::uint64_t adv_steps = 0;
  double best_val_sre = -1e300;
  std::uint64_t best_step = 0;
};

inline TrainState init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.net = cfg.net;
  s.attention = cfg.attention;
  s.factor = cfg.factor;
  Rng grng(splitmix64(cfg.seed ^ 0x67656e65726174ULL));
  Rng drng(splitmix64(cfg.seed ^ 0x64697363ULL));
  s.gen = init_generator_params<float>(cfg.net, grng);
  s.disc = init_discriminator_params<float>(cfg.net, drng);
  s.gen_opt.init(s.gen);
  s.disc_opt.init(s.disc);
  s.rng = Rng(splitmix64(cfg.seed ^ 0x657073696c6f6eULL));
  return s;
}

// ---------------------------------------------------------------------------
// Deterministic batch schedule: each epoch's order is a pure function of
// (seed, phase, epoch), so a resumed run only needs the step counters.
// ---------------------------------------------------------------------------

inline std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::uint64_t phase,
                                                  std::uint64_t epoch, std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(splitmix64(seed ^ (phase * 0x9e3779b97f4a7c15ULL) ^ (epoch + 1)));
  rng.shuffle(idx);
  return idx;
}

struct Batch {
  Tensor z;     // [B,3,s,s]
  Tensor y;     // [B,1,s,s]
  Tensor ytil;  // [B,1,s,s]
};

inline Batch make_batch(const CropDataset& ds, const std::vector<std::size_t>& perm,
                        std::size_t first, std::size_t count) {
  int s = ds.size;
  std::size_t pix = static_cast<std::size_t>(s) * s;
  Batch b{Tensor(static_cast<int>(count), 3, s, s), Tensor(static_cast<int>(count), 1, s, s),
          Tensor(static_cast<int>(count), 1, s, s)};
  for (std::size_t i = 0; i < count; ++i) {
    const PairedCrop& crop = ds.crops[perm[first + i]];
    std::copy_n(crop.z.data(), 3 * pix, b.z.d.data() + i * 3 * pix);
    std::copy_n(crop.y.data(), pix, b.y.d.data() + i * pix);
    std::copy_n(crop.y_tilde.data(), pix, b.ytil.d.data() + i * pix);
  }
  return b;
}

// Batch for global index `k` of a phase, derived from counters alone.
inline Batch batch_for(const CropDataset& ds, std::uint64_t seed, std::uint64_t phase,
                       std::uint64_t k, int batch) {
  std::size_t n = ds.crops.size();
  require(n >= static_cast<std::size_t>(batch), Err::EmptyDataset,
          "dataset smaller than one batch");
  std::size_t per_epoch = n / static_cast<std::size_t>(batch);
  std::uint64_t epoch = k / per_epoch;
  std::size_t pos = static_cast<std::size_t>(k % per_epoch);
  auto perm = epoch_permutation(seed, phase, epoch, n);
  return make_batch(ds, perm, pos * static_cast<std::size_t>(batch),
                    static_cast<std::size_t>(batch));
}

namespace detail {

inline void copy_grad_values(const std::vector<ad::Ptr<float>>& grads,
                             std::vector<ad::Ptr<float>>& out) {
  out.clear();
  out.reserve(grads.size());
  for (const auto& g : grads) out.push_back(ad::constant(g->v));
}

inline double grad_l2(const std::vector<ad::Ptr<float>>& grads) {
  double s = 0;
  for (const auto& g : grads)
    for (float v : g->v.d) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

inline void check_finite(const LossReport& r, std::uint64_t step) {
  for (double v : {r.d_real, r.d_fake, r.gp, r.sa, r.da, r.d_total, r.g_adv, r.pixel, r.g_total})
    require(std::isfinite(v), Err::NonFiniteLoss,
            "non-finite loss at step " + std::to_string(step));
}

}  // namespace detail

// Generator's conditioning map: the critic's spatial attention on the
// upsampled coarse band, cut out of the graph so no generator gradient
// reaches the critic.
inline ad::Ptr<float> conditioning_map(const TrainState& s, const Tensor& ytil) {
  auto d = discriminator_forward(s.disc, s.net, ad::constant(ytil));
  return ad::detach(spatial_attention(d.taps, s.attention));
}

// One critic descent: Wasserstein gap + gradient penalty +
// attention-consistency terms.
inline void critic_update(const TrainConfig& cfg, TrainState& s, const Batch& b, LossReport& rep) {
  std::vector<ad::Ptr<float>> grad_values;
  {
    auto yt = ad::constant(b.y);
    auto d_real = discriminator_forward(s.disc, s.net, yt);
    auto a_real = spatial_attention(d_real.taps, s.attention);
    auto d_til = discriminator_forward(s.disc, s.net, ad::constant(b.ytil));
    auto a_til = spatial_attention(d_til.taps, s.attention);

    auto xhat = generator_forward(s.gen, s.net, ad::constant(b.z), ad::detach(a_til));
    auto xhat_v = ad::detach(xhat);
    auto d_fake = discriminator_forward(s.disc, s.net, xhat_v);
    auto a_fake = spatial_attention(d_fake.taps, s.attention);

    std::vector<float> eps(static_cast<std::size_t>(b.y.n));
    for (auto& e : eps) e = static_cast<float>(s.rng.uniform());
    ad::Ptr<float> mean_norm;
    auto gp = gradient_penalty(
        [&](const ad::Ptr<float>& x) { return discriminator_forward(s.disc, s.net, x).score; },
        b.y, xhat_v->v, eps, &mean_norm);

    auto parts = critic_loss(d_real.score, d_fake.score, gp, a_real, a_fake, a_til, cfg.weights);
    auto grads = ad::grad<float>(parts.total, s.disc.nodes());
    detail::copy_grad_values(grads, grad_values);

    rep.d_real = parts.wass_real->v.d[0];
    rep.d_fake = parts.wass_fake->v.d[0];
    rep.gp = parts.gp->v.d[0];
    rep.sa = parts.sa->v.d[0];
    rep.da = parts.da->v.d[0];
    rep.d_total = parts.total->v.d[0];
    rep.critic_grad_norm = mean_norm->v.d[0];
  }
  s.disc_opt.step(s.disc, grad_values, cfg.lr, cfg.beta1, cfg.beta2);
}

// One generator descent with a fresh conditioning map from the just-updated
// critic.
inline void generator_update(const TrainConfig& cfg, TrainState& s, const Batch& b,
                             LossReport& rep) {
  std::vector<ad::Ptr<float>> grad_values;
  {
    auto a_til = conditioning_map(s, b.ytil);
    auto xhat = generator_forward(s.gen, s.net, ad::constant(b.z), a_til);
    auto d_fake = discriminator_forward(s.disc, s.net, xhat);
    auto parts = generator_loss(d_fake.score, xhat, ad::constant(b.y), cfg.weights);
    auto grads = ad::grad<float>(parts.total, s.gen.nodes());
    detail::copy_grad_values(grads, grad_values);
    rep.g_adv = parts.adv->v.d[0];
    rep.pixel = parts.pixel->v.d[0];
    rep.g_total = parts.total->v.d[0];
  }
  s.gen_opt.step(s.gen, grad_values, cfg.lr, cfg.beta1, cfg.beta2);
}

// One alternating step: critic_updates_per_gen critic descents, then one
// generator descent. Throws NonFiniteLoss on divergence.
inline LossReport adversarial_step(const TrainConfig& cfg, TrainState& s, const Batch& b) {
  LossReport rep;
  for (int k = 0; k < cfg.critic_updates_per_gen; ++k) critic_update(cfg, s, b, rep);
  generator_update(cfg, s, b, rep);
  ++s.adv_steps;
  detail::check_finite(rep, s.adv_steps);
  return rep;
}

// Pixel-loss-only generator step; the critic stays frozen and only supplies
// the conditioning map.
inline double pretrain_step(const TrainConfig& cfg, TrainState& s, const Batch& b) {
  std::vector<ad::Ptr<float>> grad_values;
  double pix;
  {
    auto a_til = conditioning_map(s, b.ytil);
    auto xhat = generator_forward(s.gen, s.net, ad::constant(b.z), a_til);
    auto loss = pixel_loss(xhat, ad::constant(b.y));
    pix = loss->v.d[0];
    require(std::isfinite(pix), Err::NonFiniteLoss,
            "non-finite pretrain loss at batch " + std::to_string(s.pretrain_batches));
    auto grads = ad::grad<float>(loss, s.gen.nodes());
    detail::copy_grad_values(grads, grad_values);
  }
  s.gen_opt.step(s.gen, grad_values, cfg.lr, cfg.beta1, cfg.beta2);
  ++s.pretrain_batches;
  return pix;
}

struct ValScore {
  double pixel_mse = 0;
  double sre_db = 0;
};

// Forward-only validation: mean pixel MSE and SRE over every crop, evaluated
// with the current conditioning pathway.
inline ValScore evaluate_validation(const TrainState& s, const CropDataset& val, int batch) {
  require(!val.crops.empty(), Err::EmptyDataset, "validation set is empty");
  double se = 0, signal = 0;
  std::size_t count = 0;
  std::vector<std::size_t> order(val.crops.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t first = 0; first < val.crops.size();) {
    std::size_t take = std::min<std::size_t>(batch, val.crops.size() - first);
    Batch b = make_batch(val, order, first, take);
    auto a_til = conditioning_map(s, b.ytil);
    auto xhat = generator_forward(s.gen, s.net, ad::constant(b.z), a_til);
    for (std::size_t i = 0; i < b.y.d.size(); ++i) {
      double d = static_cast<double>(xhat->v.d[i]) - b.y.d[i];
      se += d * d;
      signal += b.y.d[i];
    }
    count += b.y.d.size();
    first += take;
  }
  ValScore v;
  v.pixel_mse = se / static_cast<double>(count);
  double mu = signal / static_cast<double>(count);
  v.sre_db = v.pixel_mse == 0 ? 1e9 : 10.0 * std::log10(mu * mu / v.pixel_mse);
  return v;
}

// ---------------------------------------------------------------------------
// Checkpoint container "S2AC"
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline bool get_u64(std::istream& is, std::uint64_t& v) {
  std::uint32_t lo, hi;
  if (!get_u32(is, lo) || !get_u32(is, hi)) return false;
  v = static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
  return true;
}

inline void put_f32(std::ostream& os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(os, u);
}

inline bool get_f32(std::istream& is, float& f) {
  std::uint32_t u;
  if (!get_u32(is, u)) return false;
  std::memcpy(&f, &u, 4);
  return true;
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  put_u64(os, u);
}

inline bool get_f64(std::istream& is, double& d) {
  std::uint64_t u;
  if (!get_u64(is, u)) return false;
  std::memcpy(&d, &u, 8);
  return true;
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& is) {
  std::uint32_t n;
  require(get_u32(is, n), Err::TruncatedPayload, "checkpoint truncated in string length");
  std::string s(n, '\0');
  require(n == 0 || static_cast<bool>(is.read(s.data(), n)), Err::TruncatedPayload,
          "checkpoint truncated in string payload");
  return s;
}

inline void put_floats(std::ostream& os, const std::vector<float>& v) {
  put_u64(os, v.size());
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
}

inline std::vector<float> get_floats(std::istream& is) {
  std::uint64_t n;
  require(get_u64(is, n), Err::TruncatedPayload, "checkpoint truncated in array length");
  std::vector<float> v(n);
  require(n == 0 || static_cast<bool>(
                        is.read(reinterpret_cast<char*>(v.data()),
                                static_cast<std::streamsize>(n * 4))),
          Err::TruncatedPayload, "checkpoint truncated in array payload");
  return v;
}

inline void put_net_config(std::ostream& os, const NetConfig& c) {
  for (int v : {c.rdb_count, c.rdb_channels, c.rdb_layers, c.rdb_growth, c.ca_reduction,
                c.encoder_mid, c.decoder_mid, c.mlp_hidden1, c.mlp_hidden2})
    put_u32(os, static_cast<std::uint32_t>(v));
  put_f32(os, c.leaky_slope);
  put_u32(os, c.conditioning == Conditioning::Concat ? 0u : 1u);
  put_u32(os, static_cast<std::uint32_t>(c.dilations.size()));
  for (int d : c.dilations) put_u32(os, static_cast<std::uint32_t>(d));
}

inline NetConfig get_net_config(std::istream& is) {
  NetConfig c;
  std::uint32_t u;
  auto geti = [&](int& dst) {
    require(get_u32(is, u), Err::TruncatedPayload, "checkpoint truncated in config");
    dst = static_cast<int>(u);
  };
  geti(c.rdb_count);
  geti(c.rdb_channels);
  geti(c.rdb_layers);
  geti(c.rdb_growth);
  geti(c.ca_reduction);
  geti(c.encoder_mid);
  geti(c.decoder_mid);
  geti(c.mlp_hidden1);
  geti(c.mlp_hidden2);
  require(get_f32(is, c.leaky_slope), Err::TruncatedPayload, "checkpoint truncated in config");
  require(get_u32(is, u), Err::TruncatedPayload, "checkpoint truncated in config");
  c.conditioning = u == 0 ? Conditioning::Concat : Conditioning::Multiply;
  require(get_u32(is, u), Err::TruncatedPayload, "checkpoint truncated in config");
  c.dilations.resize(u);
  for (auto& d : c.dilations) geti(d);
  return c;
}

inline void put_params(std::ostream& os, const ParamStore& ps) {
  put_u32(os, static_cast<std::uint32_t>(ps.items.size()));
  for (const auto& [name, node] : ps.items) {
    put_str(os, name);
    const auto& t = node->v;
    put_u32(os, static_cast<std::uint32_t>(t.n));
    put_u32(os, static_cast<std::uint32_t>(t.c));
    put_u32(os, static_cast<std::uint32_t>(t.h));
    put_u32(os, static_cast<std::uint32_t>(t.w));
    put_floats(os, t.d);
  }
}

inline ParamStore get_params(std::istream& is) {
  std::uint32_t count;
  require(get_u32(is, count), Err::TruncatedPayload, "checkpoint truncated in parameter count");
  ParamStore ps;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_str(is);
    std::uint32_t n, c, h, w;
    require(get_u32(is, n) && get_u32(is, c) && get_u32(is, h) && get_u32(is, w),
            Err::TruncatedPayload, "checkpoint truncated in parameter dims");
    Tensor t(static_cast<int>(n), static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    t.d = get_floats(is);
    require(t.d.size() == t.numel(), Err::TruncatedPayload, "parameter payload size mismatch");
    ps.add(name, std::move(t));
  }
  return ps;
}

inline void put_adam(std::ostream& os, const AdamState& a) {
  put_u64(os, a.t);
  put_u32(os, static_cast<std::uint32_t>(a.m.size()));
  for (std::size_t i = 0; i < a.m.size(); ++i) {
    put_floats(os, a.m[i]);
    put_floats(os, a.v[i]);
  }
}

inline AdamState get_adam(std::istream& is) {
  AdamState a;
  require(get_u64(is, a.t), Err::TruncatedPayload, "checkpoint truncated in optimizer step");
  std::uint32_t count;
  require(get_u32(is, count), Err::TruncatedPayload, "checkpoint truncated in optimizer count");
  for (std::uint32_t i = 0; i < count; ++i) {
    a.m.push_back(get_floats(is));
    a.v.push_back(get_floats(is));
  }
  return a;
}

}  // namespace detail

inline void save_checkpoint(const TrainState& s, const std::string& path) {
  for (const auto& store : {&s.gen, &s.disc})
    for (const auto& [name, node] : store->items)
      require(node->v.all_finite(), Err::NonFiniteLoss,
              "refusing to checkpoint non-finite parameter: " + name);
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Err::IoFailure, "cannot open checkpoint for writing: " + path);
  os.write("S2AC", 4);
  detail::put_u32(os, 1);  // container version
  detail::put_net_config(os, s.net);
  detail::put_u32(os, static_cast<std::uint32_t>(s.attention == AttentionVariant::V1   ? 1
                                                 : s.attention == AttentionVariant::V2 ? 2
                                                                                       : 3));
  detail::put_u32(os, static_cast<std::uint32_t>(s.factor));
  detail::put_params(os, s.gen);
  detail::put_params(os, s.disc);
  detail::put_adam(os, s.gen_opt);
  detail::put_adam(os, s.disc_opt);
  detail::put_str(os, s.rng.serialize());
  detail::put_u64(os, s.pretrain_batches);
  detail::put_u64(os, s.adv_steps);
  detail::put_f64(os, s.best_val_sre);
  detail::put_u64(os, s.best_step);
  require(os.good(), Err::IoFailure, "checkpoint write failed: " + path);
}

// Loads a full training state. When `expected` is given, a checkpoint built
// under a different architecture is rejected rather than misapplied.
inline TrainState load_checkpoint(const std::string& path, const NetConfig* expected = nullptr) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), Err::IoFailure, "cannot open checkpoint: " + path);
  char magic[4];
  require(static_cast<bool>(is.read(magic, 4)) && std::memcmp(magic, "S2AC", 4) == 0,
          Err::MagicMismatch, "not a checkpoint file: " + path);
  std::uint32_t version;
  require(detail::get_u32(is, version), Err::TruncatedPayload, "checkpoint truncated in version");
  require(version == 1, Err::VersionMismatch,
          "unsupported checkpoint version " + std::to_string(version));
  TrainState s;
  s.net = detail::get_net_config(is);
  if (expected)
    require(s.net == *expected, Err::VersionMismatch,
            "checkpoint architecture differs from requested configuration");
  std::uint32_t att, factor;
  require(detail::get_u32(is, att) && detail::get_u32(is, factor), Err::TruncatedPayload,
          "checkpoint truncated in run settings");
  s.attention = att == 1 ? AttentionVariant::V1 : att == 2 ? AttentionVariant::V2 : AttentionVariant::V3;
  s.factor = static_cast<int>(factor);
  s.gen = detail::get_params(is);
  s.disc = detail::get_params(is);
  s.gen_opt = detail::get_adam(is);
  s.disc_opt = detail::get_adam(is);
  s.rng.deserialize(detail::get_str(is));
  require(detail::get_u64(is, s.pretrain_batches) && detail::get_u64(is, s.adv_steps) &&
              detail::get_f64(is, s.best_val_sre) && detail::get_u64(is, s.best_step),
          Err::TruncatedPayload, "checkpoint truncated in counters");
  return s;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

struct TrainRecord {
  std::string phase;  // "pretrain" | "adv"
  std::uint64_t step = 0;
  LossReport losses;
  double val_pixel = -1, val_sre = 0;  // val_pixel >= 0 when evaluated
};

using TrainLogger = std::function<void(const TrainRecord&)>;

// Runs any not-yet-done pretraining batches (phase counters make this
// resume-safe). The critic is never updated here.
inline void pretrain_generator(const TrainConfig& cfg, TrainState& s, const CropDataset& train,
                               const CropDataset& val, const TrainLogger& log = nullptr) {
  cfg.validate();
  require(!train.crops.empty() && !val.crops.empty(), Err::EmptyDataset,
          "pretraining needs non-empty train and val sets");
  if (cfg.pretrain_epochs == 0) return;
  std::size_t per_epoch = train.crops.size() / static_cast<std::size_t>(cfg.batch);
  require(per_epoch >= 1, Err::EmptyDataset, "dataset smaller than one batch");
  std::uint64_t total = static_cast<std::uint64_t>(cfg.pretrain_epochs) * per_epoch;
  while (s.pretrain_batches < total) {
    Batch b = batch_for(train, cfg.seed, /*phase=*/1, s.pretrain_batches, cfg.batch);
    double pix = pretrain_step(cfg, s, b);
    if (log && (s.pretrain_batches % per_epoch == 0 || s.pretrain_batches == total)) {
      TrainRecord rec;
      rec.phase = "pretrain";
      rec.step = s.pretrain_batches;
      rec.losses.pixel = pix;
      auto v = evaluate_validation(s, val, cfg.batch);
      rec.val_pixel = v.pixel_mse;
      rec.val_sre = v.sre_db;
      log(rec);
    }
  }
}

inline std::string checkpoint_path(const std::string& dir, const std::string& tag) {
  return dir + "/ckpt_" + tag + ".s2ac";
}

// Full two-phase procedure with periodic and best-validation checkpoints.
inline TrainState train(const TrainConfig& cfg, const CropDataset& train_ds,
                        const CropDataset& val_ds, const TrainLogger& log = nullptr,
                        TrainState* resume = nullptr) {
  cfg.validate();
  TrainState s = resume ? std::move(*resume) : init_train_state(cfg);
  if (resume) {
    require(s.net == cfg.net, Err::VersionMismatch,
            "resume checkpoint architecture differs from configuration");
    require(s.attention == cfg.attention && s.factor == cfg.factor, Err::VersionMismatch,
            "resume checkpoint run settings differ from configuration");
  }
  pretrain_generator(cfg, s, train_ds, val_ds, log);
  while (s.adv_steps < static_cast<std::uint64_t>(cfg.adv_steps)) {
    Batch b = batch_for(train_ds, cfg.seed, /*phase=*/2, s.adv_steps, cfg.batch);
    LossReport rep = adversarial_step(cfg, s, b);
    bool last = s.adv_steps == static_cast<std::uint64_t>(cfg.adv_steps);
    TrainRecord rec;
    rec.phase = "adv";
    rec.step = s.adv_steps;
    rec.losses = rep;
    if (cfg.eval_every > 0 && (s.adv_steps % static_cast<std::uint64_t>(cfg.eval_every) == 0 || last)) {
      auto v = evaluate_validation(s, val_ds, cfg.batch);
      rec.val_pixel = v.pixel_mse;
      rec.val_sre = v.sre_db;
      if (v.sre_db > s.best_val_sre) {
        s.best_val_sre = v.sre_db;
        s.best_step = s.adv_steps;
        if (!cfg.out_dir.empty()) save_checkpoint(s, checkpoint_path(cfg.out_dir, "best"));
      }
    }
    if (log) log(rec);
    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
        (s.adv_steps % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0 || last)) {
      char tag[32];
      std::snprintf(tag, sizeof(tag), "step%06llu", static_cast<unsigned long long>(s.adv_steps));
      save_checkpoint(s, checkpoint_path(cfg.out_dir, tag));
    }
  }
  if (!cfg.out_dir.empty()) save_checkpoint(s, checkpoint_path(cfg.out_dir, "final"));
  return s;
}

}  // namespace s2a
