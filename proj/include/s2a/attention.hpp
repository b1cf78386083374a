#pragma once

#include <string>
#include <vector>

#include "s2a/autodiff.hpp"
#include "s2a/common.hpp"

namespace s2a {

// How per-tap channel-absolute-sums are squashed and combined into one map.
//   V1: sigmoid( sum_i sum_j |A_ij| )
//   V2: sigmoid( sum_i sigmoid( sum_j |A_ij| ) )
//   V3: norm01( sum_i norm01( sum_j |A_ij| ) )     (min-max per plane)
enum class AttentionVariant { V1, V2, V3 };

inline AttentionVariant attention_variant_from_string(const std::string& s) {
  if (s == "v1") return AttentionVariant::V1;
  if (s == "v2") return AttentionVariant::V2;
  if (s == "v3") return AttentionVariant::V3;
  fail(Err::BadConfig, "attention variant must be v1, v2 or v3, got '" + s + "'");
}

inline const char* to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::V1: return "v1";
    case AttentionVariant::V2: return "v2";
    default: return "v3";
  }
}

// Collapse critic activation volumes into a single [B,1,H,W] spatial map.
// All taps must share the batch and spatial dims (channel depth may differ).
template <class T>
ad::Ptr<T> spatial_attention(const std::vector<ad::Ptr<T>>& taps, AttentionVariant variant) {
  require(!taps.empty(), Err::EmptyTaps, "spatial_attention: no activation volumes");
  const auto& t0 = taps.front()->v;
  for (const auto& t : taps)
    require(t->v.n == t0.n && t->v.h == t0.h && t->v.w == t0.w, Err::ShapeMismatch,
            "spatial_attention: taps disagree on batch or spatial dims");

  std::vector<ad::Ptr<T>> per_tap;
  per_tap.reserve(taps.size());
  for (const auto& t : taps) {
    auto plane = ad::channel_sum(ad::absval(t));
    switch (variant) {
      case AttentionVariant::V1: break;
      case AttentionVariant::V2: plane = ad::sigmoid(plane); break;
      case AttentionVariant::V3: plane = ad::plane_norm01(plane); break;
    }
    per_tap.push_back(plane);
  }
  auto acc = per_tap.front();
  for (std::size_t i = 1; i < per_tap.size(); ++i) acc = ad::add(acc, per_tap[i]);
  switch (variant) {
    case AttentionVariant::V1:
    case AttentionVariant::V2: return ad::sigmoid(acc);
    default: return ad::plane_norm01(acc);
  }
}

}  // namespace s2a
