#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace s2a {

enum class Err {
  MagicMismatch,
  TruncatedPayload,
  UnsupportedVersion,
  IoFailure,
  NonFiniteInput,
  UnknownBand,
  DimensionMismatch,
  CropLargerThanScene,
  NonDivisibleDims,
  BadDims,
  BadFractions,
  ShapeMismatch,
  UnknownConditioningMode,
  EmptyTaps,
  EmptyDataset,
  NonFiniteLoss,
  VersionMismatch,
  ZeroMeanSignal,
  AllPixelsDegenerate,
  UncoveredPixels,
  BadConfig,
};

inline const char* err_name(Err e) {
  switch (e) {
    case Err::MagicMismatch: return "MagicMismatch";
    case Err::TruncatedPayload: return "TruncatedPayload";
    case Err::UnsupportedVersion: return "UnsupportedVersion";
    case Err::IoFailure: return "IoFailure";
    case Err::NonFiniteInput: return "NonFiniteInput";
    case Err::UnknownBand: return "UnknownBand";
    case Err::DimensionMismatch: return "DimensionMismatch";
    case Err::CropLargerThanScene: return "CropLargerThanScene";
    case Err::NonDivisibleDims: return "NonDivisibleDims";
    case Err::BadDims: return "BadDims";
    case Err::BadFractions: return "BadFractions";
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::UnknownConditioningMode: return "UnknownConditioningMode";
    case Err::EmptyTaps: return "EmptyTaps";
    case Err::EmptyDataset: return "EmptyDataset";
    case Err::NonFiniteLoss: return "NonFiniteLoss";
    case Err::VersionMismatch: return "VersionMismatch";
    case Err::ZeroMeanSignal: return "ZeroMeanSignal";
    case Err::AllPixelsDegenerate: return "AllPixelsDegenerate";
    case Err::UncoveredPixels: return "UncoveredPixels";
    case Err::BadConfig: return "BadConfig";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Err code;
  Error(Err c, const std::string& msg)
      : std::runtime_error(std::string(err_name(c)) + ": " + msg), code(c) {}
};

[[noreturn]] inline void fail(Err c, const std::string& msg) { throw Error(c, msg); }

inline void require(bool ok, Err c, const std::string& msg) {
  if (!ok) fail(c, msg);
}

}  // namespace s2a
