#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eercf {

enum class ErrorCode {
  ZeroNorm,
  NonFinite,
  DuplicateId,
  EmptyInput,
  ShapeMismatch,
  NotUnitNorm,
  BadMagic,
  VersionUnsupported,
  Truncated,
  Io,
  EmptyGallery,
  UnknownId,
  MissingGroundTruth,
  BatchTooSmall,
  DegenerateChannel,
  InvalidParams,
  InvalidConfig,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotUnitNorm: return "NotUnitNorm";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::Io: return "Io";
    case ErrorCode::EmptyGallery: return "EmptyGallery";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::DegenerateChannel: return "DegenerateChannel";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable error kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace eercf
