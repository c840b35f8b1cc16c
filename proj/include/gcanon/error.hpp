#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gcanon {

enum class ErrorKind {
  InvalidArgument,
  FieldNull,
  NonFinite,
  InconsistentModel,
  NoConvergence,
  ResidualBlowup,
  WindowTooCoarse,
  ZeroMu,
  FitDegenerate,
  Config,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::FieldNull: return "FieldNull";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::InconsistentModel: return "InconsistentModel";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::ResidualBlowup: return "ResidualBlowup";
    case ErrorKind::WindowTooCoarse: return "WindowTooCoarse";
    case ErrorKind::ZeroMu: return "ZeroMu";
    case ErrorKind::FitDegenerate: return "FitDegenerate";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// True for failures that signal the asymptotic ordering broke down
  /// rather than bad input.
  bool numerical() const noexcept {
    return kind_ == ErrorKind::NoConvergence || kind_ == ErrorKind::ResidualBlowup ||
           kind_ == ErrorKind::FieldNull || kind_ == ErrorKind::NonFinite ||
           kind_ == ErrorKind::FitDegenerate || kind_ == ErrorKind::ZeroMu ||
           kind_ == ErrorKind::WindowTooCoarse || kind_ == ErrorKind::InconsistentModel;
  }

 private:
  ErrorKind kind_;
};

}  // namespace gcanon
