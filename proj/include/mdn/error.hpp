#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mdn {

enum class Errc {
  DimensionMismatch,
  ValueOutOfRange,
  InvalidArgument,
  InvalidConfig,
  ParticleTooSmall,
  IoFailure,
  ParseError,
  DegenerateSplit,
  EmptySplit,
  AlreadyNormalized,
  GridMismatch,
  PatchCountMismatch,
  ShapeMismatch,
  VersionMismatch,
  ConfigMismatch,
  InvalidBins,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ValueOutOfRange: return "ValueOutOfRange";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::ParticleTooSmall: return "ParticleTooSmall";
    case Errc::IoFailure: return "IoFailure";
    case Errc::ParseError: return "ParseError";
    case Errc::DegenerateSplit: return "DegenerateSplit";
    case Errc::EmptySplit: return "EmptySplit";
    case Errc::AlreadyNormalized: return "AlreadyNormalized";
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::PatchCountMismatch: return "PatchCountMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::ConfigMismatch: return "ConfigMismatch";
    case Errc::InvalidBins: return "InvalidBins";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace mdn
