#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace gdln {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Every failure mode the library reports deliberately. Callers that want to
// distinguish causes switch on the code; the message carries specifics.
enum class Errc {
  CycleDetected,
  DanglingEdge,
  NoInputOrOutput,
  UnreachableNode,
  PathExplosion,
  EdgeNotOnPath,
  DimensionMismatch,
  InvalidArgument,
  InvalidK,
  InvalidP,
  InvalidA0,
  Diverged,
  NotDiagonalizable,
  OffManifold,
  ParseError,
  IoError,
  VerificationFailed,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::DanglingEdge: return "DanglingEdge";
    case Errc::NoInputOrOutput: return "NoInputOrOutput";
    case Errc::UnreachableNode: return "UnreachableNode";
    case Errc::PathExplosion: return "PathExplosion";
    case Errc::EdgeNotOnPath: return "EdgeNotOnPath";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidK: return "InvalidK";
    case Errc::InvalidP: return "InvalidP";
    case Errc::InvalidA0: return "InvalidA0";
    case Errc::Diverged: return "Diverged";
    case Errc::NotDiagonalizable: return "NotDiagonalizable";
    case Errc::OffManifold: return "OffManifold";
    case Errc::ParseError: return "ParseError";
    case Errc::IoError: return "IoError";
    case Errc::VerificationFailed: return "VerificationFailed";
  }
  return "Unknown";
}

class GdlnError : public std::runtime_error {
 public:
  GdlnError(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw GdlnError(code, what);
}

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace gdln
