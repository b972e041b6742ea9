#pragma once

#include <stdexcept>
#include <string>

namespace risa {

enum class ErrorCode {
  NonManifold,
  InconsistentWinding,
  DegenerateFace,
  ZeroAreaFace,
  InvalidRotation,
  ConnectivityMismatch,
  DegenerateGeometry,
  NoCommonPart,
  ShapeMismatch,
  NonFinite,
  CycleDetected,
  AllPartsMissing,
  NoValidTriplet,
  DivergedLoss,
  EmptyIndex,
  EmptyQuerySet,
  DegenerateDeformation,
  TooFewShapes,
  MissingLabels,
  ConfigParse,
  FileNotFound,
  IoError,
};

const char* error_code_name(ErrorCode code);

// Single exception type for all domain errors; tests match on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace risa
