#pragma once

#include <stdexcept>
#include <string>

namespace wdn {

inline constexpr const char* kVersion = "0.1.0";

// Domain error codes. Parse errors carry a line number in the message.
enum class Errc {
  UnknownNodeReference,
  UnknownCurveReference,
  DuplicateId,
  MalformedLine,
  MissingRequiredSection,
  InvalidModel,
  NonPositiveGeometry,
  ClosedLink,
  BadPumpCurve,
  SingularSystem,
  GenerationStalled,
  TopologyMismatch,
  RatioOutOfRange,
  ShapeMismatch,
  NonFiniteActivation,
  NonFiniteGradient,
  EmptyMaskSupport,
  DivergedTraining,
  EmptyDataset,
  SchemaMismatch,
  NoSensors,
  IoError,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

const char* errc_name(Errc c);

}  // namespace wdn
