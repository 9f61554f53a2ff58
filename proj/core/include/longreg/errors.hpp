#pragma once

#include <stdexcept>
#include <string>

namespace longreg {

enum class ErrorCode {
  // numerical
  AngleNearPi,
  DegenerateGeometry,
  ZeroWeight,
  DivergedStep,
  // data
  UnknownClass,
  AllChannelsEmpty,
  NegativeActivation,
  GeometryMismatch,
  InvalidTransform,
  InvalidArgument,
  MalformedFile,
  Io,
};

const char* to_string(ErrorCode code);

// Numerical errors are failures of the math on valid data (singular
// logarithm, collinear keypoints); everything else is bad input.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace longreg
