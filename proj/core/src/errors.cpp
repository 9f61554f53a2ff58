#include "longreg/errors.hpp"

namespace longreg {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AngleNearPi: return "AngleNearPi";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::ZeroWeight: return "ZeroWeight";
    case ErrorCode::DivergedStep: return "DivergedStep";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::AllChannelsEmpty: return "AllChannelsEmpty";
    case ErrorCode::NegativeActivation: return "NegativeActivation";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::InvalidTransform: return "InvalidTransform";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::AngleNearPi:
    case ErrorCode::DegenerateGeometry:
    case ErrorCode::ZeroWeight:
    case ErrorCode::DivergedStep:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace longreg
