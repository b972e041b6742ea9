#include "risa/error.hpp"

namespace risa {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonManifold: return "NonManifold";
    case ErrorCode::InconsistentWinding: return "InconsistentWinding";
    case ErrorCode::DegenerateFace: return "DegenerateFace";
    case ErrorCode::ZeroAreaFace: return "ZeroAreaFace";
    case ErrorCode::InvalidRotation: return "InvalidRotation";
    case ErrorCode::ConnectivityMismatch: return "ConnectivityMismatch";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::NoCommonPart: return "NoCommonPart";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::AllPartsMissing: return "AllPartsMissing";
    case ErrorCode::NoValidTriplet: return "NoValidTriplet";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::EmptyQuerySet: return "EmptyQuerySet";
    case ErrorCode::DegenerateDeformation: return "DegenerateDeformation";
    case ErrorCode::TooFewShapes: return "TooFewShapes";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::ConfigParse: return "ConfigParse";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace risa
