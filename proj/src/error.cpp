#include "xmatch/error.hpp"

namespace xmatch {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateProjection: return "DegenerateProjection";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingProperty: return "MissingProperty";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::InsufficientNeighborhood: return "InsufficientNeighborhood";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::SupportOutOfBounds: return "SupportOutOfBounds";
    case ErrorKind::PoolExhausted: return "PoolExhausted";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::DegenerateData: return "DegenerateData";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorKind::NoRealSolution: return "NoRealSolution";
    case ErrorKind::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case ErrorKind::NoHypothesisFound: return "NoHypothesisFound";
    case ErrorKind::RefinementDiverged: return "RefinementDiverged";
    case ErrorKind::LocalizationFailed: return "LocalizationFailed";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace xmatch
