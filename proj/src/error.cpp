#include "adverx/error.hpp"

namespace adverx {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::UnsupportedInput: return "UnsupportedInput";
    case ErrorKind::CorruptPixelData: return "CorruptPixelData";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::DuplicateEntry: return "DuplicateEntry";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::DegenerateRoi: return "DegenerateRoi";
    case ErrorKind::RoiTooSmall: return "RoiTooSmall";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::BatchTooSmall: return "BatchTooSmall";
    case ErrorKind::NumericalError: return "NumericalError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::CorruptArchive: return "CorruptArchive";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::ReportError: return "ReportError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

}  // namespace adverx
