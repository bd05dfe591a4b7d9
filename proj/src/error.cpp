#include "spmem/error.hpp"

#include <string>

namespace spmem {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::OutOfWorld: return "OutOfWorld";
        case ErrorCode::RangeError: return "RangeError";
        case ErrorCode::DimError: return "DimError";
        case ErrorCode::NumericOverflow: return "NumericOverflow";
        case ErrorCode::Underflow: return "UnderflowError";
        case ErrorCode::NotTrained: return "NotTrained";
        case ErrorCode::TrainingDiverged: return "TrainingDiverged";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::EmptyIndex: return "EmptyIndex";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::EmptyStore: return "EmptyStore";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::BadChecksum: return "BadChecksum";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

OutOfWorldError::OutOfWorldError(int axis, double value)
    : Error(ErrorCode::OutOfWorld,
            std::string("axis ") + static_cast<char>('x' + axis) + " = " + std::to_string(value) +
                " outside [0, L)"),
      axis_(axis) {}

DimError::DimError(std::string field, std::size_t expected, std::size_t actual)
    : Error(ErrorCode::DimError, field + ": expected length " + std::to_string(expected) +
                                     ", got " + std::to_string(actual)),
      field_(std::move(field)),
      expected_(expected),
      actual_(actual) {}

}  // namespace spmem
