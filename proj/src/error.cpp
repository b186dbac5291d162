#include "deepmark/error.hpp"

namespace deepmark {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
        case ErrorCode::TruncatedData: return "TruncatedData";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::MissingHead: return "MissingHead";
        case ErrorCode::DuplicateMapping: return "DuplicateMapping";
        case ErrorCode::UnmappedKeypoint: return "UnmappedKeypoint";
        case ErrorCode::GroupIndexOutOfRange: return "GroupIndexOutOfRange";
        case ErrorCode::FlipPartitionInvalid: return "FlipPartitionInvalid";
        case ErrorCode::FlipSpecIncomplete: return "FlipSpecIncomplete";
        case ErrorCode::UnknownClass: return "UnknownClass";
        case ErrorCode::KeypointIndexOutOfRange: return "KeypointIndexOutOfRange";
        case ErrorCode::SigmaNonPositive: return "SigmaNonPositive";
        case ErrorCode::TooManyObjects: return "TooManyObjects";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      message_(message) {}

}  // namespace deepmark
