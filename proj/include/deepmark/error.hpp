#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deepmark {

enum class ErrorCode {
    BadMagic,
    UnsupportedVersion,
    UnsupportedDtype,
    TruncatedData,
    NonFiniteValue,
    ShapeMismatch,
    MissingHead,
    DuplicateMapping,
    UnmappedKeypoint,
    GroupIndexOutOfRange,
    FlipPartitionInvalid,
    FlipSpecIncomplete,
    UnknownClass,
    KeypointIndexOutOfRange,
    SigmaNonPositive,
    TooManyObjects,
    LengthMismatch,
    InvalidArgument,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure in the library surfaces as this exception. what() carries
/// the code name followed by a human readable message, on one line.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }
    const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

}  // namespace deepmark
