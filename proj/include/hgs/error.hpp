#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hgs {

enum class ErrorKind {
    InvalidArgument,
    CulledBehindCamera,
    DegenerateFrame,
    QuadratureNonConvergence,
    EmptyScene,
    ImageTooLarge,
    MismatchedForward,
    ShapeMismatch,
    ImageTooSmall,
    NonFiniteLoss,
    MalformedHeader,
    MissingProperty,
    TruncatedPayload,
    UnsupportedCameraModel,
    ParseError,
    EmptyPointCloud,
    DecodeError,
    UnsupportedBitDepth,
    IoError,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for every module; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace hgs
