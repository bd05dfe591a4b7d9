#pragma once
// Error taxonomy shared by every module. Each failure carries a stable
// machine-readable code so callers (CLI, bindings) can map it without
// parsing messages.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace spmem {

enum class ErrorCode : std::uint8_t {
    InvalidConfig,
    OutOfWorld,
    RangeError,
    DimError,
    NumericOverflow,
    Underflow,
    NotTrained,
    TrainingDiverged,
    DuplicateId,
    EmptyIndex,
    NotFound,
    EmptyStore,
    EmptyInput,
    BadMagic,
    BadChecksum,
    UnsupportedVersion,
    TruncatedFile,
    IoError,
    ParseError,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Raised by position normalization; axis is 0/1/2 for x/y/z.
class OutOfWorldError : public Error {
public:
    OutOfWorldError(int axis, double value);

    int axis() const noexcept { return axis_; }
    char axis_name() const noexcept { return static_cast<char>('x' + axis_); }

private:
    int axis_;
};

// Raised on length mismatches; field names the offending argument.
class DimError : public Error {
public:
    DimError(std::string field, std::size_t expected, std::size_t actual);

    const std::string& field() const noexcept { return field_; }
    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::string field_;
    std::size_t expected_;
    std::size_t actual_;
};

}  // namespace spmem
