#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ablb {

enum class ErrorCode : int {
    config = 1,
    input = 2,
    format = 3,
    probing = 4,
    generation = 5,
    template_ = 6,
    length = 7,
    io = 8,
    singular = 9,
    undefined = 10,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Checkpoint parse failure; carries the byte offset where decoding stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& message, std::size_t offset)
        : Error(ErrorCode::format, message + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) {
        throw Error(code, message);
    }
}

}  // namespace ablb
