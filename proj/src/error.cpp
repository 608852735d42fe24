#include "ablb/error.hpp"

namespace ablb {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::config: return "config";
        case ErrorCode::input: return "input";
        case ErrorCode::format: return "format";
        case ErrorCode::probing: return "probing";
        case ErrorCode::generation: return "generation";
        case ErrorCode::template_: return "template";
        case ErrorCode::length: return "length";
        case ErrorCode::io: return "io";
        case ErrorCode::singular: return "singular";
        case ErrorCode::undefined: return "undefined";
    }
    return "unknown";
}

}  // namespace ablb
