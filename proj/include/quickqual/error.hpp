#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace quickqual {

enum class ErrorCode {
    file_not_found,
    io,
    format,
    malformed_graph,
    shape_mismatch,
    index_out_of_range,
    invalid_argument,
    non_convergence,
    single_class,
    insufficient_data,
    undefined_metric,
    runtime_failure,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::file_not_found: return "file-not-found";
        case ErrorCode::io: return "io-error";
        case ErrorCode::format: return "format-error";
        case ErrorCode::malformed_graph: return "malformed-graph";
        case ErrorCode::shape_mismatch: return "shape-mismatch";
        case ErrorCode::index_out_of_range: return "index-out-of-range";
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::non_convergence: return "non-convergence";
        case ErrorCode::single_class: return "single-class";
        case ErrorCode::insufficient_data: return "insufficient-data";
        case ErrorCode::undefined_metric: return "undefined-metric";
        case ErrorCode::runtime_failure: return "runtime-failure";
    }
    return "unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace quickqual
