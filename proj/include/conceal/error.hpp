#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace conceal {

enum class ErrorKind {
    invalid_spec,
    dimension,
    numeric,
    invalid_input,
    invalid_config,
    invalid_split,
    invalid_offset,
    invalid_constraint,
    invalid_k,
    invalid_id,
    invalid_scenario,
    schema,
    parse,
    io,
    missing_artifact,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_spec: return "invalid-spec";
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::invalid_input: return "invalid-input";
        case ErrorKind::invalid_config: return "invalid-config";
        case ErrorKind::invalid_split: return "invalid-split";
        case ErrorKind::invalid_offset: return "invalid-offset";
        case ErrorKind::invalid_constraint: return "invalid-constraint";
        case ErrorKind::invalid_k: return "invalid-k";
        case ErrorKind::invalid_id: return "invalid-id";
        case ErrorKind::invalid_scenario: return "invalid-scenario";
        case ErrorKind::schema: return "schema";
        case ErrorKind::parse: return "parse";
        case ErrorKind::io: return "io";
        case ErrorKind::missing_artifact: return "missing-artifact";
    }
    return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) throw Error(kind, message);
}

}  // namespace conceal
