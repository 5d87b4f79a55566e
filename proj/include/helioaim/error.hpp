#pragma once

#include <stdexcept>
#include <string>

namespace helioaim {

enum class ErrorKind {
    InvalidConfig,
    Domain,
    Shape,
    InvalidMesh,
    Encoding,
    InvalidTrustRegion,
    Backend,
    Usage,
    TrainingDiverged,
    Run,
    Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Library-wide exception. The kind lets callers (notably the CLI) map
/// failures onto exit codes without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

}  // namespace helioaim
