#pragma once

#include <stdexcept>
#include <string>

namespace jvlgs {

/// Coarse failure categories; the CLI maps each one to its own exit code.
enum class ErrorKind {
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Data = 4,
    Io = 5,
    Numeric = 6,
    Checkpoint = 7,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::ShapeMismatch: return "shape-mismatch";
        case ErrorKind::Data: return "data";
        case ErrorKind::Io: return "io";
        case ErrorKind::Numeric: return "numeric";
        case ErrorKind::Checkpoint: return "checkpoint";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace jvlgs
