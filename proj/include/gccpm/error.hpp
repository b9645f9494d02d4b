#pragma once

#include <stdexcept>
#include <string>

namespace gccpm {

enum class ErrorKind {
    shape,
    config,
    io,
    numeric,
    usage,
};

inline const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::usage: return "usage";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

} // namespace gccpm
