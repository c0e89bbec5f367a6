#pragma once

#include <stdexcept>
#include <string>

namespace dp4d {

// Broad failure classes. They map one-to-one onto the C status codes and the
// CLI exit codes (config -> 2, numerical -> 3).
enum class ErrorKind {
    InvalidArgument,
    Config,
    Numerical,
    Io,
    Parse,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& w) : Error(ErrorKind::InvalidArgument, w) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& w) : Error(ErrorKind::Numerical, w) {}
};

struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};

// Constellation file errors carry the 1-based line number that failed.
struct ParseError : Error {
    ParseError(const std::string& w, int line)
        : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + w), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

} // namespace dp4d
