#pragma once

#include <stdexcept>
#include <string>

namespace fedrc {

// Base of every error raised by the library. The CLI maps each subclass to a
// distinct exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration, inconsistent dimensions, unknown keys.
class ConfigError : public Error {
public:
    using Error::Error;
};

// NaN/Inf parameters, losses or objective terms.
class NumericError : public Error {
public:
    using Error::Error;
};

// File system failures.
class IoError : public Error {
public:
    using Error::Error;
};

// Malformed input data; carries the 1-based line number.
class ParseError : public IoError {
public:
    ParseError(const std::string& what, std::size_t line)
        : IoError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace fedrc
