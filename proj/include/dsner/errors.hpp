#pragma once

#include <stdexcept>
#include <string>

namespace dsner {

// Malformed input data (corpus, dictionary, model files). CLI exit code 2.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures (missing file, unwritable output). CLI exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration (unknown key, out-of-range value). CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument to a library operation (empty batch, zero weights, ...).
class ValueError : public std::runtime_error {
public:
    explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values produced during numeric computation. CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dsner
