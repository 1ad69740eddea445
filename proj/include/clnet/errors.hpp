#pragma once

#include <stdexcept>
#include <string>

namespace clnet {

// Error taxonomy maps onto CLI exit codes:
//   UsageError -> 2, ConfigError/ValidationError/IoError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad wiring: shape mismatches, missing parameters, invalid module configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Bad external input: manifests, files, checkpoints, config files.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Non-finite values, degenerate norms, divergence.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Command-line misuse.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

// Filesystem failures.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace clnet
