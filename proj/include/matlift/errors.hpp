#pragma once

#include <stdexcept>
#include <string>

namespace matlift {

// Bad flags, bad run configuration, violated call preconditions. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (manifests, corpora, prediction files, generator output).
// Also maps to CLI exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing credentials or an unusable environment. Maps to CLI exit code 3.
class EnvError : public std::runtime_error {
public:
    explicit EnvError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace matlift
