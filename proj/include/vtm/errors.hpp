#pragma once

#include <stdexcept>
#include <string>

namespace vtm {

// Error taxonomy shared by every module. The CLI maps each kind to an exit code.

/// Invalid configuration or inconsistent shapes.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input data (out-of-range markers, empty splits, missing annotations).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values or divergence.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operation invoked in the wrong state (e.g. backward before forward).
class StateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failures.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vtm
