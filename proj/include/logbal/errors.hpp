#pragma once

#include <stdexcept>
#include <string>

namespace logbal {

/// Dimension mismatch between tensors; message names both shapes.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A metric whose denominator is zero (reported as "n/a", never 0).
class UndefinedMetricError : public std::runtime_error {
public:
    explicit UndefinedMetricError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite value where finiteness was promised (loss, update, ...).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Enumeration request over a space too large to enumerate.
class CapacityError : public std::runtime_error {
public:
    explicit CapacityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad configuration file contents (unknown key, unparseable value).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// I/O failure on an artifact file (corpus, cache, checkpoint).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace logbal
