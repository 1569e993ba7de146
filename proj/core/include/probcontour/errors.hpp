#pragma once

#include <stdexcept>
#include <string>

namespace probcontour {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor/layer dimension mismatch; message names the op and both shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, singular matrices, failed decompositions.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Bad configuration or malformed input document. CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Filesystem and parse failures on external files.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace probcontour
