#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gevd {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or feature dimensions do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A caller broke an operation's precondition (e.g. non-scalar gradient root).
class ContractError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf produced by a numeric routine.
class NumericError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace gevd
