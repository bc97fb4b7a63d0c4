#pragma once

#include <stdexcept>
#include <string>

namespace rmdiff {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument shapes, out-of-range indices, violated preconditions.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed to converge or produced non-finite values.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace rmdiff
