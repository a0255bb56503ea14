#pragma once

#include <stdexcept>
#include <string>

namespace rompc {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions, non-finite data or violated preconditions.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// An optimization problem has no feasible point (LMI, OCP, ...).
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// A numerical routine failed to converge or broke down.
class NumericalError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw InvalidArgument(message);
    }
}

} // namespace detail

} // namespace rompc
