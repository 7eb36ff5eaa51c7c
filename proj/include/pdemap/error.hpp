#pragma once

#include <stdexcept>
#include <string>

namespace pdemap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition on an argument (bad grid size, inadmissible coefficient, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A numerical routine failed to produce a result (linear solve, line search, Monte Carlo).
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, std::string diagnostics = {})
        : Error(what), diagnostics_(std::move(diagnostics)) {}

    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

}  // namespace pdemap
