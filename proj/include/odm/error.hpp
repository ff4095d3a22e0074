#pragma once

#include <stdexcept>
#include <string>

namespace odm {

/// Base class for all errors raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input file does not match the expected column layout.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A record violates a data invariant (negative exposure, bad ordering, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Iterative solver failed; carries the last objective value.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_objective)
        : Error(what), last_objective_(last_objective) {}
    double last_objective() const noexcept { return last_objective_; }

private:
    double last_objective_;
};

}  // namespace odm
