#pragma once

#include <stdexcept>
#include <string>

namespace netslic {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Branch or path lookups against a tree that does not contain them.
class TopologyError : public Error {
public:
    using Error::Error;
};

/// Malformed or non-finite input data.
class InputError : public Error {
public:
    using Error::Error;
};

/// Division by a (near) zero quantity inside a closed-form transform.
class NumericDomainError : public Error {
public:
    using Error::Error;
};

class IllConditionedError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class ConstraintError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

class MetricError : public Error {
public:
    using Error::Error;
};

class ObservabilityError : public Error {
public:
    using Error::Error;
};

/// Pipeline stages executed out of order or with missing estimates.
class PipelineError : public Error {
public:
    using Error::Error;
};

}  // namespace netslic
