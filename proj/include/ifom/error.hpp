#pragma once

#include <stdexcept>
#include <string>

namespace ifom {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Arguments violate a documented precondition (shape, modality, length).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A transform specification cannot be applied (e.g. a zero-width patch).
class InvalidSpec : public Error {
public:
    using Error::Error;
};

/// A metric needs samples from both classes.
class InsufficientData : public Error {
public:
    using Error::Error;
};

/// Checkpoint and configuration disagree (version, architecture, shapes).
class Incompatible : public Error {
public:
    using Error::Error;
};

/// Filesystem and parse failures.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ifom
