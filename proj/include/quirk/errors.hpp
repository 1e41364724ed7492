#pragma once

#include <stdexcept>
#include <string>

namespace quirk {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

// Requested qubit count exceeds the configured simulator capacity.
class CapacityError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Object used before it was fully initialised (e.g. input normalisation not fitted).
class StateError : public Error {
public:
    using Error::Error;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class VersionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Divergence or other non-finite values during optimisation.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace quirk
