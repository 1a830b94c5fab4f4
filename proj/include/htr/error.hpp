#pragma once

#include <stdexcept>
#include <string>

namespace htr {

// Base of every error raised by the library. The CLI maps any of these to a
// nonzero exit status.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid argument values (non-one-hot targets, length mismatches, empty data).
class InputError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed file contents (IDX, PGM, checkpoint).
class ParseError : public Error {
public:
    using Error::Error;
};

// Operation called in the wrong object state, e.g. backward without forward.
class StateError : public Error {
public:
    using Error::Error;
};

// Artifacts that are individually valid but do not fit together.
class CompatibilityError : public Error {
public:
    using Error::Error;
};

} // namespace htr
