#pragma once

#include <stdexcept>
#include <string>

namespace afc {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or out-of-range argument.
class InputError : public Error {
public:
    using Error::Error;
};

/// An identifier (image, question, pool) that does not resolve.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Operation not permitted in the current session phase.
class StateError : public Error {
public:
    using Error::Error;
};

/// File content has the wrong magic number or structure.
class FormatError : public Error {
public:
    using Error::Error;
};

/// File payload shorter or longer than its header declares.
class TruncationError : public Error {
public:
    using Error::Error;
};

/// Two inputs that must agree (e.g. image and label counts) do not.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// The network produced an all-zero vector that cannot be normalized.
class DegenerateEmbeddingError : public Error {
public:
    using Error::Error;
};

} // namespace afc
