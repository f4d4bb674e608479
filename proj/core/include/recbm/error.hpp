#pragma once

#include <stdexcept>
#include <string>

namespace recbm {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem read/write failures. The message always names the path.
class StorageError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents (bad magic, size mismatch, non-finite values).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid knobs or inputs that make an operation meaningless (k = 0, empty sets).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Dimension mismatch between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// Candidate lies in the span of the current selection (z <= 0).
class DependenceError : public Error {
public:
    using Error::Error;
};

/// Chat endpoint unreachable after all retries.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Chat endpoint answered with a body that does not follow the wire format.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// A numerical invariant that pruning should have made unreachable.
class InvariantError : public Error {
public:
    using Error::Error;
};

}  // namespace recbm
