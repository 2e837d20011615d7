#pragma once

#include <stdexcept>
#include <string>

namespace fdrag {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad documents, schema violations, inconsistent shapes.
class InputError : public Error {
public:
    using Error::Error;
};

/// A remote call (LLM or embedding endpoint) failed after all retries.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int attempts)
        : Error(what + " (attempts: " + std::to_string(attempts) + ")"), attempts_(attempts) {}

    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

/// A numeric routine produced a non-finite value.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace fdrag
