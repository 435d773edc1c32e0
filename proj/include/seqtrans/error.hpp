#pragma once

#include <stdexcept>
#include <string>

namespace seqtrans {

enum class ErrorKind { validation, numeric };

// Base of every error raised by the library. The kind drives CLI exit codes:
// validation -> 2, numeric -> 3.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Bad input: malformed files, violated preconditions, inconsistent shapes.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

// Numerical failure: singular or non-PD matrices, degenerate samples.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

}  // namespace seqtrans
