#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sonarp {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or layer extents that do not compose.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation (log of a
/// non-positive value, probability outside [0, 1], ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid hyper-parameters or architecture (odd pooling extents, indivisible
/// stride, too many modules for the input size, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// backward() called without a preceding forward() pass.
class MissingCacheError : public Error {
public:
    using Error::Error;
};

/// Constant (zero-variance) patch handed to a correlation measure.
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Loss or gradient became NaN/Inf while training.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t epoch)
        : Error(what), epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// Missing or malformed input data (dataset directories, CSV, JSON).
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed line in a line-oriented file; carries the 1-based line number.
class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Model container errors, one type per failure mode.
class FormatError : public DataError {
public:
    using DataError::DataError;
};
class MagicMismatchError : public FormatError {
public:
    using FormatError::FormatError;
};
class VersionMismatchError : public FormatError {
public:
    using FormatError::FormatError;
};
class TruncatedFileError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace sonarp
