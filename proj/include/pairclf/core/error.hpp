#ifndef PAIRCLF_CORE_ERROR_HPP
#define PAIRCLF_CORE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pairclf {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes that do not fit together.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values (rates, widths, fractions, flags).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input files: FPTN tensors, manifests, CSV logs, model bundles.
class FormatError : public Error {
public:
    using Error::Error;
};

class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};

class BadVersionError : public FormatError {
public:
    using FormatError::FormatError;
};

class BadDtypeError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedError : public FormatError {
public:
    using FormatError::FormatError;
};

class TrailingBytesError : public FormatError {
public:
    using FormatError::FormatError;
};

/// A data protocol that cannot be satisfied with the given inputs
/// (empty gender stratum, infeasible subject-disjoint split, ...).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or degenerate numerical input.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Layer misuse: backward without cached state, eval before batchnorm stats exist.
class StateError : public Error {
public:
    using Error::Error;
};

} // namespace pairclf

#endif // PAIRCLF_CORE_ERROR_HPP
