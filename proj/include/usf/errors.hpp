#pragma once

#include <stdexcept>
#include <string>

namespace usf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Too few samples for the requested bandwidth / number of folds.
class UndersampledError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

/// Oversampling is insufficient for the finite-difference route (T*Omega*e >= 1).
class OversamplingError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

/// An internal invariant did not hold (e.g. a residue that should lie on 2*lambda*Z).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// A fold sequence that cannot be explained by the ideal modulo model.
class FoldConsistencyError : public ConsistencyError {
public:
    using ConsistencyError::ConsistencyError;
};

/// A numerical routine failed to converge or produced degenerate output.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Two or more estimated roots coincide, so amplitudes are not identifiable.
class DegenerateRootsError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Failure inside a multi-step recovery, tagged with the step that failed.
class RecoveryError : public Error {
public:
    RecoveryError(int step, const std::string& what)
        : Error("step " + std::to_string(step) + ": " + what), step_(step)
    {
    }

    int step() const noexcept { return step_; }

private:
    int step_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed input file; carries the 1-based line number (0 when not applicable).
class ParseError : public IoError {
public:
    ParseError(std::size_t line, const std::string& what)
        : IoError("line " + std::to_string(line) + ": " + what), line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace usf
