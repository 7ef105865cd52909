#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mirrorsim {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Netlist text rejected; carries the 1-based source line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Circuit-level invariant violated (missing ground, bad parameter range, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Linear system has no usable pivot (voltage-source loop, floating subnet).
class SingularMatrixError : public Error {
public:
    using Error::Error;
};

/// Newton iteration failed after all fallbacks.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Post-processing request cannot be satisfied (bad window, no fundamental, ...).
class AnalysisError : public Error {
public:
    using Error::Error;
};

} // namespace mirrorsim
