#ifndef LPSV_ERRORS_HPP
#define LPSV_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lpsv {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument values (out-of-range parameters, bad time arguments).
struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Numerical failure: divergence, non-finite values, failed bracketing.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Mismatched shapes between grids / time series.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Bad configuration (unknown keys, CFL violations, missing seeds).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A sampled grid is too coarse for the requested operation.
struct ResolutionError : Error {
    explicit ResolutionError(const std::string& msg) : Error(msg) {}
};

// I/O failure while emitting artifacts.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

} // namespace lpsv

#endif
