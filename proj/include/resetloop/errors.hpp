#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace resetloop {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

// Raised when a matrix that must be inverted is numerically singular.
// `omega` carries the evaluation frequency when there is one (0 otherwise).
class SingularityError : public Error {
public:
    explicit SingularityError(const std::string& what, double omega = 0.0)
        : Error(what), omega_(omega) {}

    [[nodiscard]] double omega() const noexcept { return omega_; }

private:
    double omega_;
};

class RealizationError : public Error {
public:
    using Error::Error;
};

class UnsupportedConfiguration : public Error {
public:
    using Error::Error;
};

class SpecError : public Error {
public:
    using Error::Error;
};

class DesignInfeasible : public Error {
public:
    using Error::Error;
};

class TuningError : public Error {
public:
    using Error::Error;
};

class MarginUndefined : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    using Error::Error;
};

class UnstableLoop : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : Error(what + " at step " + std::to_string(step)), step_(step) {}

    [[nodiscard]] std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class MetricsError : public Error {
public:
    using Error::Error;
};

}  // namespace resetloop
