#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace hestondml {

/// Invalid argument supplied by the caller (bad ranges, sizes, counts).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical quantity left its domain (NaN, overflow, degenerate branch).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Adaptive quadrature failed to reach the requested tolerance.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, double residual)
        : std::runtime_error(what + " (achieved residual " + format(residual) + ")"), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    static std::string format(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", v);
        return buf;
    }
    double residual_;
};

/// Training diverged (NaN loss or similar).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hestondml
