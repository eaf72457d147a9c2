#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dcgrad {

/// Rejected input: malformed file, bad schema, infeasible grid description.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Per-iteration solver trace entry.
struct IterationRecord {
    double residual_inf = 0.0;
    double step_size = 0.0;
    double w = 0.0;
};

/// Equilibrium solve did not reach tolerance; carries the iteration trace.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<IterationRecord> trace)
        : std::runtime_error(what), trace(std::move(trace)) {}

    std::vector<IterationRecord> trace;
};

/// A stability certificate could not be established at the requested level.
class CertificationError : public std::runtime_error {
public:
    explicit CertificationError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace dcgrad
