#pragma once

#include <stdexcept>
#include <string>

namespace dips {

/// Base for every library error. `prefix()` is the stable tag the CLI puts in
/// front of messages on stderr.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* prefix() const noexcept = 0;
};

/// Bad user configuration (flags, option values, scenario parameters).
class ConfigError : public Error {
public:
    using Error::Error;
    const char* prefix() const noexcept override { return "CONFIG"; }
};

/// Malformed or out-of-domain input data (CSV schema, parse, treatment coding).
class DataError : public Error {
public:
    using Error::Error;
    const char* prefix() const noexcept override { return "DATA"; }
};

/// Numerical failure during fitting, smoothing, weighting or inference.
class EstimationError : public Error {
public:
    using Error::Error;
    const char* prefix() const noexcept override { return "ESTIMATION"; }
};

/// Iterative solver gave up; carries the objective at the last iterate.
class SolverError : public EstimationError {
public:
    SolverError(const std::string& what, double last_objective)
        : EstimationError(what), last_objective_(last_objective) {}
    double last_objective() const noexcept { return last_objective_; }

private:
    double last_objective_;
};

}  // namespace dips
