#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace imexsim {

/// Base class for every error raised by the simulator core.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (scenario file, solver settings, CLI flags).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Vector or matrix sizes that do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Netlist topology that cannot produce a solvable network.
class TopologyError : public Error {
public:
    TopologyError(const std::string& message, std::vector<std::string> offenders)
        : Error(message), offenders_(std::move(offenders)) {}

    /// Element ids or node names implicated in the violation.
    [[nodiscard]] const std::vector<std::string>& offenders() const { return offenders_; }

private:
    std::vector<std::string> offenders_;
};

/// A matrix that has to be inverted turned out singular.
class SingularMatrixError : public Error {
public:
    SingularMatrixError(const std::string& message, std::uint64_t switching_key)
        : Error(message), key_(switching_key) {}

    [[nodiscard]] std::uint64_t switching_key() const { return key_; }

private:
    std::uint64_t key_;
};

/// Inductance data whose closed-form inverse has a vanishing denominator.
class SingularCouplingError : public Error {
public:
    using Error::Error;
};

/// Non-finite or runaway state detected while stepping.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& message, double time, std::string variable)
        : Error(message), time_(time), variable_(std::move(variable)) {}

    [[nodiscard]] double time() const { return time_; }
    [[nodiscard]] const std::string& variable() const { return variable_; }

private:
    double time_;
    std::string variable_;
};

/// Newton iteration of the trapezoidal oracle failed to converge.
class NewtonError : public Error {
public:
    NewtonError(const std::string& message, std::vector<double> residuals)
        : Error(message), residuals_(std::move(residuals)) {}

    /// Infinity norm of the update at every iteration.
    [[nodiscard]] const std::vector<double>& residuals() const { return residuals_; }

private:
    std::vector<double> residuals_;
};

/// Evaluation at a pole of a rational function.
class PoleError : public Error {
public:
    using Error::Error;
};

}  // namespace imexsim
