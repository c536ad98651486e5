#pragma once

#include <stdexcept>
#include <string>

namespace gmfg {

/// Process exit codes shared by the CLI and the error hierarchy.
enum class ExitCode : int {
    ok = 0,
    user_error = 1,
    non_convergence = 2,
    numerical_blowup = 3,
};

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, ExitCode code = ExitCode::user_error)
        : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Malformed or out-of-range configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, ExitCode::user_error) {}
};

/// A caller broke a documented precondition (negative density, unnormalized law, ...).
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(what, ExitCode::user_error) {}
};

/// Unknown catalog entry (model, graphon family, kernel family).
class CatalogError : public Error {
public:
    explicit CatalogError(const std::string& what) : Error(what, ExitCode::user_error) {}
};

/// Non-finite values, CFL overflow, scheme positivity violations.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what, ExitCode::numerical_blowup) {}
};

/// sigma sigma^T fell below the declared floor theta (or sigma is singular).
class NondegeneracyError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// More than one argmax of h on the coarse grid and no analytic oracle.
class AmbiguityError : public Error {
public:
    explicit AmbiguityError(const std::string& what) : Error(what, ExitCode::user_error) {}
};

/// The damped fixed-point driver detected sustained oscillation.
class OscillationError : public Error {
public:
    OscillationError(const std::string& what, double suggested_damping)
        : Error(what, ExitCode::non_convergence), suggested_damping_(suggested_damping) {}
    double suggested_damping() const noexcept { return suggested_damping_; }

private:
    double suggested_damping_;
};

/// A shifted density left the guarded computational domain.
class DomainError : public Error {
public:
    DomainError(const std::string& what, double required_lo, double required_hi)
        : Error(what, ExitCode::numerical_blowup), lo_(required_lo), hi_(required_hi) {}
    double required_lo() const noexcept { return lo_; }
    double required_hi() const noexcept { return hi_; }

private:
    double lo_;
    double hi_;
};

} // namespace gmfg
