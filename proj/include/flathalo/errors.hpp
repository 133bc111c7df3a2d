#pragma once

#include <stdexcept>
#include <string>

namespace flathalo {

/// base class of all errors raised by the library
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// argument outside the admissible range of an operation
class DomainError : public Error {
public:
    using Error::Error;
};

/// kernel evaluated at coincident source and target points
class SingularityError : public DomainError {
public:
    using DomainError::DomainError;
};

/// field and grid sizes do not agree, or two grids are incompatible
class GridMismatchError : public DomainError {
public:
    using DomainError::DomainError;
};

/// a perturbation moved mass outside the evaluation domain
class SupportEscapeError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Emden-Fowler solution without a zero crossing inside the search radius
class UnboundedSolutionError : public Error {
public:
    using Error::Error;
};

/// an iteration exhausted its sweep budget
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::string diagnostics)
        : Error(what + " [" + diagnostics + "]"), diagnostics_(std::move(diagnostics)) {}
    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

/// no cutoff energy reproduces the requested mass and Casimir norm
class MultiplierError : public Error {
public:
    using Error::Error;
};

/// a component was driven to zero mass
class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& component, const std::string& what)
        : Error(component + ": " + what), component_(component) {}
    const std::string& component() const noexcept { return component_; }

private:
    std::string component_;
};

}  // namespace flathalo
