#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace glued {

/// Category of a failure. The CLI maps these to exit codes.
enum class ErrorKind {
    invalid_parameter,
    ambiguity,
    hypothesis_violation,
    non_integrable_weight,
    non_compliant_mesh,
    numeric,
    config,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// True for the kinds that signal a violated hypothesis of the model
    /// (boundary-touching intersection, non-integrable weight, non-M-matrix walk).
    bool is_hypothesis_violation() const noexcept {
        return kind_ == ErrorKind::hypothesis_violation ||
               kind_ == ErrorKind::non_integrable_weight ||
               kind_ == ErrorKind::non_compliant_mesh;
    }

private:
    ErrorKind kind_;
};

/// Solver failure carrying the residual it reached.
class NumericError : public Error {
public:
    NumericError(const std::string& what, double residual)
        : Error(ErrorKind::numeric, what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

[[noreturn]] void throw_invalid(const std::string& what);

} // namespace glued
