#include "glued/error.hpp"

namespace glued {

std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::invalid_parameter:     return "invalid-parameter";
    case ErrorKind::ambiguity:             return "ambiguity";
    case ErrorKind::hypothesis_violation:  return "hypothesis-violation";
    case ErrorKind::non_integrable_weight: return "non-integrable-weight";
    case ErrorKind::non_compliant_mesh:    return "non-compliant-mesh";
    case ErrorKind::numeric:               return "numeric";
    case ErrorKind::config:                return "config";
    }
    return "unknown";
}

void throw_invalid(const std::string& what)
{
    throw Error(ErrorKind::invalid_parameter, what);
}

} // namespace glued
