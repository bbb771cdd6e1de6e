#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qkdvpp {

enum class ErrorCode {
    Parse,
    Invariant,
    DanglingRef,
    Range,
    NonpositiveDeltaCost,
    Unstable,
    Topology,
    InfeasibleBase,
    NoBaseFeasible,
    WrongStrategy,
    RecoveryFailed,
    Usage,
};

std::string_view to_string(ErrorCode code);

// Carries a machine-readable code plus the offending field or coordinate.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string subject, const std::string& detail = {});

    ErrorCode code() const noexcept { return code_; }
    const std::string& subject() const noexcept { return subject_; }

private:
    ErrorCode code_;
    std::string subject_;
};

}  // namespace qkdvpp
