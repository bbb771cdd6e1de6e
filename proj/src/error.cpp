#include "qkdvpp/error.hpp"

namespace qkdvpp {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Parse: return "E_PARSE";
        case ErrorCode::Invariant: return "E_INVARIANT";
        case ErrorCode::DanglingRef: return "E_DANGLING_REF";
        case ErrorCode::Range: return "E_RANGE";
        case ErrorCode::NonpositiveDeltaCost: return "E_NONPOSITIVE_DELTA_COST";
        case ErrorCode::Unstable: return "E_UNSTABLE";
        case ErrorCode::Topology: return "E_TOPOLOGY";
        case ErrorCode::InfeasibleBase: return "E_INFEASIBLE_BASE";
        case ErrorCode::NoBaseFeasible: return "E_NO_BASE_FEASIBLE";
        case ErrorCode::WrongStrategy: return "E_WRONG_STRATEGY";
        case ErrorCode::RecoveryFailed: return "E_RECOVERY_FAILED";
        case ErrorCode::Usage: return "E_USAGE";
    }
    return "E_UNKNOWN";
}

namespace {

std::string format_message(ErrorCode code, const std::string& subject, const std::string& detail) {
    std::string msg{to_string(code)};
    msg += "(" + subject + ")";
    if (!detail.empty()) msg += ": " + detail;
    return msg;
}

}  // namespace

Error::Error(ErrorCode code, std::string subject, const std::string& detail)
    : std::runtime_error(format_message(code, subject, detail)),
      code_(code),
      subject_(std::move(subject)) {}

}  // namespace qkdvpp
