#pragma once

#include <stdexcept>
#include <string>

namespace lsam {

// Error taxonomy shared by all modules. The CLI maps categories to exit
// codes (config -> 2, model -> 3, numerical -> 4).
enum class ErrorCode {
    // configuration / usage
    ConfigInvalid,
    IoError,
    PreconditionViolated,
    InvalidStep,
    KTooSmall,
    // model invariants
    NonStochastic,
    NotIrreducible,
    SteadyStateBiased,
    RankDeficientFeatures,
    ZeroFeatures,
    ScheduleInvalid,
    StepInvalid,
    MomentOrderTooHigh,
    NotSymmetric,
    NotPositiveDefinite,
    NotNegativeDefinite,
    // numerical failures
    SingularSystem,
    NotHurwitz,
    MixingExceedsCap,
    Overflow,
};

inline const char* to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::PreconditionViolated: return "PreconditionViolated";
        case ErrorCode::InvalidStep: return "InvalidStep";
        case ErrorCode::KTooSmall: return "KTooSmall";
        case ErrorCode::NonStochastic: return "NonStochastic";
        case ErrorCode::NotIrreducible: return "NotIrreducible";
        case ErrorCode::SteadyStateBiased: return "SteadyStateBiased";
        case ErrorCode::RankDeficientFeatures: return "RankDeficientFeatures";
        case ErrorCode::ZeroFeatures: return "ZeroFeatures";
        case ErrorCode::ScheduleInvalid: return "ScheduleInvalid";
        case ErrorCode::StepInvalid: return "StepInvalid";
        case ErrorCode::MomentOrderTooHigh: return "MomentOrderTooHigh";
        case ErrorCode::NotSymmetric: return "NotSymmetric";
        case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCode::NotNegativeDefinite: return "NotNegativeDefinite";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::NotHurwitz: return "NotHurwitz";
        case ErrorCode::MixingExceedsCap: return "MixingExceedsCap";
        case ErrorCode::Overflow: return "Overflow";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

// Exit-code category used by the CLI; declared here so library errors and
// process exit statuses stay in one place.
enum class ExitClass : int { Ok = 0, Config = 2, Model = 3, Numerical = 4 };

inline ExitClass exit_class(ErrorCode c) {
    switch (c) {
        case ErrorCode::ConfigInvalid:
        case ErrorCode::IoError:
            return ExitClass::Config;
        case ErrorCode::SingularSystem:
        case ErrorCode::NotHurwitz:
        case ErrorCode::MixingExceedsCap:
        case ErrorCode::Overflow:
            return ExitClass::Numerical;
        default:
            return ExitClass::Model;
    }
}

}  // namespace lsam
