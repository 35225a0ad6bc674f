#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace bsde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode {
    // lattice
    NegativeProbability,
    RowSumOutOfTolerance,
    MissingKernelRow,
    HorizonZero,
    TimeOutOfRange,
    TerminalAtom,
    MissingChildValue,
    OffSupportIndex,
    InvalidTree,
    // representation
    NonzeroConditionalMean,
    DimensionMismatch,
    // solver
    RootFindDivergence,
    NonFiniteDriverValue,
    // recovery
    OracleInconsistent,
    InconsistentPair,
    // nlexp
    DriverNotNormalized,
    DriverDependsOnY,
    BalancednessProbeFailed,
    // static2dyn
    InvalidParams,
    TrivialityProbeFailed,
    NotTimeConsistent,
    // io
    ParseError,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NegativeProbability: return "NegativeProbability";
        case ErrorCode::RowSumOutOfTolerance: return "RowSumOutOfTolerance";
        case ErrorCode::MissingKernelRow: return "MissingKernelRow";
        case ErrorCode::HorizonZero: return "HorizonZero";
        case ErrorCode::TimeOutOfRange: return "TimeOutOfRange";
        case ErrorCode::TerminalAtom: return "TerminalAtom";
        case ErrorCode::MissingChildValue: return "MissingChildValue";
        case ErrorCode::OffSupportIndex: return "OffSupportIndex";
        case ErrorCode::InvalidTree: return "InvalidTree";
        case ErrorCode::NonzeroConditionalMean: return "NonzeroConditionalMean";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::RootFindDivergence: return "RootFindDivergence";
        case ErrorCode::NonFiniteDriverValue: return "NonFiniteDriverValue";
        case ErrorCode::OracleInconsistent: return "OracleInconsistent";
        case ErrorCode::InconsistentPair: return "InconsistentPair";
        case ErrorCode::DriverNotNormalized: return "DriverNotNormalized";
        case ErrorCode::DriverDependsOnY: return "DriverDependsOnY";
        case ErrorCode::BalancednessProbeFailed: return "BalancednessProbeFailed";
        case ErrorCode::InvalidParams: return "InvalidParams";
        case ErrorCode::TrivialityProbeFailed: return "TrivialityProbeFailed";
        case ErrorCode::NotTimeConsistent: return "NotTimeConsistent";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

/// Exception carrying a machine-checkable code. All library failures throw this.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Numerical tolerances shared across modules. Defaults are the documented ones;
/// callers may pass their own instance where an operation accepts one.
struct Tolerances {
    double row_sum = 1e-9;          // kernel rows must sum to 1 within this
    double zero_probability = 1e-12; // kernel entries below this are pruned
    double equivalence = 1e-10;      // realized-increment equality for Z ~ Z'
    double mean_zero = 1e-10;        // conditional mean check in represent()
    double solve = 1e-10;            // one-step root-finding residual
    double margin = 1e-10;           // boundary band for comparison margins
};

inline const Tolerances& default_tolerances() {
    static const Tolerances tol{};
    return tol;
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline double max_abs(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace bsde
