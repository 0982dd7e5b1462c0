#pragma once

#include <stdexcept>
#include <string>

namespace sabias {

enum class Err {
    RowNotStochastic,
    Reducible,
    Periodic,
    SolveFailed,
    ZeroMass,
    NotConverged,
    SingularFundamental,
    ShapeMismatch,
    NoConvergence,
    SingularJacobian,
    NonFiniteIterate,
    EmptyWindow,
    TooFewBatches,
    NotHurwitz,
    SingularKroneckerSum,
    InsufficientBurnIn,
    IllConditionedFit,
    TooFewReplicas,
    SingularSigma,
    ConfigInvalid,
    MissingArtifacts,
};

const char* err_name(Err e);

/// All library failures surface as Error; Err identifies the condition
/// so callers (CLI, tests) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(Err code, const std::string& msg)
        : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}

    Err code() const { return code_; }

private:
    Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

} // namespace sabias
