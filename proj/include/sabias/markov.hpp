#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sabias/common.hpp"

namespace sabias {

/// Per-state payload. Drift families decide what they read: GLM families use
/// the covariate w and the response y, the linear and tabulated families key
/// off the state index alone.
struct Observation {
    Eigen::VectorXd w;
    double y = 0.0;
    bool has_y = false;
};

/// A validated finite-state Markov chain: row-stochastic, irreducible,
/// aperiodic. Immutable after construction; safe to share across threads.
class FiniteChain {
public:
    /// Empty placeholder; only validate_chain produces a usable chain.
    FiniteChain() = default;

    int n_states() const { return static_cast<int>(transition_.rows()); }
    const Eigen::MatrixXd& transition() const { return transition_; }
    const std::vector<Observation>& observations() const { return observations_; }
    const Observation& observation(int state) const { return observations_[static_cast<size_t>(state)]; }

    /// Row-major row CDFs for inverse-CDF sampling.
    const double* row_cdf(int state) const { return row_cdf_.data() + static_cast<size_t>(state) * n_states(); }

private:
    friend FiniteChain validate_chain(Eigen::MatrixXd transition, std::vector<Observation> observations);

    Eigen::MatrixXd transition_;
    std::vector<Observation> observations_;
    std::vector<double> row_cdf_;
};

/// Validate a transition matrix (row sums within 1e-12 of one, nonnegative
/// entries, irreducible and aperiodic support graph) and attach payloads.
/// An empty payload list is expanded to n default observations.
/// Throws RowNotStochastic, Reducible, or Periodic.
FiniteChain validate_chain(Eigen::MatrixXd transition, std::vector<Observation> observations = {});

/// pi with pi*P = pi, sum(pi) = 1, by a dense solve of the augmented
/// (n+1)-row system. Throws SolveFailed on numerical breakdown.
Eigen::VectorXd stationary_distribution(const FiniteChain& chain);

/// Time-reversed kernel P*_ij = pi_j P_ji / pi_i. Throws ZeroMass.
Eigen::MatrixXd time_reversal(const FiniteChain& chain, const Eigen::VectorXd& pi);

struct MixingResult {
    std::int64_t tau = 0;
    /// tv_curve[k-1] = sup over rows of ||P^k(x,.) - pi||_TV, for k = 1..tau.
    std::vector<double> tv_curve;
};

/// Smallest k >= 1 with sup-row total variation at most epsilon, by explicit
/// matrix powers. Throws NotConverged past step_cap.
MixingResult mixing_time(const FiniteChain& chain, double epsilon, std::int64_t step_cap = 1000000);

/// Geometric TV-decay envelope TV(k) <= R r^k fitted on the log curve.
/// Reporting only; never enters the bias formulas.
struct ErgodicityFit {
    double R = 0.0;
    double r = 0.0;
};

/// Stationary analysis bundle: everything the bias formulas need, computed
/// once per chain.
struct StationaryInfo {
    Eigen::VectorXd pi;
    Eigen::MatrixXd reversal;    // P*
    Eigen::MatrixXd fundamental; // F = (I - P* + Pi)^-1
    ErgodicityFit ergodicity_fit;
    std::map<double, std::int64_t> mixing_table;
    std::vector<double> tv_curve;
};

StationaryInfo analyze_chain(const FiniteChain& chain,
                             const std::vector<double>& epsilons = {0.25, 0.1, 0.05, 0.01});

/// H = F (P* - Pi) G, the per-state Markov-memory correction for the drift
/// values G (row i holds g(theta*, state_i)). Satisfies pi^T H = 0.
/// Throws SingularFundamental.
Eigen::MatrixXd compute_h(const StationaryInfo& info, const Eigen::MatrixXd& G);

} // namespace sabias
