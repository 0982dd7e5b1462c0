#pragma once

#include <vector>

#include <Eigen/Dense>

#include "sabias/engine.hpp"

namespace sabias {

/// The closed-form leading bias b = b_m + b_n + b_c of the stationary law of
/// constant-stepsize SA, together with every intermediate the derivation
/// touches. E[theta_inf] - theta* = alpha b + higher order.
struct BiasDecomposition {
    Eigen::VectorXd b_m;      // Markov-memory term
    Eigen::VectorXd b_n;      // nonlinearity (Hessian) term
    Eigen::VectorXd b_c;      // compound Markov x nonlinearity term
    Eigen::VectorXd b_total;

    Eigen::MatrixXd G;                  // n x d drift values at theta*
    Eigen::MatrixXd H;                  // n x d h-function values
    Eigen::MatrixXd Jbar;               // mean Jacobian gbar'(theta*)
    std::vector<Eigen::MatrixXd> Tbar;  // mean Hessian gbar''(theta*), slab i = d^2 g_i
    Eigen::MatrixXd M_g;                // E_pi[g g^T]
    Eigen::MatrixXd M_xi;               // C(theta*)
    Eigen::MatrixXd M_gh;               // E_pi[g h^T + h g^T]
    Eigen::MatrixXd S_n;                // Lyapunov solution for M_g + M_xi
    Eigen::MatrixXd S_c;                // Lyapunov solution for M_gh
};

/// Solve J S + S J^T = M for Hurwitz J (all eigenvalue real parts negative),
/// the matrix form of applying the inverse Kronecker sum
/// (J (x) I + I (x) J)^{-1} to vec(M). Bartels-Stewart via complex Schur.
/// Throws NotHurwitz, SingularKroneckerSum.
Eigen::MatrixXd lyapunov_apply(const Eigen::MatrixXd& J, const Eigen::MatrixXd& M);

/// v_i = sum_{j,k} T[i](j,k) S(j,k).
Eigen::VectorXd hessian_contract(const std::vector<Eigen::MatrixXd>& T, const Eigen::MatrixXd& S);

/// Exact finite-chain evaluation of the bias decomposition: pi-weighted sums
/// over states for all expectations, h from the fundamental-matrix solve,
/// Lyapunov solves for the Kronecker-sum inverse. No sampling anywhere.
BiasDecomposition compute_bias(const DriftModel& model, const FiniteChain& chain,
                               const StationaryInfo& info, const NoiseField& noise,
                               const Eigen::VectorXd& theta_star);

struct SlopePlan {
    SAConfig base;                  // alpha is overridden per grid point
    double mu = 0.0;                // monotonicity estimate for the burn-in rule
    bool share_grid_streams = false; // reuse the same streams at every grid point
    int n_threads = 0;
};

struct SlopeFit {
    Eigen::VectorXd slope;      // alpha-coefficient per coordinate
    Eigen::VectorXd curvature;  // alpha^{3/2}-coefficient per coordinate
    Eigen::VectorXd stderr_;    // standard error of the slope
    std::vector<double> alphas;
    std::vector<Eigen::VectorXd> bias_per_alpha;  // pooled E[theta_inf] - theta*
    std::vector<Eigen::VectorXd> se_per_alpha;
    std::vector<std::int64_t> tau_per_alpha;
};

/// Monte-Carlo estimate of the bias slope: steady-state tail averages per
/// stepsize, then per-coordinate weighted least squares of the residual on
/// (alpha, alpha^{3/2}). Throws InsufficientBurnIn, IllConditionedFit.
SlopeFit mc_bias_slope(const DriftModel& model, const FiniteChain& chain,
                       const StationaryInfo& info, const NoiseField& noise,
                       const Eigen::VectorXd& theta_star, const std::vector<double>& alpha_grid,
                       const SlopePlan& plan);

} // namespace sabias
