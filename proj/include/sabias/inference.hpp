#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sabias/engine.hpp"

namespace sabias {

/// theta_tilde = 2 theta_bar(alpha) - theta_bar(2 alpha), exact.
Eigen::VectorXd rr_extrapolate(const Eigen::VectorXd& bar_alpha, const Eigen::VectorXd& bar_2alpha);

/// Per-replica tail averages at alpha and 2 alpha (same data stream) plus the
/// extrapolated combination, with pooled summaries against theta*.
struct RRResult {
    std::vector<Eigen::VectorXd> theta_bar_alpha;
    std::vector<Eigen::VectorXd> theta_bar_2alpha;
    std::vector<Eigen::VectorXd> theta_tilde;

    Eigen::VectorXd mean_alpha, mean_2alpha, mean_tilde;
    Eigen::MatrixXd cov_alpha, cov_tilde;
    double bias_norm_alpha = 0.0;  // |pooled mean - theta*|
    double bias_norm_tilde = 0.0;
};

RRResult run_rr(const SAConfig& cfg, const DriftModel& model, const FiniteChain& chain,
                const StationaryInfo& info, const NoiseField& noise,
                const Eigen::VectorXd& theta_star, int n_threads = 0);

struct MseDecomposition {
    double bias_sq = 0.0;   // |pooled mean - theta*|^2
    double variance = 0.0;  // trace of the across-replica covariance
    double total = 0.0;     // mean of |theta_bar - theta*|^2
};

/// Throws TooFewReplicas below 30.
MseDecomposition mse_decomposition(std::span<const Eigen::VectorXd> tail_averages,
                                   const Eigen::VectorXd& theta_star);

struct CltReport {
    std::vector<double> qq_corr;   // per coordinate
    std::vector<double> cover90;
    std::vector<double> cover95;
    std::vector<bool> normal_flag; // qq_corr >= 0.98
    std::vector<std::vector<double>> standardized; // per coordinate, sorted
};

/// Standardize sqrt(count) Sigma^{-1/2} (estimate - reference) per replica and
/// report per-coordinate qq-correlation against standard normal quantiles plus
/// the empirical coverage of the nominal 90%/95% intervals.
/// Throws SingularSigma.
CltReport clt_diagnostic(std::span<const Eigen::VectorXd> estimates,
                         const Eigen::VectorXd& reference_mean, const Eigen::MatrixXd& sigma_hat,
                         double count);

/// Inverse standard normal CDF (Acklam's rational approximation, refined by
/// one Halley step).
double normal_quantile(double p);

} // namespace sabias
