#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sabias/drift.hpp"
#include "sabias/markov.hpp"
#include "sabias/noise.hpp"

namespace sabias {

/// Constant-stepsize run plan. beta = +inf disables projection.
struct SAConfig {
    double alpha = 0.0;
    double beta = std::numeric_limits<double>::infinity();
    std::int64_t horizon = 0;  // K
    std::int64_t burn_in = 0;  // k0: tail statistics cover iterates [k0, K)
    std::int64_t replicas = 1;
    std::uint64_t seed = 1;
    int p_max = 3;             // track E|theta - theta*|^(2p) for p = 1..p_max
    std::int64_t thinning = 1; // keep every m-th tail iterate for the batch-means series
    int batch_count = 0;       // 0 disables batch-means tracking
    std::optional<int> x0_state;  // fixed start state; otherwise x0 ~ pi
    Eigen::VectorXd theta0;       // empty: zero vector
};

struct CheckpointStats {
    std::int64_t k = 0;
    Eigen::VectorXd mean;           // E[theta_k]
    Eigen::MatrixXd second_moment;  // E[(theta_k - theta*) (theta_k - theta*)^T]
    std::vector<double> m2p;        // E|theta_k - theta*|^(2p), p = 1..p_max
};

/// Streaming moments across replicas, merged in replica-index order, so the
/// result is a deterministic function of the seed alone.
struct EnsembleStats {
    std::int64_t replicas = 0;
    int dim = 0;
    std::int64_t horizon = 0;
    std::int64_t burn_in = 0;
    std::vector<CheckpointStats> checkpoints;

    Eigen::VectorXd tail_mean;          // pooled time-and-ensemble average over [k0, K)
    Eigen::MatrixXd tail_cov;           // across-replica covariance of the tail averages
    std::vector<double> tail_m2p;       // time-and-ensemble average of |theta - theta*|^(2p)
    std::vector<Eigen::VectorXd> replica_tail_means;

    // Present when batch_count > 0.
    int batch_count = 0;
    std::int64_t clt_samples = 0;  // thinned samples per replica entering the batch series
    std::vector<Eigen::VectorXd> replica_clt_means;
    std::vector<Eigen::MatrixXd> replica_bm_cov;
};

/// One SA update: theta + alpha (g(theta, x) + xi(theta)), then radial
/// projection onto the beta-ball. Throws NonFiniteIterate.
Eigen::VectorXd sa_step(const Eigen::VectorXd& theta, int state, const SAConfig& cfg,
                        const DriftModel& model, const FiniteChain& chain, const NoiseField& noise,
                        const Eigen::VectorXd& base_draw);

/// Power-of-two checkpoint schedule {1, 2, 4, ..., K}.
std::vector<std::int64_t> geometric_checkpoints(std::int64_t horizon);

EnsembleStats run_ensemble(const SAConfig& cfg, const DriftModel& model, const FiniteChain& chain,
                           const StationaryInfo& info, const NoiseField& noise,
                           const std::vector<std::int64_t>& checkpoints,
                           const Eigen::VectorXd& theta_star, int n_threads = 0);

/// Tail averages of the alpha run and of a 2-alpha run driven by the
/// bit-identical state sequence (per replica) but its own noise stream.
struct PairedTails {
    std::vector<Eigen::VectorXd> tail_alpha;
    std::vector<Eigen::VectorXd> tail_2alpha;
};

PairedTails run_paired_tails(const SAConfig& cfg, const DriftModel& model, const FiniteChain& chain,
                             const StationaryInfo& info, const NoiseField& noise, int n_threads = 0);

/// Two trajectories sharing the data sequence and the noise draws.
struct CoupledLog {
    std::vector<double> mean_sq_diff;  // index k = 0..K
    double rho_hat = 0.0;              // fitted per-step geometric rate of E|diff|^2
    double log_intercept = 0.0;
    bool degenerate = false;           // difference hit exactly zero inside the fit window
    std::int64_t fit_start = 0;
};

CoupledLog run_coupled(const SAConfig& cfg, const DriftModel& model, const FiniteChain& chain,
                       const StationaryInfo& info, const NoiseField& noise,
                       const Eigen::VectorXd& theta0_a, const Eigen::VectorXd& theta0_b,
                       std::int64_t fit_start);

/// Arithmetic mean of iterates[k0..k). Throws EmptyWindow.
Eigen::VectorXd tail_average(std::span<const Eigen::VectorXd> iterates, std::int64_t k0,
                             std::int64_t k);

/// Batch-means estimate of the long-run covariance
/// lim (1/k) E[(sum_t (x_t - mean))^{x2}]: batch length times the sample
/// covariance of the batch means. The window [k0, n) is truncated to a
/// multiple of batch_count. Throws TooFewBatches below 8.
Eigen::MatrixXd batch_means_covariance(std::span<const Eigen::VectorXd> iterates, std::int64_t k0,
                                       int batch_count);

} // namespace sabias
