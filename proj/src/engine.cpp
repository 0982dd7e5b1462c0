#include "sabias/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <thread>

#include "sabias/rng.hpp"

namespace sabias {

namespace {

void check_config(const SAConfig& cfg, const DriftModel& model, const FiniteChain& chain) {
    if (!(cfg.alpha > 0.0)) fail(Err::ShapeMismatch, "alpha must be positive");
    if (cfg.horizon <= 0) fail(Err::ShapeMismatch, "horizon must be positive");
    if (cfg.burn_in < 0 || cfg.burn_in >= cfg.horizon) fail(Err::ShapeMismatch, "need 0 <= k0 < K");
    if (cfg.replicas <= 0) fail(Err::ShapeMismatch, "replicas must be positive");
    if (cfg.p_max < 1 || cfg.p_max > 3) fail(Err::ShapeMismatch, "p_max must lie in [1,3]");
    if (cfg.thinning < 1) fail(Err::ShapeMismatch, "thinning must be >= 1");
    if (cfg.theta0.size() != 0 && cfg.theta0.size() != model.dim()) {
        fail(Err::ShapeMismatch, "theta0 has wrong length");
    }
    if (cfg.x0_state && (*cfg.x0_state < 0 || *cfg.x0_state >= chain.n_states())) {
        fail(Err::ShapeMismatch, "x0 state out of range");
    }
}

inline void project_ball(Eigen::VectorXd& theta, double beta) {
    if (!std::isfinite(beta)) return;
    const double n2 = theta.squaredNorm();
    if (n2 > beta * beta) theta *= beta / std::sqrt(n2);
}

inline void check_finite(const Eigen::VectorXd& theta, std::int64_t replica, std::int64_t step) {
    if (!theta.allFinite()) {
        fail(Err::NonFiniteIterate, "replica " + std::to_string(replica) + " at step " +
                                        std::to_string(step) + " (stepsize too large or model bug)");
    }
}

int draw_initial_state(const SAConfig& cfg, const FiniteChain& chain, const Eigen::VectorXd& pi_cdf,
                       rng::Stream& chain_stream) {
    if (cfg.x0_state) return *cfg.x0_state;
    return chain_stream.sample_cdf(pi_cdf.data(), chain.n_states());
}

Eigen::VectorXd cumulative(const Eigen::VectorXd& pi) {
    Eigen::VectorXd cdf(pi.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pi.size(); ++i) {
        acc += pi[i];
        cdf[i] = acc;
    }
    cdf[pi.size() - 1] = 1.0;
    return cdf;
}

// Everything one replica contributes, stored in its own slot so that the
// final reduction can run in replica-index order regardless of scheduling.
struct ReplicaOut {
    std::vector<Eigen::VectorXd> checkpoint_theta;
    Eigen::VectorXd tail_sum;
    std::vector<double> tail_m2p_sum;
    std::vector<Eigen::VectorXd> batch_sums;
    std::int64_t batch_len = 0;
};

void run_replica(std::int64_t r, const SAConfig& cfg, const DriftModel& model,
                 const FiniteChain& chain, const Eigen::VectorXd& pi_cdf, const NoiseField& noise,
                 const std::vector<std::int64_t>& cps, const Eigen::VectorXd& theta_star,
                 ReplicaOut& out) {
    const int d = model.dim();
    const int n = chain.n_states();
    const bool has_noise = noise.variant() != NoiseVariant::None;
    const std::int64_t window = cfg.horizon - cfg.burn_in;

    rng::Stream chain_stream(cfg.seed, static_cast<std::uint64_t>(r), rng::Role::Chain);
    rng::Stream noise_stream(cfg.seed, static_cast<std::uint64_t>(r), rng::Role::Noise);

    Eigen::VectorXd theta = cfg.theta0.size() ? cfg.theta0 : Eigen::VectorXd::Zero(d);
    Eigen::VectorXd g(d), xi(d), z(d), delta(d);
    int x = draw_initial_state(cfg, chain, pi_cdf, chain_stream);

    out.checkpoint_theta.assign(cps.size(), Eigen::VectorXd());
    out.tail_sum = Eigen::VectorXd::Zero(d);
    out.tail_m2p_sum.assign(static_cast<size_t>(cfg.p_max), 0.0);

    // Batch-means series: every thinning-th tail iterate, truncated to a
    // whole number of batches.
    std::int64_t n_thin = 0, batch_len = 0;
    if (cfg.batch_count > 0) {
        n_thin = (window + cfg.thinning - 1) / cfg.thinning;
        batch_len = n_thin / cfg.batch_count;
        if (batch_len < 1) fail(Err::TooFewBatches, "window too short for the requested batch count");
        out.batch_sums.assign(static_cast<size_t>(cfg.batch_count), Eigen::VectorXd::Zero(d));
        out.batch_len = batch_len;
    }

    size_t ci = 0;
    while (ci < cps.size() && cps[ci] == 0) {
        out.checkpoint_theta[ci++] = theta;
    }

    for (std::int64_t t = 0; t < cfg.horizon; ++t) {
        if (t >= cfg.burn_in) {
            out.tail_sum += theta;
            delta = theta - theta_star;
            const double e2 = delta.squaredNorm();
            double pw = 1.0;
            for (int p = 0; p < cfg.p_max; ++p) {
                pw *= e2;
                out.tail_m2p_sum[static_cast<size_t>(p)] += pw;
            }
            if (cfg.batch_count > 0) {
                const std::int64_t tt = t - cfg.burn_in;
                if (tt % cfg.thinning == 0) {
                    const std::int64_t j = tt / cfg.thinning;
                    const std::int64_t bat = j / batch_len;
                    if (bat < cfg.batch_count) out.batch_sums[static_cast<size_t>(bat)] += theta;
                }
            }
        }

        model.drift(theta, chain.observation(x), x, g);
        if (has_noise) {
            noise_stream.normal_vector(z);
            noise.sample(theta, z, xi);
            theta += cfg.alpha * (g + xi);
        } else {
            theta += cfg.alpha * g;
        }
        project_ball(theta, cfg.beta);
        check_finite(theta, r, t + 1);
        x = chain_stream.sample_cdf(chain.row_cdf(x), n);

        if (ci < cps.size() && cps[ci] == t + 1) {
            out.checkpoint_theta[ci++] = theta;
        }
    }
}

void parallel_replicas(std::int64_t replicas, int n_threads,
                       const std::function<void(std::int64_t)>& body) {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    const int workers = std::max(1, std::min<int>(n_threads > 0 ? n_threads : hw,
                                                  static_cast<int>(replicas)));
    if (workers == 1) {
        for (std::int64_t r = 0; r < replicas; ++r) body(r);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&]() {
        while (true) {
            const std::int64_t r = next.fetch_add(1);
            if (r >= replicas) return;
            try {
                body(r);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace

Eigen::VectorXd sa_step(const Eigen::VectorXd& theta, int state, const SAConfig& cfg,
                        const DriftModel& model, const FiniteChain& chain, const NoiseField& noise,
                        const Eigen::VectorXd& base_draw) {
    Eigen::VectorXd g(model.dim()), xi(model.dim());
    model.drift(theta, chain.observation(state), state, g);
    noise.sample(theta, base_draw, xi);
    Eigen::VectorXd out = theta + cfg.alpha * (g + xi);
    project_ball(out, cfg.beta);
    check_finite(out, 0, 0);
    return out;
}

std::vector<std::int64_t> geometric_checkpoints(std::int64_t horizon) {
    std::vector<std::int64_t> cps;
    for (std::int64_t k = 1; k < horizon; k *= 2) cps.push_back(k);
    cps.push_back(horizon);
    return cps;
}

EnsembleStats run_ensemble(const SAConfig& cfg, const DriftModel& model, const FiniteChain& chain,
                           const StationaryInfo& info, const NoiseField& noise,
                           const std::vector<std::int64_t>& checkpoints,
                           const Eigen::VectorXd& theta_star, int n_threads) {
    check_config(cfg, model, chain);
    if (theta_star.size() != model.dim()) fail(Err::ShapeMismatch, "theta_star has wrong length");
    std::vector<std::int64_t> cps = checkpoints;
    std::sort(cps.begin(), cps.end());
    cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
    if (!cps.empty() && (cps.front() < 0 || cps.back() > cfg.horizon)) {
        fail(Err::ShapeMismatch, "checkpoints must lie in [0, K]");
    }

    const int d = model.dim();
    const Eigen::VectorXd pi_cdf = cumulative(info.pi);
    std::vector<ReplicaOut> slots(static_cast<size_t>(cfg.replicas));
    parallel_replicas(cfg.replicas, n_threads, [&](std::int64_t r) {
        run_replica(r, cfg, model, chain, pi_cdf, noise, cps, theta_star,
                    slots[static_cast<size_t>(r)]);
    });

    // Deterministic reduction in replica-index order.
    EnsembleStats stats;
    stats.replicas = cfg.replicas;
    stats.dim = d;
    stats.horizon = cfg.horizon;
    stats.burn_in = cfg.burn_in;

    const double inv_r = 1.0 / static_cast<double>(cfg.replicas);
    const double window = static_cast<double>(cfg.horizon - cfg.burn_in);
    for (size_t c = 0; c < cps.size(); ++c) {
        CheckpointStats cs;
        cs.k = cps[c];
        cs.mean = Eigen::VectorXd::Zero(d);
        cs.second_moment = Eigen::MatrixXd::Zero(d, d);
        cs.m2p.assign(static_cast<size_t>(cfg.p_max), 0.0);
        for (const auto& slot : slots) {
            const Eigen::VectorXd& th = slot.checkpoint_theta[c];
            cs.mean += th;
            const Eigen::VectorXd delta = th - theta_star;
            cs.second_moment += delta * delta.transpose();
            const double e2 = delta.squaredNorm();
            double pw = 1.0;
            for (int p = 0; p < cfg.p_max; ++p) {
                pw *= e2;
                cs.m2p[static_cast<size_t>(p)] += pw;
            }
        }
        cs.mean *= inv_r;
        cs.second_moment *= inv_r;
        for (auto& v : cs.m2p) v *= inv_r;
        stats.checkpoints.push_back(std::move(cs));
    }

    stats.tail_mean = Eigen::VectorXd::Zero(d);
    stats.tail_m2p.assign(static_cast<size_t>(cfg.p_max), 0.0);
    stats.replica_tail_means.reserve(static_cast<size_t>(cfg.replicas));
    for (const auto& slot : slots) {
        stats.replica_tail_means.push_back(slot.tail_sum / window);
        stats.tail_mean += stats.replica_tail_means.back();
        for (int p = 0; p < cfg.p_max; ++p) {
            stats.tail_m2p[static_cast<size_t>(p)] += slot.tail_m2p_sum[static_cast<size_t>(p)] / window;
        }
    }
    stats.tail_mean *= inv_r;
    for (auto& v : stats.tail_m2p) v *= inv_r;

    stats.tail_cov = Eigen::MatrixXd::Zero(d, d);
    if (cfg.replicas > 1) {
        for (const auto& tm : stats.replica_tail_means) {
            const Eigen::VectorXd delta = tm - stats.tail_mean;
            stats.tail_cov += delta * delta.transpose();
        }
        stats.tail_cov /= static_cast<double>(cfg.replicas - 1);
    }

    if (cfg.batch_count > 0) {
        stats.batch_count = cfg.batch_count;
        for (auto& slot : slots) {
            const double len = static_cast<double>(slot.batch_len);
            stats.clt_samples = slot.batch_len * cfg.batch_count;
            std::vector<Eigen::VectorXd> means(slot.batch_sums.size());
            Eigen::VectorXd grand = Eigen::VectorXd::Zero(d);
            for (size_t b = 0; b < slot.batch_sums.size(); ++b) {
                means[b] = slot.batch_sums[b] / len;
                grand += means[b];
            }
            grand /= static_cast<double>(cfg.batch_count);
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
            for (const auto& m : means) {
                const Eigen::VectorXd delta = m - grand;
                cov += delta * delta.transpose();
            }
            cov *= len / static_cast<double>(cfg.batch_count - 1);
            stats.replica_clt_means.push_back(std::move(grand));
            stats.replica_bm_cov.push_back(std::move(cov));
        }
    }
    return stats;
}

PairedTails run_paired_tails(const SAConfig& cfg, const DriftModel& model, const FiniteChain& chain,
                             const StationaryInfo& info, const NoiseField& noise, int n_threads) {
    check_config(cfg, model, chain);
    const int d = model.dim();
    const int n = chain.n_states();
    const Eigen::VectorXd pi_cdf = cumulative(info.pi);
    const bool has_noise = noise.variant() != NoiseVariant::None;
    const double window = static_cast<double>(cfg.horizon - cfg.burn_in);

    PairedTails tails;
    tails.tail_alpha.assign(static_cast<size_t>(cfg.replicas), Eigen::VectorXd());
    tails.tail_2alpha.assign(static_cast<size_t>(cfg.replicas), Eigen::VectorXd());

    parallel_replicas(cfg.replicas, n_threads, [&](std::int64_t r) {
        rng::Stream chain_stream(cfg.seed, static_cast<std::uint64_t>(r), rng::Role::Chain);
        rng::Stream noise_a(cfg.seed, static_cast<std::uint64_t>(r), rng::Role::Noise);
        rng::Stream noise_b(cfg.seed, static_cast<std::uint64_t>(r), rng::Role::NoiseAlt);

        Eigen::VectorXd ta = cfg.theta0.size() ? cfg.theta0 : Eigen::VectorXd::Zero(d);
        Eigen::VectorXd tb = ta;
        Eigen::VectorXd g(d), xi(d), z(d);
        Eigen::VectorXd sum_a = Eigen::VectorXd::Zero(d), sum_b = Eigen::VectorXd::Zero(d);
        int x = draw_initial_state(cfg, chain, pi_cdf, chain_stream);

        for (std::int64_t t = 0; t < cfg.horizon; ++t) {
            if (t >= cfg.burn_in) {
                sum_a += ta;
                sum_b += tb;
            }
            const Observation& obs = chain.observation(x);
            model.drift(ta, obs, x, g);
            if (has_noise) {
                noise_a.normal_vector(z);
                noise.sample(ta, z, xi);
                ta += cfg.alpha * (g + xi);
            } else {
                ta += cfg.alpha * g;
            }
            project_ball(ta, cfg.beta);
            check_finite(ta, r, t + 1);

            model.drift(tb, obs, x, g);
            if (has_noise) {
                noise_b.normal_vector(z);
                noise.sample(tb, z, xi);
                tb += 2.0 * cfg.alpha * (g + xi);
            } else {
                tb += 2.0 * cfg.alpha * g;
            }
            project_ball(tb, cfg.beta);
            check_finite(tb, r, t + 1);

            x = chain_stream.sample_cdf(chain.row_cdf(x), n);
        }
        tails.tail_alpha[static_cast<size_t>(r)] = sum_a / window;
        tails.tail_2alpha[static_cast<size_t>(r)] = sum_b / window;
    });
    return tails;
}

CoupledLog run_coupled(const SAConfig& cfg, const DriftModel& model, const FiniteChain& chain,
                       const StationaryInfo& info, const NoiseField& noise,
                       const Eigen::VectorXd& theta0_a, const Eigen::VectorXd& theta0_b,
                       std::int64_t fit_start) {
    check_config(cfg, model, chain);
    if (theta0_a.size() != model.dim() || theta0_b.size() != model.dim()) {
        fail(Err::ShapeMismatch, "coupled initial points have wrong length");
    }
    if (fit_start < 0 || fit_start >= cfg.horizon) fail(Err::ShapeMismatch, "fit_start out of range");

    const int d = model.dim();
    const int n = chain.n_states();
    const Eigen::VectorXd pi_cdf = cumulative(info.pi);
    const bool has_noise = noise.variant() != NoiseVariant::None;

    CoupledLog log;
    log.fit_start = fit_start;
    log.mean_sq_diff.assign(static_cast<size_t>(cfg.horizon) + 1, 0.0);

    // Replicas accumulate in index order; the shared-noise trajectories are
    // cheap enough that a sequential sweep keeps the sums deterministic.
    Eigen::VectorXd ta(d), tb(d), g(d), xi(d), z(d);
    for (std::int64_t r = 0; r < cfg.replicas; ++r) {
        rng::Stream chain_stream(cfg.seed, static_cast<std::uint64_t>(r), rng::Role::Chain);
        rng::Stream noise_stream(cfg.seed, static_cast<std::uint64_t>(r), rng::Role::Noise);
        ta = theta0_a;
        tb = theta0_b;
        int x = draw_initial_state(cfg, chain, pi_cdf, chain_stream);
        log.mean_sq_diff[0] += (ta - tb).squaredNorm();
        for (std::int64_t t = 0; t < cfg.horizon; ++t) {
            const Observation& obs = chain.observation(x);
            if (has_noise) noise_stream.normal_vector(z);

            model.drift(ta, obs, x, g);
            if (has_noise) {
                noise.sample(ta, z, xi);
                ta += cfg.alpha * (g + xi);
            } else {
                ta += cfg.alpha * g;
            }
            project_ball(ta, cfg.beta);
            check_finite(ta, r, t + 1);

            model.drift(tb, obs, x, g);
            if (has_noise) {
                noise.sample(tb, z, xi);
                tb += cfg.alpha * (g + xi);
            } else {
                tb += cfg.alpha * g;
            }
            project_ball(tb, cfg.beta);
            check_finite(tb, r, t + 1);

            x = chain_stream.sample_cdf(chain.row_cdf(x), n);
            const double sq = (ta - tb).squaredNorm();
            log.mean_sq_diff[static_cast<size_t>(t + 1)] += sq;
            // An exactly-coupled pair stays coupled forever under shared
            // draws; the remaining contributions are all zero.
            if (sq == 0.0) break;
        }
    }
    for (auto& v : log.mean_sq_diff) v /= static_cast<double>(cfg.replicas);

    // Least squares of log E|diff_k|^2 on k over [fit_start, K], truncated at
    // the first step where the mean squared difference underflows to zero.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::int64_t m = 0;
    for (std::int64_t k = fit_start; k <= cfg.horizon; ++k) {
        const double v = log.mean_sq_diff[static_cast<size_t>(k)];
        if (v <= 0.0) break;
        const double xk = static_cast<double>(k);
        const double yk = std::log(v);
        sx += xk;
        sy += yk;
        sxx += xk * xk;
        sxy += xk * yk;
        ++m;
    }
    if (m < 2) {
        log.degenerate = true;
        log.rho_hat = 0.0;
        return log;
    }
    const double denom = static_cast<double>(m) * sxx - sx * sx;
    const double slope = (static_cast<double>(m) * sxy - sx * sy) / denom;
    log.log_intercept = (sy - slope * sx) / static_cast<double>(m);
    log.rho_hat = std::exp(slope);
    return log;
}

Eigen::VectorXd tail_average(std::span<const Eigen::VectorXd> iterates, std::int64_t k0,
                             std::int64_t k) {
    if (k <= k0 || k0 < 0 || k > static_cast<std::int64_t>(iterates.size())) {
        fail(Err::EmptyWindow, "need 0 <= k0 < k <= length");
    }
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(iterates[static_cast<size_t>(k0)].size());
    for (std::int64_t t = k0; t < k; ++t) acc += iterates[static_cast<size_t>(t)];
    return acc / static_cast<double>(k - k0);
}

Eigen::MatrixXd batch_means_covariance(std::span<const Eigen::VectorXd> iterates, std::int64_t k0,
                                       int batch_count) {
    if (batch_count < 8) fail(Err::TooFewBatches, "need at least 8 batches");
    const std::int64_t n = static_cast<std::int64_t>(iterates.size());
    if (k0 < 0 || k0 >= n) fail(Err::EmptyWindow, "k0 out of range");
    const std::int64_t len = (n - k0) / batch_count;
    if (len < 1) fail(Err::TooFewBatches, "window shorter than the batch count");

    const int d = static_cast<int>(iterates[static_cast<size_t>(k0)].size());
    std::vector<Eigen::VectorXd> means(static_cast<size_t>(batch_count));
    Eigen::VectorXd grand = Eigen::VectorXd::Zero(d);
    for (int b = 0; b < batch_count; ++b) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
        const std::int64_t lo = k0 + static_cast<std::int64_t>(b) * len;
        for (std::int64_t t = lo; t < lo + len; ++t) sum += iterates[static_cast<size_t>(t)];
        means[static_cast<size_t>(b)] = sum / static_cast<double>(len);
        grand += means[static_cast<size_t>(b)];
    }
    grand /= static_cast<double>(batch_count);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& m : means) {
        const Eigen::VectorXd delta = m - grand;
        cov += delta * delta.transpose();
    }
    return cov * (static_cast<double>(len) / static_cast<double>(batch_count - 1));
}

} // namespace sabias
