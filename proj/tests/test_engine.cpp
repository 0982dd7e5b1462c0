#include <doctest.h>

#include <cmath>

#include "sabias/engine.hpp"
#include "sabias/rng.hpp"
#include "oracles.hpp"

using namespace sabias;

namespace {

FiniteChain one_state_chain() { return validate_chain(Eigen::MatrixXd::Ones(1, 1)); }

DriftModel scalar_linear(double a, double c) {
    LinearParams p;
    p.A = {Eigen::MatrixXd::Constant(1, 1, a)};
    p.c = {Eigen::VectorXd::Constant(1, c)};
    return DriftModel::linear(1, p);
}

struct LogisticFixture {
    FiniteChain chain;
    StationaryInfo info;
    DriftModel model = DriftModel::logistic(1, 0.2, 0.2);
    NoiseField noise = NoiseField::gaussian(Eigen::MatrixXd::Constant(1, 1, 0.01));
    Eigen::VectorXd theta_star;
};

LogisticFixture make_logistic_fixture() {
    Eigen::MatrixXd P(3, 3);
    P << 0.72, 0.175, 0.105, 0.42, 0.475, 0.105, 0.42, 0.175, 0.405;
    std::vector<Observation> obs(3);
    const double ws[3] = {-3.5, 0.3, 3.0};
    for (int i = 0; i < 3; ++i) obs[static_cast<size_t>(i)].w = Eigen::VectorXd::Constant(1, ws[i]);
    LogisticFixture fx;
    fx.chain = augment_bernoulli_responses(validate_chain(P, obs), fx.model,
                                           Eigen::VectorXd::Constant(1, 1.0));
    fx.info = analyze_chain(fx.chain);
    fx.theta_star = solve_theta_star(fx.model, fx.chain, fx.info).theta;
    return fx;
}

} // namespace

TEST_CASE("sa_step") {
    const FiniteChain chain = one_state_chain();
    SAConfig cfg;
    cfg.alpha = 0.1;
    cfg.horizon = 1;
    SUBCASE("zero drift and no noise leaves theta unchanged") {
        const DriftModel m = scalar_linear(0.0, 0.0);
        const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 0.37);
        const Eigen::VectorXd out =
            sa_step(theta, 0, cfg, m, chain, NoiseField::none(1), Eigen::VectorXd::Zero(1));
        CHECK(out[0] == doctest::Approx(0.37));
    }
    SUBCASE("contractive scalar step") {
        const DriftModel m = scalar_linear(-1.0, 0.0);
        const Eigen::VectorXd out = sa_step(Eigen::VectorXd::Ones(1), 0, cfg, m, chain,
                                            NoiseField::none(1), Eigen::VectorXd::Zero(1));
        CHECK(out[0] == doctest::Approx(0.9).epsilon(1e-15));
    }
    SUBCASE("projection scales a doubled-radius point back onto the ball") {
        SAConfig proj = cfg;
        proj.beta = 1.5;
        const DriftModel m = scalar_linear(0.0, 0.0);
        const Eigen::VectorXd out = sa_step(Eigen::VectorXd::Constant(1, 3.0), 0, proj, m, chain,
                                            NoiseField::none(1), Eigen::VectorXd::Zero(1));
        CHECK(std::abs(out[0]) == doctest::Approx(1.5).epsilon(1e-15));
    }
    SUBCASE("divergent update raises NonFiniteIterate") {
        const DriftModel m = scalar_linear(1.0, 0.0);  // explosive
        SAConfig big = cfg;
        big.alpha = 1e308;
        Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 1e300);
        CHECK_THROWS_WITH_AS(
            sa_step(theta, 0, big, m, chain, NoiseField::none(1), Eigen::VectorXd::Zero(1)),
            doctest::Contains("NonFiniteIterate"), Error);
    }
    SUBCASE("projection is nonexpansive toward interior points") {
        rng::Stream stream(99);
        const double beta = 2.0;
        SAConfig proj = cfg;
        proj.alpha = 1.0;
        proj.beta = beta;
        const DriftModel zero = scalar_linear(0.0, 0.0);
        for (int t = 0; t < 200; ++t) {
            Eigen::VectorXd u(1), v(1);
            u[0] = 6.0 * (2.0 * stream.uniform() - 1.0);
            v[0] = beta * (2.0 * stream.uniform() - 1.0);
            const Eigen::VectorXd pu =
                sa_step(u, 0, proj, zero, chain, NoiseField::none(1), Eigen::VectorXd::Zero(1));
            CHECK((pu - v).norm() <= (u - v).norm() + 1e-12);
        }
    }
}

TEST_CASE("tail_average") {
    std::vector<Eigen::VectorXd> xs;
    for (double v : {1.0, 2.0, 3.0, 4.0}) xs.push_back(Eigen::VectorXd::Constant(1, v));
    CHECK(tail_average(xs, 0, 4)[0] == doctest::Approx(2.5));
    CHECK(tail_average(xs, 2, 4)[0] == doctest::Approx(3.5));
    std::vector<Eigen::VectorXd> constant(5, Eigen::VectorXd::Constant(2, 7.0));
    CHECK((tail_average(constant, 1, 5) - Eigen::VectorXd::Constant(2, 7.0)).norm() == 0.0);
    std::vector<Eigen::VectorXd> alternating;
    for (int i = 0; i < 6; ++i) alternating.push_back(Eigen::VectorXd::Constant(1, i % 2 ? -3.0 : 3.0));
    CHECK(tail_average(alternating, 0, 6)[0] == doctest::Approx(0.0));
    CHECK_THROWS_WITH_AS(tail_average(xs, 4, 4), doctest::Contains("EmptyWindow"), Error);
}

TEST_CASE("batch_means_covariance") {
    SUBCASE("constant sequence gives the zero matrix") {
        std::vector<Eigen::VectorXd> xs(64, Eigen::VectorXd::Constant(2, 1.5));
        CHECK(batch_means_covariance(xs, 0, 8).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("too few batches is rejected") {
        std::vector<Eigen::VectorXd> xs(64, Eigen::VectorXd::Zero(1));
        CHECK_THROWS_WITH_AS(batch_means_covariance(xs, 0, 4), doctest::Contains("TooFewBatches"),
                             Error);
    }
    SUBCASE("iid sequence recovers its covariance") {
        rng::Stream stream(2024);
        std::vector<Eigen::VectorXd> xs;
        const int n = 1 << 16;
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd v(2);
            v[0] = 2.0 * stream.normal();
            v[1] = 0.5 * stream.normal();
            xs.push_back(v);
        }
        const Eigen::MatrixXd est = batch_means_covariance(xs, 0, 64);
        CHECK(est(0, 0) == doctest::Approx(4.0).epsilon(0.15));
        CHECK(est(1, 1) == doctest::Approx(0.25).epsilon(0.15));
        CHECK(std::abs(est(0, 1)) < 0.2);
    }
    SUBCASE("AR(1) long-run variance oracle: 1/(1-rho)^2") {
        rng::Stream stream(7);
        const double rho = 0.9;
        std::vector<Eigen::VectorXd> xs;
        const int n = 1 << 20;
        double x = 0.0;
        for (int i = 0; i < n; ++i) {
            x = rho * x + stream.normal();
            xs.push_back(Eigen::VectorXd::Constant(1, x));
        }
        const Eigen::MatrixXd est = batch_means_covariance(xs, 1 << 12, 64);
        const double truth = 1.0 / ((1.0 - rho) * (1.0 - rho));
        CHECK(est(0, 0) == doctest::Approx(truth).epsilon(0.20));
    }
}

TEST_CASE("run_ensemble on the deterministic geometric recursion") {
    // g = -(theta - 1), alpha = 0.1: theta_k = 1 - 0.9^k from theta_0 = 0.
    const FiniteChain chain = one_state_chain();
    const StationaryInfo info = analyze_chain(chain);
    const DriftModel m = scalar_linear(-1.0, 1.0);
    SAConfig cfg;
    cfg.alpha = 0.1;
    cfg.horizon = 200;
    cfg.burn_in = 100;
    cfg.replicas = 3;
    cfg.seed = 5;
    const Eigen::VectorXd star = Eigen::VectorXd::Ones(1);
    const EnsembleStats stats =
        run_ensemble(cfg, m, chain, info, NoiseField::none(1), {1, 2, 200}, star, 2);
    CHECK(stats.checkpoints[0].mean[0] == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(stats.checkpoints[1].mean[0] == doctest::Approx(0.19).epsilon(1e-14));
    CHECK(stats.checkpoints[2].mean[0] ==
          doctest::Approx(1.0 - std::pow(0.9, 200)).epsilon(1e-12));
    CHECK(stats.tail_cov(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("run_ensemble determinism and moment coherence on the logistic fixture") {
    const LogisticFixture fx = make_logistic_fixture();
    SAConfig cfg;
    cfg.alpha = 0.08;
    cfg.beta = 10.0;
    cfg.horizon = 4000;
    cfg.burn_in = 2000;
    cfg.replicas = 24;
    cfg.seed = 99;
    cfg.batch_count = 8;
    const auto cps = geometric_checkpoints(cfg.horizon);

    const EnsembleStats a = run_ensemble(cfg, fx.model, fx.chain, fx.info, fx.noise, cps,
                                         fx.theta_star, 2);
    const EnsembleStats b = run_ensemble(cfg, fx.model, fx.chain, fx.info, fx.noise, cps,
                                         fx.theta_star, 1);

    SUBCASE("bit-identical across reruns and thread counts") {
        REQUIRE(a.checkpoints.size() == b.checkpoints.size());
        for (size_t c = 0; c < a.checkpoints.size(); ++c) {
            CHECK((a.checkpoints[c].mean - b.checkpoints[c].mean).cwiseAbs().maxCoeff() == 0.0);
            CHECK((a.checkpoints[c].second_moment - b.checkpoints[c].second_moment)
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
            for (size_t p = 0; p < a.checkpoints[c].m2p.size(); ++p) {
                CHECK(a.checkpoints[c].m2p[p] == b.checkpoints[c].m2p[p]);
            }
        }
        CHECK((a.tail_mean - b.tail_mean).cwiseAbs().maxCoeff() == 0.0);
        for (std::int64_t r = 0; r < cfg.replicas; ++r) {
            CHECK((a.replica_tail_means[static_cast<size_t>(r)] -
                   b.replica_tail_means[static_cast<size_t>(r)])
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
        }
    }
    SUBCASE("Jensen ordering of the tracked moments") {
        for (const auto& cp : a.checkpoints) {
            const double m2 = cp.m2p[0];
            const double m4 = cp.m2p[1];
            const double m6 = cp.m2p[2];
            CHECK(m2 <= std::sqrt(m4) + 1e-12);
            CHECK(std::sqrt(m4) <= std::cbrt(m6) + 1e-10);
        }
    }
    SUBCASE("second-moment matrix is symmetric PSD") {
        for (const auto& cp : a.checkpoints) {
            CHECK((cp.second_moment - cp.second_moment.transpose()).cwiseAbs().maxCoeff() < 1e-10);
            CHECK(cp.second_moment(0, 0) >= -1e-12);
        }
    }
    SUBCASE("batch-means output has the advertised shape") {
        CHECK(a.replica_bm_cov.size() == static_cast<size_t>(cfg.replicas));
        CHECK(a.clt_samples == (cfg.horizon - cfg.burn_in) / 8 * 8);
    }
}

TEST_CASE("moment scaling across a stepsize halving stays in the band") {
    const LogisticFixture fx = make_logistic_fixture();
    SAConfig cfg;
    cfg.beta = 10.0;
    cfg.horizon = 20000;
    cfg.burn_in = 10000;
    cfg.replicas = 40;
    cfg.seed = 17;

    SAConfig big = cfg;
    big.alpha = 0.08;
    SAConfig small = cfg;
    small.alpha = 0.04;
    small.seed = 18;
    const EnsembleStats sb = run_ensemble(big, fx.model, fx.chain, fx.info, fx.noise,
                                          {big.horizon}, fx.theta_star, 2);
    const EnsembleStats ss = run_ensemble(small, fx.model, fx.chain, fx.info, fx.noise,
                                          {small.horizon}, fx.theta_star, 2);
    for (int p = 1; p <= 2; ++p) {
        const double ratio = sb.tail_m2p[static_cast<size_t>(p - 1)] /
                             ss.tail_m2p[static_cast<size_t>(p - 1)];
        const double lo = std::pow(2.0, p) / 3.0;
        const double hi = 3.0 * std::pow(2.0, p);
        CHECK(ratio >= lo);
        CHECK(ratio <= hi);
    }
}

TEST_CASE("run_coupled") {
    SUBCASE("identical starts stay identical under shared randomness") {
        const LogisticFixture fx = make_logistic_fixture();
        SAConfig cfg;
        cfg.alpha = 0.05;
        cfg.horizon = 200;
        cfg.burn_in = 0;
        cfg.replicas = 4;
        cfg.seed = 3;
        const Eigen::VectorXd t0 = Eigen::VectorXd::Constant(1, 0.4);
        const CoupledLog log = run_coupled(cfg, fx.model, fx.chain, fx.info, fx.noise, t0, t0, 1);
        CHECK(log.degenerate);
        CHECK(log.rho_hat == 0.0);
        for (double v : log.mean_sq_diff) CHECK(v == 0.0);
    }
    SUBCASE("deterministic linear contraction is recovered exactly") {
        const FiniteChain chain = one_state_chain();
        const StationaryInfo info = analyze_chain(chain);
        const double mu = 0.5;
        const DriftModel m = scalar_linear(-mu, 0.0);
        SAConfig cfg;
        cfg.alpha = 0.2;
        cfg.horizon = 200;
        cfg.burn_in = 0;
        cfg.replicas = 1;
        cfg.seed = 1;
        const CoupledLog log =
            run_coupled(cfg, m, chain, info, NoiseField::none(1), Eigen::VectorXd::Zero(1),
                        Eigen::VectorXd::Ones(1), 1);
        const double expected = (1.0 - cfg.alpha * mu) * (1.0 - cfg.alpha * mu);
        CHECK(std::abs(log.rho_hat - expected) < 1e-10);
        CHECK(log.mean_sq_diff[1] == doctest::Approx(expected).epsilon(1e-14));
    }
    SUBCASE("logistic fixture contracts at least at the monotonicity rate") {
        const LogisticFixture fx = make_logistic_fixture();
        SAConfig cfg;
        cfg.alpha = 0.08;
        cfg.beta = 10.0;
        cfg.horizon = 400;
        cfg.burn_in = 0;
        cfg.replicas = 32;
        cfg.seed = 11;
        const AssumptionReport rep = verify_assumptions(fx.model, fx.chain, fx.info, 2.0, 200);
        REQUIRE(rep.mu_hat > 0.0);
        const std::int64_t tau = mixing_time(fx.chain, cfg.alpha).tau;
        const CoupledLog log =
            run_coupled(cfg, fx.model, fx.chain, fx.info, fx.noise, Eigen::VectorXd::Zero(1),
                        Eigen::VectorXd::Constant(1, 1.7), tau);
        CHECK(!log.degenerate);
        CHECK(log.rho_hat <= 1.0 - 0.5 * cfg.alpha * rep.mu_hat);
    }
}

TEST_CASE("run_paired_tails shares the data stream across stepsizes") {
    // With g(theta, x) = c(x) (state-dependent constant drift) and no noise,
    // the 2-alpha trajectory is exactly twice the alpha trajectory, iterate
    // by iterate, iff both consume the same state sequence.
    Eigen::MatrixXd P(2, 2);
    P << 0.9, 0.1, 0.2, 0.8;
    const FiniteChain chain = validate_chain(P);
    const StationaryInfo info = analyze_chain(chain);
    LinearParams p;
    p.A = {Eigen::MatrixXd::Zero(1, 1)};
    p.c = {Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, -1.0)};
    const DriftModel m = DriftModel::linear(1, p);
    SAConfig cfg;
    cfg.alpha = 0.01;
    cfg.horizon = 500;
    cfg.burn_in = 0;
    cfg.replicas = 6;
    cfg.seed = 23;
    const PairedTails tails = run_paired_tails(cfg, m, chain, info, NoiseField::none(1), 2);
    for (size_t r = 0; r < tails.tail_alpha.size(); ++r) {
        CHECK(tails.tail_2alpha[r][0] == doctest::Approx(2.0 * tails.tail_alpha[r][0]).epsilon(1e-12));
    }
}
