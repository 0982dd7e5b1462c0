#include "sabias/bias.hpp"

#include <cmath>
#include <complex>

#include "sabias/rng.hpp"

namespace sabias {

namespace {

using ComplexMatrix = Eigen::MatrixXcd;

// Triangular solve for T y + y T^T = N with T upper triangular, column by
// column from the right: (T + T_jj I) y_j = n_j - sum_{m > j} T_jm y_m.
ComplexMatrix solve_triangular_lyapunov(const ComplexMatrix& T, const ComplexMatrix& N) {
    const auto d = T.rows();
    ComplexMatrix Y(d, d);
    for (Eigen::Index j = d - 1; j >= 0; --j) {
        Eigen::VectorXcd rhs = N.col(j);
        for (Eigen::Index m = j + 1; m < d; ++m) rhs -= T(j, m) * Y.col(m);
        ComplexMatrix A = T;
        A.diagonal().array() += T(j, j);
        // Back substitution on the shifted upper-triangular system.
        for (Eigen::Index i = d - 1; i >= 0; --i) {
            std::complex<double> acc = rhs[i];
            for (Eigen::Index m = i + 1; m < d; ++m) acc -= A(i, m) * Y(m, j);
            if (std::abs(A(i, i)) < 1e-300) {
                fail(Err::SingularKroneckerSum, "Kronecker sum is numerically singular");
            }
            Y(i, j) = acc / A(i, i);
        }
    }
    return Y;
}

} // namespace

Eigen::MatrixXd lyapunov_apply(const Eigen::MatrixXd& J, const Eigen::MatrixXd& M) {
    const auto d = J.rows();
    if (J.cols() != d || M.rows() != d || M.cols() != d) {
        fail(Err::ShapeMismatch, "J and M must be square with matching size");
    }

    Eigen::ComplexSchur<Eigen::MatrixXd> schur(J);
    if (schur.info() != Eigen::Success) fail(Err::SolveFailed, "Schur decomposition failed");
    const ComplexMatrix T = schur.matrixT();
    const ComplexMatrix U = schur.matrixU();
    for (Eigen::Index i = 0; i < d; ++i) {
        if (T(i, i).real() >= 0.0) {
            fail(Err::NotHurwitz, "eigenvalue with real part " + std::to_string(T(i, i).real()));
        }
    }

    // J = U T U^H; with Y = U^H S conj(U) the equation becomes T Y + Y T^T = N.
    const ComplexMatrix N = U.adjoint() * M * U.conjugate();
    const ComplexMatrix Y = solve_triangular_lyapunov(T, N);
    const Eigen::MatrixXd S = (U * Y * U.transpose()).real();

    const double residual = (J * S + S * J.transpose() - M).norm();
    if (!(residual <= 1e-9 * (1.0 + M.norm()))) {
        fail(Err::SingularKroneckerSum, "Lyapunov residual " + std::to_string(residual));
    }
    return S;
}

Eigen::VectorXd hessian_contract(const std::vector<Eigen::MatrixXd>& T, const Eigen::MatrixXd& S) {
    const auto d = static_cast<Eigen::Index>(T.size());
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const auto& slab = T[static_cast<size_t>(i)];
        if (slab.rows() != S.rows() || slab.cols() != S.cols()) {
            fail(Err::ShapeMismatch, "tensor slab and S disagree in shape");
        }
        v[i] = slab.cwiseProduct(S).sum();
    }
    return v;
}

BiasDecomposition compute_bias(const DriftModel& model, const FiniteChain& chain,
                               const StationaryInfo& info, const NoiseField& noise,
                               const Eigen::VectorXd& theta_star) {
    const int n = chain.n_states();
    const int d = model.dim();
    if (theta_star.size() != d) fail(Err::ShapeMismatch, "theta_star has wrong length");

    BiasDecomposition out;
    out.G.resize(n, d);
    Eigen::VectorXd g(d);
    std::vector<Eigen::MatrixXd> jac(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        model.drift(theta_star, chain.observation(i), i, g);
        out.G.row(i) = g.transpose();
        jac[static_cast<size_t>(i)].resize(d, d);
        model.jacobian(theta_star, chain.observation(i), i, jac[static_cast<size_t>(i)]);
    }
    out.H = compute_h(info, out.G);

    out.Jbar = bar_jacobian(model, chain, info, theta_star);
    out.Tbar = bar_hessian(model, chain, info, theta_star);
    Eigen::FullPivLU<Eigen::MatrixXd> jbar_lu(out.Jbar);
    if (!jbar_lu.isInvertible()) fail(Err::NotHurwitz, "mean Jacobian at theta* is singular");

    out.M_g = Eigen::MatrixXd::Zero(d, d);
    out.M_gh = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd jh = Eigen::VectorXd::Zero(d);  // E[g'(theta*, x) h(theta*, x)]
    for (int i = 0; i < n; ++i) {
        const double pi_i = info.pi[i];
        const Eigen::VectorXd gi = out.G.row(i).transpose();
        const Eigen::VectorXd hi = out.H.row(i).transpose();
        out.M_g += pi_i * (gi * gi.transpose());
        out.M_gh += pi_i * (gi * hi.transpose() + hi * gi.transpose());
        jh += pi_i * (jac[static_cast<size_t>(i)] * hi);
    }
    out.M_xi = noise.covariance_at(theta_star);

    out.S_n = lyapunov_apply(out.Jbar, out.M_g + out.M_xi);
    out.S_c = lyapunov_apply(out.Jbar, out.M_gh);

    out.b_m = -jbar_lu.solve(jh);
    out.b_n = 0.5 * jbar_lu.solve(hessian_contract(out.Tbar, out.S_n));
    out.b_c = 0.5 * jbar_lu.solve(hessian_contract(out.Tbar, out.S_c));
    out.b_total = out.b_m + out.b_n + out.b_c;
    return out;
}

SlopeFit mc_bias_slope(const DriftModel& model, const FiniteChain& chain,
                       const StationaryInfo& info, const NoiseField& noise,
                       const Eigen::VectorXd& theta_star, const std::vector<double>& alpha_grid,
                       const SlopePlan& plan) {
    if (alpha_grid.size() < 3) fail(Err::ShapeMismatch, "alpha_grid needs at least 3 points");
    const int d = model.dim();
    const double mu = std::max(plan.mu, 1e-12);

    SlopeFit fit;
    fit.alphas = alpha_grid;
    for (size_t a = 0; a < alpha_grid.size(); ++a) {
        SAConfig cfg = plan.base;
        cfg.alpha = alpha_grid[a];
        if (!plan.share_grid_streams) {
            cfg.seed = rng::mix64(plan.base.seed ^ rng::mix64(777 + a));
        }

        const std::int64_t tau = mixing_time(chain, std::min(cfg.alpha, 0.5)).tau;
        fit.tau_per_alpha.push_back(tau);
        const double atau = cfg.alpha * static_cast<double>(tau);
        const double needed =
            static_cast<double>(tau) + std::log(1.0 / std::min(atau, 0.999)) / (cfg.alpha * mu);
        if (static_cast<double>(cfg.burn_in) < needed) {
            fail(Err::InsufficientBurnIn, "k0 = " + std::to_string(cfg.burn_in) + " below " +
                                              std::to_string(needed) + " at alpha " +
                                              std::to_string(cfg.alpha));
        }

        const EnsembleStats stats =
            run_ensemble(cfg, model, chain, info, noise, {cfg.horizon}, theta_star, plan.n_threads);
        fit.bias_per_alpha.push_back(stats.tail_mean - theta_star);
        Eigen::VectorXd se(d);
        for (int c = 0; c < d; ++c) {
            se[c] = std::sqrt(stats.tail_cov(c, c) / static_cast<double>(cfg.replicas));
        }
        fit.se_per_alpha.push_back(se);
    }

    // Per-coordinate weighted least squares on the design (alpha, alpha^{3/2}).
    const auto m = static_cast<Eigen::Index>(alpha_grid.size());
    Eigen::MatrixXd X(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
        X(i, 0) = alpha_grid[static_cast<size_t>(i)];
        X(i, 1) = std::pow(alpha_grid[static_cast<size_t>(i)], 1.5);
    }
    fit.slope.resize(d);
    fit.curvature.resize(d);
    fit.stderr_.resize(d);
    for (int c = 0; c < d; ++c) {
        Eigen::VectorXd y(m), w(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            y[i] = fit.bias_per_alpha[static_cast<size_t>(i)][c];
            const double se = fit.se_per_alpha[static_cast<size_t>(i)][c];
            if (!(se > 0.0)) fail(Err::IllConditionedFit, "zero standard error at a grid point");
            w[i] = 1.0 / (se * se);
        }
        const Eigen::MatrixXd XtWX = X.transpose() * w.asDiagonal() * X;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(XtWX);
        if (!lu.isInvertible()) fail(Err::IllConditionedFit, "normal equations are singular");
        const Eigen::MatrixXd cov = lu.inverse();
        if (cov(0, 0) <= 0.0) fail(Err::IllConditionedFit, "negative slope variance");
        const Eigen::VectorXd beta = cov * (X.transpose() * w.asDiagonal() * y);
        fit.slope[c] = beta[0];
        fit.curvature[c] = beta[1];
        fit.stderr_[c] = std::sqrt(cov(0, 0));
    }
    return fit;
}

} // namespace sabias
