#include "sabias/inference.hpp"

#include <algorithm>
#include <cmath>

namespace sabias {

namespace {

constexpr double kZ90 = 1.6448536269514722;  // two-sided 90%
constexpr double kZ95 = 1.959963984540054;   // two-sided 95%

Eigen::VectorXd pooled_mean(std::span<const Eigen::VectorXd> xs) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(xs[0].size());
    for (const auto& x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
}

Eigen::MatrixXd pooled_cov(std::span<const Eigen::VectorXd> xs, const Eigen::VectorXd& mean) {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(mean.size(), mean.size());
    for (const auto& x : xs) {
        const Eigen::VectorXd delta = x - mean;
        cov += delta * delta.transpose();
    }
    return cov / static_cast<double>(xs.size() - 1);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    double sa = 0, sb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
    }
    const double ma = sa / n, mb = sb / n;
    double saa = 0, sbb = 0, sab = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

} // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) fail(Err::ShapeMismatch, "quantile argument must lie in (0,1)");
    // Acklam's coefficients.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
    }
    // One Halley refinement against the CDF expressed with erfc.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

Eigen::VectorXd rr_extrapolate(const Eigen::VectorXd& bar_alpha, const Eigen::VectorXd& bar_2alpha) {
    if (bar_alpha.size() != bar_2alpha.size()) fail(Err::ShapeMismatch, "length mismatch");
    return 2.0 * bar_alpha - bar_2alpha;
}

RRResult run_rr(const SAConfig& cfg, const DriftModel& model, const FiniteChain& chain,
                const StationaryInfo& info, const NoiseField& noise,
                const Eigen::VectorXd& theta_star, int n_threads) {
    PairedTails tails = run_paired_tails(cfg, model, chain, info, noise, n_threads);

    RRResult rr;
    rr.theta_bar_alpha = std::move(tails.tail_alpha);
    rr.theta_bar_2alpha = std::move(tails.tail_2alpha);
    rr.theta_tilde.reserve(rr.theta_bar_alpha.size());
    for (size_t i = 0; i < rr.theta_bar_alpha.size(); ++i) {
        rr.theta_tilde.push_back(rr_extrapolate(rr.theta_bar_alpha[i], rr.theta_bar_2alpha[i]));
    }

    rr.mean_alpha = pooled_mean(rr.theta_bar_alpha);
    rr.mean_2alpha = pooled_mean(rr.theta_bar_2alpha);
    rr.mean_tilde = pooled_mean(rr.theta_tilde);
    if (rr.theta_bar_alpha.size() > 1) {
        rr.cov_alpha = pooled_cov(rr.theta_bar_alpha, rr.mean_alpha);
        rr.cov_tilde = pooled_cov(rr.theta_tilde, rr.mean_tilde);
    } else {
        rr.cov_alpha = Eigen::MatrixXd::Zero(model.dim(), model.dim());
        rr.cov_tilde = rr.cov_alpha;
    }
    rr.bias_norm_alpha = (rr.mean_alpha - theta_star).norm();
    rr.bias_norm_tilde = (rr.mean_tilde - theta_star).norm();
    return rr;
}

MseDecomposition mse_decomposition(std::span<const Eigen::VectorXd> tail_averages,
                                   const Eigen::VectorXd& theta_star) {
    if (tail_averages.size() < 30) fail(Err::TooFewReplicas, "need at least 30 replicas");
    const Eigen::VectorXd mean = pooled_mean(tail_averages);
    const Eigen::MatrixXd cov = pooled_cov(tail_averages, mean);

    MseDecomposition mse;
    mse.bias_sq = (mean - theta_star).squaredNorm();
    mse.variance = cov.trace();
    for (const auto& x : tail_averages) mse.total += (x - theta_star).squaredNorm();
    mse.total /= static_cast<double>(tail_averages.size());
    return mse;
}

CltReport clt_diagnostic(std::span<const Eigen::VectorXd> estimates,
                         const Eigen::VectorXd& reference_mean, const Eigen::MatrixXd& sigma_hat,
                         double count) {
    if (estimates.size() < 3) fail(Err::TooFewReplicas, "need at least 3 estimates");
    const int d = static_cast<int>(reference_mean.size());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_hat);
    const double ev_max = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, ev_max)) {
        fail(Err::SingularSigma, "long-run covariance estimate is singular");
    }
    const Eigen::MatrixXd inv_sqrt = es.eigenvectors() *
                                     es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                                     es.eigenvectors().transpose();

    const double scale = std::sqrt(count);
    const auto m = estimates.size();
    CltReport report;
    report.standardized.assign(static_cast<size_t>(d), std::vector<double>(m));
    for (size_t r = 0; r < m; ++r) {
        const Eigen::VectorXd s = scale * (inv_sqrt * (estimates[r] - reference_mean));
        for (int c = 0; c < d; ++c) report.standardized[static_cast<size_t>(c)][r] = s[c];
    }

    std::vector<double> normal_q(m);
    for (size_t i = 0; i < m; ++i) {
        normal_q[i] = normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(m));
    }

    for (int c = 0; c < d; ++c) {
        auto& vals = report.standardized[static_cast<size_t>(c)];
        double in90 = 0, in95 = 0;
        for (double v : vals) {
            if (std::abs(v) <= kZ90) ++in90;
            if (std::abs(v) <= kZ95) ++in95;
        }
        std::sort(vals.begin(), vals.end());
        const double qq = pearson(vals, normal_q);
        report.qq_corr.push_back(qq);
        report.cover90.push_back(in90 / static_cast<double>(m));
        report.cover95.push_back(in95 / static_cast<double>(m));
        report.normal_flag.push_back(qq >= 0.98);
    }
    return report;
}

} // namespace sabias
