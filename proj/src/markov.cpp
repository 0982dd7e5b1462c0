#include "sabias/markov.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace sabias {

namespace {

constexpr double kRowSumTol = 1e-12;

// Strong connectivity of the support graph: BFS forward and backward from 0.
bool strongly_connected(const Eigen::MatrixXd& P) {
    const int n = static_cast<int>(P.rows());
    auto reach = [&](bool forward) {
        std::vector<char> seen(static_cast<size_t>(n), 0);
        std::queue<int> q;
        q.push(0);
        seen[0] = 1;
        int count = 1;
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int v = 0; v < n; ++v) {
                const double p = forward ? P(u, v) : P(v, u);
                if (p > 0.0 && !seen[static_cast<size_t>(v)]) {
                    seen[static_cast<size_t>(v)] = 1;
                    ++count;
                    q.push(v);
                }
            }
        }
        return count == n;
    };
    return reach(true) && reach(false);
}

// Period = gcd over edges (u,v) of level[u] + 1 - level[v], from a BFS
// rooted at state 0. Valid for strongly connected graphs.
int graph_period(const Eigen::MatrixXd& P) {
    const int n = static_cast<int>(P.rows());
    std::vector<int> level(static_cast<size_t>(n), -1);
    std::queue<int> q;
    q.push(0);
    level[0] = 0;
    int g = 0;
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int v = 0; v < n; ++v) {
            if (P(u, v) <= 0.0) continue;
            if (level[static_cast<size_t>(v)] < 0) {
                level[static_cast<size_t>(v)] = level[static_cast<size_t>(u)] + 1;
                q.push(v);
            } else {
                const int d = level[static_cast<size_t>(u)] + 1 - level[static_cast<size_t>(v)];
                g = std::gcd(g, std::abs(d));
            }
        }
    }
    return g == 0 ? 1 : g;
}

double sup_row_tv(const Eigen::MatrixXd& Pk, const Eigen::VectorXd& pi) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < Pk.rows(); ++i) {
        const double tv = 0.5 * (Pk.row(i).transpose() - pi).lpNorm<1>();
        worst = std::max(worst, tv);
    }
    return worst;
}

} // namespace

const char* err_name(Err e) {
    switch (e) {
        case Err::RowNotStochastic: return "RowNotStochastic";
        case Err::Reducible: return "Reducible";
        case Err::Periodic: return "Periodic";
        case Err::SolveFailed: return "SolveFailed";
        case Err::ZeroMass: return "ZeroMass";
        case Err::NotConverged: return "NotConverged";
        case Err::SingularFundamental: return "SingularFundamental";
        case Err::ShapeMismatch: return "ShapeMismatch";
        case Err::NoConvergence: return "NoConvergence";
        case Err::SingularJacobian: return "SingularJacobian";
        case Err::NonFiniteIterate: return "NonFiniteIterate";
        case Err::EmptyWindow: return "EmptyWindow";
        case Err::TooFewBatches: return "TooFewBatches";
        case Err::NotHurwitz: return "NotHurwitz";
        case Err::SingularKroneckerSum: return "SingularKroneckerSum";
        case Err::InsufficientBurnIn: return "InsufficientBurnIn";
        case Err::IllConditionedFit: return "IllConditionedFit";
        case Err::TooFewReplicas: return "TooFewReplicas";
        case Err::SingularSigma: return "SingularSigma";
        case Err::ConfigInvalid: return "ConfigInvalid";
        case Err::MissingArtifacts: return "MissingArtifacts";
    }
    return "Unknown";
}

FiniteChain validate_chain(Eigen::MatrixXd transition, std::vector<Observation> observations) {
    const auto n = transition.rows();
    if (n < 1 || transition.cols() != n) {
        fail(Err::ShapeMismatch, "transition matrix must be square with n >= 1");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if ((transition.row(i).array() < 0.0).any()) {
            fail(Err::RowNotStochastic, "row " + std::to_string(i) + " has a negative entry");
        }
        const double sum = transition.row(i).sum();
        if (std::abs(sum - 1.0) > kRowSumTol) {
            fail(Err::RowNotStochastic,
                 "row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
    }
    if (n > 1) {
        if (!strongly_connected(transition)) fail(Err::Reducible, "support graph is not strongly connected");
        const int period = graph_period(transition);
        if (period > 1) fail(Err::Periodic, "chain has period " + std::to_string(period));
    }

    if (observations.empty()) observations.resize(static_cast<size_t>(n));
    if (observations.size() != static_cast<size_t>(n)) {
        fail(Err::ShapeMismatch, "expected " + std::to_string(n) + " observations, got " +
                                     std::to_string(observations.size()));
    }

    FiniteChain chain;
    chain.transition_ = std::move(transition);
    chain.observations_ = std::move(observations);
    chain.row_cdf_.resize(static_cast<size_t>(n) * static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            acc += chain.transition_(i, j);
            chain.row_cdf_[static_cast<size_t>(i * n + j)] = acc;
        }
        chain.row_cdf_[static_cast<size_t>(i * n + n - 1)] = 1.0;
    }
    return chain;
}

Eigen::VectorXd stationary_distribution(const FiniteChain& chain) {
    const int n = chain.n_states();
    if (n == 1) return Eigen::VectorXd::Ones(1);

    // Augmented system: (P^T - I) pi = 0 stacked with sum(pi) = 1.
    Eigen::MatrixXd A(n + 1, n);
    A.topRows(n) = chain.transition().transpose() - Eigen::MatrixXd::Identity(n, n);
    A.bottomRows(1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
    b[n] = 1.0;

    Eigen::VectorXd pi = A.colPivHouseholderQr().solve(b);
    const double residual = (pi.transpose() * chain.transition() - pi.transpose()).cwiseAbs().maxCoeff();
    if (!pi.allFinite() || residual > kRowSumTol) {
        fail(Err::SolveFailed, "stationary residual " + std::to_string(residual));
    }
    if ((pi.array() <= 0.0).any()) {
        fail(Err::SolveFailed, "stationary vector has a non-positive entry");
    }
    return pi;
}

Eigen::MatrixXd time_reversal(const FiniteChain& chain, const Eigen::VectorXd& pi) {
    const int n = chain.n_states();
    if (pi.size() != n) fail(Err::ShapeMismatch, "pi has wrong length");
    if ((pi.array() <= 0.0).any()) fail(Err::ZeroMass, "pi must be strictly positive");
    Eigen::MatrixXd rev(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            rev(i, j) = pi[j] * chain.transition()(j, i) / pi[i];
        }
    }
    return rev;
}

MixingResult mixing_time(const FiniteChain& chain, double epsilon, std::int64_t step_cap) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) fail(Err::ShapeMismatch, "epsilon must lie in (0,1)");
    const Eigen::VectorXd pi = stationary_distribution(chain);

    MixingResult result;
    Eigen::MatrixXd Pk = chain.transition();
    for (std::int64_t k = 1; k <= step_cap; ++k) {
        const double tv = sup_row_tv(Pk, pi);
        result.tv_curve.push_back(tv);
        if (tv <= epsilon) {
            result.tau = k;
            return result;
        }
        Pk = Pk * chain.transition();
    }
    fail(Err::NotConverged,
         "TV did not reach " + std::to_string(epsilon) + " within " + std::to_string(step_cap) + " steps");
}

StationaryInfo analyze_chain(const FiniteChain& chain, const std::vector<double>& epsilons) {
    const int n = chain.n_states();
    StationaryInfo info;
    info.pi = stationary_distribution(chain);
    info.reversal = time_reversal(chain, info.pi);

    const Eigen::MatrixXd Pi = Eigen::VectorXd::Ones(n) * info.pi.transpose();
    const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) - info.reversal + Pi;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible()) fail(Err::SingularFundamental, "I - P* + Pi is singular");
    info.fundamental = lu.inverse();

    double eps_floor = 0.01;
    for (double e : epsilons) eps_floor = std::min(eps_floor, e);
    const MixingResult mr = mixing_time(chain, eps_floor);
    info.tv_curve = mr.tv_curve;
    for (double e : epsilons) {
        // tau_e is the first k with tv_curve[k-1] <= e; the curve already
        // extends far enough because e >= eps_floor.
        std::int64_t tau = mr.tau;
        for (std::int64_t k = 1; k <= mr.tau; ++k) {
            if (info.tv_curve[static_cast<size_t>(k - 1)] <= e) {
                tau = k;
                break;
            }
        }
        info.mixing_table[e] = tau;
    }

    // Least squares of log TV(k) on k over [1, tau_{0.01}], positive part only.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (size_t idx = 0; idx < info.tv_curve.size(); ++idx) {
        const double tv = info.tv_curve[idx];
        if (tv <= 0.0) break;
        const double x = static_cast<double>(idx + 1);
        const double y = std::log(tv);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    if (m >= 2) {
        const double denom = m * sxx - sx * sx;
        const double slope = (m * sxy - sx * sy) / denom;
        const double icept = (sy - slope * sx) / m;
        info.ergodicity_fit.r = std::exp(slope);
        info.ergodicity_fit.R = std::exp(icept);
    } else if (m == 1) {
        info.ergodicity_fit.R = info.tv_curve[0];
        info.ergodicity_fit.r = 0.0;
    }
    return info;
}

Eigen::MatrixXd compute_h(const StationaryInfo& info, const Eigen::MatrixXd& G) {
    const auto n = info.pi.size();
    if (G.rows() != n) fail(Err::ShapeMismatch, "G must have one row per state");
    const Eigen::MatrixXd Pi = Eigen::VectorXd::Ones(n) * info.pi.transpose();
    if (!info.fundamental.allFinite()) fail(Err::SingularFundamental, "fundamental matrix not finite");
    return info.fundamental * ((info.reversal - Pi) * G);
}

} // namespace sabias
