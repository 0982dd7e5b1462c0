#include "sabias/drift.hpp"

#include <cmath>

#include "sabias/rng.hpp"

namespace sabias {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + exp(iota z)) / iota, overflow-safe via the max + log1p split.
double softplus_mean(double z, double iota) {
    const double s = iota * z;
    return (std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s)))) / iota;
}

const Eigen::MatrixXd& linear_A(const LinearParams& p, int state) {
    return p.A.size() == 1 ? p.A[0] : p.A[static_cast<size_t>(state)];
}

const Eigen::VectorXd& linear_c(const LinearParams& p, int state) {
    return p.c.size() == 1 ? p.c[0] : p.c[static_cast<size_t>(state)];
}

void require_w(const Observation& obs, int dim) {
    if (obs.w.size() != dim) {
        fail(Err::ShapeMismatch, "observation covariate has length " +
                                     std::to_string(obs.w.size()) + ", model dim is " +
                                     std::to_string(dim));
    }
}

} // namespace

DriftModel DriftModel::linear(int dim, LinearParams params, double mu_hint, double l1_hint) {
    if (params.A.empty() || params.c.empty()) fail(Err::ShapeMismatch, "linear family needs A and c");
    for (const auto& A : params.A) {
        if (A.rows() != dim || A.cols() != dim) fail(Err::ShapeMismatch, "A(x) must be dim x dim");
    }
    for (const auto& c : params.c) {
        if (c.size() != dim) fail(Err::ShapeMismatch, "c(x) must have length dim");
    }
    DriftModel m;
    m.family_ = Family::Linear;
    m.dim_ = dim;
    m.linear_ = std::move(params);
    m.mu_hint_ = mu_hint;
    m.l1_hint_ = l1_hint;
    return m;
}

DriftModel DriftModel::logistic(int dim, double lambda, double mu_hint, double l1_hint) {
    if (lambda < 0.0) fail(Err::ShapeMismatch, "lambda must be nonnegative");
    DriftModel m;
    m.family_ = Family::Logistic;
    m.dim_ = dim;
    m.logistic_.lambda = lambda;
    m.mu_hint_ = mu_hint;
    m.l1_hint_ = l1_hint;
    return m;
}

DriftModel DriftModel::softplus(int dim, double iota, double lambda, double mu_hint, double l1_hint) {
    if (iota <= 0.0) fail(Err::ShapeMismatch, "iota must be positive");
    if (lambda < 0.0) fail(Err::ShapeMismatch, "lambda must be nonnegative");
    DriftModel m;
    m.family_ = Family::SoftPlus;
    m.dim_ = dim;
    m.softplus_ = {iota, lambda};
    m.mu_hint_ = mu_hint;
    m.l1_hint_ = l1_hint;
    return m;
}

DriftModel DriftModel::tabulated(int dim, TabulatedParams params) {
    if (!params.drift || !params.jacobian || !params.hessian) {
        fail(Err::ShapeMismatch, "tabulated family needs drift, jacobian, and hessian closures");
    }
    DriftModel m;
    m.family_ = Family::Tabulated;
    m.dim_ = dim;
    m.tabulated_ = std::move(params);
    return m;
}

double DriftModel::lambda() const {
    switch (family_) {
        case Family::Logistic: return logistic_.lambda;
        case Family::SoftPlus: return softplus_.lambda;
        default: return 0.0;
    }
}

bool DriftModel::allow_nonmonotone() const {
    return family_ == Family::Tabulated && tabulated_.allow_nonmonotone;
}

void DriftModel::drift(const Eigen::VectorXd& theta, const Observation& obs, int state,
                       Eigen::VectorXd& out) const {
    switch (family_) {
        case Family::Linear:
            out.noalias() = linear_A(linear_, state) * theta;
            out += linear_c(linear_, state);
            return;
        case Family::Logistic: {
            require_w(obs, dim_);
            const double margin = sigmoid(obs.w.dot(theta));
            out = obs.w * (obs.y - margin) - logistic_.lambda * theta;
            return;
        }
        case Family::SoftPlus: {
            require_w(obs, dim_);
            const double mean = softplus_mean(obs.w.dot(theta), softplus_.iota);
            out = -(obs.w * (mean - obs.y) + softplus_.lambda * theta);
            return;
        }
        case Family::Tabulated:
            out = tabulated_.drift(theta, obs);
            return;
    }
}

void DriftModel::jacobian(const Eigen::VectorXd& theta, const Observation& obs, int state,
                          Eigen::MatrixXd& out) const {
    switch (family_) {
        case Family::Linear:
            out = linear_A(linear_, state);
            return;
        case Family::Logistic: {
            require_w(obs, dim_);
            const double s = sigmoid(obs.w.dot(theta));
            out.noalias() = (-s * (1.0 - s)) * (obs.w * obs.w.transpose());
            out.diagonal().array() -= logistic_.lambda;
            return;
        }
        case Family::SoftPlus: {
            require_w(obs, dim_);
            const double s = sigmoid(softplus_.iota * obs.w.dot(theta));
            out.noalias() = -s * (obs.w * obs.w.transpose());
            out.diagonal().array() -= softplus_.lambda;
            return;
        }
        case Family::Tabulated:
            out = tabulated_.jacobian(theta, obs);
            return;
    }
}

void DriftModel::hessian(const Eigen::VectorXd& theta, const Observation& obs,
                         [[maybe_unused]] int state, std::vector<Eigen::MatrixXd>& out) const {
    out.resize(static_cast<size_t>(dim_));
    switch (family_) {
        case Family::Linear:
            for (auto& slab : out) slab = Eigen::MatrixXd::Zero(dim_, dim_);
            return;
        case Family::Logistic: {
            require_w(obs, dim_);
            const double s = sigmoid(obs.w.dot(theta));
            const double sig2 = s * (1.0 - s) * (1.0 - 2.0 * s); // sigma''
            const Eigen::MatrixXd ww = obs.w * obs.w.transpose();
            for (int i = 0; i < dim_; ++i) out[static_cast<size_t>(i)] = (-sig2 * obs.w[i]) * ww;
            return;
        }
        case Family::SoftPlus: {
            require_w(obs, dim_);
            const double s = sigmoid(softplus_.iota * obs.w.dot(theta));
            const double d2 = softplus_.iota * s * (1.0 - s); // d/dz sigmoid(iota z)
            const Eigen::MatrixXd ww = obs.w * obs.w.transpose();
            for (int i = 0; i < dim_; ++i) out[static_cast<size_t>(i)] = (-d2 * obs.w[i]) * ww;
            return;
        }
        case Family::Tabulated:
            out = tabulated_.hessian(theta, obs);
            return;
    }
}

Eigen::VectorXd DriftModel::eval_drift(const Eigen::VectorXd& theta, const Observation& obs,
                                       int state) const {
    Eigen::VectorXd out(dim_);
    drift(theta, obs, state, out);
    return out;
}

Eigen::MatrixXd DriftModel::eval_jacobian(const Eigen::VectorXd& theta, const Observation& obs,
                                          int state) const {
    Eigen::MatrixXd out(dim_, dim_);
    jacobian(theta, obs, state, out);
    return out;
}

std::vector<Eigen::MatrixXd> DriftModel::eval_hessian(const Eigen::VectorXd& theta,
                                                      const Observation& obs, int state) const {
    std::vector<Eigen::MatrixXd> out;
    hessian(theta, obs, state, out);
    return out;
}

Eigen::VectorXd bar_g(const DriftModel& model, const FiniteChain& chain, const StationaryInfo& info,
                      const Eigen::VectorXd& theta) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(model.dim());
    Eigen::VectorXd g(model.dim());
    for (int i = 0; i < chain.n_states(); ++i) {
        model.drift(theta, chain.observation(i), i, g);
        acc += info.pi[i] * g;
    }
    return acc;
}

Eigen::MatrixXd bar_jacobian(const DriftModel& model, const FiniteChain& chain,
                             const StationaryInfo& info, const Eigen::VectorXd& theta) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(model.dim(), model.dim());
    Eigen::MatrixXd J(model.dim(), model.dim());
    for (int i = 0; i < chain.n_states(); ++i) {
        model.jacobian(theta, chain.observation(i), i, J);
        acc += info.pi[i] * J;
    }
    return acc;
}

std::vector<Eigen::MatrixXd> bar_hessian(const DriftModel& model, const FiniteChain& chain,
                                         const StationaryInfo& info, const Eigen::VectorXd& theta) {
    std::vector<Eigen::MatrixXd> acc(static_cast<size_t>(model.dim()),
                                     Eigen::MatrixXd::Zero(model.dim(), model.dim()));
    std::vector<Eigen::MatrixXd> T;
    for (int i = 0; i < chain.n_states(); ++i) {
        model.hessian(theta, chain.observation(i), i, T);
        for (int r = 0; r < model.dim(); ++r) acc[static_cast<size_t>(r)] += info.pi[i] * T[static_cast<size_t>(r)];
    }
    return acc;
}

ThetaStarResult solve_theta_star(const DriftModel& model, const FiniteChain& chain,
                                 const StationaryInfo& info, const Eigen::VectorXd& initial) {
    constexpr int kMaxIter = 50;
    constexpr double kTol = 1e-10;

    ThetaStarResult result;
    result.theta = initial.size() == 0 ? Eigen::VectorXd::Zero(model.dim()) : initial;

    Eigen::VectorXd g = bar_g(model, chain, info, result.theta);
    double res = g.norm();
    for (int it = 0; it < kMaxIter; ++it) {
        if (res <= kTol) {
            result.iterations = it;
            result.residual = res;
            return result;
        }
        const Eigen::MatrixXd J = bar_jacobian(model, chain, info, result.theta);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible()) fail(Err::SingularJacobian, "mean-drift Jacobian is singular");
        const Eigen::VectorXd dir = lu.solve(-g);

        // Halve the step until the residual decreases.
        double t = 1.0;
        Eigen::VectorXd cand;
        Eigen::VectorXd gcand;
        double rescand = res;
        for (int h = 0; h < 40; ++h) {
            cand = result.theta + t * dir;
            gcand = bar_g(model, chain, info, cand);
            rescand = gcand.norm();
            if (rescand < res) break;
            t *= 0.5;
        }
        if (rescand >= res) fail(Err::NoConvergence, "line search stalled at residual " + std::to_string(res));
        result.theta = cand;
        g = gcand;
        res = rescand;
    }
    if (res <= kTol) {
        result.iterations = kMaxIter;
        result.residual = res;
        return result;
    }
    fail(Err::NoConvergence, "Newton did not reach tolerance, residual " + std::to_string(res));
}

AssumptionReport verify_assumptions(const DriftModel& model, const FiniteChain& chain,
                                    const StationaryInfo& info, double box_radius, int n_samples,
                                    std::uint64_t seed) {
    const int d = model.dim();
    rng::Stream stream(seed);
    auto sample_box = [&]() {
        Eigen::VectorXd v(d);
        for (int i = 0; i < d; ++i) v[i] = box_radius * (2.0 * stream.uniform() - 1.0);
        return v;
    };

    AssumptionReport report;
    report.mu_hat = std::numeric_limits<double>::infinity();

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd g0(d);
    for (int i = 0; i < chain.n_states(); ++i) {
        model.drift(zero, chain.observation(i), i, g0);
        report.sup_g0 = std::max(report.sup_g0, g0.norm());
    }

    Eigen::VectorXd ga(d), gb(d);
    std::vector<Eigen::MatrixXd> Ta, Tb;
    for (int s = 0; s < n_samples; ++s) {
        const Eigen::VectorXd a = sample_box();
        const Eigen::VectorXd b = sample_box();
        const double dist2 = (a - b).squaredNorm();
        if (dist2 < 1e-16) continue;

        const Eigen::VectorXd dg = bar_g(model, chain, info, a) - bar_g(model, chain, info, b);
        report.mu_hat = std::min(report.mu_hat, -(a - b).dot(dg) / dist2);

        const double dist = std::sqrt(dist2);
        for (int i = 0; i < chain.n_states(); ++i) {
            model.drift(a, chain.observation(i), i, ga);
            model.drift(b, chain.observation(i), i, gb);
            report.l1_hat = std::max(report.l1_hat, (ga - gb).norm() / dist);
            model.hessian(a, chain.observation(i), i, Ta);
            model.hessian(b, chain.observation(i), i, Tb);
            double hdiff = 0.0;
            for (int r = 0; r < d; ++r) {
                hdiff += (Ta[static_cast<size_t>(r)] - Tb[static_cast<size_t>(r)]).squaredNorm();
            }
            report.hess_lip_hat = std::max(report.hess_lip_hat, std::sqrt(hdiff) / dist);
        }
    }
    if (!std::isfinite(report.mu_hat)) report.mu_hat = 0.0;

    constexpr double kHintTol = 1e-9;
    report.pass = report.mu_hat > 0.0 && report.mu_hat + kHintTol >= model.mu_hint() &&
                  (model.l1_hint() <= 0.0 || report.l1_hat <= model.l1_hint() + kHintTol);
    return report;
}

FiniteChain augment_bernoulli_responses(const FiniteChain& covariate_chain, const DriftModel& model,
                                        const Eigen::VectorXd& theta_true) {
    const int n = covariate_chain.n_states();
    const Eigen::MatrixXd& P = covariate_chain.transition();

    Eigen::VectorXd p(n);
    for (int j = 0; j < n; ++j) {
        const Observation& obs = covariate_chain.observation(j);
        if (obs.w.size() != theta_true.size()) {
            fail(Err::ShapeMismatch, "covariate length does not match theta_true");
        }
        const double z = obs.w.dot(theta_true);
        double mean = 0.0;
        switch (model.family()) {
            case Family::Logistic: mean = sigmoid(z); break;
            case Family::SoftPlus: mean = softplus_mean(z, model.iota()); break;
            default: fail(Err::ShapeMismatch, "response augmentation applies to GLM families only");
        }
        if (!(mean > 0.0 && mean < 1.0)) {
            fail(Err::ShapeMismatch, "Bernoulli mean " + std::to_string(mean) + " outside (0,1) at state " +
                                         std::to_string(j));
        }
        p[j] = mean;
    }

    // State (i, y) gets index 2i + y.
    Eigen::MatrixXd Paug = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    std::vector<Observation> obs(static_cast<size_t>(2 * n));
    for (int i = 0; i < n; ++i) {
        for (int y = 0; y < 2; ++y) {
            for (int j = 0; j < n; ++j) {
                Paug(2 * i + y, 2 * j + 1) = P(i, j) * p[j];
                Paug(2 * i + y, 2 * j + 0) = P(i, j) * (1.0 - p[j]);
            }
            obs[static_cast<size_t>(2 * i + y)].w = covariate_chain.observation(i).w;
            obs[static_cast<size_t>(2 * i + y)].y = static_cast<double>(y);
            obs[static_cast<size_t>(2 * i + y)].has_y = true;
        }
    }
    return validate_chain(std::move(Paug), std::move(obs));
}

} // namespace sabias
