#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "sabias/markov.hpp"

namespace sabias {

enum class Family { Linear, Logistic, SoftPlus, Tabulated };

/// g(theta, x) = A(x) theta + c(x). One entry per state, or a single shared
/// entry for state-independent coefficients.
struct LinearParams {
    std::vector<Eigen::MatrixXd> A;
    std::vector<Eigen::VectorXd> c;
};

/// Regularized logistic score g = w (y - sigmoid(w^T theta)) - lambda theta.
/// With sigmoid(-z) = 1 - sigmoid(z) this is the drift of SGD on the
/// L2-regularized negative log-likelihood.
struct LogisticParams {
    double lambda = 0.0;
};

/// Smooth-ReLU regression drift
/// g = -(w (softplus_iota(w^T theta) - y) + lambda theta) with
/// softplus_iota(z) = log(1 + exp(iota z)) / iota.
struct SoftPlusParams {
    double iota = 1.0;
    double lambda = 0.0;
};

/// Arbitrary per-state closures with caller-supplied derivatives. Exists for
/// counterexample tests; allow_nonmonotone must be set to run it through the
/// root solver without a positive monotonicity estimate.
struct TabulatedParams {
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Observation&)> drift;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Observation&)> jacobian;
    std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&, const Observation&)> hessian;
    bool allow_nonmonotone = false;
};

/// A drift family with analytic first and second derivatives. Immutable
/// value object; evaluation is pure and reentrant.
class DriftModel {
public:
    static DriftModel linear(int dim, LinearParams params, double mu_hint = 0.0, double l1_hint = 0.0);
    static DriftModel logistic(int dim, double lambda, double mu_hint = 0.0, double l1_hint = 0.0);
    static DriftModel softplus(int dim, double iota, double lambda, double mu_hint = 0.0,
                               double l1_hint = 0.0);
    static DriftModel tabulated(int dim, TabulatedParams params);

    Family family() const { return family_; }
    int dim() const { return dim_; }
    double mu_hint() const { return mu_hint_; }
    double l1_hint() const { return l1_hint_; }
    double lambda() const;
    double iota() const { return softplus_.iota; }
    bool allow_nonmonotone() const;

    void drift(const Eigen::VectorXd& theta, const Observation& obs, int state,
               Eigen::VectorXd& out) const;
    void jacobian(const Eigen::VectorXd& theta, const Observation& obs, int state,
                  Eigen::MatrixXd& out) const;
    /// out[i](j,k) = d^2 g_i / d theta_j d theta_k.
    void hessian(const Eigen::VectorXd& theta, const Observation& obs, int state,
                 std::vector<Eigen::MatrixXd>& out) const;

    Eigen::VectorXd eval_drift(const Eigen::VectorXd& theta, const Observation& obs,
                               int state = 0) const;
    Eigen::MatrixXd eval_jacobian(const Eigen::VectorXd& theta, const Observation& obs,
                                  int state = 0) const;
    std::vector<Eigen::MatrixXd> eval_hessian(const Eigen::VectorXd& theta, const Observation& obs,
                                              int state = 0) const;

private:
    DriftModel() = default;

    Family family_ = Family::Linear;
    int dim_ = 0;
    double mu_hint_ = 0.0;
    double l1_hint_ = 0.0;
    LinearParams linear_;
    LogisticParams logistic_;
    SoftPlusParams softplus_;
    TabulatedParams tabulated_;
};

/// pi-weighted mean drift gbar(theta) = sum_i pi_i g(theta, state_i).
Eigen::VectorXd bar_g(const DriftModel& model, const FiniteChain& chain, const StationaryInfo& info,
                      const Eigen::VectorXd& theta);
Eigen::MatrixXd bar_jacobian(const DriftModel& model, const FiniteChain& chain,
                             const StationaryInfo& info, const Eigen::VectorXd& theta);
std::vector<Eigen::MatrixXd> bar_hessian(const DriftModel& model, const FiniteChain& chain,
                                         const StationaryInfo& info, const Eigen::VectorXd& theta);

struct ThetaStarResult {
    Eigen::VectorXd theta;
    int iterations = 0;
    double residual = 0.0;
};

/// Damped Newton on gbar with backtracking until the residual decreases.
/// Throws NoConvergence after 50 iterations, SingularJacobian on breakdown.
ThetaStarResult solve_theta_star(const DriftModel& model, const FiniteChain& chain,
                                 const StationaryInfo& info,
                                 const Eigen::VectorXd& initial = Eigen::VectorXd());

/// Sampled verification of the monotonicity / Lipschitz / growth assumptions
/// inside a box of the given radius. Report-only; never throws.
struct AssumptionReport {
    double mu_hat = 0.0;       // min of -<dtheta, dgbar> / |dtheta|^2
    double l1_hat = 0.0;       // max Lipschitz ratio of g over states
    double sup_g0 = 0.0;       // sup over states of |g(0, x)|
    double hess_lip_hat = 0.0; // max Lipschitz ratio of g'' (third-derivative proxy)
    bool pass = false;
};

AssumptionReport verify_assumptions(const DriftModel& model, const FiniteChain& chain,
                                    const StationaryInfo& info, double box_radius, int n_samples,
                                    std::uint64_t seed = 541);

/// Fold Bernoulli responses into the state space: covariate chain states i
/// become pairs (i, y) with P((i,y) -> (j,y')) = P(i,j) Bern(y'; p_j) and
/// p_j = mean(w_j^T theta_true). Makes the drift a deterministic function of
/// the augmented state, so the stationary analysis stays exact.
FiniteChain augment_bernoulli_responses(const FiniteChain& covariate_chain,
                                        const DriftModel& model,
                                        const Eigen::VectorXd& theta_true);

} // namespace sabias
