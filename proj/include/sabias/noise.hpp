#pragma once

#include <Eigen/Dense>

#include "sabias/common.hpp"

namespace sabias {

enum class NoiseVariant { None, GaussianConstant, GaussianScaled };

/// Zero-mean i.i.d. random field xi(theta) with closed-form covariance.
/// The base draw is injected by the caller, so two coupled trajectories can
/// share the same underlying randomness exactly.
class NoiseField {
public:
    static NoiseField none(int dim);
    /// xi(theta) = Sigma0^{1/2} Z, covariance independent of theta.
    static NoiseField gaussian(Eigen::MatrixXd sigma0);
    /// xi(theta) = (a0 + a1 tanh(|theta - theta_ref|)) Sigma0^{1/2} Z.
    static NoiseField gaussian_scaled(Eigen::MatrixXd sigma0, double a0, double a1,
                                      Eigen::VectorXd theta_ref);

    NoiseVariant variant() const { return variant_; }
    int dim() const { return dim_; }
    const Eigen::MatrixXd& base_covariance() const { return sigma0_; }
    const Eigen::MatrixXd& sqrt_covariance() const { return sqrt_sigma0_; }

    /// Deterministic function of (theta, base_draw); base_draw is standard normal.
    void sample(const Eigen::VectorXd& theta, const Eigen::VectorXd& base_draw,
                Eigen::VectorXd& out) const;
    Eigen::VectorXd sample_noise(const Eigen::VectorXd& theta, const Eigen::VectorXd& base_draw) const;

    Eigen::MatrixXd covariance_at(const Eigen::VectorXd& theta) const;

private:
    NoiseField() = default;

    NoiseVariant variant_ = NoiseVariant::None;
    int dim_ = 0;
    Eigen::MatrixXd sigma0_;
    Eigen::MatrixXd sqrt_sigma0_;
    double a0_ = 0.0;
    double a1_ = 0.0;
    Eigen::VectorXd theta_ref_;
};

} // namespace sabias
