#include "sabias/noise.hpp"

#include <cmath>

namespace sabias {

namespace {

// Symmetric PSD square root via eigendecomposition; tiny negative
// eigenvalues from rounding are clamped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S) {
    if (S.rows() != S.cols()) fail(Err::ShapeMismatch, "covariance must be square");
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + S.cwiseAbs().maxCoeff())) {
        fail(Err::ShapeMismatch, "covariance must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    Eigen::VectorXd ev = es.eigenvalues();
    const double floor = -1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < floor) fail(Err::ShapeMismatch, "covariance is not positive semidefinite");
        ev[i] = std::sqrt(std::max(ev[i], 0.0));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace

NoiseField NoiseField::none(int dim) {
    NoiseField f;
    f.variant_ = NoiseVariant::None;
    f.dim_ = dim;
    f.sigma0_ = Eigen::MatrixXd::Zero(dim, dim);
    f.sqrt_sigma0_ = Eigen::MatrixXd::Zero(dim, dim);
    return f;
}

NoiseField NoiseField::gaussian(Eigen::MatrixXd sigma0) {
    NoiseField f;
    f.variant_ = NoiseVariant::GaussianConstant;
    f.dim_ = static_cast<int>(sigma0.rows());
    f.sqrt_sigma0_ = psd_sqrt(sigma0);
    f.sigma0_ = std::move(sigma0);
    return f;
}

NoiseField NoiseField::gaussian_scaled(Eigen::MatrixXd sigma0, double a0, double a1,
                                       Eigen::VectorXd theta_ref) {
    if (a0 < 0.0 || a1 < 0.0) fail(Err::ShapeMismatch, "scale parameters must be nonnegative");
    if (theta_ref.size() != sigma0.rows()) fail(Err::ShapeMismatch, "theta_ref has wrong length");
    NoiseField f;
    f.variant_ = NoiseVariant::GaussianScaled;
    f.dim_ = static_cast<int>(sigma0.rows());
    f.sqrt_sigma0_ = psd_sqrt(sigma0);
    f.sigma0_ = std::move(sigma0);
    f.a0_ = a0;
    f.a1_ = a1;
    f.theta_ref_ = std::move(theta_ref);
    return f;
}

void NoiseField::sample(const Eigen::VectorXd& theta, const Eigen::VectorXd& base_draw,
                        Eigen::VectorXd& out) const {
    switch (variant_) {
        case NoiseVariant::None:
            out.setZero(dim_);
            return;
        case NoiseVariant::GaussianConstant:
            out.noalias() = sqrt_sigma0_ * base_draw;
            return;
        case NoiseVariant::GaussianScaled: {
            const double scale = a0_ + a1_ * std::tanh((theta - theta_ref_).norm());
            out.noalias() = scale * (sqrt_sigma0_ * base_draw);
            return;
        }
    }
}

Eigen::VectorXd NoiseField::sample_noise(const Eigen::VectorXd& theta,
                                         const Eigen::VectorXd& base_draw) const {
    Eigen::VectorXd out(dim_);
    sample(theta, base_draw, out);
    return out;
}

Eigen::MatrixXd NoiseField::covariance_at(const Eigen::VectorXd& theta) const {
    switch (variant_) {
        case NoiseVariant::None: return Eigen::MatrixXd::Zero(dim_, dim_);
        case NoiseVariant::GaussianConstant: return sigma0_;
        case NoiseVariant::GaussianScaled: {
            const double scale = a0_ + a1_ * std::tanh((theta - theta_ref_).norm());
            return scale * scale * sigma0_;
        }
    }
    return Eigen::MatrixXd::Zero(dim_, dim_);
}

} // namespace sabias
