// Test-side oracles, intentionally independent of the library's solve paths:
// hand-rolled Gauss-Jordan elimination, explicit Kronecker systems, brute
// force matrix powers, and central finite differences.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Gauss-Jordan with partial pivoting. Square systems only.
inline Eigen::VectorXd dense_solve(Eigen::MatrixXd A, Eigen::VectorXd b) {
    const auto n = A.rows();
    if (A.cols() != n || b.size() != n) throw std::runtime_error("dense_solve: bad shapes");
    for (Eigen::Index col = 0; col < n; ++col) {
        Eigen::Index pivot = col;
        for (Eigen::Index r = col + 1; r < n; ++r) {
            if (std::abs(A(r, col)) > std::abs(A(pivot, col))) pivot = r;
        }
        if (std::abs(A(pivot, col)) < 1e-300) throw std::runtime_error("dense_solve: singular");
        A.row(col).swap(A.row(pivot));
        std::swap(b[col], b[pivot]);
        const double inv = 1.0 / A(col, col);
        A.row(col) *= inv;
        b[col] *= inv;
        for (Eigen::Index r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = A(r, col);
            if (f != 0.0) {
                A.row(r) -= f * A.row(col);
                b[r] -= f * b[col];
            }
        }
    }
    return b;
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
        }
    }
    return K;
}

inline Eigen::VectorXd vec(const Eigen::MatrixXd& M) {
    return Eigen::Map<const Eigen::VectorXd>(M.data(), M.size());
}

inline Eigen::MatrixXd unvec(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

/// Solve J S + S J^T = M through the explicit Kronecker system
/// (I (x) J + J (x) I) vec(S) = vec(M), column-major vec convention.
inline Eigen::MatrixXd lyapunov_kron(const Eigen::MatrixXd& J, const Eigen::MatrixXd& M) {
    const auto d = J.rows();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd K = kron(I, J) + kron(J, I);
    return unvec(dense_solve(K, vec(M)), d, d);
}

/// Stationary vector by dense solve of (P^T - I) pi = 0 with the last
/// equation replaced by the normalization.
inline Eigen::VectorXd stationary(const Eigen::MatrixXd& P) {
    const auto n = P.rows();
    Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
    A.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b[n - 1] = 1.0;
    return dense_solve(A, b);
}

inline double sup_row_tv(const Eigen::MatrixXd& Pk, const Eigen::VectorXd& pi) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < Pk.rows(); ++i) {
        worst = std::max(worst, 0.5 * (Pk.row(i).transpose() - pi).lpNorm<1>());
    }
    return worst;
}

/// Brute-force mixing time by repeated multiplication.
inline long mixing_time(const Eigen::MatrixXd& P, double eps, long cap = 100000) {
    const Eigen::VectorXd pi = stationary(P);
    Eigen::MatrixXd Pk = P;
    for (long k = 1; k <= cap; ++k) {
        if (sup_row_tv(Pk, pi) <= eps) return k;
        Pk = Pk * P;
    }
    throw std::runtime_error("oracle mixing_time: cap reached");
}

/// Central finite difference of f at x along coordinate j.
template <typename F>
Eigen::VectorXd central_diff(F&& f, const Eigen::VectorXd& x, int j, double h) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    return (f(xp) - f(xm)) / (2.0 * h);
}

} // namespace oracle
