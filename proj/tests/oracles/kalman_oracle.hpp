#pragma once

// Textbook Kalman filter for x+ = A x + b u + f + v, y = C x + D u + w.

#include <random>

#include <Eigen/Dense>

namespace oracle {

struct KalmanMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

struct KalmanPrediction {
    KalmanMoments state;
    Eigen::VectorXd y_hat;
    Eigen::MatrixXd S;  ///< innovation covariance
    Eigen::MatrixXd PC; ///< state/output cross covariance
};

inline KalmanPrediction kf_predict(const KalmanMoments& est, const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                   const Eigen::VectorXd& f, double u, double xi_v, double zeta_v,
                                   const Eigen::MatrixXd& C, const Eigen::VectorXd& d, double xi_w, double zeta_w)
{
    const auto n = est.mean.size();
    KalmanPrediction p;
    p.state.mean = A * est.mean + b * u + f + Eigen::VectorXd::Constant(n, xi_v);
    p.state.cov = A * est.cov * A.transpose() + zeta_v * Eigen::MatrixXd::Identity(n, n);
    p.y_hat = C * p.state.mean + d * u + Eigen::VectorXd::Constant(C.rows(), xi_w);
    p.S = C * p.state.cov * C.transpose() + zeta_w * Eigen::MatrixXd::Identity(C.rows(), C.rows());
    p.PC = p.state.cov * C.transpose();
    return p;
}

inline KalmanMoments kf_update(const KalmanPrediction& p, const Eigen::VectorXd& y)
{
    const Eigen::MatrixXd K = p.PC * p.S.inverse();
    KalmanMoments out;
    out.mean = p.state.mean + K * (y - p.y_hat);
    out.cov = p.state.cov - K * p.S * K.transpose();
    return out;
}

struct AffineSystem {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::VectorXd f;
    Eigen::MatrixXd C;
    Eigen::VectorXd d;
};

/// Random stable-ish affine system with a random selector-plus-mixing output.
inline AffineSystem random_affine_system(std::mt19937_64& rng, int n, int p)
{
    std::normal_distribution<double> N(0.0, 1.0);
    AffineSystem s;
    s.A = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return N(rng); });
    s.A *= 0.9 / std::max(1.0, s.A.operatorNorm());
    s.b = Eigen::VectorXd::NullaryExpr(n, [&] { return N(rng); });
    s.f = Eigen::VectorXd::NullaryExpr(n, [&] { return N(rng); });
    s.C = Eigen::MatrixXd::NullaryExpr(p, n, [&] { return N(rng); });
    s.d = Eigen::VectorXd::NullaryExpr(p, [&] { return N(rng); });
    return s;
}

inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n)
{
    std::normal_distribution<double> N(0.0, 1.0);
    const Eigen::MatrixXd L = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return N(rng); });
    return L * L.transpose() / n + 0.1 * Eigen::MatrixXd::Identity(n, n);
}

} // namespace oracle
