#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "ates/errors.hpp"
#include "ates/pwa_model.hpp"

namespace ates {

struct GaussianEstimate {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    [[nodiscard]] Eigen::Index size() const { return mean.size(); }
};

struct UkfConfig {
    double kappa = 5.0;
    double xi_v = 0.0;           ///< process-noise mean [K]
    double zeta_v = 0.05 * 0.05; ///< process-noise variance [K^2]
    double xi_w = 0.0;           ///< measurement-noise mean [K]
    double zeta_w = 0.01 * 0.01; ///< measurement-noise variance [K^2]
    Eigen::MatrixXd C;           ///< p x n output selector
    Eigen::MatrixXd D;           ///< p x 1 feedthrough

    void validate(Eigen::Index n) const
    {
        if (!(zeta_v > 0.0 && zeta_w > 0.0)) {
            throw ParameterError("noise variances must be positive");
        }
        if (!(kappa > 0.0)) {
            throw ParameterError("sigma-point weight kappa must be positive");
        }
        if (C.cols() != n || D.rows() != C.rows() || D.cols() != 1) {
            throw DimensionError("output matrices do not match the state dimension");
        }
    }
};

/// Selector of the four sensors: warm borehole, warm far cell, cold
/// borehole, cold far cell.
inline UkfConfig make_ates_ukf_config(int nu)
{
    const int n = 2 * (nu + 1);
    UkfConfig cfg;
    cfg.C = Eigen::MatrixXd::Zero(4, n);
    cfg.C(0, 0) = 1.0;
    cfg.C(1, nu) = 1.0;
    cfg.C(2, nu + 1) = 1.0;
    cfg.C(3, 2 * nu + 1) = 1.0;
    cfg.D = Eigen::MatrixXd::Zero(4, 1);
    return cfg;
}

/// Lower-triangular S with S S' = A for symmetric positive semidefinite A.
/// Pivots below a relative tolerance are treated as zero columns. Returns
/// false if A has a clearly negative direction.
inline bool psd_cholesky(const Eigen::MatrixXd& A, Eigen::MatrixXd& L)
{
    const Eigen::Index n = A.rows();
    L = Eigen::MatrixXd::Zero(n, n);
    const double scale = std::max(1e-300, A.diagonal().cwiseAbs().maxCoeff());
    const double tol = 1e-14 * scale;
    for (Eigen::Index j = 0; j < n; ++j) {
        double d = A(j, j) - L.row(j).head(j).squaredNorm();
        if (d < -1e-10 * scale) {
            return false;
        }
        if (d <= tol) {
            continue;
        }
        const double ljj = std::sqrt(d);
        L(j, j) = ljj;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            L(i, j) = (A(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / ljj;
        }
    }
    return true;
}

struct SigmaPoints {
    Eigen::MatrixXd points; ///< n x (2n + 1), column 0 is the mean
    Eigen::VectorXd weights;
};

inline SigmaPoints sigma_points(const GaussianEstimate& est, double kappa)
{
    const Eigen::Index n = est.size();
    Eigen::MatrixXd P = 0.5 * (est.cov + est.cov.transpose());
    Eigen::MatrixXd L;
    if (!psd_cholesky((n + kappa) * P, L)) {
        P.diagonal().array() += 1e-9;
        if (!psd_cholesky((n + kappa) * P, L)) {
            throw NumericError("covariance factorization failed after jitter repair");
        }
    }
    SigmaPoints sp;
    sp.points.resize(n, 2 * n + 1);
    sp.weights.resize(2 * n + 1);
    sp.points.col(0) = est.mean;
    sp.weights[0] = kappa / (n + kappa);
    for (Eigen::Index i = 0; i < n; ++i) {
        sp.points.col(1 + i) = est.mean + L.col(i);
        sp.points.col(1 + n + i) = est.mean - L.col(i);
        sp.weights[1 + i] = 0.5 / (n + kappa);
        sp.weights[1 + n + i] = 0.5 / (n + kappa);
    }
    return sp;
}

struct UkfPrediction {
    GaussianEstimate state;  ///< x(k|k-1), Sigma(k|k-1)
    Eigen::VectorXd y_hat;   ///< y(k|k-1)
    Eigen::MatrixXd Sxy;
    Eigen::MatrixXd Syy;
};

using Transition = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

namespace detail {

inline GaussianEstimate weighted_moments(const Eigen::MatrixXd& pts, const Eigen::VectorXd& w)
{
    GaussianEstimate g;
    g.mean = pts * w;
    const Eigen::MatrixXd dev = pts.colwise() - g.mean;
    g.cov = dev * w.asDiagonal() * dev.transpose();
    return g;
}

} // namespace detail

/// Output moments for a given predicted state estimate.
inline UkfPrediction output_moments(GaussianEstimate predicted, double u, const UkfConfig& cfg)
{
    const SigmaPoints sp = sigma_points(predicted, cfg.kappa);
    const Eigen::VectorXd du = cfg.D.col(0) * u;
    Eigen::MatrixXd Y = cfg.C * sp.points;
    Y.colwise() += du;
    UkfPrediction out;
    out.y_hat = Y * sp.weights;
    const Eigen::MatrixXd dy = Y.colwise() - out.y_hat;
    const Eigen::MatrixXd dx = sp.points.colwise() - predicted.mean;
    out.Syy = dy * sp.weights.asDiagonal() * dy.transpose();
    out.Syy.diagonal().array() += cfg.zeta_w;
    out.Sxy = dx * sp.weights.asDiagonal() * dy.transpose();
    out.y_hat.array() += cfg.xi_w;
    out.state = std::move(predicted);
    return out;
}

/// Unscented time update through an arbitrary transition, followed by the
/// output moments of a fresh sigma set drawn around the prediction.
inline UkfPrediction predict(const GaussianEstimate& est, double u, const Transition& transition,
                             const UkfConfig& cfg)
{
    cfg.validate(est.size());
    const SigmaPoints sp = sigma_points(est, cfg.kappa);
    Eigen::MatrixXd prop(est.size(), sp.points.cols());
    for (Eigen::Index i = 0; i < sp.points.cols(); ++i) {
        prop.col(i) = transition(sp.points.col(i));
    }
    GaussianEstimate pred = detail::weighted_moments(prop, sp.weights);
    pred.mean.array() += cfg.xi_v;
    pred.cov.diagonal().array() += cfg.zeta_v;
    pred.cov = 0.5 * (pred.cov + pred.cov.transpose());
    return output_moments(std::move(pred), u, cfg);
}

/// Time update through the PWA model; the branch follows the applied input
/// for every sigma point.
inline UkfPrediction predict(const GaussianEstimate& est, double u, const PwaModel& model, const UkfConfig& cfg)
{
    const AffineBranch& br = model.branch(mode_of(u));
    return predict(est, u, [&](const Eigen::VectorXd& x) { return br.apply(x, u); }, cfg);
}

inline GaussianEstimate update(const UkfPrediction& pred, const Eigen::VectorXd& y)
{
    if (y.size() != pred.y_hat.size()) {
        throw DimensionError("measurement size does not match the output model");
    }
    const Eigen::MatrixXd W = pred.Syy.ldlt().solve(pred.Sxy.transpose()).transpose();
    GaussianEstimate out;
    out.mean = pred.state.mean + W * (y - pred.y_hat);
    out.cov = pred.state.cov - W * pred.Syy * W.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    return out;
}

struct ProjectionResult {
    GaussianEstimate estimate;
    int passes = 0;
    bool clipped = false; ///< pass cap hit, mean clipped as fallback
};

/// Enforces box bounds by treating each violated component as a perfect
/// measurement at its bound (variance 1e-12), repeated until no component
/// is violated.
inline ProjectionResult project(const GaussianEstimate& est, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                int max_passes = 10)
{
    if (lo.size() != est.size() || hi.size() != est.size()) {
        throw DimensionError("bounds do not match the state dimension");
    }
    if ((lo.array() > hi.array()).any()) {
        throw ParameterError("projection bounds are not ordered");
    }
    constexpr double r = 1e-12;
    constexpr double tol = 1e-9;
    ProjectionResult res;
    res.estimate = est;
    Eigen::VectorXd& m = res.estimate.mean;
    Eigen::MatrixXd& P = res.estimate.cov;

    auto violated = [&](Eigen::Index j) { return m[j] < lo[j] - tol || m[j] > hi[j] + tol; };

    for (int pass = 0; pass < max_passes; ++pass) {
        bool any = false;
        for (Eigen::Index j = 0; j < m.size(); ++j) {
            if (!violated(j)) {
                continue;
            }
            any = true;
            const double target = m[j] < lo[j] ? lo[j] : hi[j];
            const double pjj = P(j, j);
            if (pjj <= 1e-15) {
                m[j] = target;
                continue;
            }
            const Eigen::VectorXd K = P.col(j) / (pjj + r);
            m += K * (target - m[j]);
            P -= K * P.row(j);
            P = 0.5 * (P + P.transpose());
        }
        if (!any) {
            res.passes = pass;
            m = m.cwiseMax(lo).cwiseMin(hi);
            return res;
        }
        res.passes = pass + 1;
    }
    for (Eigen::Index j = 0; j < m.size(); ++j) {
        if (violated(j)) {
            res.clipped = true;
        }
    }
    m = m.cwiseMax(lo).cwiseMin(hi);
    return res;
}

/// Filter state carried between sampling instants.
class Ukf {
public:
    Ukf(GaussianEstimate initial, UkfConfig cfg) : est_(std::move(initial)), cfg_(std::move(cfg))
    {
        cfg_.validate(est_.size());
    }

    /// Measurement update without a preceding time update (first sample).
    const GaussianEstimate& correct(const Eigen::VectorXd& y, double u = 0.0)
    {
        est_ = update(output_moments(est_, u, cfg_), y);
        return est_;
    }

    const GaussianEstimate& step(const Eigen::VectorXd& y, double u_prev, const PwaModel& model)
    {
        est_ = update(predict(est_, u_prev, model, cfg_), y);
        return est_;
    }

    ProjectionResult constrain(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi)
    {
        ProjectionResult pr = project(est_, lo, hi);
        est_ = pr.estimate;
        return pr;
    }

    [[nodiscard]] const GaussianEstimate& estimate() const { return est_; }
    [[nodiscard]] const UkfConfig& config() const { return cfg_; }

private:
    GaussianEstimate est_;
    UkfConfig cfg_;
};

} // namespace ates
