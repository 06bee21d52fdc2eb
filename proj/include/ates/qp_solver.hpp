#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "ates/errors.hpp"

namespace ates {

/// min 1/2 z'Hz + g'z  subject to  G z <= h
struct Qp {
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    Eigen::MatrixXd G;
    Eigen::VectorXd h;

    [[nodiscard]] Eigen::Index num_vars() const { return H.rows(); }
    [[nodiscard]] Eigen::Index num_constraints() const { return G.rows(); }

    [[nodiscard]] double objective(const Eigen::VectorXd& z) const { return 0.5 * z.dot(H * z) + g.dot(z); }
};

enum class QpStatus { optimal, infeasible };

struct QpResult {
    Eigen::VectorXd z_star;
    double value = 0.0;
    QpStatus status = QpStatus::infeasible;
    double kkt_residual = std::numeric_limits<double>::infinity();
    std::vector<int> active_set;
    Eigen::VectorXd multipliers; ///< one per inequality, zero when inactive
    int iterations = 0;
};

struct QpKkt {
    double stationarity = 0.0;
    double primal = 0.0;
    double dual = 0.0;
    double complementarity = 0.0;

    [[nodiscard]] double max() const { return std::max({stationarity, primal, dual, complementarity}); }
};

/// Scaled KKT residuals of (z, mu) for the inequality-form QP. Each term is
/// divided by the magnitude of the quantities it compares.
inline QpKkt qp_kkt_residuals(const Qp& qp, const Eigen::VectorXd& z, const Eigen::VectorXd& mu)
{
    QpKkt k;
    const Eigen::VectorXd Hz = qp.H * z;
    Eigen::VectorXd grad = Hz + qp.g;
    Eigen::VectorXd Gtmu = Eigen::VectorXd::Zero(z.size());
    if (qp.G.rows() > 0) {
        Gtmu = qp.G.transpose() * mu;
    }
    grad += Gtmu;
    const double scale_s = 1.0 + std::max({Hz.lpNorm<Eigen::Infinity>(), qp.g.lpNorm<Eigen::Infinity>(),
                                           Gtmu.lpNorm<Eigen::Infinity>()});
    k.stationarity = grad.lpNorm<Eigen::Infinity>() / scale_s;
    for (Eigen::Index j = 0; j < qp.G.rows(); ++j) {
        const double gz = qp.G.row(j).dot(z);
        const double s = gz - qp.h[j];
        const double scale = 1.0 + std::max(std::abs(gz), std::abs(qp.h[j]));
        k.primal = std::max(k.primal, std::max(0.0, s) / scale);
        k.dual = std::max(k.dual, std::max(0.0, -mu[j]));
        k.complementarity = std::max(k.complementarity, std::abs(mu[j] * s) / (scale * (1.0 + std::abs(mu[j]))));
    }
    return k;
}

/// Dual active-set method (Goldfarb-Idnani). Starts from the unconstrained
/// minimizer and adds the most violated constraint until the iterate is
/// primal feasible; the working set stays dual feasible throughout.
/// Step directions are recomputed from scratch, which is cheap for the
/// handful of variables this is used with.
inline QpResult solve_qp(const Qp& qp)
{
    const Eigen::Index m = qp.H.rows();
    const Eigen::Index p = qp.G.rows();
    if (qp.H.cols() != m || qp.g.size() != m || (p > 0 && qp.G.cols() != m) || qp.h.size() != p) {
        throw DimensionError("inconsistent QP dimensions");
    }
    if (!qp.H.allFinite() || !qp.g.allFinite() || !qp.G.allFinite() || !qp.h.allFinite()) {
        throw NumericError("QP data contains non-finite values");
    }

    Eigen::MatrixXd H = 0.5 * (qp.H + qp.H.transpose());
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = std::max(1.0, eig.eigenvalues().maxCoeff());
        if (lo < -1e-8 * hi) {
            throw ParameterError("QP Hessian is not positive semidefinite");
        }
        if (lo < 1e-12) {
            H.diagonal().array() += 1e-10;
        }
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) {
        throw NumericError("QP Hessian factorization failed");
    }
    const Eigen::MatrixXd Hinv = llt.solve(Eigen::MatrixXd::Identity(m, m));

    Eigen::VectorXd x = -Hinv * qp.g;
    std::vector<int> active;
    std::vector<double> lambda;

    Eigen::VectorXd row_norm(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        row_norm[j] = std::max(qp.G.row(j).norm(), 1e-300);
    }

    QpResult res;
    const long max_iter = 100L * (m + p);
    long iter = 0;
    constexpr double inf = std::numeric_limits<double>::infinity();

    auto is_active = [&](Eigen::Index j) { return std::find(active.begin(), active.end(), j) != active.end(); };

    for (;;) {
        // most violated inactive constraint, lowest index on ties
        int pick = -1;
        double worst = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (is_active(j)) {
                continue;
            }
            const double gz = qp.G.row(j).dot(x);
            const double viol = gz - qp.h[j];
            const double tol = 1e-12 * (1.0 + std::max(std::abs(gz), std::abs(qp.h[j])));
            if (viol > tol && viol / row_norm[j] > worst) {
                worst = viol / row_norm[j];
                pick = static_cast<int>(j);
            }
        }
        if (pick < 0) {
            res.status = QpStatus::optimal;
            break;
        }

        // constraint in ">=" form: n' x >= b with n = -G_p, b = -h_p
        const Eigen::VectorXd n_plus = -qp.G.row(pick).transpose();
        const double b_plus = -qp.h[pick];
        double lambda_p = 0.0;
        bool added = false;
        bool infeasible = false;

        while (!added) {
            if (++iter > max_iter) {
                throw NonConvergenceError("active-set QP exceeded its iteration cap");
            }
            const auto q = static_cast<Eigen::Index>(active.size());
            Eigen::VectorXd z;
            Eigen::VectorXd r(q);
            if (q > 0) {
                Eigen::MatrixXd N(m, q);
                for (Eigen::Index a = 0; a < q; ++a) {
                    N.col(a) = -qp.G.row(active[a]).transpose();
                }
                const Eigen::MatrixXd HN = Hinv * N;
                const Eigen::MatrixXd M = N.transpose() * HN;
                r = M.ldlt().solve(HN.transpose() * n_plus);
                z = Hinv * (n_plus - N * r);
            } else {
                z = Hinv * n_plus;
            }

            double t1 = inf;
            int drop = -1;
            for (Eigen::Index a = 0; a < q; ++a) {
                if (r[a] > 1e-14) {
                    const double t = lambda[a] / r[a];
                    if (t < t1 || (t == t1 && drop >= 0 && active[a] < active[drop])) {
                        t1 = t;
                        drop = static_cast<int>(a);
                    }
                }
            }
            const double zn = z.dot(n_plus);
            const double zn_scale = n_plus.dot(Hinv * n_plus);
            double t2 = inf;
            if (zn > 1e-13 * zn_scale) {
                const double c = n_plus.dot(x) - b_plus;
                t2 = std::max(0.0, -c / zn);
            }

            if (t1 == inf && t2 == inf) {
                infeasible = true;
                break;
            }
            if (t2 == inf) {
                for (Eigen::Index a = 0; a < q; ++a) {
                    lambda[a] -= t1 * r[a];
                }
                lambda_p += t1;
                active.erase(active.begin() + drop);
                lambda.erase(lambda.begin() + drop);
                continue;
            }
            const double t = std::min(t1, t2);
            x += t * z;
            for (Eigen::Index a = 0; a < q; ++a) {
                lambda[a] -= t * r[a];
            }
            lambda_p += t;
            if (t2 <= t1) {
                active.push_back(pick);
                lambda.push_back(lambda_p);
                added = true;
            } else {
                active.erase(active.begin() + drop);
                lambda.erase(lambda.begin() + drop);
            }
        }
        if (infeasible) {
            res.status = QpStatus::infeasible;
            break;
        }
    }

    res.iterations = static_cast<int>(iter);
    res.z_star = x;
    res.value = qp.objective(x);
    res.multipliers = Eigen::VectorXd::Zero(p);
    for (std::size_t a = 0; a < active.size(); ++a) {
        res.multipliers[active[a]] = std::max(0.0, lambda[a]);
    }
    res.active_set = active;
    std::sort(res.active_set.begin(), res.active_set.end());
    res.kkt_residual = qp_kkt_residuals(qp, x, res.multipliers).max();
    return res;
}

} // namespace ates
