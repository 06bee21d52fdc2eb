#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ates/ukf.hpp"
#include "oracles/kalman_oracle.hpp"
#include "oracles/qp_oracles.hpp"

using namespace ates;

namespace {

UkfConfig config_for(const oracle::AffineSystem& s, double zeta_v, double zeta_w)
{
    UkfConfig c;
    c.kappa = 5.0;
    c.zeta_v = zeta_v;
    c.zeta_w = zeta_w;
    c.C = s.C;
    c.D = s.d;
    return c;
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

bool is_psd(const Eigen::MatrixXd& P, double tol)
{
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        return false;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    return es.eigenvalues().minCoeff() >= -tol;
}

} // namespace

TEST(SigmaPoints, ScalarClosedForm)
{
    const GaussianEstimate e{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
    const SigmaPoints sp = sigma_points(e, 5.0);
    ASSERT_EQ(sp.points.cols(), 3);
    EXPECT_DOUBLE_EQ(sp.points(0, 0), 0.0);
    EXPECT_NEAR(sp.points(0, 1), std::sqrt(6.0), 1e-15);
    EXPECT_NEAR(sp.points(0, 2), -std::sqrt(6.0), 1e-15);
    EXPECT_NEAR(sp.weights[0], 5.0 / 6.0, 1e-15);
    EXPECT_NEAR(sp.weights[1], 1.0 / 12.0, 1e-15);
    EXPECT_NEAR(sp.weights[2], 1.0 / 12.0, 1e-15);
}

TEST(SigmaPoints, MomentMatching)
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int n : {1, 3, 10, 42}) {
        GaussianEstimate e;
        e.mean = Eigen::VectorXd::NullaryExpr(n, [&] { return 285.0 + N(rng); });
        e.cov = oracle::random_spd(rng, n);
        const SigmaPoints sp = sigma_points(e, 5.0);
        EXPECT_NEAR(sp.weights.sum(), 1.0, 1e-14);
        const Eigen::VectorXd m = sp.points * sp.weights;
        EXPECT_LE((m - e.mean).lpNorm<Eigen::Infinity>(), 1e-10);
        const Eigen::MatrixXd d = sp.points.colwise() - e.mean;
        const Eigen::MatrixXd P = d * sp.weights.asDiagonal() * d.transpose();
        EXPECT_LE(max_abs(P - e.cov), 1e-12 * n);
    }
}

TEST(SigmaPoints, ZeroCovarianceCollapses)
{
    const GaussianEstimate e{Eigen::Vector3d(1.0, 2.0, 3.0), Eigen::MatrixXd::Zero(3, 3)};
    const SigmaPoints sp = sigma_points(e, 5.0);
    for (Eigen::Index i = 0; i < sp.points.cols(); ++i) {
        EXPECT_EQ(sp.points.col(i), e.mean);
    }
}

TEST(SigmaPoints, IndefiniteCovarianceFails)
{
    Eigen::Matrix2d P;
    P << 1.0, 0.0, 0.0, -1.0;
    EXPECT_THROW(sigma_points({Eigen::Vector2d::Zero(), P}, 5.0), NumericError);
}

TEST(Ukf, PredictMatchesKalmanOnAffineMaps)
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        const int n = 1 + t % 10;
        const int p = 1 + t % 4;
        const auto sys = oracle::random_affine_system(rng, n, p);
        const UkfConfig cfg = config_for(sys, 0.05, 0.02);
        GaussianEstimate e{Eigen::VectorXd::NullaryExpr(n, [&] { return N(rng); }), oracle::random_spd(rng, n)};
        const double u = N(rng);
        const UkfPrediction up = predict(
            e, u, [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(sys.A * x + sys.b * u + sys.f); }, cfg);
        const auto kp = oracle::kf_predict({e.mean, e.cov}, sys.A, sys.b, sys.f, u, 0.0, 0.05, sys.C, sys.d, 0.0, 0.02);
        EXPECT_LE((up.state.mean - kp.state.mean).lpNorm<Eigen::Infinity>(), 1e-10);
        EXPECT_LE(max_abs(up.state.cov - kp.state.cov), 1e-10);
        EXPECT_LE((up.y_hat - kp.y_hat).lpNorm<Eigen::Infinity>(), 1e-10);
        EXPECT_LE(max_abs(up.Syy - kp.S), 1e-10);
        EXPECT_LE(max_abs(up.Sxy - kp.PC), 1e-10);

        const Eigen::VectorXd y = kp.y_hat + Eigen::VectorXd::NullaryExpr(p, [&] { return N(rng); });
        const GaussianEstimate ue = update(up, y);
        const auto ke = oracle::kf_update(kp, y);
        EXPECT_LE((ue.mean - ke.mean).lpNorm<Eigen::Infinity>(), 1e-10);
        EXPECT_LE(max_abs(ue.cov - ke.cov), 1e-10);
        EXPECT_TRUE(is_psd(ue.cov, 1e-10));
    }
}

TEST(Ukf, DeltaPriorWithoutNoisePropagatesMean)
{
    const auto sys = [] {
        std::mt19937_64 rng(3);
        return oracle::random_affine_system(rng, 4, 2);
    }();
    UkfConfig cfg = config_for(sys, 1e-300, 1.0);
    const GaussianEstimate e{Eigen::Vector4d(1, 2, 3, 4), Eigen::MatrixXd::Zero(4, 4)};
    const UkfPrediction p = predict(
        e, 0.7, [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(sys.A * x + sys.b * 0.7 + sys.f); }, cfg);
    EXPECT_LE((p.state.mean - (sys.A * e.mean + sys.b * 0.7 + sys.f)).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Ukf, ZeroInnovationShrinksCovariance)
{
    std::mt19937_64 rng(4);
    const auto sys = oracle::random_affine_system(rng, 5, 2);
    const UkfConfig cfg = config_for(sys, 0.01, 0.01);
    const GaussianEstimate e{Eigen::VectorXd::Zero(5), oracle::random_spd(rng, 5)};
    const UkfPrediction p = output_moments(e, 0.0, cfg);
    const GaussianEstimate u = update(p, p.y_hat);
    EXPECT_LE((u.mean - e.mean).lpNorm<Eigen::Infinity>(), 1e-14);
    EXPECT_LT(u.cov.trace(), e.cov.trace());
}

TEST(Ukf, HugeSensorNoiseMakesUpdateANoOp)
{
    std::mt19937_64 rng(5);
    const auto sys = oracle::random_affine_system(rng, 6, 3);
    const UkfConfig cfg = config_for(sys, 0.01, 1e12);
    const GaussianEstimate e{Eigen::VectorXd::Constant(6, 285.0), oracle::random_spd(rng, 6)};
    const UkfPrediction p = output_moments(e, 0.0, cfg);
    const GaussianEstimate u = update(p, p.y_hat + Eigen::Vector3d(5.0, -5.0, 3.0));
    EXPECT_LE((u.mean - e.mean).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Ukf, AtesSelectorRows)
{
    const UkfConfig c = make_ates_ukf_config(20);
    ASSERT_EQ(c.C.rows(), 4);
    ASSERT_EQ(c.C.cols(), 42);
    EXPECT_EQ(c.C(0, 0), 1.0);
    EXPECT_EQ(c.C(1, 20), 1.0);
    EXPECT_EQ(c.C(2, 21), 1.0);
    EXPECT_EQ(c.C(3, 41), 1.0);
    EXPECT_EQ(c.C.sum(), 4.0);
    EXPECT_EQ(c.D.lpNorm<Eigen::Infinity>(), 0.0);
    EXPECT_EQ(c.kappa, 5.0);
    EXPECT_DOUBLE_EQ(c.zeta_v, 0.0025);
    EXPECT_DOUBLE_EQ(c.zeta_w, 0.0001);
    UkfConfig bad = c;
    bad.zeta_w = 0.0;
    EXPECT_THROW(bad.validate(42), ParameterError);
    EXPECT_THROW(c.validate(40), DimensionError);
}

TEST(Projection, InsideBoundsIsIdentity)
{
    std::mt19937_64 rng(6);
    const GaussianEstimate e{Eigen::Vector3d(0.1, 0.2, -0.3), oracle::random_spd(rng, 3)};
    const ProjectionResult r = project(e, Eigen::Vector3d::Constant(-1), Eigen::Vector3d::Constant(1));
    EXPECT_EQ(r.estimate.mean, e.mean);
    EXPECT_EQ(r.estimate.cov, e.cov);
    EXPECT_EQ(r.passes, 0);
    EXPECT_FALSE(r.clipped);
}

TEST(Projection, DiagonalCovarianceMovesOnlyViolator)
{
    const Eigen::Vector3d m(0.5, 1.7, -0.2);
    const GaussianEstimate e{m, Eigen::Vector3d(0.3, 0.8, 0.5).asDiagonal()};
    const ProjectionResult r = project(e, Eigen::Vector3d::Constant(-1), Eigen::Vector3d::Constant(1));
    EXPECT_NEAR(r.estimate.mean[1], 1.0, 1e-9);
    EXPECT_EQ(r.estimate.mean[0], 0.5);
    EXPECT_EQ(r.estimate.mean[2], -0.2);
    EXPECT_NEAR(r.estimate.cov(1, 1), 0.0, 1e-9);
    EXPECT_NEAR(r.estimate.cov(0, 0), 0.3, 1e-15);
}

TEST(Projection, CorrelatedMatchesConstrainedLeastSquares)
{
    // The projected mean must solve min (x - m)' P^-1 (x - m) over the box.
    std::mt19937_64 rng(7);
    std::normal_distribution<double> N(0.0, 1.0);
    int compared = 0;
    for (int t = 0; t < 200; ++t) {
        const int n = 2 + t % 3;
        GaussianEstimate e{Eigen::VectorXd::NullaryExpr(n, [&] { return 0.8 * N(rng); }), oracle::random_spd(rng, n)};
        e.mean[0] = 1.0 + std::abs(N(rng));
        const Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -1.0);
        const Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, 1.0);
        const ProjectionResult r = project(e, lo, hi);
        EXPECT_TRUE(is_psd(r.estimate.cov, 1e-10));
        EXPECT_GE((r.estimate.mean - lo).minCoeff(), 0.0);
        EXPECT_GE((hi - r.estimate.mean).minCoeff(), 0.0);
        const Eigen::ArrayXd gap = (r.estimate.mean - lo).cwiseMin(hi - r.estimate.mean).array();
        if (r.passes != 1 || r.clipped || (gap < 1e-9).count() != 1) {
            continue; // several pinned bounds follow the sequential rule, not the least-squares active set
        }
        Qp qp;
        const Eigen::MatrixXd Pi = e.cov.inverse();
        qp.H = Pi;
        qp.g = -Pi * e.mean;
        qp.G.resize(2 * n, n);
        qp.G << Eigen::MatrixXd::Identity(n, n), -Eigen::MatrixXd::Identity(n, n);
        qp.h.resize(2 * n);
        qp.h << hi, -lo;
        const oracle::QpReference ref = oracle::kkt_enumeration(qp);
        ASSERT_TRUE(ref.feasible);
        EXPECT_LE((r.estimate.mean - ref.z).lpNorm<Eigen::Infinity>(), 1e-6) << t;
        ++compared;
    }
    EXPECT_GT(compared, 50);
}

TEST(Projection, RejectsBadBounds)
{
    const GaussianEstimate e{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
    EXPECT_THROW(project(e, Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)), ParameterError);
    EXPECT_THROW(project(e, Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones()), DimensionError);
}

TEST(UkfClass, FilterConvergesOnNoiselessAffineSystem)
{
    std::mt19937_64 rng(8);
    const auto sys = oracle::random_affine_system(rng, 4, 4);
    const UkfConfig cfg = config_for(sys, 1e-8, 1e-6);
    Ukf f({Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Identity(4, 4) * 10.0}, cfg);
    Eigen::VectorXd x = Eigen::Vector4d(1.0, -2.0, 0.5, 3.0);
    PwaModel m;
    m.nu = 1;
    m.storing = {sys.A, Eigen::VectorXd::Zero(4), sys.f};
    f.correct(sys.C * x);
    for (int k = 0; k < 30; ++k) {
        x = sys.A * x + sys.f;
        f.step(sys.C * x, 0.0, m);
    }
    EXPECT_LE((f.estimate().mean - x).norm(), 1e-2);
}
