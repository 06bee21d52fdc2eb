#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ates/pwa_model.hpp"
#include "ates/truth_simulator.hpp"

using namespace ates;

namespace {

const RadialGrid kCoarse = build_grid(0.4, 60.0, 20, 38.0);
const AquiferParams kParams;
const HxParams kHx;

TruthConfig quiet()
{
    TruthConfig c;
    c.heterogeneous = false;
    c.t_amb_noise_amp = 0.0;
    c.sensor_sigma = 0.0;
    return c;
}

double max_dev(const TruthState& s, double T)
{
    return std::max((s.warm.array() - T).abs().maxCoeff(), (s.cold.array() - T).abs().maxCoeff());
}

} // namespace

TEST(TruthInit, AmbientFieldsAndDeterministicConductivity)
{
    TruthConfig c;
    c.seed = 99;
    TruthSimulator a(kCoarse, kParams, kHx, c);
    TruthSimulator b(kCoarse, kParams, kHx, c);
    const TruthState sa = a.init();
    const TruthState sb = b.init();
    EXPECT_EQ(sa.lambda_warm, sb.lambda_warm);
    EXPECT_EQ(sa.lambda_cold, sb.lambda_cold);
    EXPECT_EQ(sa.warm.size(), 201);
    EXPECT_TRUE((sa.warm.array() == 284.85).all());
    EXPECT_TRUE((sa.cold.array() == 284.85).all());

    c.seed = 100;
    TruthSimulator d(kCoarse, kParams, kHx, c);
    EXPECT_NE(d.init().lambda_warm, sa.lambda_warm);
}

TEST(TruthInit, ConductivityStatistics)
{
    TruthConfig c;
    c.nu_fine = 5000;
    c.seed = 3;
    TruthSimulator sim(kCoarse, kParams, kHx, c);
    const TruthState s = sim.init();
    Eigen::VectorXd all(10000);
    all << s.lambda_warm, s.lambda_cold;
    EXPECT_GE(all.minCoeff(), 3.0);
    EXPECT_LE(all.maxCoeff(), 5.0);
    EXPECT_NEAR(all.mean(), 4.0, 0.05);
}

TEST(TruthInit, ConfigValidation)
{
    TruthConfig c;
    c.nu_fine = 10;
    EXPECT_THROW(TruthSimulator(kCoarse, kParams, kHx, c), ConfigError);
    c = TruthConfig{};
    c.lambda_lo = 6.0;
    EXPECT_THROW(TruthSimulator(kCoarse, kParams, kHx, c), ConfigError);
}

TEST(TruthStep, AmbientRestIsUnchanged)
{
    TruthSimulator sim(kCoarse, kParams, kHx, quiet());
    TruthState s = sim.init();
    for (int k = 0; k < 24; ++k) {
        sim.step(s, 0.0);
    }
    EXPECT_EQ(max_dev(s, kParams.T_amb), 0.0);
    EXPECT_DOUBLE_EQ(s.clock, 24 * 3600.0);
}

TEST(TruthStep, PerturbationDecaysMonotonically)
{
    TruthSimulator sim(kCoarse, kParams, kHx, quiet());
    TruthState s = sim.init();
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    for (int i = 1; i <= 200; ++i) {
        s.warm[i] += U(rng);
        s.cold[i] += U(rng);
    }
    double prev = max_dev(s, kParams.T_amb);
    for (int k = 0; k < 48; ++k) {
        sim.step(s, 0.0);
        const double d = max_dev(s, kParams.T_amb);
        EXPECT_LE(d, prev + 1e-12) << k;
        prev = d;
    }
    EXPECT_EQ(s.audit.violations, 0);
}

TEST(TruthStep, HeatingInjectsBoundedMonotoneColdFront)
{
    TruthConfig c;
    c.seed = 5;
    TruthSimulator sim(kCoarse, kParams, kHx, c);
    TruthState s = sim.init();
    // pre-charge the warm well so heating has a lift to work with
    for (int i = 0; i <= 30; ++i) {
        s.warm[i] += 6.0;
    }
    const double hi0 = s.warm.maxCoeff();
    for (int k = 0; k < 24; ++k) {
        sim.step(s, 0.0277);
    }
    EXPECT_EQ(s.audit.violations, 0);
    EXPECT_GT(s.audit.checks, 0);
    const double inj_lo = hx_outlet_temp(hi0, 0.0277, kHx.q_b, kHx.T_b_heating);
    for (int i = 1; i <= 200; ++i) {
        EXPECT_LE(s.cold[i - 1], s.cold[i] + 0.25) << i; // front rises outwards up to the ambient noise
        EXPECT_GE(s.cold[i], std::min(inj_lo, kHx.T_b_heating) - 1e-9);
        EXPECT_LE(s.cold[i], kParams.T_amb + 0.1 + 1e-9);
    }
    EXPECT_LT(s.cold[1], kParams.T_amb - 1.0);
    EXPECT_GT(s.last_mean_power, 0.0);
}

TEST(TruthStep, EnergyBookkeepingCloses)
{
    TruthSimulator sim(kCoarse, kParams, kHx, quiet());
    TruthState s = sim.init();
    for (int i = 0; i <= 40; ++i) {
        s.warm[i] += 4.0;
        s.cold[i] -= 3.0;
    }
    const double ew0 = sim.stored_energy(s.warm);
    const double ec0 = sim.stored_energy(s.cold);
    const double schedule[] = {0.0277, 0.0, -0.02, 0.01, 0.0, -0.0277};
    for (int k = 0; k < 36; ++k) {
        sim.step(s, schedule[k % 6]);
    }
    const double dw = sim.stored_energy(s.warm) - ew0;
    const double dc = sim.stored_energy(s.cold) - ec0;
    EXPECT_NEAR(dw, s.boundary_energy_warm, 5e-3 * std::abs(dw));
    EXPECT_NEAR(dc, s.boundary_energy_cold, 5e-3 * std::abs(dc));
    EXPECT_GT(std::abs(dw), 1e9);
}

TEST(TruthStep, SubstepCapRaisesConfigError)
{
    TruthConfig c = quiet();
    c.max_substeps = 1;
    TruthSimulator sim(kCoarse, kParams, kHx, c);
    TruthState s = sim.init();
    EXPECT_THROW(sim.step(s, 0.0277), ConfigError);
    EXPECT_THROW(sim.step(s, std::nan("")), ParameterError);
}

TEST(TruthStep, AmbientDisturbanceWithinHalfRange)
{
    TruthConfig c;
    c.seed = 6;
    TruthSimulator sim(kCoarse, kParams, kHx, c);
    TruthState s = sim.init();
    double lo = 1e9;
    double hi = -1e9;
    for (int k = 0; k < 200; ++k) {
        sim.step(s, 0.0);
        lo = std::min(lo, s.T_amb);
        hi = std::max(hi, s.T_amb);
    }
    EXPECT_GE(lo, kParams.T_amb - 0.1);
    EXPECT_LE(hi, kParams.T_amb + 0.1);
    EXPECT_GT(hi - lo, 0.15);
}

TEST(TruthMeasure, OrderNoiseAndStatistics)
{
    TruthConfig c;
    c.seed = 7;
    TruthSimulator sim(kCoarse, kParams, kHx, c);
    TruthState s = sim.init();
    s.warm[0] = 290.0;
    s.warm[sim.far_sensor_cell()] = 286.0;
    s.cold[0] = 280.0;
    s.cold[sim.far_sensor_cell()] = 284.0;
    const Eigen::Vector4d exact = sim.measure(s, false);
    EXPECT_EQ(exact, Eigen::Vector4d(290.0, 286.0, 280.0, 284.0));

    const int reps = 10000;
    Eigen::Vector4d sum = Eigen::Vector4d::Zero();
    Eigen::Vector4d sq = Eigen::Vector4d::Zero();
    for (int r = 0; r < reps; ++r) {
        const Eigen::Vector4d e = sim.measure(s) - exact;
        sum += e;
        sq += e.cwiseProduct(e);
    }
    for (int i = 0; i < 4; ++i) {
        const double mean = sum[i] / reps;
        const double sd = std::sqrt(sq[i] / reps - mean * mean);
        EXPECT_NEAR(sd, 0.01, 0.05 * 0.01) << i;
        EXPECT_NEAR(mean, 0.0, 5e-4) << i;
    }
}

TEST(TruthMeasure, FarSensorNearLastCoarseMidpoint)
{
    TruthSimulator sim(kCoarse, kParams, kHx, TruthConfig{});
    const double r = sim.fine_grid().midpoints[sim.far_sensor_cell() - 1];
    EXPECT_LE(std::abs(r - kCoarse.midpoints.back()), 0.5 * sim.fine_grid().dr() + 1e-12);
}

TEST(TruthRestriction, CoarseStateIsVolumeAverage)
{
    TruthSimulator sim(kCoarse, kParams, kHx, quiet());
    TruthState s = sim.init();
    Eigen::VectorXd x(42);
    for (int i = 0; i < 42; ++i) {
        x[i] = 280.0 + 0.25 * i;
    }
    sim.set_from_coarse(s, x);
    EXPECT_LE((sim.coarse_state(s) - x).lpNorm<Eigen::Infinity>(), 1e-9);
    EXPECT_THROW(sim.set_from_coarse(s, Eigen::VectorXd::Zero(40)), DimensionError);
}

TEST(TruthVsModel, DivergeUnderIdenticalInputs)
{
    TruthConfig c;
    c.seed = 8;
    TruthSimulator sim(kCoarse, kParams, kHx, c);
    TruthState s = sim.init();
    Eigen::VectorXd x = Eigen::VectorXd::Constant(42, kParams.T_amb);
    for (int i = 0; i <= 5; ++i) {
        x[i] += 5.0;
        x[21 + i] -= 5.0;
    }
    sim.set_from_coarse(s, x);
    const PwaModelBuilder b{kCoarse, kParams, kHx, {}};
    double u_prev = 0.0;
    for (int k = 0; k < 24; ++k) {
        const double u = (k % 8 < 4) ? 0.02 : -0.015;
        x = pwa_step(b.build(x, u_prev), x, u);
        sim.step(s, u);
        u_prev = u;
    }
    const Eigen::VectorXd xt = sim.coarse_state(s);
    const double gap = std::max(std::abs(xt[1] - x[1]), std::abs(xt[22] - x[22]));
    EXPECT_GT(gap, 0.0);
    RecordProperty("borehole_cell_gap_K", std::to_string(gap));
}
