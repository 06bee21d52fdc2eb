#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "ates/aquifer_dynamics.hpp"
#include "ates/errors.hpp"
#include "ates/grid.hpp"
#include "ates/heat_exchanger.hpp"

namespace ates {

enum class Mode { heating, storing, cooling };

inline const char* to_string(Mode m)
{
    switch (m) {
    case Mode::heating:
        return "heating";
    case Mode::storing:
        return "storing";
    case Mode::cooling:
        return "cooling";
    }
    return "?";
}

inline Mode mode_of(double u)
{
    if (u > 0.0) {
        return Mode::heating;
    }
    if (u < 0.0) {
        return Mode::cooling;
    }
    return Mode::storing;
}

struct AffineBranch {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::VectorXd f;

    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& x, double u) const { return A * x + b * u + f; }
};

/// Three-branch piecewise-affine model over the stacked warm + cold state.
struct PwaModel {
    int nu = 0;
    double built_at = 0.0;
    AffineBranch heating;
    AffineBranch storing;
    AffineBranch cooling;

    [[nodiscard]] int n() const { return 2 * (nu + 1); }

    [[nodiscard]] const AffineBranch& branch(Mode m) const
    {
        switch (m) {
        case Mode::heating:
            return heating;
        case Mode::cooling:
            return cooling;
        case Mode::storing:
            break;
        }
        return storing;
    }
};

inline PwaModel assemble_pwa(const AffineSubsystem& warm_ex, const AffineSubsystem& warm_inj,
                             const AffineSubsystem& cold_ex, const AffineSubsystem& cold_inj,
                             const HxLinearization& hx_heat, const HxLinearization& hx_cool)
{
    const auto m = warm_ex.A.cols();
    const int nu = static_cast<int>(m) - 1;
    if (nu < 1) {
        throw DimensionError("aquifer subsystem must have at least one cell");
    }
    auto check = [&](const AffineSubsystem& s, Regime regime, Eigen::Index rows, const char* name) {
        if (s.regime != regime || s.A.rows() != rows || s.A.cols() != m || s.b.size() != rows ||
            s.f.size() != rows) {
            throw DimensionError(std::string("inconsistent dimensions or regime for ") + name);
        }
        if (s.built_at != warm_ex.built_at) {
            throw DimensionError(std::string("subsystem ") + name + " built at a different prediction instant");
        }
    };
    check(warm_ex, Regime::extraction_or_storage, m, "warm extraction");
    check(cold_ex, Regime::extraction_or_storage, m, "cold extraction");
    check(warm_inj, Regime::injection, m - 1, "warm injection");
    check(cold_inj, Regime::injection, m - 1, "cold injection");
    if (hx_heat.mode != HxMode::heating || hx_cool.mode != HxMode::cooling) {
        throw DimensionError("heat exchanger linearizations passed in the wrong order");
    }

    const int n = 2 * (nu + 1);
    const int w0 = 0;
    const int c0 = nu + 1;

    PwaModel model;
    model.nu = nu;
    model.built_at = warm_ex.built_at;

    auto zero_branch = [&] {
        return AffineBranch{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    };

    // heating: warm extracted, cold borehole written by the exchanger
    model.heating = zero_branch();
    model.heating.A.block(w0, w0, m, m) = warm_ex.A;
    model.heating.b.segment(w0, m) = warm_ex.b;
    model.heating.f.segment(w0, m) = warm_ex.f;
    model.heating.A(c0, w0) = hx_heat.a;
    model.heating.b[c0] = hx_heat.b;
    model.heating.f[c0] = hx_heat.f;
    model.heating.A.block(c0 + 1, c0, m - 1, m) = cold_inj.A;
    model.heating.b.segment(c0 + 1, m - 1) = cold_inj.b;
    model.heating.f.segment(c0 + 1, m - 1) = cold_inj.f;

    model.storing = zero_branch();
    model.storing.A.block(w0, w0, m, m) = warm_ex.A;
    model.storing.A.block(c0, c0, m, m) = cold_ex.A;
    model.storing.f.segment(w0, m) = warm_ex.f;
    model.storing.f.segment(c0, m) = cold_ex.f;

    // cooling: cold extracted, warm borehole written by the exchanger
    model.cooling = zero_branch();
    model.cooling.A(w0, c0) = hx_cool.a;
    model.cooling.b[w0] = hx_cool.b;
    model.cooling.f[w0] = hx_cool.f;
    model.cooling.A.block(w0 + 1, w0, m - 1, m) = warm_inj.A;
    model.cooling.b.segment(w0 + 1, m - 1) = warm_inj.b;
    model.cooling.f.segment(w0 + 1, m - 1) = warm_inj.f;
    model.cooling.A.block(c0, c0, m, m) = cold_ex.A;
    model.cooling.b.segment(c0, m) = cold_ex.b;
    model.cooling.f.segment(c0, m) = cold_ex.f;

    return model;
}

inline Eigen::VectorXd pwa_step(const PwaModel& model, const Eigen::VectorXd& x, double u)
{
    if (x.size() != model.n()) {
        throw DimensionError("state dimension does not match the PWA model");
    }
    if (!std::isfinite(u) || !x.allFinite()) {
        throw NumericError("non-finite input to pwa_step");
    }
    return model.branch(mode_of(u)).apply(x, u);
}

inline StackedState pwa_step(const PwaModel& model, const StackedState& x, double u)
{
    return {x.nu(), pwa_step(model, x.values(), u)};
}

/// Builds the PWA model at the prediction instant from a state estimate.
/// The exchanger is expanded at the estimated extraction-side borehole
/// temperature and at the previous input projected onto each mode's sign.
struct PwaModelBuilder {
    RadialGrid grid;
    AquiferParams params;
    HxParams hx;
    DiscretizationOptions opts;

    [[nodiscard]] PwaModel build(const Eigen::VectorXd& x_est, double u_prev, double t0 = 0.0) const
    {
        const int nu = grid.nu;
        if (x_est.size() != 2 * (nu + 1)) {
            throw DimensionError("estimate dimension does not match the grid");
        }
        const Eigen::VectorXd warm = x_est.head(nu + 1);
        const Eigen::VectorXd cold = x_est.tail(nu + 1);

        const double u_heat = std::max(u_prev, 0.0);
        const double u_cool = std::min(u_prev, 0.0);
        const HxLinearization hx_heat = linearize_hx(warm[0], u_heat, hx, HxMode::heating);
        const HxLinearization hx_cool = linearize_hx(cold[0], u_cool, hx, HxMode::cooling);

        Eigen::VectorXd cold_ref = cold;
        cold_ref[0] = hx_outlet_temp(warm[0], u_heat, hx.q_b, hx.T_b_heating);
        Eigen::VectorXd warm_ref = warm;
        warm_ref[0] = hx_outlet_temp(cold[0], u_cool, hx.q_b, hx.T_b_cooling);

        // q = -u for the warm aquifer, q = u for the cold one
        const auto warm_ex = build_extraction_system(grid, params, warm, -1, opts, t0);
        const auto warm_inj = build_injection_system(grid, params, warm_ref, -1, opts, t0);
        const auto cold_ex = build_extraction_system(grid, params, cold, +1, opts, t0);
        const auto cold_inj = build_injection_system(grid, params, cold_ref, +1, opts, t0);
        return assemble_pwa(warm_ex, warm_inj, cold_ex, cold_inj, hx_heat, hx_cool);
    }
};

} // namespace ates
