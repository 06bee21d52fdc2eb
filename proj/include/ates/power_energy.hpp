#pragma once

#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ates/errors.hpp"
#include "ates/grid.hpp"

namespace ates {

/// Power delivered to the building from the flow and the borehole
/// temperature lift, c_w u (T_w(r0) - T_c(r0)).
inline double power_bilinear(const Eigen::VectorXd& x, double u, double c_w)
{
    const auto nu = x.size() / 2 - 1;
    return c_w * u * (x[0] - x[nu + 1]);
}

inline double power_bilinear(const StackedState& x, double u, double c_w)
{
    return power_bilinear(x.values(), u, c_w);
}

/// Delivered power written through the energy balance of both aquifers:
///   P = w_next . x(k+1) + w_now . x(k) + offset.
/// The first term of P is the conductive loss through the far-field shells,
/// the rest is the negative rate of change of stored energy.
struct LinearPowerForm {
    Eigen::VectorXd w_now;
    Eigen::VectorXd w_next;
    double offset = 0.0;

    [[nodiscard]] double evaluate(const Eigen::VectorXd& x_now, const Eigen::VectorXd& x_next) const
    {
        return w_now.dot(x_now) + w_next.dot(x_next) + offset;
    }
};

inline LinearPowerForm make_linear_power_form(const RadialGrid& grid, const AquiferParams& params, double dt)
{
    const int nu = grid.nu;
    const int n = 2 * (nu + 1);
    LinearPowerForm form;
    form.w_now = Eigen::VectorXd::Zero(n);
    form.w_next = Eigen::VectorXd::Zero(n);

    // Borehole entries carry no aquifer volume.
    for (int i = 1; i <= nu; ++i) {
        const double c = params.c_a * grid.volumes[i - 1] / dt;
        for (int off : {0, nu + 1}) {
            form.w_next[off + i] -= c;
            form.w_now[off + i] += c;
        }
    }
    const double r_last = grid.midpoints[nu - 1];
    const double g = params.lambda * 2.0 * std::numbers::pi * grid.r_inf * grid.l / (grid.r_inf - r_last);
    form.w_now[nu] -= g;
    form.w_now[2 * nu + 1] -= g;
    form.offset = 2.0 * g * params.T_amb;
    return form;
}

inline double power_linear(const Eigen::VectorXd& x_now, const Eigen::VectorXd& x_next, const RadialGrid& grid,
                           const AquiferParams& params, double dt)
{
    const auto n = 2 * (grid.nu + 1);
    if (x_now.size() != n || x_next.size() != n) {
        throw DimensionError("states do not match the grid in power_linear");
    }
    return make_linear_power_form(grid, params, dt).evaluate(x_now, x_next);
}

inline double power_linear(const StackedState& x_now, const StackedState& x_next, const RadialGrid& grid,
                           const AquiferParams& params, double dt)
{
    return power_linear(x_now.values(), x_next.values(), grid, params, dt);
}

inline double delivered_energy(std::span<const double> powers, double dt)
{
    double sum = 0.0;
    for (double p : powers) {
        sum += p;
    }
    return dt * sum;
}

struct LedgerRecord {
    double t = 0.0;
    double u = 0.0;
    double P_bilinear = 0.0;
    double P_linear = 0.0;
    double D = 0.0;
};

/// Running energy balance: cumulative signed delivered energy [J].
struct EnergyLedger {
    double dt = 3600.0;
    double B_past = 0.0;
    std::vector<LedgerRecord> history;
};

inline EnergyLedger update_balance(EnergyLedger ledger, double P, double D, double u, double t,
                                   double P_linear = 0.0)
{
    if (!ledger.history.empty() && !(t > ledger.history.back().t)) {
        throw OrderingError("ledger time must increase strictly");
    }
    ledger.B_past += P * ledger.dt;
    ledger.history.push_back({t, u, P, P_linear, D});
    return ledger;
}

} // namespace ates
