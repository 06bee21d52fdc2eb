#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "ates/power_energy.hpp"
#include "ates/pwa_model.hpp"
#include "ates/scenario_io.hpp"

namespace ates {

struct PowerStudyRow {
    int k = 0;
    double u = 0.0;
    double P_bilinear = 0.0;
    double P_linear = 0.0;
};

struct PowerStudy {
    int nu = 0;
    std::vector<PowerStudyRow> rows;
    double mean_abs_err = 0.0; ///< [W]
    double std_err = 0.0;      ///< [W]
    double peak_abs_power = 0.0;
};

/// Demand-following flow: the flow that would meet D at a nominal lift.
inline double demand_following_flow(double D, double c_w, double lift_k, double u_min, double u_max)
{
    return std::clamp(D / (c_w * lift_k), u_min, u_max);
}

/// Rolls the prediction model forward (re-linearized every step at the
/// current state) under a demand-following input and compares the bilinear
/// and the linear power formulas along the trajectory.
inline PowerStudy run_power_study(const Scenario& sc, int steps, int nu, double lift_k = 10.0)
{
    const RadialGrid grid = build_grid(sc.grid.r0, sc.grid.r_inf, nu, sc.grid.l);
    const PwaModelBuilder builder{grid, sc.aquifer, sc.hx, sc.disc};
    const LinearPowerForm form = make_linear_power_form(grid, sc.aquifer, sc.disc.dt);

    PowerStudy st;
    st.nu = nu;
    Eigen::VectorXd x = Eigen::VectorXd::Constant(2 * (nu + 1), sc.aquifer.T_amb);
    double u_prev = 0.0;
    double sum = 0.0;
    double sq = 0.0;
    for (int k = 0; k < steps; ++k) {
        const double D = sc.demand.watts[static_cast<std::size_t>(k) % sc.demand.size()];
        const double u = demand_following_flow(D, sc.aquifer.c_w, lift_k, sc.ocp.u_min, sc.ocp.u_max);
        const PwaModel model = builder.build(x, u_prev, k * sc.disc.dt);
        const Eigen::VectorXd x_next = pwa_step(model, x, u);
        PowerStudyRow row{k, u, power_bilinear(x, u, sc.aquifer.c_w), form.evaluate(x, x_next)};
        const double e = row.P_linear - row.P_bilinear;
        sum += std::abs(e);
        sq += e * e;
        st.peak_abs_power = std::max({st.peak_abs_power, std::abs(row.P_bilinear), std::abs(row.P_linear)});
        st.rows.push_back(row);
        x = x_next;
        u_prev = u;
    }
    if (steps > 0) {
        st.mean_abs_err = sum / steps;
        st.std_err = std::sqrt(std::max(0.0, sq / steps - st.mean_abs_err * st.mean_abs_err));
    }
    return st;
}

} // namespace ates
