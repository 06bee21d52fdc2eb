#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ates/mpc_controller.hpp"
#include "ates/power_energy.hpp"
#include "ates/pwa_model.hpp"
#include "ates/scenario_io.hpp"
#include "ates/truth_simulator.hpp"
#include "ates/ukf.hpp"

namespace ates {

struct RunReport {
    int steps = 0;
    double final_B_past = 0.0;      ///< [J]
    double delivered_abs = 0.0;     ///< sum |P| dt [J]
    double demanded_abs = 0.0;      ///< sum |D| dt [J]
    double coverage = 0.0;          ///< delivered over demanded energy
    Eigen::VectorXd est_mean_abs_err; ///< per coarse entry [K]
    Eigen::VectorXd est_max_abs_err;  ///< per coarse entry [K]
    std::vector<double> daily_mean_abs_err; ///< mean over entries and hours of each day [K]
    double power_err_mean = 0.0;    ///< mean |P_linear - P_bilinear| [W]
    double power_err_std = 0.0;     ///< [W]
    double solve_median_s = 0.0;
    double solve_max_s = 0.0;
    int solve_over_budget = 0;
    int faults = 0;
    int projection_clips = 0;
    double max_slack = 0.0;         ///< largest predicted bound violation chosen by the OCP [K]
    double max_est_violation = 0.0; ///< largest estimate excursion outside the state bounds [K]
    double max_abs_u = 0.0;
    long audit_violations = 0;

    [[nodiscard]] double balance_fraction() const
    {
        return delivered_abs > 0.0 ? std::abs(final_B_past) / delivered_abs : 0.0;
    }
};

struct RunOutput {
    RunReport report;
    std::vector<StepRecord> records;
    std::vector<Eigen::VectorXd> estimates;    ///< x(k|k) after projection
    std::vector<Eigen::VectorXd> truth_coarse; ///< truth restricted to the coarse grid
};

struct RunOptions {
    int steps = -1;                ///< overrides the scenario duration when >= 0
    double solve_budget_s = 1.0;   ///< soft limit, exceeded instants are counted
    bool keep_trajectories = true;
    std::function<void(int, const StepRecord&)> on_step;
};

inline Summary summarize(const RunReport& r)
{
    using detail::num;
    Summary s;
    s.emplace_back("steps", std::to_string(r.steps));
    s.emplace_back("final_B_past_J", num(r.final_B_past));
    s.emplace_back("final_B_past_MWh", num(r.final_B_past / 3.6e9));
    s.emplace_back("delivered_abs_MWh", num(r.delivered_abs / 3.6e9));
    s.emplace_back("demanded_abs_MWh", num(r.demanded_abs / 3.6e9));
    s.emplace_back("balance_fraction", num(r.balance_fraction()));
    s.emplace_back("coverage", num(r.coverage));
    if (r.est_mean_abs_err.size() > 0) {
        s.emplace_back("ukf_mean_abs_err_max_over_cells_K", num(r.est_mean_abs_err.maxCoeff()));
        s.emplace_back("ukf_max_abs_err_K", num(r.est_max_abs_err.maxCoeff()));
    }
    s.emplace_back("power_err_mean_W", num(r.power_err_mean));
    s.emplace_back("power_err_std_W", num(r.power_err_std));
    s.emplace_back("solve_median_s", num(r.solve_median_s));
    s.emplace_back("solve_max_s", num(r.solve_max_s));
    s.emplace_back("solve_over_budget", std::to_string(r.solve_over_budget));
    s.emplace_back("faults", std::to_string(r.faults));
    s.emplace_back("projection_clips", std::to_string(r.projection_clips));
    s.emplace_back("max_slack_K", num(r.max_slack));
    s.emplace_back("max_estimate_violation_K", num(r.max_est_violation));
    s.emplace_back("max_abs_u_m3_per_s", num(r.max_abs_u));
    s.emplace_back("audit_violations", std::to_string(r.audit_violations));
    return s;
}

/// Per hour: measure the plant, filter, rebuild the PWA model at the
/// estimate, solve the OCP, apply the first block, book the energy.
inline RunOutput run_closed_loop(const Scenario& sc, const RunOptions& opt = {})
{
    sc.validate();
    const int steps = opt.steps >= 0 ? opt.steps : sc.duration;
    if (static_cast<std::size_t>(steps) > sc.demand.size()) {
        throw ConfigError("requested steps exceed the demand series");
    }
    const int nu = sc.grid.nu;
    const int n = 2 * (nu + 1);
    const double dt = sc.ocp.dt;

    TruthSimulator plant(sc.grid, sc.aquifer, sc.hx, sc.truth);
    TruthState truth = plant.init();

    const PwaModelBuilder builder{sc.grid, sc.aquifer, sc.hx, sc.disc};
    const LinearPowerForm power = make_linear_power_form(sc.grid, sc.aquifer, dt);
    const auto [lo, hi] = sc.ocp.state_bounds(nu);

    Ukf ukf({Eigen::VectorXd::Constant(n, sc.aquifer.T_amb), Eigen::MatrixXd::Identity(n, n)}, sc.ukf);

    RunOutput out;
    RunReport& rep = out.report;
    rep.steps = steps;
    rep.est_mean_abs_err = Eigen::VectorXd::Zero(n);
    rep.est_max_abs_err = Eigen::VectorXd::Zero(n);
    EnergyLedger ledger{dt, 0.0, {}};
    std::vector<double> solve_times;
    solve_times.reserve(static_cast<std::size_t>(steps));
    double perr_sum = 0.0;
    double perr_sq = 0.0;
    double day_acc = 0.0;
    int day_count = 0;

    double u_prev = 0.0;
    PwaModel model_prev;
    for (int k = 0; k < steps; ++k) {
        const double t = k * dt;
        StepRecord rec;
        rec.t = t;
        rec.y = plant.measure(truth);

        if (k == 0) {
            ukf.correct(rec.y);
        } else {
            ukf.step(rec.y, u_prev, model_prev);
        }
        const ProjectionResult pr = ukf.constrain(lo, hi);
        rep.projection_clips += pr.clipped ? 1 : 0;
        const Eigen::VectorXd x_est = ukf.estimate().mean;

        const Eigen::VectorXd x_true = plant.coarse_state(truth);
        const Eigen::VectorXd err = (x_est - x_true).cwiseAbs();
        rep.est_mean_abs_err += err;
        rep.est_max_abs_err = rep.est_max_abs_err.cwiseMax(err);
        day_acc += err.mean();
        if (++day_count == 24) {
            rep.daily_mean_abs_err.push_back(day_acc / 24.0);
            day_acc = 0.0;
            day_count = 0;
        }
        rep.max_est_violation = std::max({rep.max_est_violation, (x_est - hi).maxCoeff(), (lo - x_est).maxCoeff()});

        const PwaModel model = builder.build(x_est, u_prev, t);
        const std::vector<double> window = sc.demand.window(static_cast<std::size_t>(k), sc.ocp.N);

        double u = 0.0;
        try {
            const OcpSolution sol = solve_ocp(model, x_est, window, ledger.B_past, sc.ocp, power);
            u = std::clamp(receding_step(sol), sc.ocp.u_min, sc.ocp.u_max);
            rec.P_linear = sol.P_pred[0];
            rec.slack = sol.slack_used;
            rec.ocp_cost = sol.total_cost;
            rec.solve_ms = 1e3 * sol.solve_seconds;
            solve_times.push_back(sol.solve_seconds);
            if (sol.solve_seconds > opt.solve_budget_s) {
                ++rep.solve_over_budget;
                std::cerr << "warning: OCP solve at step " << k << " took " << sol.solve_seconds << " s\n";
            }
        } catch (const Error& e) {
            // storing fallback keeps the plant safe; the run continues
            std::cerr << "controller fault at step " << k << ": " << e.what() << '\n';
            ++rep.faults;
            rec.fault = 1;
            u = 0.0;
        }

        rec.u = u;
        rec.mode = u > 0.0 ? 1 : (u < 0.0 ? -1 : 0);
        rec.D = sc.demand.watts[static_cast<std::size_t>(k)];
        rec.P_bilinear = power_bilinear(x_est, u, sc.aquifer.c_w);
        rec.warm_r0_est = x_est[0];
        rec.cold_r0_est = x_est[nu + 1];
        rec.warm_r0_truth = truth.warm[0];
        rec.cold_r0_truth = truth.cold[0];

        plant.step(truth, u, dt);
        rec.P_truth = truth.last_mean_power;

        ledger = update_balance(std::move(ledger), rec.P_bilinear, rec.D, u, t, rec.P_linear);
        rec.B_past = ledger.B_past;

        if (rec.fault == 0) {
            const double pe = rec.P_linear - rec.P_bilinear;
            perr_sum += std::abs(pe);
            perr_sq += pe * pe;
        }
        rep.delivered_abs += std::abs(rec.P_bilinear) * dt;
        rep.demanded_abs += std::abs(rec.D) * dt;
        rep.max_slack = std::max(rep.max_slack, rec.slack);
        rep.max_abs_u = std::max(rep.max_abs_u, std::abs(u));

        if (opt.keep_trajectories) {
            out.estimates.push_back(x_est);
            out.truth_coarse.push_back(x_true);
        }
        if (opt.on_step) {
            opt.on_step(k, rec);
        }
        out.records.push_back(rec);
        u_prev = u;
        model_prev = model;
    }

    rep.final_B_past = ledger.B_past;
    rep.coverage = rep.demanded_abs > 0.0 ? rep.delivered_abs / rep.demanded_abs : 0.0;
    rep.audit_violations = truth.audit.violations;
    if (steps > 0) {
        rep.est_mean_abs_err /= steps;
        const int ok = steps - rep.faults;
        if (ok > 0) {
            rep.power_err_mean = perr_sum / ok;
            rep.power_err_std = std::sqrt(std::max(0.0, perr_sq / ok - rep.power_err_mean * rep.power_err_mean));
        }
    }
    if (!solve_times.empty()) {
        std::vector<double> s = solve_times;
        std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(s.size() / 2), s.end());
        rep.solve_median_s = s[s.size() / 2];
        rep.solve_max_s = *std::max_element(solve_times.begin(), solve_times.end());
    }
    return out;
}

/// Re-runs the filter on recorded measurements and inputs. Produces the same
/// estimates as the closed loop that logged them.
inline std::vector<Eigen::VectorXd> replay_observer(const Scenario& sc, const std::vector<StepRecord>& records)
{
    const int nu = sc.grid.nu;
    const int n = 2 * (nu + 1);
    const PwaModelBuilder builder{sc.grid, sc.aquifer, sc.hx, sc.disc};
    const auto [lo, hi] = sc.ocp.state_bounds(nu);
    Ukf ukf({Eigen::VectorXd::Constant(n, sc.aquifer.T_amb), Eigen::MatrixXd::Identity(n, n)}, sc.ukf);

    std::vector<Eigen::VectorXd> est;
    est.reserve(records.size());
    double u_prev = 0.0;
    PwaModel model_prev;
    for (std::size_t k = 0; k < records.size(); ++k) {
        if (k == 0) {
            ukf.correct(records[k].y);
        } else {
            ukf.step(records[k].y, u_prev, model_prev);
        }
        ukf.constrain(lo, hi);
        const Eigen::VectorXd x = ukf.estimate().mean;
        est.push_back(x);
        model_prev = builder.build(x, u_prev, records[k].t);
        u_prev = records[k].u;
    }
    return est;
}

} // namespace ates
