#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ates/closed_loop.hpp"
#include "ates/power_study.hpp"
#include "ates/scenario_io.hpp"

namespace {

struct Common {
    std::string scenario;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int steps = -1;
};

ates::Scenario load(const Common& c)
{
    ates::Scenario sc = c.scenario.empty() ? ates::default_scenario() : ates::load_scenario(c.scenario);
    if (c.seed_set) {
        sc.seed = c.seed;
        sc.truth.seed = c.seed;
    }
    return sc;
}

void print_summary(const ates::Summary& s)
{
    for (const auto& [k, v] : s) {
        std::cout << k << ": " << v << '\n';
    }
}

int cmd_run(const Common& c, bool greedy)
{
    ates::Scenario sc = load(c);
    if (greedy) {
        sc.ocp.q_e = 0.0;
    }
    ates::RunOptions opt;
    opt.steps = c.steps;
    const int total = c.steps >= 0 ? c.steps : sc.duration;
    opt.on_step = [total](int k, const ates::StepRecord&) {
        if (total >= 1000 && (k + 1) % 1000 == 0) {
            std::cerr << "step " << (k + 1) << " / " << total << '\n';
        }
    };
    const ates::RunOutput out = ates::run_closed_loop(sc, opt);
    const ates::Summary summary = ates::summarize(out.report);
    if (!c.out.empty()) {
        ates::write_results(c.out, out.records, summary);
        std::vector<double> t;
        for (const auto& r : out.records) {
            t.push_back(r.t);
        }
        ates::write_matrix_csv(c.out + ".estimates.csv", "x", t, out.estimates);
        ates::write_matrix_csv(c.out + ".truth.csv", "x", t, out.truth_coarse);
    }
    print_summary(summary);
    return 0;
}

int cmd_sim(const Common& c, const std::string& schedule, double constant_u)
{
    ates::Scenario sc = load(c);
    std::vector<double> us;
    if (!schedule.empty()) {
        std::ifstream in(schedule);
        if (!in) {
            throw ates::IoError("cannot open schedule '" + schedule + "'");
        }
        std::string line;
        while (std::getline(in, line)) {
            const auto cols = ates::detail::split(ates::detail::trim(line), ',');
            if (cols.empty() || cols.back().empty() || cols[0][0] == '#') {
                continue;
            }
            if (const auto v = ates::detail::parse_number(cols.back())) {
                us.push_back(*v);
            }
        }
    }
    const int steps = c.steps >= 0 ? c.steps : (us.empty() ? 24 : static_cast<int>(us.size()));
    ates::TruthSimulator plant(sc.grid, sc.aquifer, sc.hx, sc.truth);
    ates::TruthState s = plant.init();

    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!c.out.empty()) {
        file.open(c.out);
        if (!file) {
            throw ates::IoError("cannot write '" + c.out + "'");
        }
        os = &file;
    }
    *os << "t,u,y_warm_r0,y_warm_far,y_cold_r0,y_cold_far,P_truth,T_amb,substeps\n";
    for (int k = 0; k < steps; ++k) {
        double u = us.empty() ? constant_u : us[static_cast<std::size_t>(k) % us.size()];
        u = std::clamp(u, sc.ocp.u_min, sc.ocp.u_max);
        plant.step(s, u, sc.ocp.dt);
        const Eigen::Vector4d y = plant.measure(s);
        *os << ates::detail::num(s.clock) << ',' << ates::detail::num(u);
        for (int i = 0; i < 4; ++i) {
            *os << ',' << ates::detail::num(y[i]);
        }
        *os << ',' << ates::detail::num(s.last_mean_power) << ',' << ates::detail::num(s.T_amb) << ','
            << s.last_substeps << '\n';
    }
    std::cerr << "max-principle checks " << s.audit.checks << ", violations " << s.audit.violations << '\n';
    return s.audit.violations == 0 ? 0 : 2;
}

int cmd_observe(const Common& c, const std::string& results)
{
    const ates::Scenario sc = load(c);
    const ates::ResultsFile rf = ates::read_results(results);
    const auto est = ates::replay_observer(sc, rf.records);
    std::vector<double> t;
    for (const auto& r : rf.records) {
        t.push_back(r.t);
    }
    const std::string out = c.out.empty() ? results + ".replay.csv" : c.out;
    ates::write_matrix_csv(out, "x", t, est);
    std::cout << "replayed " << est.size() << " steps into " << out << '\n';
    return 0;
}

int cmd_gen_demand(const Common& c, double heat_mwh, double cold_mwh, int hours)
{
    const std::uint64_t seed = c.seed_set ? c.seed : 1;
    const ates::DemandSeries d = ates::gen_synthetic_demand(seed, hours, heat_mwh * 3.6e9, cold_mwh * 3.6e9);
    if (c.out.empty()) {
        throw ates::ConfigError("gen-demand needs --out");
    }
    ates::write_demand_csv(c.out, d);
    std::cout << "wrote " << d.size() << " hourly samples to " << c.out << '\n';
    return 0;
}

int cmd_validate_power(const Common& c)
{
    const ates::Scenario sc = load(c);
    const int steps = c.steps >= 0 ? c.steps : 720;
    std::printf("%6s %14s %14s %14s %10s\n", "cells", "mean|err| W", "std err W", "peak |P| W", "mean/peak");
    for (int nu : {sc.grid.nu, 2 * sc.grid.nu}) {
        const ates::PowerStudy st = ates::run_power_study(sc, steps, nu);
        std::printf("%6d %14.1f %14.1f %14.1f %10.5f\n", nu, st.mean_abs_err, st.std_err, st.peak_abs_power,
                    st.peak_abs_power > 0.0 ? st.mean_abs_err / st.peak_abs_power : 0.0);
        if (nu == sc.grid.nu && !c.out.empty()) {
            std::ofstream f(c.out);
            f << "k,u,P_bilinear,P_linear\n";
            for (const auto& r : st.rows) {
                f << r.k << ',' << ates::detail::num(r.u) << ',' << ates::detail::num(r.P_bilinear) << ','
                  << ates::detail::num(r.P_linear) << '\n';
            }
        }
    }
    return 0;
}

int cmd_solve_once(const Common& c, double b_past_mwh, int at)
{
    const ates::Scenario sc = load(c);
    const int nu = sc.grid.nu;
    const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(2 * (nu + 1), sc.aquifer.T_amb);
    const ates::PwaModelBuilder builder{sc.grid, sc.aquifer, sc.hx, sc.disc};
    const ates::PwaModel model = builder.build(x0, 0.0);
    const auto power = ates::make_linear_power_form(sc.grid, sc.aquifer, sc.ocp.dt);
    const auto window = sc.demand.window(static_cast<std::size_t>(std::max(0, at)), sc.ocp.N);
    const ates::OcpSolution sol = ates::solve_ocp(model, x0, window, b_past_mwh * 3.6e9, sc.ocp, power);

    std::vector<const ates::CandidateRecord*> order;
    for (const auto& r : sol.per_candidate) {
        order.push_back(&r);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->cost < b->cost; });
    std::printf("%-28s %-10s %12s %12s %12s %14s\n", "modes", "status", "u1", "u2", "u3", "cost");
    for (const auto* r : order) {
        std::string label;
        for (auto m : r->modes) {
            label += std::string(label.empty() ? "" : "/") + ates::to_string(m);
        }
        if (r->status == ates::QpStatus::optimal) {
            std::printf("%-28s %-10s %12.6f %12.6f %12.6f %14.8g\n", label.c_str(), "optimal", r->u_blocks[0],
                        r->u_blocks[1], r->u_blocks[2], r->cost);
        } else {
            std::printf("%-28s %-10s %12s %12s %12s %14s\n", label.c_str(), "infeasible", "-", "-", "-", "-");
        }
    }
    std::printf("applied u = %.6f m^3/s, solve %.2f ms\n", ates::receding_step(sol), 1e3 * sol.solve_seconds);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Closed-loop ATES simulation, estimation and model predictive control"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--scenario", c.scenario, "scenario file (key = value)");
        sub->add_option("--out", c.out, "output path");
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t s) { c.seed = s; c.seed_set = true; }, "random seed");
        sub->add_option("--steps", c.steps, "number of hourly steps");
    };

    bool greedy = false;
    auto* run = app.add_subcommand("run", "closed-loop simulation");
    add_common(run);
    run->add_flag("--greedy", greedy, "demand-greedy baseline (no energy-balance term)");

    std::string schedule;
    double constant_u = 0.0;
    auto* sim = app.add_subcommand("sim", "plant-only rollout from an input schedule");
    add_common(sim);
    sim->add_option("--schedule", schedule, "CSV whose last column is the hourly flow [m^3/s]");
    sim->add_option("--u", constant_u, "constant flow when no schedule is given [m^3/s]");

    std::string results;
    auto* obs = app.add_subcommand("observe", "replay the state estimator on a recorded run");
    add_common(obs);
    obs->add_option("--results", results, "results CSV written by 'run'")->required();

    double heat = 3416.67;
    double cold = 2722.22;
    int hours = 8760;
    auto* gen = app.add_subcommand("gen-demand", "write a synthetic hourly demand series");
    add_common(gen);
    gen->add_option("--heat-mwh", heat, "annual heat demand [MWh]");
    gen->add_option("--cold-mwh", cold, "annual cold demand [MWh]");
    gen->add_option("--hours", hours, "series length [h]");

    auto* vp = app.add_subcommand("validate-power", "compare the bilinear and linear power formulas");
    add_common(vp);

    double b_past = 0.0;
    int at = 0;
    auto* so = app.add_subcommand("solve-once", "solve one OCP from the ambient state and list all candidates");
    add_common(so);
    so->add_option("--b-past-mwh", b_past, "energy balance carried in [MWh]");
    so->add_option("--at", at, "demand index of the prediction start");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*run) {
            return cmd_run(c, greedy);
        }
        if (*sim) {
            return cmd_sim(c, schedule, constant_u);
        }
        if (*obs) {
            return cmd_observe(c, results);
        }
        if (*gen) {
            return cmd_gen_demand(c, heat, cold, hours);
        }
        if (*vp) {
            return cmd_validate_power(c);
        }
        if (*so) {
            return cmd_solve_once(c, b_past, at);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
