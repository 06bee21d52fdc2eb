#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "ates/closed_loop.hpp"

using namespace ates;
namespace fs = std::filesystem;

namespace {

Scenario short_scenario(const std::string& extra = "")
{
    std::istringstream in("demand_hours = 400\nduration_steps = 48\n" + extra);
    return parse_scenario(in, "short.cfg");
}

struct Cli {
    int code = -1;
    std::string out;
};

Cli run_cli(const std::string& args)
{
    const std::string cmd = std::string(ATES_CLI_PATH) + " " + args + " 2>&1";
    Cli r;
    FILE* p = popen(cmd.c_str(), "r");
    if (p == nullptr) {
        return r;
    }
    std::array<char, 4096> buf{};
    while (fgets(buf.data(), static_cast<int>(buf.size()), p) != nullptr) {
        r.out += buf.data();
    }
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path scratch_dir()
{
    const fs::path d = fs::temp_directory_path() / "ates_closed_loop_test";
    fs::create_directories(d);
    return d;
}

} // namespace

TEST(ClosedLoop, ZeroDemandDayStaysIdle)
{
    Scenario sc = short_scenario();
    std::fill(sc.demand.watts.begin(), sc.demand.watts.end(), 0.0);
    RunOptions opt;
    opt.steps = 24;
    const RunOutput out = run_closed_loop(sc, opt);
    ASSERT_EQ(out.records.size(), 24u);
    for (const auto& r : out.records) {
        EXPECT_LE(std::abs(r.u), 1e-9) << r.t;
    }
    EXPECT_LE(std::abs(out.report.final_B_past), 3.6e6); // 1 kWh
    EXPECT_EQ(out.report.faults, 0);
}

TEST(ClosedLoop, OneInputPerHourAndLedgerConsistency)
{
    const Scenario sc = short_scenario();
    const RunOutput out = run_closed_loop(sc);
    ASSERT_EQ(out.records.size(), 48u);
    ASSERT_EQ(out.estimates.size(), 48u);
    ASSERT_EQ(out.truth_coarse.size(), 48u);
    double B = 0.0;
    for (std::size_t k = 0; k < out.records.size(); ++k) {
        const auto& r = out.records[k];
        EXPECT_DOUBLE_EQ(r.t, 3600.0 * k);
        EXPECT_LE(std::abs(r.u), sc.ocp.u_max);
        EXPECT_EQ(r.mode, r.u > 0 ? 1 : (r.u < 0 ? -1 : 0));
        B += r.P_bilinear * 3600.0;
        EXPECT_NEAR(r.B_past, B, 1e-9 * std::max(1.0, std::abs(B)));
        EXPECT_EQ(r.D, sc.demand.watts[k]);
    }
    const RunReport& rep = out.report;
    EXPECT_EQ(rep.steps, 48);
    EXPECT_EQ(rep.faults, 0);
    EXPECT_EQ(rep.audit_violations, 0);
    EXPECT_GE(rep.coverage, 0.0);
    EXPECT_LE(rep.coverage, 1.5);
    EXPECT_TRUE(rep.est_mean_abs_err.allFinite());
    EXPECT_EQ(rep.daily_mean_abs_err.size(), 2u);
    EXPECT_GT(rep.max_abs_u, 0.0);
    for (const auto& [k, v] : summarize(rep)) {
        EXPECT_FALSE(v.empty()) << k;
    }
}

TEST(ClosedLoop, DeterministicForFixedSeed)
{
    const Scenario sc = short_scenario();
    RunOptions opt;
    opt.steps = 24;
    const RunOutput a = run_closed_loop(sc, opt);
    const RunOutput b = run_closed_loop(sc, opt);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t k = 0; k < a.records.size(); ++k) {
        EXPECT_EQ(a.records[k].u, b.records[k].u);
        EXPECT_EQ(a.records[k].B_past, b.records[k].B_past);
        EXPECT_EQ(a.records[k].y, b.records[k].y);
        EXPECT_EQ(a.estimates[k], b.estimates[k]);
    }
    Scenario other = short_scenario("seed = 2\n");
    const RunOutput c = run_closed_loop(other, opt);
    EXPECT_NE(a.records.back().y, c.records.back().y);
}

TEST(ClosedLoop, ObserverReplayIsBitExact)
{
    const Scenario sc = short_scenario();
    const RunOutput out = run_closed_loop(sc);
    const auto direct = replay_observer(sc, out.records);
    ASSERT_EQ(direct.size(), out.estimates.size());
    for (std::size_t k = 0; k < direct.size(); ++k) {
        EXPECT_EQ(direct[k], out.estimates[k]) << k;
    }
    // and through the results file
    const fs::path f = scratch_dir() / "replay.csv";
    write_results(f.string(), out.records, summarize(out.report));
    const auto from_file = replay_observer(sc, read_results(f.string()).records);
    for (std::size_t k = 0; k < from_file.size(); ++k) {
        EXPECT_EQ(from_file[k], out.estimates[k]) << k;
    }
}

TEST(ClosedLoop, RejectsRunsLongerThanDemand)
{
    const Scenario sc = short_scenario();
    RunOptions opt;
    opt.steps = 401;
    EXPECT_THROW(run_closed_loop(sc, opt), ConfigError);
}

TEST(Cli, UsageErrorsExitOne)
{
    EXPECT_EQ(run_cli("").code, 1);
    EXPECT_EQ(run_cli("launch-rockets").code, 1);
    EXPECT_EQ(run_cli("observe").code, 1);
    EXPECT_EQ(run_cli("run --steps notanumber").code, 1);
    EXPECT_EQ(run_cli("--help").code, 0);
}

TEST(Cli, RuntimeErrorsExitTwo)
{
    EXPECT_EQ(run_cli("run --scenario /nonexistent/s.cfg").code, 2);
    const fs::path bad = scratch_dir() / "bad.cfg";
    std::ofstream(bad) << "warp_factor = 9\n";
    const Cli r = run_cli("run --scenario " + bad.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("warp_factor"), std::string::npos);
}

TEST(Cli, RunThenObserveReproducesEstimates)
{
    const fs::path d = scratch_dir();
    const fs::path cfg = d / "s.cfg";
    std::ofstream(cfg) << "demand_hours = 200\nduration_steps = 12\n";
    const std::string res = (d / "run.csv").string();
    const Cli r = run_cli("run --scenario " + cfg.string() + " --out " + res);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("balance_fraction"), std::string::npos);
    ASSERT_TRUE(fs::exists(res));
    ASSERT_TRUE(fs::exists(res + ".estimates.csv"));
    ASSERT_TRUE(fs::exists(res + ".truth.csv"));
    EXPECT_EQ(read_results(res).records.size(), 12u);

    const std::string rep = (d / "replay.csv").string();
    const Cli o = run_cli("observe --scenario " + cfg.string() + " --results " + res + " --out " + rep);
    ASSERT_EQ(o.code, 0) << o.out;
    const auto logged = read_matrix_csv(res + ".estimates.csv");
    const auto replayed = read_matrix_csv(rep);
    ASSERT_EQ(logged.size(), replayed.size());
    for (std::size_t k = 0; k < logged.size(); ++k) {
        EXPECT_EQ(logged[k], replayed[k]) << k;
    }
}

TEST(Cli, SolveOnceListsAllCandidates)
{
    const Cli r = run_cli("solve-once --b-past-mwh 100");
    ASSERT_EQ(r.code, 0) << r.out;
    int lines = 0;
    std::istringstream in(r.out);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find("optimal") != std::string::npos || line.find("infeasible") != std::string::npos) {
            ++lines;
        }
    }
    EXPECT_EQ(lines, 27);
    EXPECT_NE(r.out.find("applied u"), std::string::npos);
}

TEST(Cli, SimGenDemandAndValidatePower)
{
    const fs::path d = scratch_dir();
    const Cli s = run_cli("sim --u 0.02 --steps 6 --out " + (d / "sim.csv").string());
    EXPECT_EQ(s.code, 0) << s.out;
    const Cli g = run_cli("gen-demand --hours 48 --seed 3 --out " + (d / "dem.csv").string());
    EXPECT_EQ(g.code, 0) << g.out;
    EXPECT_EQ(load_demand_csv((d / "dem.csv").string()).size(), 48u);
    EXPECT_EQ(run_cli("gen-demand --hours 48").code, 2);
    const Cli v = run_cli("validate-power --steps 48");
    EXPECT_EQ(v.code, 0) << v.out;
    EXPECT_NE(v.out.find("mean/peak"), std::string::npos);
}
