#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ates/errors.hpp"
#include "ates/grid.hpp"
#include "ates/heat_exchanger.hpp"
#include "ates/mpc_controller.hpp"
#include "ates/truth_simulator.hpp"
#include "ates/ukf.hpp"

namespace ates {

using TimePoint = std::chrono::sys_seconds;

// ---------------------------------------------------------------------------
// timestamps

inline TimePoint parse_iso8601(const std::string& text)
{
    int Y = 0, M = 0, D = 0, h = 0, m = 0, s = 0;
    char sep = 0;
    int consumed = 0;
    const int got = std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &Y, &M, &D, &sep, &h, &m, &s, &consumed);
    if (got != 7 || (sep != 'T' && sep != ' ')) {
        throw IoError("malformed ISO-8601 timestamp '" + text + "'");
    }
    std::string rest = text.substr(static_cast<std::size_t>(consumed));
    if (!(rest.empty() || rest == "Z" || rest == "+00:00")) {
        throw IoError("only UTC timestamps are supported: '" + text + "'");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{Y}, std::chrono::month{static_cast<unsigned>(M)},
                                          std::chrono::day{static_cast<unsigned>(D)}};
    if (!ymd.ok() || h > 23 || m > 59 || s > 59 || h < 0 || m < 0 || s < 0) {
        throw IoError("invalid calendar date in '" + text + "'");
    }
    return std::chrono::sys_days{ymd} + std::chrono::hours{h} + std::chrono::minutes{m} + std::chrono::seconds{s};
}

inline std::string format_iso8601(TimePoint t)
{
    const auto day = std::chrono::floor<std::chrono::days>(t);
    const std::chrono::year_month_day ymd{day};
    const std::chrono::hh_mm_ss hms{t - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return buf;
}

// ---------------------------------------------------------------------------
// demand series

/// Hourly building demand, positive = heat demand [W].
struct DemandSeries {
    TimePoint start{};
    std::vector<double> watts;

    [[nodiscard]] std::size_t size() const { return watts.size(); }
    [[nodiscard]] TimePoint time_at(std::size_t k) const { return start + std::chrono::hours{k}; }

    /// N values from index k on; the series repeats past its end.
    [[nodiscard]] std::vector<double> window(std::size_t k, int N) const
    {
        if (watts.empty()) {
            throw IoError("demand series is empty");
        }
        std::vector<double> out(static_cast<std::size_t>(N));
        for (int j = 0; j < N; ++j) {
            out[j] = watts[(k + j) % watts.size()];
        }
        return out;
    }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_number(const std::string& s)
{
    const std::string t = trim(s);
    if (t.empty()) {
        return std::nullopt;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        return std::nullopt;
    }
    if (used != t.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

inline std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) {
        out.push_back(trim(cur));
    }
    if (!line.empty() && line.back() == sep) {
        out.emplace_back();
    }
    return out;
}

} // namespace detail

/// Two-column table (timestamp, demand). Missing values, including whole
/// missing hours, are linearly interpolated; gaps at either end take the
/// nearest present value. A header row is skipped.
inline DemandSeries load_demand_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open demand file '" + path + "'");
    }
    std::vector<TimePoint> times;
    std::vector<std::optional<double>> values;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        const auto cols = detail::split(t, ',');
        TimePoint tp;
        try {
            tp = parse_iso8601(cols[0]);
        } catch (const IoError&) {
            if (times.empty() && values.empty()) {
                continue; // header
            }
            throw IoError(path + ":" + std::to_string(lineno) + ": bad timestamp '" + cols[0] + "'");
        }
        if (!times.empty() && tp <= times.back()) {
            throw OrderingError(path + ":" + std::to_string(lineno) + ": timestamps must increase strictly");
        }
        if (!times.empty() && (tp - times.back()).count() % 3600 != 0) {
            throw IoError(path + ":" + std::to_string(lineno) + ": timestamps must lie on an hourly grid");
        }
        std::optional<double> v;
        if (cols.size() >= 2) {
            v = detail::parse_number(cols[1]);
        }
        times.push_back(tp);
        values.push_back(v);
    }
    if (times.empty()) {
        throw IoError("demand file '" + path + "' contains no samples");
    }

    DemandSeries out;
    out.start = times.front();
    const auto hours = static_cast<std::size_t>((times.back() - times.front()).count() / 3600) + 1;
    std::vector<std::optional<double>> grid(hours);
    for (std::size_t i = 0; i < times.size(); ++i) {
        grid[static_cast<std::size_t>((times[i] - out.start).count() / 3600)] = values[i];
    }
    std::vector<std::size_t> present;
    for (std::size_t k = 0; k < hours; ++k) {
        if (grid[k]) {
            present.push_back(k);
        }
    }
    if (present.empty()) {
        throw IoError("demand file '" + path + "' has no numeric values");
    }
    out.watts.resize(hours);
    std::size_t p = 0;
    for (std::size_t k = 0; k < hours; ++k) {
        while (p + 1 < present.size() && present[p + 1] <= k) {
            ++p;
        }
        const std::size_t a = present[p];
        if (k <= present.front()) {
            out.watts[k] = *grid[present.front()];
        } else if (k >= present.back()) {
            out.watts[k] = *grid[present.back()];
        } else if (k == a) {
            out.watts[k] = *grid[a];
        } else {
            const std::size_t b = present[p + 1];
            const double w = static_cast<double>(k - a) / static_cast<double>(b - a);
            out.watts[k] = (1.0 - w) * *grid[a] + w * *grid[b];
        }
    }
    return out;
}

inline void write_demand_csv(const std::string& path, const DemandSeries& d)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write demand file '" + path + "'");
    }
    out << "timestamp,demand_w\n";
    char buf[64];
    for (std::size_t k = 0; k < d.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", d.watts[k]);
        out << format_iso8601(d.time_at(k)) << ',' << buf << '\n';
    }
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

/// Rotates the series so that it starts offset_hours later, e.g. to begin a
/// calendar year in October. The start timestamp moves accordingly.
inline DemandSeries rotate_demand(const DemandSeries& d, std::size_t offset_hours)
{
    if (d.watts.empty()) {
        return d;
    }
    DemandSeries out;
    const std::size_t off = offset_hours % d.size();
    out.start = d.time_at(off);
    out.watts.resize(d.size());
    std::rotate_copy(d.watts.begin(), d.watts.begin() + static_cast<std::ptrdiff_t>(off), d.watts.end(),
                     out.watts.begin());
    return out;
}

/// Seasonal demand starting on 1 October: heating peaks in mid-January,
/// cooling in mid-July, with a daily swing and seeded noise. Positive and
/// negative parts are scaled separately to the requested annual energies [J].
inline DemandSeries gen_synthetic_demand(std::uint64_t seed, int hours, double heat_total_j, double cold_total_j)
{
    if (!(heat_total_j >= 0.0 && cold_total_j >= 0.0) || hours < 1) {
        throw ParameterError("synthetic demand needs non-negative totals and a positive length");
    }
    std::seed_seq ss{seed, std::uint64_t{0x7d3a}};
    std::mt19937_64 rng(ss);
    std::normal_distribution<double> noise(0.0, 1.0);

    constexpr double year = 8760.0;
    constexpr double winter_peak = 2520.0; // ~15 January counted from 1 October
    std::vector<double> raw(static_cast<std::size_t>(hours));
    double ar = 0.0;
    for (int k = 0; k < hours; ++k) {
        const double season = std::cos(2.0 * std::numbers::pi * (k - winter_peak) / year);
        const double daily = 0.25 * std::cos(2.0 * std::numbers::pi * ((k % 24) - 7.0) / 24.0);
        ar = 0.8 * ar + 0.1 * noise(rng);
        raw[k] = season + daily * std::abs(season) + ar;
    }
    double pos = 0.0;
    double neg = 0.0;
    for (double v : raw) {
        (v > 0.0 ? pos : neg) += std::abs(v) * 3600.0;
    }
    DemandSeries out;
    out.start = parse_iso8601("2005-10-01T00:00:00Z");
    out.watts.resize(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) {
        const double v = raw[k];
        if (v > 0.0) {
            out.watts[k] = pos > 0.0 ? v * heat_total_j / pos : 0.0;
        } else {
            out.watts[k] = neg > 0.0 ? v * cold_total_j / neg : 0.0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// scenario configuration

struct Scenario {
    RadialGrid grid = build_grid(0.4, 60.0, 20, 38.0);
    AquiferParams aquifer;
    HxParams hx;
    DiscretizationOptions disc;
    OcpConfig ocp;
    UkfConfig ukf = make_ates_ukf_config(20);
    TruthConfig truth;
    DemandSeries demand;
    std::uint64_t seed = 1;
    int duration = 8760; ///< closed-loop steps

    void validate() const
    {
        aquifer.validate();
        hx.validate();
        ocp.validate();
        truth.validate(grid.nu);
        ukf.validate(2 * (grid.nu + 1));
        if (std::abs(ocp.dt - disc.dt) > 0.0) {
            throw ConfigError("controller and model time steps differ");
        }
        if (duration < 0) {
            throw ConfigError("duration_steps must be non-negative");
        }
        if (static_cast<std::size_t>(duration) > demand.size()) {
            throw ConfigError("duration_steps (" + std::to_string(duration) + ") exceeds the demand series length (" +
                              std::to_string(demand.size()) + ")");
        }
    }
};

namespace detail {

/// Flat key = value text with '#' comments.
class KeyValues {
public:
    static KeyValues parse(std::istream& in, const std::string& origin)
    {
        KeyValues kv;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
            if (t.empty()) {
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            }
            const std::string key = trim(t.substr(0, eq));
            if (key.empty()) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            }
            if (kv.values_.count(key) != 0U) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            }
            kv.values_[key] = trim(t.substr(eq + 1));
        }
        return kv;
    }

    void number(const std::string& key, double& target)
    {
        const auto it = take(key);
        if (!it) {
            return;
        }
        const auto v = parse_number(*it);
        if (!v) {
            throw ConfigError("key '" + key + "': expected a number, got '" + *it + "'");
        }
        target = *v;
    }

    void integer(const std::string& key, int& target)
    {
        double v = target;
        number(key, v);
        if (v != std::floor(v) || std::abs(v) > 1e9) {
            throw ConfigError("key '" + key + "': expected an integer");
        }
        target = static_cast<int>(v);
    }

    void unsigned64(const std::string& key, std::uint64_t& target)
    {
        const auto it = take(key);
        if (!it) {
            return;
        }
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(*it, &used);
            if (used != it->size() || (*it)[0] == '-') {
                throw std::invalid_argument("trailing");
            }
            target = v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + *it + "'");
        }
    }

    void boolean(const std::string& key, bool& target)
    {
        const auto it = take(key);
        if (!it) {
            return;
        }
        if (*it == "true" || *it == "1") {
            target = true;
        } else if (*it == "false" || *it == "0") {
            target = false;
        } else {
            throw ConfigError("key '" + key + "': expected true or false, got '" + *it + "'");
        }
    }

    void text(const std::string& key, std::string& target)
    {
        if (const auto it = take(key)) {
            target = *it;
        }
    }

    void int_list(const std::string& key, std::vector<int>& target)
    {
        const auto it = take(key);
        if (!it) {
            return;
        }
        std::vector<int> out;
        for (const auto& part : split(*it, ',')) {
            const auto v = parse_number(part);
            if (!v || *v != std::floor(*v)) {
                throw ConfigError("key '" + key + "': expected a comma-separated list of integers");
            }
            out.push_back(static_cast<int>(*v));
        }
        target = out;
    }

    /// Keys never consumed by the loader.
    [[nodiscard]] std::vector<std::string> unused() const
    {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_) {
            if (used_.count(k) == 0U) {
                out.push_back(k);
            }
        }
        return out;
    }

private:
    std::optional<std::string> take(const std::string& key)
    {
        const auto it = values_.find(key);
        if (it == values_.end()) {
            return std::nullopt;
        }
        used_[key] = true;
        return it->second;
    }

    std::map<std::string, std::string> values_;
    std::map<std::string, bool> used_;
};

} // namespace detail

/// Parses a scenario from key-value text. Omitted keys keep the Brasschaat
/// defaults; relative demand paths resolve against base_dir.
inline Scenario parse_scenario(std::istream& in, const std::string& origin, const std::string& base_dir = ".")
{
    auto kv = detail::KeyValues::parse(in, origin);
    Scenario sc;

    double r0 = 0.4;
    double r_inf = 60.0;
    double l = 38.0;
    int nu = 20;
    kv.number("r0_m", r0);
    kv.number("r_inf_m", r_inf);
    kv.number("filter_length_m", l);
    kv.integer("cells", nu);

    double phi = sc.aquifer.phi;
    double c_w = sc.aquifer.c_w;
    double c_r = sc.aquifer.c_r;
    double lambda = sc.aquifer.lambda;
    double T_amb = sc.aquifer.T_amb;
    kv.number("porosity", phi);
    kv.number("c_water_j_per_m3_k", c_w);
    kv.number("c_rock_j_per_m3_k", c_r);
    kv.number("lambda_w_per_m_k", lambda);
    kv.number("t_amb_k", T_amb);

    kv.number("hx_q_b_m3_per_s", sc.hx.q_b);
    kv.number("hx_t_b_heating_k", sc.hx.T_b_heating);
    kv.number("hx_t_b_cooling_k", sc.hx.T_b_cooling);

    std::string scheme = "limited_linear";
    kv.text("convection_scheme", scheme);
    if (scheme == "upwind") {
        sc.disc.scheme = ConvectionScheme::upwind;
    } else if (scheme == "limited_linear") {
        sc.disc.scheme = ConvectionScheme::limited_linear;
    } else {
        throw ConfigError("key 'convection_scheme': expected upwind or limited_linear, got '" + scheme + "'");
    }

    auto& o = sc.ocp;
    kv.number("dt_s", o.dt);
    kv.integer("horizon_steps", o.N);
    kv.int_list("move_blocks_steps", o.blocks);
    kv.number("u_min_m3_per_s", o.u_min);
    kv.number("u_max_m3_per_s", o.u_max);
    kv.number("u_active_min_m3_per_s", o.u_active_min);
    kv.number("warm_min_k", o.warm_min);
    kv.number("warm_max_k", o.warm_max);
    kv.number("cold_min_k", o.cold_min);
    kv.number("cold_max_k", o.cold_max);
    kv.number("q_u_per_m6_s2", o.q_u);
    kv.number("q_d_per_mw2", o.q_d);
    kv.number("q_e", o.q_e);
    kv.number("slack_weight_per_k2", o.slack_weight);
    kv.number("power_scale_w", o.power_scale_w);
    sc.disc.dt = o.dt;

    kv.number("ukf_kappa", sc.ukf.kappa);
    kv.number("ukf_process_mean_k", sc.ukf.xi_v);
    kv.number("ukf_process_var_k2", sc.ukf.zeta_v);
    kv.number("ukf_sensor_mean_k", sc.ukf.xi_w);
    kv.number("ukf_sensor_var_k2", sc.ukf.zeta_w);

    kv.integer("truth_cells", sc.truth.nu_fine);
    kv.number("truth_lambda_min_w_per_m_k", sc.truth.lambda_lo);
    kv.number("truth_lambda_max_w_per_m_k", sc.truth.lambda_hi);
    kv.boolean("truth_heterogeneous", sc.truth.heterogeneous);
    kv.number("truth_t_amb_noise_k", sc.truth.t_amb_noise_amp);
    kv.number("sensor_sigma_k", sc.truth.sensor_sigma);
    kv.integer("truth_max_substeps", sc.truth.max_substeps);

    kv.unsigned64("seed", sc.seed);
    sc.truth.seed = sc.seed;

    std::string demand_csv;
    double heat_mwh = 3416.67;
    double cold_mwh = 2722.22;
    std::uint64_t demand_seed = sc.seed;
    int demand_hours = 8760;
    int start_offset = 0;
    kv.text("demand_csv", demand_csv);
    kv.number("demand_heat_total_mwh", heat_mwh);
    kv.number("demand_cold_total_mwh", cold_mwh);
    kv.unsigned64("demand_seed", demand_seed);
    kv.integer("demand_hours", demand_hours);
    kv.integer("demand_start_offset_h", start_offset);

    sc.duration = demand_hours;
    kv.integer("duration_steps", sc.duration);

    if (const auto left = kv.unused(); !left.empty()) {
        throw ConfigError("unknown key '" + left.front() + "'");
    }

    sc.grid = build_grid(r0, r_inf, nu, l);
    sc.aquifer = AquiferParams::from_constituents(phi, c_w, c_r, lambda, T_amb);
    const UkfConfig tuned = sc.ukf;
    sc.ukf = make_ates_ukf_config(nu);
    sc.ukf.kappa = tuned.kappa;
    sc.ukf.xi_v = tuned.xi_v;
    sc.ukf.zeta_v = tuned.zeta_v;
    sc.ukf.xi_w = tuned.xi_w;
    sc.ukf.zeta_w = tuned.zeta_w;

    if (start_offset < 0) {
        throw ConfigError("key 'demand_start_offset_h' must be non-negative");
    }
    if (!demand_csv.empty()) {
        std::string path = demand_csv;
        if (path.front() != '/') {
            path = base_dir + "/" + path;
        }
        sc.demand = rotate_demand(load_demand_csv(path), static_cast<std::size_t>(start_offset));
    } else {
        if (demand_hours < 1) {
            throw ConfigError("key 'demand_hours' must be positive");
        }
        sc.demand = rotate_demand(gen_synthetic_demand(demand_seed, demand_hours, heat_mwh * 3.6e9, cold_mwh * 3.6e9),
                                  static_cast<std::size_t>(start_offset));
    }
    sc.validate();
    return sc;
}

inline Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open scenario '" + path + "'");
    }
    const auto slash = path.find_last_of('/');
    const std::string dir = slash == std::string::npos ? "." : path.substr(0, slash);
    return parse_scenario(in, path, dir);
}

inline Scenario default_scenario()
{
    std::istringstream empty;
    return parse_scenario(empty, "<defaults>");
}

// ---------------------------------------------------------------------------
// results log

struct StepRecord {
    double t = 0.0;          ///< [s] since run start
    double u = 0.0;          ///< applied flow [m^3/s]
    int mode = 0;            ///< +1 heating, 0 storing, -1 cooling
    double P_bilinear = 0.0; ///< [W]
    double P_linear = 0.0;   ///< [W]
    double P_truth = 0.0;    ///< [W]
    double D = 0.0;          ///< [W]
    double B_past = 0.0;     ///< [J]
    double warm_r0_truth = 0.0;
    double warm_r0_est = 0.0;
    double cold_r0_truth = 0.0;
    double cold_r0_est = 0.0;
    double slack = 0.0;
    double ocp_cost = 0.0;
    double solve_ms = 0.0;
    int fault = 0;
    Eigen::Vector4d y = Eigen::Vector4d::Zero();
};

using Summary = std::vector<std::pair<std::string, std::string>>;

inline const std::vector<std::string>& results_columns()
{
    static const std::vector<std::string> cols{
        "t",           "u_applied",   "mode",          "P_bilinear",   "P_linear",   "P_truth",
        "D",           "B_past",      "warm_r0_truth", "warm_r0_est",  "cold_r0_truth", "cold_r0_est",
        "slack",       "ocp_cost",    "solve_ms",      "fault",        "y_warm_r0",  "y_warm_far",
        "y_cold_r0",   "y_cold_far"};
    return cols;
}

namespace detail {

inline std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline void write_results(const std::string& path, const std::vector<StepRecord>& records, const Summary& summary)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write results to '" + path + "'");
    }
    const auto& cols = results_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        out << (i ? "," : "") << cols[i];
    }
    out << '\n';
    using detail::num;
    for (const auto& r : records) {
        out << num(r.t) << ',' << num(r.u) << ',' << r.mode << ',' << num(r.P_bilinear) << ',' << num(r.P_linear)
            << ',' << num(r.P_truth) << ',' << num(r.D) << ',' << num(r.B_past) << ',' << num(r.warm_r0_truth) << ','
            << num(r.warm_r0_est) << ',' << num(r.cold_r0_truth) << ',' << num(r.cold_r0_est) << ',' << num(r.slack)
            << ',' << num(r.ocp_cost) << ',' << num(r.solve_ms) << ',' << r.fault;
        for (int i = 0; i < 4; ++i) {
            out << ',' << num(r.y[i]);
        }
        out << '\n';
    }
    for (const auto& [k, v] : summary) {
        out << "# " << k << ": " << v << '\n';
    }
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

struct ResultsFile {
    std::vector<StepRecord> records;
    Summary summary;
};

inline ResultsFile read_results(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open results '" + path + "'");
    }
    ResultsFile rf;
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("results file '" + path + "' is empty");
    }
    const auto header = detail::split(detail::trim(line), ',');
    if (header != results_columns()) {
        throw IoError("results file '" + path + "' has an unexpected header");
    }
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        if (line.rfind("# ", 0) == 0) {
            const auto colon = line.find(": ");
            if (colon != std::string::npos) {
                rf.summary.emplace_back(line.substr(2, colon - 2), line.substr(colon + 2));
            }
            continue;
        }
        const auto c = detail::split(line, ',');
        if (c.size() != header.size()) {
            throw IoError(path + ":" + std::to_string(lineno) + ": wrong column count");
        }
        std::vector<double> v(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) {
            const auto x = detail::parse_number(c[i]);
            if (!x) {
                throw IoError(path + ":" + std::to_string(lineno) + ": bad number in column " + header[i]);
            }
            v[i] = *x;
        }
        StepRecord r;
        r.t = v[0];
        r.u = v[1];
        r.mode = static_cast<int>(v[2]);
        r.P_bilinear = v[3];
        r.P_linear = v[4];
        r.P_truth = v[5];
        r.D = v[6];
        r.B_past = v[7];
        r.warm_r0_truth = v[8];
        r.warm_r0_est = v[9];
        r.cold_r0_truth = v[10];
        r.cold_r0_est = v[11];
        r.slack = v[12];
        r.ocp_cost = v[13];
        r.solve_ms = v[14];
        r.fault = static_cast<int>(v[15]);
        r.y = Eigen::Vector4d(v[16], v[17], v[18], v[19]);
        rf.records.push_back(r);
    }
    return rf;
}

/// One row per step: t followed by the full estimated state.
inline void write_matrix_csv(const std::string& path, const std::string& prefix, const std::vector<double>& t,
                             const std::vector<Eigen::VectorXd>& rows)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    out << 't';
    const Eigen::Index n = rows.empty() ? 0 : rows.front().size();
    for (Eigen::Index i = 0; i < n; ++i) {
        out << ',' << prefix << i;
    }
    out << '\n';
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out << detail::num(t[k]);
        for (Eigen::Index i = 0; i < n; ++i) {
            out << ',' << detail::num(rows[k][i]);
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

inline std::vector<Eigen::VectorXd> read_matrix_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    std::string line;
    std::getline(in, line);
    std::vector<Eigen::VectorXd> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto c = detail::split(line, ',');
        Eigen::VectorXd v(static_cast<Eigen::Index>(c.size()) - 1);
        for (std::size_t i = 1; i < c.size(); ++i) {
            const auto x = detail::parse_number(c[i]);
            if (!x) {
                throw IoError("bad number in '" + path + "'");
            }
            v[static_cast<Eigen::Index>(i) - 1] = *x;
        }
        rows.push_back(std::move(v));
    }
    return rows;
}

} // namespace ates
