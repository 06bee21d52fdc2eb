#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ates/errors.hpp"
#include "ates/grid.hpp"
#include "ates/power_energy.hpp"
#include "ates/pwa_model.hpp"
#include "ates/qp_solver.hpp"

namespace ates {

/// Horizon, blocking, bounds and weights of the optimal control problem.
///
/// Cost units: powers enter the tracking term in multiples of power_scale_w,
/// and the energy-balance term measures (E + B_past) in multiples of
/// N * dt * power_scale_w, i.e. as the average power over one horizon that
/// would cancel the imbalance.
struct OcpConfig {
    int N = 12;
    double dt = 3600.0;
    std::vector<int> blocks{1, 4, 7};
    double u_min = -0.0277;      ///< [m^3/s]
    double u_max = 0.0277;       ///< [m^3/s]
    double u_active_min = 1e-5;  ///< smallest |u| of a heating/cooling block [m^3/s]
    double warm_min = 284.85;
    double warm_max = 293.15;
    double cold_min = 273.15;
    double cold_max = 284.85;
    double q_u = 1.0;
    double q_d = 1994.4e-6;
    double q_e = 0.001;
    double slack_weight = 1e6;   ///< per K^2
    double power_scale_w = 1e6;

    [[nodiscard]] double energy_scale_j() const { return N * dt * power_scale_w; }

    void validate() const
    {
        if (N < 1 || blocks.empty() || std::accumulate(blocks.begin(), blocks.end(), 0) != N) {
            throw ConfigError("move-blocking segments must sum to the horizon N");
        }
        for (int b : blocks) {
            if (b < 1) {
                throw ConfigError("move-blocking segments must be positive");
            }
        }
        if (!(u_min < 0.0 && 0.0 < u_max)) {
            throw ConfigError("input bounds must satisfy u_min < 0 < u_max");
        }
        if (!(u_active_min >= 0.0 && u_active_min < std::min(u_max, -u_min))) {
            throw ConfigError("minimum active flow must lie inside the input bounds");
        }
        if (!(warm_min <= warm_max && cold_min <= cold_max)) {
            throw ConfigError("state bounds must be ordered");
        }
        if (!(q_u >= 0.0 && q_d >= 0.0 && q_e >= 0.0 && slack_weight > 0.0 && power_scale_w > 0.0 && dt > 0.0)) {
            throw ConfigError("weights must be non-negative and scales positive");
        }
    }

    /// Per-entry lower/upper bounds of the stacked state.
    [[nodiscard]] std::pair<Eigen::VectorXd, Eigen::VectorXd> state_bounds(int nu) const
    {
        const int n = 2 * (nu + 1);
        Eigen::VectorXd lo(n);
        Eigen::VectorXd hi(n);
        lo.head(nu + 1).setConstant(warm_min);
        hi.head(nu + 1).setConstant(warm_max);
        lo.tail(nu + 1).setConstant(cold_min);
        hi.tail(nu + 1).setConstant(cold_max);
        return {lo, hi};
    }
};

using ModeSequence = std::vector<Mode>;

/// Condensed prediction: x_pred = Mx u_blocks + cx (stacked x(0..N)),
/// P_pred = Mp u_blocks + cp (linear power form per step).
struct PredictionMap {
    int n = 0;
    int N = 0;
    Eigen::MatrixXd Mx;
    Eigen::VectorXd cx;
    Eigen::MatrixXd Mp;
    Eigen::VectorXd cp;

    [[nodiscard]] Eigen::VectorXd states(const Eigen::VectorXd& u) const { return Mx * u + cx; }
    [[nodiscard]] Eigen::VectorXd powers(const Eigen::VectorXd& u) const { return Mp * u + cp; }
    [[nodiscard]] Eigen::VectorXd state_at(const Eigen::VectorXd& u, int k) const
    {
        return Mx.middleRows(static_cast<Eigen::Index>(k) * n, n) * u + cx.segment(static_cast<Eigen::Index>(k) * n, n);
    }
};

/// Index of the block containing step k.
inline int block_of_step(std::span<const int> blocks, int k)
{
    int end = 0;
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        end += blocks[j];
        if (k < end) {
            return static_cast<int>(j);
        }
    }
    throw DimensionError("step outside the blocked horizon");
}

inline PredictionMap condense(const PwaModel& model, const ModeSequence& modes, std::span<const int> blocks,
                              const Eigen::VectorXd& x0, const LinearPowerForm& power)
{
    if (modes.size() != blocks.size()) {
        throw DimensionError("one mode per move-blocking segment required");
    }
    if (x0.size() != model.n() || !x0.allFinite()) {
        throw DimensionError("initial state does not match the model");
    }
    const int n = model.n();
    const int N = std::accumulate(blocks.begin(), blocks.end(), 0);
    const auto nb = static_cast<Eigen::Index>(blocks.size());

    PredictionMap map;
    map.n = n;
    map.N = N;
    map.Mx = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N + 1) * n, nb);
    map.cx = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N + 1) * n);
    map.Mp = Eigen::MatrixXd::Zero(N, nb);
    map.cp = Eigen::VectorXd::Zero(N);

    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, nb);
    Eigen::VectorXd X = x0;
    map.cx.head(n) = x0;
    for (int k = 0; k < N; ++k) {
        const int j = block_of_step(blocks, k);
        const AffineBranch& br = model.branch(modes[j]);
        Eigen::MatrixXd S_next = br.A * S;
        if (modes[j] != Mode::storing) {
            S_next.col(j) += br.b;
        }
        Eigen::VectorXd X_next = br.A * X + br.f;

        map.Mp.row(k) = power.w_now.transpose() * S + power.w_next.transpose() * S_next;
        map.cp[k] = power.w_now.dot(X) + power.w_next.dot(X_next) + power.offset;

        S = std::move(S_next);
        X = std::move(X_next);
        map.Mx.middleRows(static_cast<Eigen::Index>(k + 1) * n, n) = S;
        map.cx.segment(static_cast<Eigen::Index>(k + 1) * n, n) = X;
    }
    return map;
}

/// Quadratic objective in z = (u_blocks, slack) plus its constant part.
struct OcpQp {
    Qp qp;
    double constant = 0.0;
    int num_blocks = 0;
};

struct CostBreakdown {
    double tracking = 0.0;
    double input = 0.0;
    double energy = 0.0;
    double slack = 0.0;

    [[nodiscard]] double total() const { return tracking + input + energy + slack; }
};

namespace detail {

/// Accumulates weight * (row . z + r0)^2 into (H, g, c) of 1/2 z'Hz + g'z + c.
inline void add_square(Eigen::MatrixXd& H, Eigen::VectorXd& g, double& c, const Eigen::RowVectorXd& row, double r0,
                       double weight)
{
    H.noalias() += 2.0 * weight * row.transpose() * row;
    g += 2.0 * weight * r0 * row.transpose();
    c += weight * r0 * r0;
}

} // namespace detail

inline OcpQp build_cost(const PredictionMap& pred, std::span<const double> demand, double B_past,
                        const OcpConfig& cfg, const ModeSequence& modes)
{
    if (static_cast<int>(demand.size()) != pred.N) {
        throw DimensionError("demand forecast must cover the horizon");
    }
    const auto nb = pred.Mp.cols();
    const Eigen::Index m = nb + 1; // blocks + one slack
    const Eigen::Index s_idx = nb;
    const int n = pred.n;
    const int nu = n / 2 - 1;

    OcpQp out;
    out.num_blocks = static_cast<int>(nb);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
    double c = 0.0;

    const double ps = cfg.power_scale_w;
    for (int k = 0; k < pred.N; ++k) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(m);
        row.head(nb) = pred.Mp.row(k) / ps;
        detail::add_square(H, g, c, row, (pred.cp[k] - demand[k]) / ps, cfg.q_d);
    }
    for (Eigen::Index j = 0; j < nb; ++j) {
        H(j, j) += 2.0 * cfg.q_u * cfg.blocks[j];
    }
    {
        const double es = cfg.energy_scale_j();
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(m);
        row.head(nb) = cfg.dt * pred.Mp.colwise().sum() / es;
        detail::add_square(H, g, c, row, (cfg.dt * pred.cp.sum() + B_past) / es, cfg.q_e);
    }
    H(s_idx, s_idx) += 2.0 * cfg.slack_weight;

    // inequality rows: input boxes by mode, slack >= 0, soft state boxes for k = 1..N
    const auto [lo, hi] = cfg.state_bounds(nu);
    const Eigen::Index rows = 2 * nb + 1 + 2 * static_cast<Eigen::Index>(pred.N) * n;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(rows, m);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(rows);
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < nb; ++j) {
        double umin = 0.0;
        double umax = 0.0;
        switch (modes[j]) {
        case Mode::heating:
            umin = cfg.u_active_min;
            umax = cfg.u_max;
            break;
        case Mode::cooling:
            umin = cfg.u_min;
            umax = -cfg.u_active_min;
            break;
        case Mode::storing:
            break;
        }
        G(r, j) = 1.0;
        h[r++] = umax;
        G(r, j) = -1.0;
        h[r++] = -umin;
    }
    G(r, s_idx) = -1.0;
    h[r++] = 0.0;
    for (int k = 1; k <= pred.N; ++k) {
        const Eigen::Index base = static_cast<Eigen::Index>(k) * n;
        for (int i = 0; i < n; ++i) {
            const Eigen::RowVectorXd mrow = pred.Mx.row(base + i);
            const double cxi = pred.cx[base + i];
            G.block(r, 0, 1, nb) = mrow;
            G(r, s_idx) = -1.0;
            h[r++] = hi[i] - cxi;
            G.block(r, 0, 1, nb) = -mrow;
            G(r, s_idx) = -1.0;
            h[r++] = cxi - lo[i];
        }
    }

    out.qp = Qp{std::move(H), std::move(g), std::move(G), std::move(h)};
    out.constant = c;
    return out;
}

/// Evaluates each objective term at the blocked inputs and slack.
inline CostBreakdown evaluate_cost(const PredictionMap& pred, std::span<const double> demand, double B_past,
                                   const OcpConfig& cfg, const Eigen::VectorXd& u_blocks, double slack)
{
    CostBreakdown cb;
    const Eigen::VectorXd P = pred.powers(u_blocks);
    const double ps = cfg.power_scale_w;
    for (int k = 0; k < pred.N; ++k) {
        const double e = (P[k] - demand[k]) / ps;
        cb.tracking += cfg.q_d * e * e;
    }
    for (Eigen::Index j = 0; j < u_blocks.size(); ++j) {
        cb.input += cfg.q_u * cfg.blocks[j] * u_blocks[j] * u_blocks[j];
    }
    const double e = (cfg.dt * P.sum() + B_past) / cfg.energy_scale_j();
    cb.energy = cfg.q_e * e * e;
    cb.slack = cfg.slack_weight * slack * slack;
    return cb;
}

struct CandidateRecord {
    ModeSequence modes;
    QpStatus status = QpStatus::infeasible;
    Eigen::VectorXd u_blocks;
    double slack = 0.0;
    double cost = std::numeric_limits<double>::infinity();
    double kkt_residual = 0.0;
    int qp_iterations = 0;
};

struct OcpSolution {
    Eigen::VectorXd u_blocks;
    ModeSequence modes;
    std::vector<Eigen::VectorXd> x_pred; ///< N + 1 stacked states
    Eigen::VectorXd P_pred;              ///< N powers, linear form [W]
    CostBreakdown cost;
    double total_cost = 0.0;
    double slack_used = 0.0;
    std::vector<CandidateRecord> per_candidate;
    double solve_seconds = 0.0;
};

/// All 3^B mode sequences in lexicographic order (heating, storing, cooling).
inline std::vector<ModeSequence> enumerate_mode_sequences(std::size_t num_blocks)
{
    const std::array<Mode, 3> labels{Mode::heating, Mode::storing, Mode::cooling};
    std::size_t total = 1;
    for (std::size_t j = 0; j < num_blocks; ++j) {
        total *= 3;
    }
    std::vector<ModeSequence> out;
    out.reserve(total);
    for (std::size_t code = 0; code < total; ++code) {
        ModeSequence seq(num_blocks);
        std::size_t c = code;
        for (std::size_t j = num_blocks; j-- > 0;) {
            seq[j] = labels[c % 3];
            c /= 3;
        }
        out.push_back(std::move(seq));
    }
    return out;
}

namespace detail {

inline int storing_count(const ModeSequence& s)
{
    return static_cast<int>(std::count(s.begin(), s.end(), Mode::storing));
}

/// True when candidate a should replace the incumbent b.
inline bool better_candidate(const CandidateRecord& a, const CandidateRecord& b)
{
    if (a.status != QpStatus::optimal) {
        return false;
    }
    if (b.status != QpStatus::optimal) {
        return true;
    }
    const double tol = 1e-9 * std::max({1.0, std::abs(a.cost), std::abs(b.cost)});
    if (a.cost < b.cost - tol) {
        return true;
    }
    if (a.cost > b.cost + tol) {
        return false;
    }
    const int sa = storing_count(a.modes);
    const int sb = storing_count(b.modes);
    if (sa != sb) {
        return sa > sb;
    }
    return a.u_blocks.norm() < b.u_blocks.norm();
}

} // namespace detail

/// Enumerates every blocked mode sequence, solves the condensed QP of each
/// and returns the cheapest feasible one.
inline OcpSolution solve_ocp(const PwaModel& model, const Eigen::VectorXd& x0, std::span<const double> demand,
                             double B_past, const OcpConfig& cfg, const LinearPowerForm& power)
{
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    if (static_cast<int>(demand.size()) != cfg.N) {
        throw DimensionError("demand forecast must have N entries");
    }
    const auto sequences = enumerate_mode_sequences(cfg.blocks.size());

    OcpSolution sol;
    sol.per_candidate.reserve(sequences.size());
    int best = -1;
    std::vector<PredictionMap> maps;
    maps.reserve(sequences.size());
    for (const auto& seq : sequences) {
        maps.push_back(condense(model, seq, cfg.blocks, x0, power));
        const OcpQp oq = build_cost(maps.back(), demand, B_past, cfg, seq);
        const QpResult qr = solve_qp(oq.qp);

        CandidateRecord rec;
        rec.modes = seq;
        rec.status = qr.status;
        rec.kkt_residual = qr.kkt_residual;
        rec.qp_iterations = qr.iterations;
        if (qr.status == QpStatus::optimal) {
            const auto nb = static_cast<Eigen::Index>(seq.size());
            rec.u_blocks = qr.z_star.head(nb);
            for (Eigen::Index j = 0; j < nb; ++j) {
                if (seq[j] == Mode::storing) {
                    rec.u_blocks[j] = 0.0;
                }
            }
            rec.slack = std::max(0.0, qr.z_star[nb]);
            rec.cost = qr.value + oq.constant;
        }
        sol.per_candidate.push_back(rec);
        if (best < 0 || detail::better_candidate(rec, sol.per_candidate[best])) {
            if (rec.status == QpStatus::optimal) {
                best = static_cast<int>(sol.per_candidate.size()) - 1;
            }
        }
    }
    if (best < 0) {
        throw ControllerFault("all enumerated mode sequences are infeasible");
    }

    const CandidateRecord& win = sol.per_candidate[best];
    const PredictionMap& map = maps[best];
    sol.u_blocks = win.u_blocks;
    sol.modes = win.modes;
    sol.P_pred = map.powers(win.u_blocks);
    sol.x_pred.reserve(cfg.N + 1);
    for (int k = 0; k <= cfg.N; ++k) {
        sol.x_pred.push_back(map.state_at(win.u_blocks, k));
    }
    // slack actually needed by the predicted trajectory
    const auto [lo, hi] = cfg.state_bounds(model.nu);
    double viol = 0.0;
    for (int k = 1; k <= cfg.N; ++k) {
        viol = std::max(viol, (sol.x_pred[k] - hi).maxCoeff());
        viol = std::max(viol, (lo - sol.x_pred[k]).maxCoeff());
    }
    sol.slack_used = std::max(0.0, viol);
    sol.cost = evaluate_cost(map, demand, B_past, cfg, win.u_blocks, win.slack);
    sol.total_cost = win.cost;
    sol.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return sol;
}

/// Input applied over the next sampling period: the first block.
inline double receding_step(const OcpSolution& solution) { return solution.u_blocks[0]; }

} // namespace ates
