#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "ates/errors.hpp"
#include "ates/grid.hpp"
#include "ates/heat_exchanger.hpp"

namespace ates {

struct TruthConfig {
    int nu_fine = 200;
    double lambda_lo = 3.0;          ///< [W/(m K)]
    double lambda_hi = 5.0;          ///< [W/(m K)]
    bool heterogeneous = true;       ///< false: lambda = AquiferParams::lambda everywhere
    double t_amb_noise_amp = 0.1;    ///< half-range of the uniform far-field disturbance [K]
    double sensor_sigma = 0.01;      ///< [K]
    std::uint64_t seed = 1;
    int max_substeps = 10000;

    void validate(int nu_coarse) const
    {
        if (!(lambda_lo > 0.0 && lambda_lo <= lambda_hi)) {
            throw ConfigError("truth conductivity bounds must be positive and ordered");
        }
        if (nu_fine < nu_coarse) {
            throw ConfigError("truth grid must be at least as fine as the prediction grid");
        }
        if (!(t_amb_noise_amp >= 0.0 && sensor_sigma >= 0.0)) {
            throw ConfigError("noise amplitudes must be non-negative");
        }
        if (max_substeps < 1) {
            throw ConfigError("substep cap must be positive");
        }
    }
};

struct MaxPrincipleAudit {
    long checks = 0;
    long violations = 0;
    double worst_excess = 0.0; ///< largest overshoot beyond the stencil range [K]
};

/// Fine-grid fields of both aquifers. Index 0 of each field is the borehole
/// node, 1..nu_fine are the cells.
struct TruthState {
    Eigen::VectorXd warm;
    Eigen::VectorXd cold;
    Eigen::VectorXd lambda_warm;
    Eigen::VectorXd lambda_cold;
    double T_amb = 0.0;
    double clock = 0.0;

    MaxPrincipleAudit audit;
    // Time-integrated energy through the aquifer boundaries [J], positive into the aquifer.
    double boundary_energy_warm = 0.0;
    double boundary_energy_cold = 0.0;
    double last_mean_power = 0.0;    ///< substep average of c_w u (T_w(r0) - T_c(r0)) [W]
    int last_substeps = 0;
};

class TruthSimulator {
public:
    TruthSimulator(RadialGrid coarse, AquiferParams params, HxParams hx, TruthConfig cfg)
        : coarse_(std::move(coarse)), params_(params), hx_(hx), cfg_(cfg)
    {
        params_.validate();
        hx_.validate();
        cfg_.validate(coarse_.nu);
        fine_ = build_grid(coarse_.r0, coarse_.r_inf, cfg_.nu_fine, coarse_.l);
        // Independent streams per purpose so that, e.g., changing the sensor
        // noise does not reshuffle the conductivity field.
        std::seed_seq s_lambda{cfg_.seed, std::uint64_t{0x1a3b}};
        std::seed_seq s_amb{cfg_.seed, std::uint64_t{0x2c4d}};
        std::seed_seq s_sensor{cfg_.seed, std::uint64_t{0x3e5f}};
        rng_lambda_.seed(s_lambda);
        rng_amb_.seed(s_amb);
        rng_sensor_.seed(s_sensor);

        const double target = coarse_.midpoints[coarse_.nu - 1];
        far_sensor_ = 1;
        for (int i = 1; i <= fine_.nu; ++i) {
            if (std::abs(fine_.midpoints[i - 1] - target) < std::abs(fine_.midpoints[far_sensor_ - 1] - target)) {
                far_sensor_ = i;
            }
        }
    }

    [[nodiscard]] const RadialGrid& fine_grid() const { return fine_; }
    [[nodiscard]] const RadialGrid& coarse_grid() const { return coarse_; }
    [[nodiscard]] const AquiferParams& params() const { return params_; }
    [[nodiscard]] const TruthConfig& config() const { return cfg_; }
    [[nodiscard]] int far_sensor_cell() const { return far_sensor_; }

    [[nodiscard]] TruthState init()
    {
        const int nf = fine_.nu;
        TruthState s;
        s.T_amb = params_.T_amb;
        s.warm = Eigen::VectorXd::Constant(nf + 1, params_.T_amb);
        s.cold = Eigen::VectorXd::Constant(nf + 1, params_.T_amb);
        s.lambda_warm.resize(nf);
        s.lambda_cold.resize(nf);
        if (cfg_.heterogeneous) {
            std::uniform_real_distribution<double> U(cfg_.lambda_lo, cfg_.lambda_hi);
            for (int i = 0; i < nf; ++i) {
                s.lambda_warm[i] = U(rng_lambda_);
            }
            for (int i = 0; i < nf; ++i) {
                s.lambda_cold[i] = U(rng_lambda_);
            }
        } else {
            s.lambda_warm.setConstant(params_.lambda);
            s.lambda_cold.setConstant(params_.lambda);
        }
        return s;
    }

    /// Substeps needed for a flow magnitude |u| with the given conductivity fields.
    [[nodiscard]] int substeps_for(const TruthState& s, double u, double dt) const
    {
        const double h = fine_.dr();
        const double lam_max = std::max(s.lambda_warm.maxCoeff(), s.lambda_cold.maxCoeff());
        double n = lam_max * dt / (params_.c_a * h * h) / 0.25;
        const double q = std::abs(u);
        for (int i = 1; i <= fine_.nu; ++i) {
            const double cv = params_.c_a * fine_.volumes[i - 1];
            n = std::max(n, params_.c_w * q * dt / cv / 0.5);
            for (const Eigen::VectorXd* lam : {&s.lambda_warm, &s.lambda_cold}) {
                const double out = conductance_in(*lam, i) + conductance_out(*lam, i) + params_.c_w * q;
                n = std::max(n, out * dt / cv / 0.9);
            }
        }
        const double steps = std::ceil(n - 1e-12);
        if (!(steps <= cfg_.max_substeps)) {
            std::ostringstream os;
            os << "truth step needs " << steps << " substeps (cap " << cfg_.max_substeps << ") for |u|=" << q;
            throw ConfigError(os.str());
        }
        return std::max(1, static_cast<int>(steps));
    }

    /// Advances both aquifers by dt under the constant flow u.
    void step(TruthState& s, double u, double dt = 3600.0)
    {
        if (!std::isfinite(u) || !(dt > 0.0)) {
            throw ParameterError("truth step needs a finite flow and positive dt");
        }
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        s.T_amb = params_.T_amb + cfg_.t_amb_noise_amp * U(rng_amb_);

        const int ns = substeps_for(s, u, dt);
        const double ds = dt / ns;
        double power_sum = 0.0;

        for (int k = 0; k < ns; ++k) {
            // Borehole nodes: extraction and rest follow the first cell, the
            // injection side receives the exchanger outlet.
            if (u > 0.0) {
                s.warm[0] = s.warm[1];
                s.cold[0] = hx_outlet_temp(s.warm[0], u, hx_.q_b, hx_.T_b_heating);
            } else if (u < 0.0) {
                s.cold[0] = s.cold[1];
                s.warm[0] = hx_outlet_temp(s.cold[0], u, hx_.q_b, hx_.T_b_cooling);
            } else {
                s.warm[0] = s.warm[1];
                s.cold[0] = s.cold[1];
            }
            power_sum += params_.c_w * u * (s.warm[0] - s.cold[0]);

            s.boundary_energy_warm += advance(s.warm, s.lambda_warm, -u, s.T_amb, ds, s.audit);
            s.boundary_energy_cold += advance(s.cold, s.lambda_cold, u, s.T_amb, ds, s.audit);
        }
        if (u >= 0.0) {
            s.warm[0] = s.warm[1];
        }
        if (u <= 0.0) {
            s.cold[0] = s.cold[1];
        }
        if (!s.warm.allFinite() || !s.cold.allFinite()) {
            throw NumericError("truth simulator produced non-finite temperatures");
        }
        s.last_substeps = ns;
        s.last_mean_power = power_sum / ns;
        s.clock += dt;
    }

    /// Readings (warm r0, warm far, cold r0, cold far).
    Eigen::Vector4d measure(const TruthState& s, bool with_noise = true)
    {
        Eigen::Vector4d y(s.warm[0], s.warm[far_sensor_], s.cold[0], s.cold[far_sensor_]);
        if (with_noise && cfg_.sensor_sigma > 0.0) {
            std::normal_distribution<double> N(0.0, cfg_.sensor_sigma);
            for (int i = 0; i < 4; ++i) {
                y[i] += N(rng_sensor_);
            }
        }
        return y;
    }

    /// Volume-weighted average of the fine fields on the coarse cells,
    /// stacked like the prediction state.
    [[nodiscard]] Eigen::VectorXd coarse_state(const TruthState& s) const
    {
        const int nc = coarse_.nu;
        Eigen::VectorXd out(2 * (nc + 1));
        out.head(nc + 1) = restrict_field(s.warm);
        out.tail(nc + 1) = restrict_field(s.cold);
        return out;
    }

    /// Stored internal energy relative to 0 K, c_a sum V_i T_i [J].
    [[nodiscard]] double stored_energy(const Eigen::VectorXd& field) const
    {
        double e = 0.0;
        for (int i = 1; i <= fine_.nu; ++i) {
            e += params_.c_a * fine_.volumes[i - 1] * field[i];
        }
        return e;
    }

    /// Replaces the fine fields by piecewise-constant prolongation of a coarse
    /// stacked state.
    void set_from_coarse(TruthState& s, const Eigen::VectorXd& x) const
    {
        const int nc = coarse_.nu;
        if (x.size() != 2 * (nc + 1)) {
            throw DimensionError("coarse state has the wrong size");
        }
        auto fill = [&](Eigen::VectorXd& field, const Eigen::VectorXd& xc) {
            field[0] = xc[0];
            for (int i = 1; i <= fine_.nu; ++i) {
                const double r = fine_.midpoints[i - 1];
                int j = static_cast<int>((r - coarse_.r0) / coarse_.dr());
                j = std::clamp(j, 0, nc - 1);
                field[i] = xc[j + 1];
            }
        };
        fill(s.warm, x.head(nc + 1));
        fill(s.cold, x.tail(nc + 1));
    }

private:
    [[nodiscard]] double conductance_in(const Eigen::VectorXd& lam, int i) const
    {
        if (i == 1) {
            return 0.0;
        }
        const double lh = 2.0 * lam[i - 2] * lam[i - 1] / (lam[i - 2] + lam[i - 1]);
        return lh * fine_.face_area(fine_.edges[i - 1]) / fine_.dr();
    }

    [[nodiscard]] double conductance_out(const Eigen::VectorXd& lam, int i) const
    {
        const int nf = fine_.nu;
        if (i == nf) {
            return lam[nf - 1] * fine_.face_area(fine_.r_inf) / (0.5 * fine_.dr());
        }
        const double lh = 2.0 * lam[i - 1] * lam[i] / (lam[i - 1] + lam[i]);
        return lh * fine_.face_area(fine_.edges[i]) / fine_.dr();
    }

    /// One explicit substep of a single aquifer with outward flow q.
    /// Returns the boundary energy [J] that entered during the substep.
    double advance(Eigen::VectorXd& T, const Eigen::VectorXd& lam, double q, double T_amb, double ds,
                   MaxPrincipleAudit& audit) const
    {
        const int nf = fine_.nu;
        const double cw = params_.c_w;
        // upwind face temperatures, face f between cell f and f + 1
        auto face_T = [&](int f) {
            if (q > 0.0) {
                return T[f];
            }
            return f == nf ? T_amb : T[f + 1];
        };
        Eigen::VectorXd next(T.size());
        next[0] = T[0];
        for (int i = 1; i <= nf; ++i) {
            const double cv = params_.c_a * fine_.volumes[i - 1];
            double flux = cw * q * (face_T(i - 1) - face_T(i));
            const double kin = conductance_in(lam, i);
            const double kout = conductance_out(lam, i);
            const double T_right = i == nf ? T_amb : T[i + 1];
            if (i > 1) {
                flux += kin * (T[i - 1] - T[i]);
            }
            flux += kout * (T_right - T[i]);
            next[i] = T[i] + ds * flux / cv;

            double lo = std::min(T[i], T_right);
            double hi = std::max(T[i], T_right);
            if (i > 1 || q > 0.0) {
                lo = std::min(lo, T[i - 1]);
                hi = std::max(hi, T[i - 1]);
            }
            const double tol = 1e-9 * (1.0 + std::abs(T[i]));
            const double excess = std::max(lo - next[i], next[i] - hi);
            ++audit.checks;
            if (excess > tol) {
                ++audit.violations;
            }
            audit.worst_excess = std::max(audit.worst_excess, excess);
        }
        const double in = cw * q * face_T(0) - cw * q * face_T(nf) + conductance_out(lam, nf) * (T_amb - T[nf]);
        T.swap(next);
        return ds * in;
    }

    [[nodiscard]] Eigen::VectorXd restrict_field(const Eigen::VectorXd& field) const
    {
        const int nc = coarse_.nu;
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(nc + 1);
        Eigen::VectorXd vol = Eigen::VectorXd::Zero(nc + 1);
        acc[0] = field[0];
        vol[0] = 1.0;
        for (int i = 1; i <= fine_.nu; ++i) {
            const double a = fine_.edges[i - 1];
            const double b = fine_.edges[i];
            for (int j = 1; j <= nc; ++j) {
                const double lo = std::max(a, coarse_.edges[j - 1]);
                const double hi = std::min(b, coarse_.edges[j]);
                if (hi > lo) {
                    const double v = (hi - lo) * (hi + lo);
                    acc[j] += v * field[i];
                    vol[j] += v;
                }
            }
        }
        return acc.cwiseQuotient(vol);
    }

    RadialGrid coarse_;
    RadialGrid fine_;
    AquiferParams params_;
    HxParams hx_;
    TruthConfig cfg_;
    std::mt19937_64 rng_lambda_;
    std::mt19937_64 rng_amb_;
    std::mt19937_64 rng_sensor_;
    int far_sensor_ = 1;
};

} // namespace ates
