#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ates/errors.hpp"

namespace ates {

/// Geometry of one aquifer's 1-D radial domain [r0, r_inf] split into nu
/// uniform cells. Cell temperatures live at the midpoints.
struct RadialGrid {
    double r0 = 0.0;
    double r_inf = 0.0;
    int nu = 0;
    double l = 0.0; ///< filter length [m]
    std::vector<double> edges;     ///< nu + 1 radii
    std::vector<double> midpoints; ///< nu radii
    std::vector<double> volumes;   ///< nu exact cylindrical shells [m^3]

    [[nodiscard]] double dr() const { return (r_inf - r0) / nu; }

    /// Lateral area of the cylinder of radius r and height l.
    [[nodiscard]] double face_area(double r) const { return 2.0 * std::numbers::pi * r * l; }

    [[nodiscard]] double total_volume() const
    {
        return std::numbers::pi * (r_inf * r_inf - r0 * r0) * l;
    }
};

inline RadialGrid build_grid(double r0, double r_inf, int nu, double l)
{
    if (!(r0 > 0.0) || !(r_inf > r0) || !std::isfinite(r_inf)) {
        throw GeometryError("invalid radial geometry: need 0 < r0 < r_inf (r0=" + std::to_string(r0) +
                            ", r_inf=" + std::to_string(r_inf) + ")");
    }
    if (nu < 1) {
        throw GeometryError("invalid radial geometry: cell count must be >= 1");
    }
    if (!(l > 0.0) || !std::isfinite(l)) {
        throw GeometryError("invalid radial geometry: filter length must be > 0");
    }

    RadialGrid g;
    g.r0 = r0;
    g.r_inf = r_inf;
    g.nu = nu;
    g.l = l;
    const double h = (r_inf - r0) / nu;
    g.edges.resize(nu + 1);
    for (int i = 0; i <= nu; ++i) {
        g.edges[i] = r0 + h * i;
    }
    g.edges[nu] = r_inf;
    g.midpoints.resize(nu);
    g.volumes.resize(nu);
    for (int i = 0; i < nu; ++i) {
        const double a = g.edges[i];
        const double b = g.edges[i + 1];
        g.midpoints[i] = 0.5 * (a + b);
        // (b^2 - a^2) factored to keep the shells exact for thin cells
        g.volumes[i] = std::numbers::pi * (b - a) * (b + a) * l;
    }
    return g;
}

/// Mixture rule for the volumetric heat capacity of a saturated aquifer.
inline double effective_heat_capacity(double phi, double c_w, double c_r)
{
    if (!(phi >= 0.0 && phi <= 1.0)) {
        throw ParameterError("porosity must lie in [0, 1], got " + std::to_string(phi));
    }
    return phi * c_w + (1.0 - phi) * c_r;
}

/// Darcy velocity of a radially symmetric volume flow q through a filter of length l.
inline double radial_velocity(double q, double r, double l)
{
    if (!(r > 0.0)) {
        throw GeometryError("radial velocity is singular at r <= 0");
    }
    if (!(l > 0.0)) {
        throw GeometryError("filter length must be > 0");
    }
    return q / (2.0 * std::numbers::pi * r * l);
}

struct AquiferParams {
    double c_a = 4.4625e6;  ///< aquifer [J/(m^3 K)]
    double c_w = 4.2e6;     ///< water [J/(m^3 K)]
    double c_r = 4.575e6;   ///< rock [J/(m^3 K)]
    double phi = 0.3;
    double lambda = 3.5;    ///< [W/(m K)]
    double T_amb = 284.85;  ///< [K]

    static AquiferParams from_constituents(double phi, double c_w, double c_r, double lambda, double T_amb)
    {
        AquiferParams p;
        p.phi = phi;
        p.c_w = c_w;
        p.c_r = c_r;
        p.c_a = effective_heat_capacity(phi, c_w, c_r);
        p.lambda = lambda;
        p.T_amb = T_amb;
        p.validate();
        return p;
    }

    void validate() const
    {
        if (!(c_a > 0.0 && c_w > 0.0 && c_r > 0.0)) {
            throw ParameterError("heat capacities must be strictly positive");
        }
        if (!(lambda > 0.0)) {
            throw ParameterError("heat conduction coefficient must be strictly positive");
        }
        if (!(phi >= 0.0 && phi <= 1.0)) {
            throw ParameterError("porosity must lie in [0, 1]");
        }
        if (!(T_amb > 0.0) || !std::isfinite(T_amb)) {
            throw ParameterError("ambient temperature must be a finite absolute temperature");
        }
    }
};

/// Warm and cold aquifer profiles stacked as
/// [T_w(r0), T_w(r_1..r_nu), T_c(r0), T_c(r_1..r_nu)], n = 2(nu + 1).
class StackedState {
public:
    StackedState() = default;

    StackedState(int nu, Eigen::VectorXd values) : nu_(nu), values_(std::move(values))
    {
        if (nu_ < 1 || values_.size() != 2 * (nu_ + 1)) {
            throw DimensionError("stacked state must have 2(nu+1) entries");
        }
        if (!values_.allFinite()) {
            throw NumericError("stacked state contains non-finite values");
        }
    }

    static StackedState uniform(int nu, double T)
    {
        return {nu, Eigen::VectorXd::Constant(2 * (nu + 1), T)};
    }

    static StackedState stack(const Eigen::VectorXd& warm, const Eigen::VectorXd& cold)
    {
        if (warm.size() != cold.size() || warm.size() < 2) {
            throw DimensionError("warm and cold profiles must have equal length nu+1 >= 2");
        }
        Eigen::VectorXd v(warm.size() + cold.size());
        v << warm, cold;
        return {static_cast<int>(warm.size()) - 1, std::move(v)};
    }

    [[nodiscard]] int nu() const { return nu_; }
    [[nodiscard]] int size() const { return static_cast<int>(values_.size()); }
    [[nodiscard]] const Eigen::VectorXd& values() const { return values_; }

    [[nodiscard]] Eigen::VectorXd warm() const { return values_.head(nu_ + 1); }
    [[nodiscard]] Eigen::VectorXd cold() const { return values_.tail(nu_ + 1); }

    [[nodiscard]] double operator[](int i) const { return values_[i]; }

    [[nodiscard]] double warm_borehole() const { return values_[warm_borehole_index()]; }
    [[nodiscard]] double cold_borehole() const { return values_[cold_borehole_index()]; }

    [[nodiscard]] int warm_borehole_index() const { return 0; }
    [[nodiscard]] int warm_far_index() const { return nu_; }
    [[nodiscard]] int cold_borehole_index() const { return nu_ + 1; }
    [[nodiscard]] int cold_far_index() const { return 2 * nu_ + 1; }

private:
    int nu_ = 0;
    Eigen::VectorXd values_;
};

} // namespace ates
