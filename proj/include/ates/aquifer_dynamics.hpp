#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "ates/errors.hpp"
#include "ates/grid.hpp"

namespace ates {

enum class Regime { extraction_or_storage, injection };

/// Face reconstruction used for the frozen convection term.
enum class ConvectionScheme {
    upwind,         ///< first-order upwind cell values
    limited_linear, ///< upwind-biased linear reconstruction with minmod limiter
};

struct DiscretizationOptions {
    double dt = 3600.0;
    ConvectionScheme scheme = ConvectionScheme::limited_linear;
};

/// Discrete-time affine map x+ = A x + b u + f of one aquifer in one regime.
/// Extraction/storage maps all nu + 1 entries; injection maps only the cells
/// r_1..r_nu because the borehole value comes from the heat exchanger.
struct AffineSubsystem {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::VectorXd f;
    Regime regime = Regime::extraction_or_storage;
    double built_at = 0.0;

    [[nodiscard]] Eigen::Index rows() const { return A.rows(); }

    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& x, double u) const
    {
        return A * x + b * u + f;
    }
};

/// lambda dt / (c_a dr^2); explicit stepping requires it below 1/2.
inline double diffusion_number(const RadialGrid& grid, const AquiferParams& params, double dt)
{
    const double h = grid.dr();
    return params.lambda * dt / (params.c_a * h * h);
}

namespace detail {

inline double minmod(double a, double b)
{
    if (a * b <= 0.0) {
        return 0.0;
    }
    return std::abs(a) < std::abs(b) ? a : b;
}

inline void check_stability(const RadialGrid& grid, const AquiferParams& params, double dt)
{
    const double d = diffusion_number(grid, params, dt);
    if (!(d < 0.5)) {
        std::ostringstream os;
        os << "explicit step unstable: diffusion number lambda*dt/(c_a*dr^2) = " << d
           << " >= 0.5 (lambda=" << params.lambda << ", dt=" << dt << ", c_a=" << params.c_a
           << ", dr=" << grid.dr() << ")";
        throw StabilityError(os.str());
    }
}

/// Limited slope of cell j (1-based) from the reference profile. The
/// borehole node sits at r0 and the far-field value at r_inf.
inline double cell_slope(const RadialGrid& grid, const Eigen::VectorXd& x, double T_far, int j)
{
    const int nu = grid.nu;
    const double rj = grid.midpoints[j - 1];
    const double r_left = (j == 1) ? grid.r0 : grid.midpoints[j - 2];
    const double T_left = x[j - 1];
    const double r_right = (j == nu) ? grid.r_inf : grid.midpoints[j];
    const double T_right = (j == nu) ? T_far : x[j + 1];
    const double back = (x[j] - T_left) / (rj - r_left);
    const double fwd = (T_right - x[j]) / (r_right - rj);
    return minmod(back, fwd);
}

/// Face temperatures phi[0..nu] (phi[0] at r0, phi[nu] at r_inf) seen by the
/// advective flux when the physical flow points outward (injection) or
/// inward (extraction).
inline Eigen::VectorXd face_values(const RadialGrid& grid, const Eigen::VectorXd& x_ref, double T_far,
                                   bool outward, ConvectionScheme scheme)
{
    const int nu = grid.nu;
    const double half = 0.5 * grid.dr();
    Eigen::VectorXd phi(nu + 1);
    auto slope = [&](int j) {
        return scheme == ConvectionScheme::limited_linear ? cell_slope(grid, x_ref, T_far, j) : 0.0;
    };
    if (outward) {
        phi[0] = x_ref[0];
        for (int f = 1; f <= nu; ++f) {
            phi[f] = x_ref[f] + half * slope(f);
        }
    } else {
        phi[nu] = T_far;
        for (int f = 0; f < nu; ++f) {
            phi[f] = x_ref[f + 1] - half * slope(f + 1);
        }
    }
    return phi;
}

/// Rows for cells r_1..r_nu: conduction acting on x(k), frozen convection
/// in b, far-field Dirichlet folded into f.
inline void assemble_cell_rows(const RadialGrid& grid, const AquiferParams& params, const Eigen::VectorXd& x_ref,
                               int flow_sign, bool outward, const DiscretizationOptions& opts, Eigen::MatrixXd& A,
                               Eigen::VectorXd& b, Eigen::VectorXd& f, int row_offset)
{
    const int nu = grid.nu;
    const double h = grid.dr();
    const double dt = opts.dt;
    const double T_far = params.T_amb;
    const Eigen::VectorXd phi = face_values(grid, x_ref, T_far, outward, opts.scheme);

    for (int i = 1; i <= nu; ++i) {
        const int row = row_offset + i - 1;
        const double scale = dt / (params.c_a * grid.volumes[i - 1]);
        A(row, i) += 1.0;
        // Conduction; the borehole face is adiabatic, the far face sees T_amb
        // half a cell away.
        if (i > 1) {
            const double k_in = params.lambda * grid.face_area(grid.edges[i - 1]) / h;
            A(row, i - 1) += scale * k_in;
            A(row, i) -= scale * k_in;
        }
        if (i < nu) {
            const double k_out = params.lambda * grid.face_area(grid.edges[i]) / h;
            A(row, i + 1) += scale * k_out;
            A(row, i) -= scale * k_out;
        } else {
            const double k_far = params.lambda * grid.face_area(grid.r_inf) / (0.5 * h);
            A(row, i) -= scale * k_far;
            f[row] += scale * k_far * T_far;
        }
        // Frozen advective flux difference, q = flow_sign * u.
        b[row] = scale * params.c_w * flow_sign * (phi[i - 1] - phi[i]);
    }
}

inline void check_inputs(const RadialGrid& grid, const AquiferParams& params, const Eigen::VectorXd& x_ref,
                         int flow_sign, const DiscretizationOptions& opts)
{
    if (x_ref.size() != grid.nu + 1) {
        throw DimensionError("reference profile must have nu+1 entries");
    }
    if (!x_ref.allFinite()) {
        throw NumericError("reference profile contains non-finite values");
    }
    if (flow_sign != 1 && flow_sign != -1) {
        throw ParameterError("flow_sign must be +1 or -1");
    }
    if (!(opts.dt > 0.0)) {
        throw ParameterError("time step must be positive");
    }
    params.validate();
    check_stability(grid, params, opts.dt);
}

} // namespace detail

/// Aquifer subject to extraction (or at rest): inward flow, far-field
/// inflow at T_amb, zero radial gradient at the borehole so that T(r0)
/// follows the first cell.
inline AffineSubsystem build_extraction_system(const RadialGrid& grid, const AquiferParams& params,
                                               const Eigen::VectorXd& x_ref, int flow_sign,
                                               const DiscretizationOptions& opts = {}, double built_at = 0.0)
{
    detail::check_inputs(grid, params, x_ref, flow_sign, opts);
    const int nu = grid.nu;
    AffineSubsystem s;
    s.regime = Regime::extraction_or_storage;
    s.built_at = built_at;
    s.A = Eigen::MatrixXd::Zero(nu + 1, nu + 1);
    s.b = Eigen::VectorXd::Zero(nu + 1);
    s.f = Eigen::VectorXd::Zero(nu + 1);
    detail::assemble_cell_rows(grid, params, x_ref, flow_sign, false, opts, s.A, s.b, s.f, 1);
    s.A.row(0) = s.A.row(1);
    s.b[0] = s.b[1];
    s.f[0] = s.f[1];
    return s;
}

/// Aquifer receiving injected water. x_ref[0] is the inflow temperature at
/// the borehole used by the frozen convection term.
inline AffineSubsystem build_injection_system(const RadialGrid& grid, const AquiferParams& params,
                                              const Eigen::VectorXd& x_ref, int flow_sign,
                                              const DiscretizationOptions& opts = {}, double built_at = 0.0)
{
    detail::check_inputs(grid, params, x_ref, flow_sign, opts);
    const int nu = grid.nu;
    AffineSubsystem s;
    s.regime = Regime::injection;
    s.built_at = built_at;
    s.A = Eigen::MatrixXd::Zero(nu, nu + 1);
    s.b = Eigen::VectorXd::Zero(nu);
    s.f = Eigen::VectorXd::Zero(nu);
    detail::assemble_cell_rows(grid, params, x_ref, flow_sign, true, opts, s.A, s.b, s.f, 0);
    return s;
}

} // namespace ates
