#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "ates/errors.hpp"

namespace ates {

enum class HxMode { heating, cooling };

inline const char* to_string(HxMode m) { return m == HxMode::heating ? "heating" : "cooling"; }

/// Building side of the heat exchanger. T_b_heating is the building-side
/// inlet temperature while the ATES runs in heating mode (u > 0), i.e. the
/// temperature the extracted warm water is cooled towards.
struct HxParams {
    double q_b = 0.1;            ///< [m^3/s]
    double T_b_heating = 274.0;  ///< [K]
    double T_b_cooling = 293.0;  ///< [K]

    [[nodiscard]] double T_b(HxMode mode) const { return mode == HxMode::heating ? T_b_heating : T_b_cooling; }

    void validate() const
    {
        if (!(q_b > 0.0)) {
            throw ParameterError("building-side flow q_b must be > 0");
        }
        if (!(T_b_heating > 0.0 && T_b_cooling > 0.0) || !std::isfinite(T_b_heating) ||
            !std::isfinite(T_b_cooling)) {
            throw ParameterError("building-side temperatures must be finite and > 0 K");
        }
    }
};

/// Outlet temperature of an idealized cocurrent exchanger: the ATES stream
/// leaves at the flow-weighted mix of its inlet and the building inlet.
inline double hx_outlet_temp(double T_in, double u, double q_b, double T_b)
{
    if (!(q_b > 0.0)) {
        throw ParameterError("building-side flow q_b must be > 0");
    }
    const double w = q_b / (q_b + std::abs(u));
    return w * (T_b - T_in) + T_in;
}

/// Affine surrogate out ~ a T_in + b u + f, exact at the expansion point.
struct HxLinearization {
    double a = 0.0;
    double b = 0.0;
    double f = 0.0;
    HxMode mode = HxMode::heating;
    double T_in_ref = 0.0;
    double u_ref = 0.0;
    double T_b = 0.0;

    [[nodiscard]] double evaluate(double T_in, double u) const { return a * T_in + b * u + f; }

    /// Affine value clamped to the physically reachable range between the
    /// inlet and the building temperature.
    [[nodiscard]] double evaluate_clamped(double T_in, double u) const
    {
        const double lo = std::min(T_in, T_b);
        const double hi = std::max(T_in, T_b);
        return std::clamp(evaluate(T_in, u), lo, hi);
    }
};

inline HxLinearization linearize_hx(double T_in_ref, double u_ref, const HxParams& params, HxMode mode)
{
    params.validate();
    if ((mode == HxMode::heating && u_ref < 0.0) || (mode == HxMode::cooling && u_ref > 0.0)) {
        throw ModeMismatchError(std::string("expansion flow ") + std::to_string(u_ref) + " contradicts " +
                                to_string(mode) + " mode");
    }
    const double q_b = params.q_b;
    const double T_b = params.T_b(mode);
    const double s = mode == HxMode::heating ? 1.0 : -1.0; // |u| = s u on the mode's half-line
    const double m = q_b + std::abs(u_ref);

    HxLinearization lin;
    lin.mode = mode;
    lin.T_in_ref = T_in_ref;
    lin.u_ref = u_ref;
    lin.T_b = T_b;
    lin.a = std::abs(u_ref) / m;
    lin.b = -s * q_b * (T_b - T_in_ref) / (m * m);
    lin.f = hx_outlet_temp(T_in_ref, u_ref, q_b, T_b) - lin.a * T_in_ref - lin.b * u_ref;
    return lin;
}

} // namespace ates
