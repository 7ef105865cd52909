#pragma once

#include <algorithm>
#include <cmath>

#include "mirrorsim/errors.hpp"

namespace mirrorsim {

/// Memristor parameter record. Defaults follow the Knowm-style device used
/// throughout the shipped netlists: Ron = 500 ohm, Roff = 1500 ohm,
/// update threshold 0.27 V. D, mu_d and p are generic drift-model values.
struct MemristorParams {
    double r_on = 500.0;    ///< ohm, fully-ON resistance
    double r_off = 1500.0;  ///< ohm, fully-OFF resistance
    double r_init = 500.0;  ///< ohm, resistance the device is initialised from
    double d = 10e-9;       ///< m, film thickness
    double mu_d = 1e-14;    ///< m^2/(V*s), dopant drift mobility
    int p = 5;              ///< window sharpness exponent
    double v_t = 0.27;      ///< V, state-update threshold

    bool operator==(const MemristorParams&) const = default;
};

/// Normalised doped-region width x = w/D. x = 1 is the lowest-resistance
/// state (Ron), x = 0 the highest (Roff).
struct MemristorState {
    double x = 1.0;

    bool operator==(const MemristorState&) const = default;
};

/// Square-law NMOS parameter record. Bulk is tied to source. Defaults are
/// generic 180 nm-class values and can be overridden per device.
struct MosfetParams {
    double w = 1e-6;       ///< m, channel width
    double l = 180e-9;     ///< m, drawn channel length
    double lint = 0.0;     ///< m, per-side length reduction
    double vt0 = 0.5;      ///< V, threshold voltage
    double kp = 200e-6;    ///< A/V^2, transconductance parameter
    double lambda = 0.05;  ///< 1/V, channel-length modulation

    double l_eff() const { return l - 2.0 * lint; }

    bool operator==(const MosfetParams&) const = default;
};

/// Branch current plus the partial derivatives the MNA stamps need.
struct DeviceEval {
    double current = 0.0;  ///< A
    double gm = 0.0;       ///< S, d(current)/d(v_gs)
    double gds = 0.0;      ///< S, d(current)/d(v_ds)

    bool operator==(const DeviceEval&) const = default;
};

/// Fraction of metastable switches in the ON state for a device reading
/// r_init: X = Ron (Rinit - Roff) / (Rinit (Ron - Roff)).
inline double mss_on_fraction(const MemristorParams& mp) {
    return mp.r_on * (mp.r_init - mp.r_off) / (mp.r_init * (mp.r_on - mp.r_off));
}

/// Parallel-switch conductance G = x/Ron + (1-x)/Roff.
inline double mss_conductance(double x, const MemristorParams& mp) {
    return x / mp.r_on + (1.0 - x) / mp.r_off;
}

/// Boundary-locking window F(x) = 1 - (2x - 1)^(2p). Zero at both ends,
/// one at x = 0.5; larger p flattens the top and sharpens the edges.
inline double window(double x, int p) {
    const double t = 2.0 * x - 1.0;
    const double t2 = t * t;
    double edge = 1.0;
    for (int k = 0; k < p; ++k) {
        edge *= t2;
    }
    return 1.0 - edge;
}

/// Linear-drift branch resistance R(x) = Ron x + Roff (1 - x). This is the
/// branch law the simulator stamps; it agrees with mss_conductance only at
/// the endpoints x = 0 and x = 1.
inline double memristance(double x, const MemristorParams& mp) {
    return mp.r_on * x + mp.r_off * (1.0 - x);
}

/// Advance the state by one step of the windowed drift law
/// dx/dt = (mu_d Ron / D^2) I F(x), gated by the update threshold:
/// state is frozen while |v| < v_t. The update is odd in the current, so
/// reverse current moves x back down. Result is clamped to [0, 1].
inline MemristorState memristor_step(MemristorState state, double current, double voltage,
                                     double dt, const MemristorParams& mp) {
    if (std::abs(voltage) < mp.v_t) {
        return state;
    }
    const double rate = mp.mu_d * mp.r_on / (mp.d * mp.d);
    const double x = state.x + dt * rate * current * window(state.x, mp.p);
    return {std::clamp(x, 0.0, 1.0)};
}

/// Square-law NMOS evaluation. v_ds < 0 is handled by swapping the roles of
/// source and drain (the device is symmetric), with the derivatives mapped
/// through the chain rule. gm and gds are exact partials of the returned
/// branch law, so finite differences of `current` reproduce them.
inline DeviceEval mosfet_eval(double v_gs, double v_ds, const MosfetParams& mp) {
    if (v_ds < 0.0) {
        const DeviceEval r = mosfet_eval(v_gs - v_ds, -v_ds, mp);
        return {-r.current, -r.gm, r.gm + r.gds};
    }
    const double vov = v_gs - mp.vt0;
    if (vov <= 0.0) {
        return {};  // cutoff
    }
    const double beta = mp.kp * mp.w / mp.l_eff();
    const double clm = 1.0 + mp.lambda * v_ds;
    if (v_ds < vov) {
        // triode
        const double shape = vov * v_ds - 0.5 * v_ds * v_ds;
        return {beta * shape * clm,
                beta * v_ds * clm,
                beta * ((vov - v_ds) * clm + shape * mp.lambda)};
    }
    // saturation
    const double id0 = 0.5 * beta * vov * vov;
    return {id0 * clm, beta * vov * clm, id0 * mp.lambda};
}

} // namespace mirrorsim
