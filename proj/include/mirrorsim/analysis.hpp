#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mirrorsim/engine.hpp"
#include "mirrorsim/errors.hpp"
#include "mirrorsim/netlist.hpp"

namespace mirrorsim {

struct THDReport {
    double fundamental_hz = 0.0;
    std::vector<double> harmonic_magnitudes;  // |c_k| for k = 1..K
    double thd_percent = 0.0;
    int first_period_index = 0;   // periods discarded as warmup
    int period_count = 0;         // periods inside the analysis window
    int samples_per_period = 0;
};

struct HParams {
    double h11 = 0.0;  // ohm
    double h12 = 0.0;  // dimensionless
    double h21 = 0.0;  // dimensionless
    double h22 = 0.0;  // S
};

/// Small-signal quantities of a mirror bias point, the inputs of the
/// analytic h-parameter formulas.
struct SmallSignalView {
    double gm1 = 0.0;    // S, input device
    double gm2 = 0.0;    // S, output device
    double ro2 = 0.0;    // ohm, output device 1/gds (may be +inf)
    double r_mem1 = 0.0; // ohm, series memristance on the input side
    double r_mem2 = 0.0; // ohm, series memristance on the output side
    double n = 1.0;      // geometry ratio (W/L_eff)2 / (W/L_eff)1
};

struct FitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Rectangular-window Fourier coefficients over an exact integer number of
/// fundamental periods. Returns c_0..c_K where c_0 is the mean and, for
/// k >= 1, c_k = (2/M) sum w[m] exp(-j 2 pi k f0 t[m]). A single tone of
/// amplitude A therefore yields |c_1| = A.
inline std::vector<std::complex<double>> fourier_coefficients(std::span<const double> waveform,
                                                              std::span<const double> time,
                                                              double fundamental_hz,
                                                              int n_harmonics) {
    const std::size_t m = waveform.size();
    if (m != time.size()) throw AnalysisError("waveform/time length mismatch");
    if (m < 2) throw AnalysisError("analysis window too short");
    if (!(fundamental_hz > 0.0)) throw AnalysisError("fundamental frequency must be > 0");
    if (n_harmonics < 1) throw AnalysisError("need at least one harmonic");

    const double dt = time[1] - time[0];
    if (!(dt > 0.0)) throw AnalysisError("time vector must be strictly increasing");
    for (std::size_t i = 1; i + 1 < m; ++i) {
        if (std::abs((time[i + 1] - time[i]) - dt) > 1e-9 * dt) {
            throw AnalysisError("non-uniform sampling in analysis window");
        }
    }
    const double periods = static_cast<double>(m) * dt * fundamental_hz;
    if (std::abs(periods - std::round(periods)) > 1e-6 * std::max(1.0, periods) ||
        std::round(periods) < 1.0) {
        throw AnalysisError("analysis window does not span an integer period count (" +
                            format_value(periods) + " periods)");
    }

    std::vector<std::complex<double>> coeffs(static_cast<std::size_t>(n_harmonics) + 1);
    for (int k = 0; k <= n_harmonics; ++k) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(k) * fundamental_hz;
        double re = 0.0;
        double im = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double phase = w * time[i];
            re += waveform[i] * std::cos(phase);
            im -= waveform[i] * std::sin(phase);
        }
        const double scale = (k == 0 ? 1.0 : 2.0) / static_cast<double>(m);
        coeffs[static_cast<std::size_t>(k)] = {re * scale, im * scale};
    }
    return coeffs;
}

/// THD% = 100 sqrt(sum_{k>=2} |c_k|^2) / |c_1|.
inline double thd(const std::vector<std::complex<double>>& coefficients) {
    if (coefficients.size() < 3) throw AnalysisError("THD needs at least two harmonics");
    double largest = 0.0;
    for (std::size_t k = 1; k < coefficients.size(); ++k) {
        largest = std::max(largest, std::abs(coefficients[k]));
    }
    const double fundamental = std::abs(coefficients[1]);
    if (fundamental < 1e-15 * largest || largest == 0.0) {
        throw AnalysisError("THD undefined: no fundamental component");
    }
    double sum = 0.0;
    for (std::size_t k = 2; k < coefficients.size(); ++k) {
        sum += std::norm(coefficients[k]);
    }
    return 100.0 * std::sqrt(sum) / fundamental;
}

/// THD of one observable of a fixed-step transient. The first
/// `warmup_periods` of the waveform are discarded, the next
/// `analysis_periods` form the rectangular window.
inline THDReport measure_thd(const Waveforms& waveforms, const std::string& observable,
                             double fundamental_hz, int n_harmonics, int points_per_period,
                             int warmup_periods, int analysis_periods) {
    if (warmup_periods < 0 || analysis_periods < 1 || points_per_period < 2) {
        throw AnalysisError("bad THD window request");
    }
    const auto& signal = waveform_signal(waveforms, observable);
    const std::size_t first = static_cast<std::size_t>(warmup_periods) *
                              static_cast<std::size_t>(points_per_period);
    const std::size_t count = static_cast<std::size_t>(analysis_periods) *
                              static_cast<std::size_t>(points_per_period);
    if (first + count > signal.size()) {
        throw AnalysisError("waveform shorter than the requested THD window");
    }
    const auto coeffs = fourier_coefficients(
        std::span<const double>(signal).subspan(first, count),
        std::span<const double>(waveforms.time).subspan(first, count), fundamental_hz,
        n_harmonics);
    THDReport report;
    report.fundamental_hz = fundamental_hz;
    for (std::size_t k = 1; k < coeffs.size(); ++k) {
        report.harmonic_magnitudes.push_back(std::abs(coeffs[k]));
    }
    report.thd_percent = thd(coeffs);
    report.first_period_index = warmup_periods;
    report.period_count = analysis_periods;
    report.samples_per_period = points_per_period;
    return report;
}

/// Numeric two-port h-parameters around the DC operating point. Ports are
/// the named bias voltage sources. Each source is perturbed by +-1e-6
/// relative and re-solved; the resulting y-matrix is converted to h-form,
/// which realises the defining conditions (v2 held, i1 held) exactly.
inline HParams extract_hparams_numeric(const Circuit& circuit, const std::string& input_source,
                                       const std::string& output_source) {
    const Device* in_dev = circuit.find_device(input_source);
    const Device* out_dev = circuit.find_device(output_source);
    if (!in_dev || in_dev->kind != DeviceKind::vsource || !out_dev ||
        out_dev->kind != DeviceKind::vsource) {
        throw AnalysisError("h-parameter ports must be voltage sources");
    }
    if (in_dev->source().shape != SourceWaveform::Shape::dc ||
        out_dev->source().shape != SourceWaveform::Shape::dc) {
        throw AnalysisError("h-parameter ports must be DC sources");
    }

    const OperatingPoint base = solve_dc(circuit);
    const double v1 = in_dev->source().level;
    const double v2 = out_dev->source().level;
    const double d1 = 1e-6 * (v1 != 0.0 ? std::abs(v1) : 1.0);
    const double d2 = 1e-6 * (v2 != 0.0 ? std::abs(v2) : 1.0);

    // port current flows from the source into the circuit node
    auto port_currents = [&](double level1, double level2) {
        Circuit work = circuit;
        set_device_param(work, input_source, "dc", level1);
        set_device_param(work, output_source, "dc", level2);
        const OperatingPoint op = solve_dc(work, &base);
        return std::pair{-op.branch_currents.at(in_dev->name),
                         -op.branch_currents.at(out_dev->name)};
    };

    const auto [i1_p, i2_p] = port_currents(v1 + d1, v2);
    const auto [i1_m, i2_m] = port_currents(v1 - d1, v2);
    const auto [i1_q, i2_q] = port_currents(v1, v2 + d2);
    const auto [i1_r, i2_r] = port_currents(v1, v2 - d2);

    const double y11 = (i1_p - i1_m) / (2.0 * d1);
    const double y21 = (i2_p - i2_m) / (2.0 * d1);
    const double y12 = (i1_q - i1_r) / (2.0 * d2);
    const double y22 = (i2_q - i2_r) / (2.0 * d2);
    if (y11 == 0.0) throw AnalysisError("input port draws no current; h-parameters undefined");

    HParams h;
    h.h11 = 1.0 / y11;
    h.h12 = -y12 / y11;
    h.h21 = y21 / y11;
    h.h22 = y22 - y21 * y12 / y11;
    return h;
}

/// First-order mirror formulas: (1/gm1, 0, gm2/gm1, 1/ro2); a series
/// memristor adds r_mem1 to the input resistance and r_mem2 to the output
/// resistance, reported as h22 = 1/(ro2 + r_mem2).
inline HParams analytic_hparams(const SmallSignalView& view, bool with_memristor) {
    if (!(view.gm1 > 0.0)) {
        throw AnalysisError("analytic h-parameters need gm1 > 0 (device in saturation)");
    }
    HParams h;
    h.h12 = 0.0;
    h.h21 = view.gm2 / view.gm1;
    if (with_memristor) {
        h.h11 = 1.0 / view.gm1 + view.r_mem1;
        h.h22 = 1.0 / (view.ro2 + view.r_mem2);
    } else {
        h.h11 = 1.0 / view.gm1;
        h.h22 = 1.0 / view.ro2;
    }
    return h;
}

/// Collect the small-signal view of a mirror operating point. Memristor
/// names may be empty when the circuit has no series devices.
inline SmallSignalView small_signal_view(const Circuit& circuit, const OperatingPoint& op,
                                         const std::string& m1, const std::string& m2,
                                         const std::string& mem1 = "",
                                         const std::string& mem2 = "") {
    const Device* d1 = circuit.find_device(m1);
    const Device* d2 = circuit.find_device(m2);
    if (!d1 || !d2 || d1->kind != DeviceKind::nmos || d2->kind != DeviceKind::nmos) {
        throw AnalysisError("small_signal_view needs two nmos devices");
    }
    SmallSignalView view;
    const SmallSignal s1 = op.device_small_signal.at(d1->name);
    const SmallSignal s2 = op.device_small_signal.at(d2->name);
    view.gm1 = s1.gm;
    view.gm2 = s2.gm;
    view.ro2 = s2.gds > 0.0 ? 1.0 / s2.gds : std::numeric_limits<double>::infinity();
    view.n = (d2->mosfet().w / d2->mosfet().l_eff()) / (d1->mosfet().w / d1->mosfet().l_eff());
    if (!mem1.empty()) view.r_mem1 = op.memristor_resistance.at(circuit.find_device(mem1)->name);
    if (!mem2.empty()) view.r_mem2 = op.memristor_resistance.at(circuit.find_device(mem2)->name);
    return view;
}

/// Ordinary least squares. A zero-variance y is reported as a perfect fit
/// (slope 0, r^2 = 1).
inline FitResult linear_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw AnalysisError("linear_fit: length mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw AnalysisError("linear_fit needs at least 3 points");

    double mean_x = 0.0;
    double mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_x += x[i];
        mean_y += y[i];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);

    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mean_x;
        const double dy = y[i] - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw AnalysisError("linear_fit: degenerate x (all values equal)");

    FitResult fit;
    fit.slope = sxy / sxx;
    fit.intercept = mean_y - fit.slope * mean_x;
    if (syy == 0.0) {
        fit.r_squared = 1.0;
        return fit;
    }
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - (fit.intercept + fit.slope * x[i]);
        ss_res += e * e;
    }
    fit.r_squared = 1.0 - ss_res / syy;
    return fit;
}

} // namespace mirrorsim
