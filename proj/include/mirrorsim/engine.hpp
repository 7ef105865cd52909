#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mirrorsim/devices.hpp"
#include "mirrorsim/errors.hpp"
#include "mirrorsim/linalg.hpp"
#include "mirrorsim/netlist.hpp"

namespace mirrorsim {

inline constexpr double kNewtonVoltageTol = 1e-9;  // V, max |dv| between iterations
inline constexpr double kNewtonCurrentTol = 1e-9;  // A, max KCL residual
inline constexpr int kNewtonMaxIterations = 100;

struct SmallSignal {
    double gm = 0.0;   // S
    double gds = 0.0;  // S
    bool operator==(const SmallSignal&) const = default;
};

/// Converged bias solution. Branch currents use the device's own reference
/// direction: first terminal to second through the element (drain to source
/// for transistors, plus terminal through the source for V sources).
struct OperatingPoint {
    std::map<std::string, double> node_voltages;
    std::map<std::string, double> branch_currents;
    std::map<std::string, SmallSignal> device_small_signal;  // nmos only
    std::map<std::string, double> memristor_x;
    std::map<std::string, double> memristor_resistance;  // R(x) stamped at the solution
};

/// Linearized MNA system: (node count - 1) KCL rows followed by one branch
/// row per voltage source.
struct SystemMatrix {
    Matrix a;
    std::vector<double> rhs;
    std::vector<std::string> node_order;    // non-ground nodes, row order
    std::vector<std::string> branch_order;  // voltage sources, row order

    std::size_t dimension() const { return rhs.size(); }
};

struct Waveforms {
    std::vector<double> time;
    std::map<std::string, std::vector<double>> signals;           // "v(node)", "i(device)"
    std::map<std::string, std::vector<double>> memristor_states;  // device -> x(t)
};

struct SweepResult {
    std::vector<double> param_values;
    std::map<std::string, std::vector<double>> observables;
    std::string param_path;
};

/// Look a signal up by observable name: "v(node)", "i(device)" or a bare
/// node name. Matching is case-insensitive on the inner name.
inline const std::vector<double>& waveform_signal(const Waveforms& w, std::string_view observable) {
    std::string key(observable);
    if (key.find('(') == std::string::npos) {
        key = "v(" + key + ")";
    }
    if (const auto it = w.signals.find(key); it != w.signals.end()) {
        return it->second;
    }
    for (const auto& [name, samples] : w.signals) {
        if (iequals(name, key)) return samples;
    }
    throw AnalysisError("unknown observable '" + std::string(observable) + "'");
}

namespace detail {

struct SolveOptions {
    bool transient = false;
    bool backward_euler = false;
    double time = 0.0;
    double dt = 0.0;
    double gmin = 0.0;
    double source_scale = 1.0;
};

struct NewtonStats {
    int iterations = 0;
    double max_delta = 0.0;
    double max_residual = 0.0;
    std::string singular;  // message of the last singular solve, if any
};

class Solver {
public:
    explicit Solver(const Circuit& circuit) : circuit_(&circuit) {
        for (const auto& d : circuit.devices) {
            for (const auto& t : d.terminals) {
                if (t != "0" && !node_index_.contains(t)) {
                    node_index_.emplace(t, node_order_.size());
                    node_order_.push_back(t);
                }
            }
        }
        const std::size_t n_devices = circuit.devices.size();
        branch_row_.assign(n_devices, SIZE_MAX);
        for (std::size_t i = 0; i < n_devices; ++i) {
            if (circuit.devices[i].kind == DeviceKind::vsource) {
                branch_row_[i] = node_order_.size() + branch_order_.size();
                branch_order_.push_back(circuit.devices[i].name);
            }
        }
        mem_x_.assign(n_devices, 0.0);
        cap_v_old_.assign(n_devices, 0.0);
        cap_i_old_.assign(n_devices, 0.0);
        for (std::size_t i = 0; i < n_devices; ++i) {
            const auto& d = circuit.devices[i];
            if (d.kind == DeviceKind::memristor) {
                mem_x_[i] = std::clamp(mss_on_fraction(d.memristor()), 0.0, 1.0);
            }
        }
    }

    std::size_t dimension() const { return node_order_.size() + branch_order_.size(); }
    const std::vector<std::string>& node_order() const { return node_order_; }
    const std::vector<std::string>& branch_order() const { return branch_order_; }

    void set_memristor_x(std::string_view device, double x) {
        for (std::size_t i = 0; i < circuit_->devices.size(); ++i) {
            if (iequals(circuit_->devices[i].name, device)) {
                mem_x_[i] = x;
                return;
            }
        }
        throw ValidationError("unknown memristor '" + std::string(device) + "'");
    }

    int node_of(const std::string& name) const {
        if (name == "0") return -1;
        return static_cast<int>(node_index_.at(name));
    }

    double voltage(int idx, const std::vector<double>& x) const {
        return idx < 0 ? 0.0 : x[static_cast<std::size_t>(idx)];
    }

    void assemble(const std::vector<double>& x, const SolveOptions& o, Matrix& a,
                  std::vector<double>& b) const {
        const std::size_t n = dimension();
        a.resize_zero(n, n);
        b.assign(n, 0.0);
        auto stamp = [&a](int i, int j, double v) {
            if (i >= 0 && j >= 0) a(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) += v;
        };
        auto inject = [&b](int i, double v) {
            if (i >= 0) b[static_cast<std::size_t>(i)] += v;
        };
        auto stamp_conductance = [&](int na, int nb, double g) {
            stamp(na, na, g);
            stamp(nb, nb, g);
            stamp(na, nb, -g);
            stamp(nb, na, -g);
        };

        for (std::size_t i = 0; i < circuit_->devices.size(); ++i) {
            const auto& d = circuit_->devices[i];
            switch (d.kind) {
                case DeviceKind::resistor: {
                    const int na = node_of(d.terminals[0]);
                    const int nb = node_of(d.terminals[1]);
                    stamp_conductance(na, nb, 1.0 / d.resistor().resistance);
                    break;
                }
                case DeviceKind::memristor: {
                    const int na = node_of(d.terminals[0]);
                    const int nb = node_of(d.terminals[1]);
                    stamp_conductance(na, nb, 1.0 / memristance(mem_x_[i], d.memristor()));
                    break;
                }
                case DeviceKind::capacitor: {
                    if (!o.transient) break;  // open at DC
                    const int na = node_of(d.terminals[0]);
                    const int nb = node_of(d.terminals[1]);
                    const double c = d.capacitor().capacitance;
                    const double geq = (o.backward_euler ? 1.0 : 2.0) * c / o.dt;
                    const double hist = geq * cap_v_old_[i] + (o.backward_euler ? 0.0 : cap_i_old_[i]);
                    stamp_conductance(na, nb, geq);
                    inject(na, hist);
                    inject(nb, -hist);
                    break;
                }
                case DeviceKind::vsource: {
                    const int np = node_of(d.terminals[0]);
                    const int nn = node_of(d.terminals[1]);
                    const int row = static_cast<int>(branch_row_[i]);
                    stamp(np, row, 1.0);
                    stamp(nn, row, -1.0);
                    stamp(row, np, 1.0);
                    stamp(row, nn, -1.0);
                    const auto& s = d.source();
                    b[static_cast<std::size_t>(row)] =
                        o.source_scale * (o.transient ? s.value(o.time) : s.dc_value());
                    break;
                }
                case DeviceKind::isource: {
                    const int na = node_of(d.terminals[0]);
                    const int nb = node_of(d.terminals[1]);
                    const auto& s = d.source();
                    const double cur =
                        o.source_scale * (o.transient ? s.value(o.time) : s.dc_value());
                    inject(na, -cur);
                    inject(nb, cur);
                    break;
                }
                case DeviceKind::nmos: {
                    const int nd = node_of(d.terminals[0]);
                    const int ng = node_of(d.terminals[1]);
                    const int ns = node_of(d.terminals[2]);
                    const double vgs = voltage(ng, x) - voltage(ns, x);
                    const double vds = voltage(nd, x) - voltage(ns, x);
                    const DeviceEval e = mosfet_eval(vgs, vds, d.mosfet());
                    const double ieq = e.current - e.gm * vgs - e.gds * vds;
                    stamp(nd, ng, e.gm);
                    stamp(nd, nd, e.gds);
                    stamp(nd, ns, -(e.gm + e.gds));
                    stamp(ns, ng, -e.gm);
                    stamp(ns, nd, -e.gds);
                    stamp(ns, ns, e.gm + e.gds);
                    inject(nd, -ieq);
                    inject(ns, ieq);
                    break;
                }
            }
        }
        if (o.gmin > 0.0) {
            for (std::size_t k = 0; k < node_order_.size(); ++k) a(k, k) += o.gmin;
        }
    }

    /// Current through device i from its first terminal to its second
    /// (drain to source for nmos), evaluated at x.
    double branch_current(std::size_t i, const std::vector<double>& x,
                          const SolveOptions& o) const {
        const auto& d = circuit_->devices[i];
        switch (d.kind) {
            case DeviceKind::resistor: {
                const double vab = voltage(node_of(d.terminals[0]), x) -
                                   voltage(node_of(d.terminals[1]), x);
                return vab / d.resistor().resistance;
            }
            case DeviceKind::memristor: {
                const double vab = voltage(node_of(d.terminals[0]), x) -
                                   voltage(node_of(d.terminals[1]), x);
                return vab / memristance(mem_x_[i], d.memristor());
            }
            case DeviceKind::capacitor: {
                if (!o.transient) return 0.0;
                const double vab = voltage(node_of(d.terminals[0]), x) -
                                   voltage(node_of(d.terminals[1]), x);
                const double c = d.capacitor().capacitance;
                const double geq = (o.backward_euler ? 1.0 : 2.0) * c / o.dt;
                return geq * (vab - cap_v_old_[i]) - (o.backward_euler ? 0.0 : cap_i_old_[i]);
            }
            case DeviceKind::vsource:
                return x[branch_row_[i]];
            case DeviceKind::isource:
                return o.source_scale * (o.transient ? d.source().value(o.time) : d.source().dc_value());
            case DeviceKind::nmos: {
                const double vgs = voltage(node_of(d.terminals[1]), x) -
                                   voltage(node_of(d.terminals[2]), x);
                const double vds = voltage(node_of(d.terminals[0]), x) -
                                   voltage(node_of(d.terminals[2]), x);
                return mosfet_eval(vgs, vds, d.mosfet()).current;
            }
        }
        return 0.0;
    }

    /// KCL residual per non-ground node, with true (non-linearized) currents.
    std::vector<double> kcl_residual(const std::vector<double>& x, const SolveOptions& o) const {
        std::vector<double> r(node_order_.size(), 0.0);
        auto add = [&r](int node, double v) {
            if (node >= 0) r[static_cast<std::size_t>(node)] += v;
        };
        for (std::size_t i = 0; i < circuit_->devices.size(); ++i) {
            const auto& d = circuit_->devices[i];
            const double cur = branch_current(i, x, o);
            if (d.kind == DeviceKind::nmos) {
                add(node_of(d.terminals[0]), cur);
                add(node_of(d.terminals[2]), -cur);
            } else {
                add(node_of(d.terminals[0]), cur);
                add(node_of(d.terminals[1]), -cur);
            }
        }
        if (o.gmin > 0.0) {
            for (std::size_t k = 0; k < node_order_.size(); ++k) r[k] += o.gmin * x[k];
        }
        return r;
    }

    bool newton(std::vector<double>& x, const SolveOptions& o, NewtonStats& stats,
                int max_iterations = kNewtonMaxIterations) const {
        Matrix a;
        std::vector<double> b;
        for (int it = 1; it <= max_iterations; ++it) {
            assemble(x, o, a, b);
            std::vector<double> xn;
            try {
                xn = solve_dense(std::move(a), std::move(b));
            } catch (const SingularMatrixError& e) {
                stats.singular = e.what();
                return false;
            }
            double delta = 0.0;
            for (std::size_t k = 0; k < xn.size(); ++k) {
                delta = std::max(delta, std::abs(xn[k] - x[k]));
            }
            x = std::move(xn);
            double residual = 0.0;
            for (const double v : kcl_residual(x, o)) residual = std::max(residual, std::abs(v));
            stats.iterations = it;
            stats.max_delta = delta;
            stats.max_residual = residual;
            if (delta < kNewtonVoltageTol && residual < kNewtonCurrentTol) {
                stats.singular.clear();
                return true;
            }
        }
        return false;
    }

    /// Newton with the fallback ladder: plain, then gmin stepping
    /// (1e-3 S down to 1e-12 S in decades), then source stepping 0 -> 1.
    /// A circuit left structurally singular by cutoff devices is accepted at
    /// the 1e-12 S gmin floor when that solution already meets the true KCL
    /// tolerance with the gmin removed.
    std::vector<double> solve_dc_vector(std::vector<double> x0, bool allow_source_stepping = true,
                                        SolveOptions base = {}) const {
        NewtonStats stats;
        std::vector<double> x = x0;
        SolveOptions o = base;
        if (newton(x, o, stats)) return x;

        x = x0;
        bool ladder_ok = true;
        for (double g = 1e-3; g > 0.5e-12; g /= 10.0) {
            o.gmin = g;
            if (!newton(x, o, stats)) {
                ladder_ok = false;
                break;
            }
        }
        if (ladder_ok) {
            const std::vector<double> floor_solution = x;
            o.gmin = 0.0;
            if (newton(x, o, stats)) return x;
            double residual = 0.0;
            for (const double v : kcl_residual(floor_solution, o)) {
                residual = std::max(residual, std::abs(v));
            }
            if (residual < kNewtonCurrentTol) return floor_solution;
        }

        if (allow_source_stepping) {
            x.assign(dimension(), 0.0);
            o = base;
            bool stepping_ok = true;
            for (int s = 1; s <= 10; ++s) {
                o.source_scale = base.source_scale * (static_cast<double>(s) / 10.0);
                if (!newton(x, o, stats)) {
                    stepping_ok = false;
                    break;
                }
            }
            if (stepping_ok) return x;
        }
        if (!stats.singular.empty()) {
            throw SingularMatrixError(stats.singular);
        }
        throw ConvergenceError(
            "Newton did not converge (last residual " + format_value(stats.max_residual) +
            " A, last delta " + format_value(stats.max_delta) + " V after " +
            std::to_string(stats.iterations) + " iterations)");
    }

    void init_cap_state(const std::vector<double>& x) {
        for (std::size_t i = 0; i < circuit_->devices.size(); ++i) {
            const auto& d = circuit_->devices[i];
            if (d.kind != DeviceKind::capacitor) continue;
            cap_v_old_[i] = voltage(node_of(d.terminals[0]), x) -
                            voltage(node_of(d.terminals[1]), x);
            cap_i_old_[i] = 0.0;
        }
    }

    void update_states(const std::vector<double>& x, const SolveOptions& o) {
        for (std::size_t i = 0; i < circuit_->devices.size(); ++i) {
            const auto& d = circuit_->devices[i];
            if (d.kind == DeviceKind::capacitor) {
                const double cur = branch_current(i, x, o);
                cap_v_old_[i] = voltage(node_of(d.terminals[0]), x) -
                                voltage(node_of(d.terminals[1]), x);
                cap_i_old_[i] = cur;
            } else if (d.kind == DeviceKind::memristor) {
                const double vab = voltage(node_of(d.terminals[0]), x) -
                                   voltage(node_of(d.terminals[1]), x);
                const double cur = vab / memristance(mem_x_[i], d.memristor());
                mem_x_[i] = memristor_step({mem_x_[i]}, cur, vab, o.dt, d.memristor()).x;
            }
        }
    }

    OperatingPoint make_operating_point(const std::vector<double>& x,
                                        const SolveOptions& o) const {
        OperatingPoint op;
        op.node_voltages["0"] = 0.0;
        for (std::size_t k = 0; k < node_order_.size(); ++k) {
            op.node_voltages[node_order_[k]] = x[k];
        }
        for (std::size_t i = 0; i < circuit_->devices.size(); ++i) {
            const auto& d = circuit_->devices[i];
            op.branch_currents[d.name] = branch_current(i, x, o);
            if (d.kind == DeviceKind::nmos) {
                const double vgs = voltage(node_of(d.terminals[1]), x) -
                                   voltage(node_of(d.terminals[2]), x);
                const double vds = voltage(node_of(d.terminals[0]), x) -
                                   voltage(node_of(d.terminals[2]), x);
                const DeviceEval e = mosfet_eval(vgs, vds, d.mosfet());
                op.device_small_signal[d.name] = {e.gm, e.gds};
            } else if (d.kind == DeviceKind::memristor) {
                op.memristor_x[d.name] = mem_x_[i];
                op.memristor_resistance[d.name] = memristance(mem_x_[i], d.memristor());
            }
        }
        return op;
    }

    std::vector<double> vector_from_guess(const OperatingPoint& guess) const {
        std::vector<double> x(dimension(), 0.0);
        for (std::size_t k = 0; k < node_order_.size(); ++k) {
            if (const auto it = guess.node_voltages.find(node_order_[k]);
                it != guess.node_voltages.end()) {
                x[k] = it->second;
            }
        }
        for (std::size_t i = 0; i < circuit_->devices.size(); ++i) {
            if (branch_row_[i] == SIZE_MAX) continue;
            if (const auto it = guess.branch_currents.find(circuit_->devices[i].name);
                it != guess.branch_currents.end()) {
                x[branch_row_[i]] = it->second;
            }
        }
        return x;
    }

    const Circuit& circuit() const { return *circuit_; }
    double memristor_x_of(std::size_t device_index) const { return mem_x_[device_index]; }

private:
    const Circuit* circuit_;
    std::vector<std::string> node_order_;
    std::unordered_map<std::string, std::size_t> node_index_;
    std::vector<std::string> branch_order_;
    std::vector<std::size_t> branch_row_;  // per device; SIZE_MAX if none
    std::vector<double> mem_x_;
    std::vector<double> cap_v_old_;
    std::vector<double> cap_i_old_;
};

} // namespace detail

/// Build the linearized MNA system at a candidate operating point. Memristors
/// are stamped as resistors of value R(x): x comes from `memristor_x` when
/// present, otherwise from the device's own r_init.
inline SystemMatrix assemble_mna(const Circuit& circuit, const OperatingPoint& guess = {},
                                 const std::map<std::string, double>& memristor_x = {}) {
    detail::Solver solver(circuit);
    for (const auto& [name, x] : memristor_x) solver.set_memristor_x(name, x);
    const std::vector<double> x = solver.vector_from_guess(guess);
    SystemMatrix sys;
    sys.node_order = solver.node_order();
    sys.branch_order = solver.branch_order();
    solver.assemble(x, detail::SolveOptions{}, sys.a, sys.rhs);
    return sys;
}

/// Newton-Raphson DC operating point with gmin and source stepping fallbacks.
inline OperatingPoint solve_dc(const Circuit& circuit,
                               const OperatingPoint* initial_guess = nullptr) {
    detail::Solver solver(circuit);
    std::vector<double> x0(solver.dimension(), 0.0);
    if (initial_guess) x0 = solver.vector_from_guess(*initial_guess);
    try {
        const std::vector<double> x = solver.solve_dc_vector(std::move(x0));
        return solver.make_operating_point(x, detail::SolveOptions{});
    } catch (const ConvergenceError& e) {
        throw ConvergenceError("DC operating point: " + std::string(e.what()));
    }
}

namespace detail {

inline std::size_t sweep_point_count(const DcSweepDirective& dir) {
    if (dir.step == 0.0) throw ValidationError(".dc step must be nonzero");
    const double ratio = (dir.stop - dir.start) / dir.step;
    if (ratio < 0.0) throw ValidationError(".dc step direction does not reach stop");
    const double rounded = std::round(ratio);
    const double count = std::abs(ratio - rounded) < 1e-6 * std::max(1.0, std::abs(ratio))
                             ? rounded
                             : std::floor(ratio);
    return static_cast<std::size_t>(count) + 1;
}

} // namespace detail

/// One DC solve per sweep point; each solution seeds the next (continuation).
/// Records every node voltage and branch current; when devices named M1 and
/// M2 exist, I_ref / I_out / I_delta columns are added for mirror studies.
inline SweepResult dc_sweep(const Circuit& circuit, const DcSweepDirective& dir) {
    const std::size_t n_points = detail::sweep_point_count(dir);
    SweepResult result;
    result.param_path = dir.device + "." + dir.param;

    Circuit work = circuit;
    const bool mirror = work.find_device("M1") != nullptr && work.find_device("M2") != nullptr;
    std::optional<OperatingPoint> previous;
    for (std::size_t k = 0; k < n_points; ++k) {
        const double value = dir.start + static_cast<double>(k) * dir.step;
        set_device_param(work, dir.device, dir.param, value);
        OperatingPoint op;
        try {
            op = solve_dc(work, previous ? &*previous : nullptr);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError("sweep " + result.param_path + " failed at " +
                                   format_value(value) + ": " + e.what());
        }
        result.param_values.push_back(value);
        for (const auto& [node, v] : op.node_voltages) {
            if (node != "0") result.observables["v(" + node + ")"].push_back(v);
        }
        for (const auto& [dev, i] : op.branch_currents) {
            result.observables["i(" + dev + ")"].push_back(i);
        }
        if (mirror) {
            const double i_ref = op.branch_currents.at(work.find_device("M1")->name);
            const double i_out = op.branch_currents.at(work.find_device("M2")->name);
            result.observables["I_ref"].push_back(i_ref);
            result.observables["I_out"].push_back(i_out);
            result.observables["I_delta"].push_back(i_out - i_ref);
        }
        previous = std::move(op);
    }
    return result;
}

/// Fixed-step transient analysis. With one sine source in the circuit the
/// step is locked to 1/(f0 * ppp) and tstop must equal periods/f0, keeping
/// the Fourier window identical at every frequency. Integration is
/// trapezoidal with a backward-Euler start; memristor state advances once
/// per accepted step from that step's converged branch current and voltage.
inline Waveforms transient(const Circuit& circuit, const TranDirective& dir) {
    detail::Solver solver(circuit);

    const Device* sine = nullptr;
    for (const auto& d : circuit.devices) {
        if ((d.kind == DeviceKind::vsource || d.kind == DeviceKind::isource) &&
            d.source().shape == SourceWaveform::Shape::sine) {
            if (sine != nullptr) {
                throw ValidationError("transient requires exactly one sine source; found several");
            }
            sine = &d;
        }
    }

    if (dir.tstop <= 0.0 || dir.points_per_period < 2 || dir.periods < 1) {
        throw ValidationError("bad .tran parameters");
    }
    double dt = 0.0;
    const std::size_t n_steps =
        static_cast<std::size_t>(dir.points_per_period) * static_cast<std::size_t>(dir.periods);
    if (sine) {
        const double f0 = sine->source().frequency;
        const double expected_tstop = static_cast<double>(dir.periods) / f0;
        if (std::abs(dir.tstop - expected_tstop) > 1e-6 * expected_tstop) {
            throw ValidationError(".tran tstop must equal periods/f0 = " +
                                  format_value(expected_tstop) + " s for the sine at " +
                                  format_value(f0) + " Hz");
        }
        dt = 1.0 / (f0 * static_cast<double>(dir.points_per_period));
    } else {
        dt = dir.tstop / static_cast<double>(n_steps);
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw ValidationError("transient step underflow (dt = " + format_value(dt) + ")");
    }
    if (n_steps > 50'000'000) {
        throw ValidationError("transient step count too large");
    }

    detail::SolveOptions opts;
    opts.transient = true;
    opts.dt = dt;

    std::vector<double> x(solver.dimension(), 0.0);
    if (!dir.uic) {
        x = solver.solve_dc_vector(std::vector<double>(solver.dimension(), 0.0));
    }
    solver.init_cap_state(x);

    Waveforms w;
    w.time.reserve(n_steps + 1);
    auto record = [&](double t, const std::vector<double>& xs, const detail::SolveOptions& o) {
        w.time.push_back(t);
        for (std::size_t k = 0; k < solver.node_order().size(); ++k) {
            w.signals["v(" + solver.node_order()[k] + ")"].push_back(xs[k]);
        }
        for (std::size_t i = 0; i < circuit.devices.size(); ++i) {
            const auto& d = circuit.devices[i];
            w.signals["i(" + d.name + ")"].push_back(solver.branch_current(i, xs, o));
            if (d.kind == DeviceKind::memristor) {
                w.memristor_states[d.name].push_back(solver.memristor_x_of(i));
            }
        }
    };

    opts.time = 0.0;
    record(0.0, x, opts);

    for (std::size_t step = 1; step <= n_steps; ++step) {
        opts.time = static_cast<double>(step) * dt;
        opts.backward_euler = (step == 1);
        detail::NewtonStats stats;
        if (!solver.newton(x, opts, stats)) {
            try {
                x = solver.solve_dc_vector(x, /*allow_source_stepping=*/false, opts);
            } catch (const ConvergenceError& e) {
                throw ConvergenceError("transient Newton failed at t = " +
                                       format_value(opts.time) + " s: " + e.what());
            }
        }
        record(opts.time, x, opts);
        solver.update_states(x, opts);
    }
    return w;
}

} // namespace mirrorsim
