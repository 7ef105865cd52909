#pragma once

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mirrorsim/analysis.hpp"
#include "mirrorsim/engine.hpp"
#include "mirrorsim/errors.hpp"
#include "mirrorsim/netlist.hpp"
#include "mirrorsim/version.hpp"

namespace mirrorsim {

enum class Experiment { freq_thd, length_thd, dc_length, dc_ron };

inline std::string experiment_name(Experiment e) {
    switch (e) {
        case Experiment::freq_thd: return "freq-thd";
        case Experiment::length_thd: return "length-thd";
        case Experiment::dc_length: return "dc-length";
        case Experiment::dc_ron: return "dc-ron";
    }
    return "?";
}

inline std::optional<Experiment> experiment_from_name(std::string_view name) {
    for (const Experiment e : {Experiment::freq_thd, Experiment::length_thd,
                               Experiment::dc_length, Experiment::dc_ron}) {
        if (name == experiment_name(e)) return e;
    }
    return std::nullopt;
}

struct ExperimentConfig {
    std::filesystem::path netlist;
    Experiment experiment = Experiment::freq_thd;
    std::vector<double> frequencies{1.0, 1e2, 1e4, 1e6, 1e8, 1e10};
    std::vector<double> lengths{17e-9, 20e-9, 25e-9, 30e-9};
    std::vector<double> supplies{3.0, 5.0, 8.0};
    std::vector<double> ron_values{500, 505, 510, 515, 520, 525, 530, 535, 540, 545, 550};
    std::vector<double> lint_values{0.0,      6.25e-11, 1.25e-10, 1.875e-10, 2.5e-10,
                                    3.125e-10, 3.75e-10, 4.375e-10, 5e-10};
    int points_per_period = 1024;
    int periods = 10;
    int n_harmonics = 9;
    std::string observable;  // empty: .thd directive or i(VOUT)
    std::filesystem::path out_dir;
};

struct ReportRow {
    std::map<std::string, double> num;
    std::map<std::string, std::string> text;
};

struct SlopeEntry {
    std::map<std::string, double> key_num;
    std::map<std::string, std::string> key_text;
    FitResult fit;
};

struct Curve {
    std::string filename;
    std::string x_label;
    std::string y_label;
    std::vector<std::pair<double, double>> points;
};

struct ExperimentReport {
    std::string experiment;
    std::vector<std::string> columns;        // ordered; resolved from row text/num maps
    std::vector<ReportRow> rows;
    std::vector<std::string> slope_columns;  // key columns followed by slope/intercept/r_squared
    std::vector<SlopeEntry> slopes;
    std::vector<Curve> curves;
    std::vector<std::string> provenance;     // emitted as '#' header lines
};

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

inline Circuit load_netlist(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open netlist '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_netlist(buffer.str());
}

/// Memristor-free counterpart: every memristor branch is collapsed (its two
/// terminals merge into one node) and the device dropped.
inline Circuit without_memristors(const Circuit& input) {
    std::unordered_map<std::string, std::string> alias;
    auto resolve = [&alias](std::string n) {
        while (alias.contains(n)) n = alias.at(n);
        return n;
    };
    for (const auto& d : input.devices) {
        if (d.kind != DeviceKind::memristor) continue;
        std::string a = resolve(d.terminals[0]);
        std::string b = resolve(d.terminals[1]);
        if (a == b) continue;
        if (b == "0") std::swap(a, b);  // ground survives a merge
        alias.emplace(b, a);
    }
    Circuit out;
    out.directives = input.directives;
    for (const auto& d : input.devices) {
        if (d.kind == DeviceKind::memristor) continue;
        Device copy = d;
        for (auto& t : copy.terminals) t = resolve(t);
        out.add_device(std::move(copy));
    }
    return validate(std::move(out));
}

inline bool has_memristor(const Circuit& c) {
    return std::any_of(c.devices.begin(), c.devices.end(),
                       [](const Device& d) { return d.kind == DeviceKind::memristor; });
}

/// Replace every voltage source with a DC source at `level`; DC experiments
/// run both mirror branches from the same supply.
inline void set_all_sources_dc(Circuit& c, double level) {
    for (auto& d : c.devices) {
        if (d.kind == DeviceKind::vsource) {
            SourceWaveform w;
            w.shape = SourceWaveform::Shape::dc;
            w.level = level;
            d.params = w;
        }
    }
}

inline const Device* find_single_sine(const Circuit& c) {
    const Device* sine = nullptr;
    for (const auto& d : c.devices) {
        if ((d.kind == DeviceKind::vsource || d.kind == DeviceKind::isource) &&
            d.source().shape == SourceWaveform::Shape::sine) {
            if (sine) throw ValidationError("netlist has more than one sine source");
            sine = &d;
        }
    }
    if (!sine) throw ValidationError("netlist has no sine source");
    return sine;
}

/// THD observable: an explicit config value, the netlist's own .thd
/// directive, or the branch current of a source named VOUT.
inline std::string resolve_observable(const Circuit& c, const ExperimentConfig& cfg) {
    if (!cfg.observable.empty()) return cfg.observable;
    for (const auto& dir : c.directives) {
        if (const auto* th = std::get_if<ThdDirective>(&dir)) return th->observable;
    }
    if (const Device* d = c.find_device("VOUT"); d && d->kind == DeviceKind::vsource) {
        return "i(" + d->name + ")";
    }
    throw ValidationError("no THD observable: pass one or add a .thd directive");
}

/// The memristor in series with M2's drain.
inline const Device* output_memristor(const Circuit& c) {
    const Device* m2 = c.find_device("M2");
    if (!m2 || m2->kind != DeviceKind::nmos) {
        throw ValidationError("dc-ron expects an output transistor named M2");
    }
    const std::string& drain = m2->terminals[0];
    for (const auto& d : c.devices) {
        if (d.kind == DeviceKind::memristor &&
            (d.terminals[0] == drain || d.terminals[1] == drain)) {
            return &d;
        }
    }
    throw ValidationError("no memristor attached to M2's drain");
}

namespace detail {

inline void require_monotone(const std::vector<double>& v, const std::string& what) {
    if (v.empty()) throw ValidationError(what + " sweep is empty");
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] > v[i - 1])) throw ValidationError(what + " sweep must be strictly increasing");
    }
}

inline void check_config(const ExperimentConfig& cfg) {
    if (cfg.points_per_period < 2) throw ValidationError("points_per_period must be >= 2");
    if (cfg.periods < 1) throw ValidationError("periods must be >= 1");
    if (cfg.n_harmonics < 2) throw ValidationError("n_harmonics must be >= 2");
    for (const double s : cfg.supplies) {
        if (!(s > 0.0)) throw ValidationError("supply voltages must be > 0");
    }
    switch (cfg.experiment) {
        case Experiment::freq_thd: require_monotone(cfg.frequencies, "frequency"); break;
        case Experiment::length_thd:
            require_monotone(cfg.frequencies, "frequency");
            require_monotone(cfg.lengths, "length");
            break;
        case Experiment::dc_length:
            require_monotone(cfg.lint_values, "LINT");
            require_monotone(cfg.supplies, "supply");
            break;
        case Experiment::dc_ron:
            require_monotone(cfg.ron_values, "resistance");
            require_monotone(cfg.supplies, "supply");
            break;
    }
}

inline std::string timestamp_utc() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::vector<std::string> provenance(const ExperimentConfig& cfg) {
    return {
        "mirrorsim " + std::string(kVersion),
        "experiment: " + experiment_name(cfg.experiment),
        "netlist: " + cfg.netlist.string(),
        "settings: ppp=" + std::to_string(cfg.points_per_period) +
            " periods=" + std::to_string(cfg.periods) +
            " harmonics=" + std::to_string(cfg.n_harmonics),
        "generated: " + timestamp_utc(),
    };
}

inline std::string num_tag(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    std::string s = buf;
    std::string out;
    for (const char ch : s) {
        if (ch == '+') continue;
        if (ch == '.') out += 'p';
        else if (ch == '-') out += 'm';
        else out += ch;
    }
    return out;
}

/// Variants an experiment runs over: the circuit as shipped and, when it
/// contains memristors, the collapsed counterpart.
inline std::vector<std::pair<std::string, Circuit>> variants_of(const Circuit& base) {
    std::vector<std::pair<std::string, Circuit>> v;
    if (has_memristor(base)) {
        v.emplace_back("with_memristor", base);
        v.emplace_back("without_memristor", without_memristors(base));
    } else {
        v.emplace_back("without_memristor", base);
    }
    return v;
}

inline THDReport thd_at_frequency(Circuit circuit, const std::string& sine_name,
                                  const std::string& observable, double frequency,
                                  const ExperimentConfig& cfg) {
    set_device_param(circuit, sine_name, "freq", frequency);
    TranDirective tran;
    tran.tstop = static_cast<double>(cfg.periods) / frequency;
    tran.points_per_period = cfg.points_per_period;
    tran.periods = cfg.periods;
    const Waveforms w = transient(circuit, tran);
    const int analysis = std::max(1, cfg.periods / 2);
    const int warmup = cfg.periods - analysis;
    return measure_thd(w, observable, frequency, cfg.n_harmonics, cfg.points_per_period, warmup,
                       analysis);
}

} // namespace detail

// ---------------------------------------------------------------------------
// experiment runners
// ---------------------------------------------------------------------------

/// THD versus drive frequency, memristive circuit against its collapsed
/// counterpart. Frequencies above 1 GHz are annotated: the quasi-static
/// device models stay numerically well defined there but carry no physics.
inline ExperimentReport run_freq_thd(const ExperimentConfig& cfg) {
    detail::check_config(cfg);
    const Circuit base = load_netlist(cfg.netlist);
    const std::string sine_name = find_single_sine(base)->name;
    const std::string observable = resolve_observable(base, cfg);

    ExperimentReport report;
    report.experiment = experiment_name(cfg.experiment);
    report.columns = {"variant", "frequency_hz", "thd_percent", "fundamental_magnitude", "note"};
    report.provenance = detail::provenance(cfg);

    for (const auto& [vname, circuit] : detail::variants_of(base)) {
        Curve curve{"freq_thd_" + vname + ".csv", "frequency_hz", "thd_percent", {}};
        for (const double f : cfg.frequencies) {
            THDReport thd_report;
            try {
                thd_report = detail::thd_at_frequency(circuit, sine_name, observable, f, cfg);
            } catch (const Error& e) {
                throw Error(report.experiment + " (" + vname + ") at " + format_value(f) +
                            " Hz: " + e.what());
            }
            ReportRow row;
            row.text["variant"] = vname;
            row.text["note"] = f > 1e9 ? "quasi-static extrapolation" : "";
            row.num["frequency_hz"] = f;
            row.num["thd_percent"] = thd_report.thd_percent;
            row.num["fundamental_magnitude"] = thd_report.harmonic_magnitudes.at(0);
            report.rows.push_back(std::move(row));
            curve.points.emplace_back(f, thd_report.thd_percent);
        }
        report.curves.push_back(std::move(curve));
    }
    return report;
}

/// THD on a (channel length x frequency) grid, both variants, plus the
/// THD-versus-length slope per frequency.
inline ExperimentReport run_length_thd(const ExperimentConfig& cfg) {
    detail::check_config(cfg);
    const Circuit base = load_netlist(cfg.netlist);
    const std::string sine_name = find_single_sine(base)->name;
    const std::string observable = resolve_observable(base, cfg);

    ExperimentReport report;
    report.experiment = experiment_name(cfg.experiment);
    report.columns = {"variant", "length_m", "frequency_hz", "thd_percent", "note"};
    report.slope_columns = {"variant", "frequency_hz", "slope", "intercept", "r_squared"};
    report.provenance = detail::provenance(cfg);
    report.provenance.push_back(
        "note: the grid values are applied as effective channel lengths on every transistor; "
        "the shipped netlists draw their devices at 180 nm elsewhere");

    for (const auto& [vname, circuit] : detail::variants_of(base)) {
        std::map<double, std::vector<double>> thd_by_frequency;
        for (const double length : cfg.lengths) {
            Circuit sized = circuit;
            for (auto& d : sized.devices) {
                if (d.kind == DeviceKind::nmos) {
                    set_device_param(sized, d.name, "l", length);
                }
            }
            for (const double f : cfg.frequencies) {
                THDReport thd_report;
                try {
                    thd_report = detail::thd_at_frequency(sized, sine_name, observable, f, cfg);
                } catch (const Error& e) {
                    throw Error(report.experiment + " (" + vname + ") at L=" +
                                format_value(length) + " m, " + format_value(f) +
                                " Hz: " + e.what());
                }
                ReportRow row;
                row.text["variant"] = vname;
                row.text["note"] = f > 1e9 ? "quasi-static extrapolation" : "";
                row.num["length_m"] = length;
                row.num["frequency_hz"] = f;
                row.num["thd_percent"] = thd_report.thd_percent;
                report.rows.push_back(std::move(row));
                thd_by_frequency[f].push_back(thd_report.thd_percent);
            }
        }
        for (const double f : cfg.frequencies) {
            if (cfg.lengths.size() >= 3) {
                SlopeEntry entry;
                entry.key_text["variant"] = vname;
                entry.key_num["frequency_hz"] = f;
                entry.fit = linear_fit(cfg.lengths, thd_by_frequency.at(f));
                report.slopes.push_back(std::move(entry));
            }
            Curve curve{"length_thd_" + vname + "_" + detail::num_tag(f) + "hz.csv", "length_m",
                        "thd_percent", {}};
            for (std::size_t i = 0; i < cfg.lengths.size(); ++i) {
                curve.points.emplace_back(cfg.lengths[i], thd_by_frequency.at(f)[i]);
            }
            report.curves.push_back(std::move(curve));
        }
    }
    return report;
}

/// DC length imbalance: sweep M2's LINT with M1 fixed, then M1's with M2
/// fixed, at each supply, recording I_ref, I_out and their difference and
/// fitting the difference against effective length.
inline ExperimentReport run_dc_length(const ExperimentConfig& cfg) {
    detail::check_config(cfg);
    const Circuit base = load_netlist(cfg.netlist);

    ExperimentReport report;
    report.experiment = experiment_name(cfg.experiment);
    report.columns = {"variant", "swept_device", "supply_v", "lint_m",
                      "l_eff_m",  "i_ref_a",      "i_out_a",  "i_delta_a"};
    report.slope_columns = {"variant", "swept_device", "supply_v", "slope", "intercept",
                            "r_squared"};
    report.provenance = detail::provenance(cfg);

    for (const auto& [vname, circuit] : detail::variants_of(base)) {
        if (!circuit.find_device("M1") || !circuit.find_device("M2")) {
            throw ValidationError("dc-length expects transistors named M1 and M2");
        }
        for (const std::string swept : {"M2", "M1"}) {
            for (const double supply : cfg.supplies) {
                Circuit biased = circuit;
                set_all_sources_dc(biased, supply);
                std::vector<double> l_eff;
                std::vector<double> delta;
                std::optional<OperatingPoint> previous;
                for (const double lint : cfg.lint_values) {
                    set_device_param(biased, swept, "lint", lint);
                    OperatingPoint op;
                    try {
                        op = solve_dc(biased, previous ? &*previous : nullptr);
                    } catch (const Error& e) {
                        throw Error(report.experiment + " (" + vname + ", " + swept + ", " +
                                    format_value(supply) + " V) at LINT=" + format_value(lint) +
                                    ": " + e.what());
                    }
                    const double i_ref = op.branch_currents.at(biased.find_device("M1")->name);
                    const double i_out = op.branch_currents.at(biased.find_device("M2")->name);
                    const auto& mp = biased.find_device(swept)->mosfet();
                    ReportRow row;
                    row.text["variant"] = vname;
                    row.text["swept_device"] = swept;
                    row.num["supply_v"] = supply;
                    row.num["lint_m"] = lint;
                    row.num["l_eff_m"] = mp.l_eff();
                    row.num["i_ref_a"] = i_ref;
                    row.num["i_out_a"] = i_out;
                    row.num["i_delta_a"] = i_out - i_ref;
                    report.rows.push_back(std::move(row));
                    l_eff.push_back(mp.l_eff());
                    delta.push_back(i_out - i_ref);
                    previous = std::move(op);
                }
                if (l_eff.size() >= 3) {
                    SlopeEntry entry;
                    entry.key_text["variant"] = vname;
                    entry.key_text["swept_device"] = swept;
                    entry.key_num["supply_v"] = supply;
                    entry.fit = linear_fit(l_eff, delta);
                    report.slopes.push_back(std::move(entry));
                }
                Curve curve{"dc_length_" + vname + "_" + swept + "_" + detail::num_tag(supply) +
                                "v.csv",
                            "l_eff_m", "i_delta_a", {}};
                for (std::size_t i = 0; i < l_eff.size(); ++i) {
                    curve.points.emplace_back(l_eff[i], delta[i]);
                }
                report.curves.push_back(std::move(curve));
            }
        }
    }
    return report;
}

/// DC memristance imbalance: the output-side memristor's resistance (RON and
/// RINIT together, so the branch sits exactly at the swept value) goes
/// through the configured range at each supply.
inline ExperimentReport run_dc_ron(const ExperimentConfig& cfg) {
    detail::check_config(cfg);
    const Circuit base = load_netlist(cfg.netlist);
    if (!has_memristor(base)) {
        throw ValidationError("dc-ron needs a memristive netlist");
    }
    const std::string mem_name = output_memristor(base)->name;

    ExperimentReport report;
    report.experiment = experiment_name(cfg.experiment);
    report.columns = {"supply_v", "r_ohm", "i_ref_a", "i_out_a", "i_delta_a"};
    report.slope_columns = {"supply_v", "slope", "intercept", "r_squared"};
    report.provenance = detail::provenance(cfg);

    for (const double supply : cfg.supplies) {
        Circuit biased = base;
        set_all_sources_dc(biased, supply);
        std::vector<double> delta;
        std::optional<OperatingPoint> previous;
        for (const double r : cfg.ron_values) {
            set_device_param(biased, mem_name, "rinit", r);
            set_device_param(biased, mem_name, "ron", r);
            OperatingPoint op;
            try {
                op = solve_dc(biased, previous ? &*previous : nullptr);
            } catch (const Error& e) {
                throw Error(report.experiment + " (" + format_value(supply) + " V) at R=" +
                            format_value(r) + ": " + e.what());
            }
            const double i_ref = op.branch_currents.at(biased.find_device("M1")->name);
            const double i_out = op.branch_currents.at(biased.find_device("M2")->name);
            ReportRow row;
            row.num["supply_v"] = supply;
            row.num["r_ohm"] = r;
            row.num["i_ref_a"] = i_ref;
            row.num["i_out_a"] = i_out;
            row.num["i_delta_a"] = i_out - i_ref;
            report.rows.push_back(std::move(row));
            delta.push_back(i_out - i_ref);
            previous = std::move(op);
        }
        if (cfg.ron_values.size() >= 3) {
            SlopeEntry entry;
            entry.key_num["supply_v"] = supply;
            entry.fit = linear_fit(cfg.ron_values, delta);
            report.slopes.push_back(std::move(entry));
        }
        Curve curve{"dc_ron_" + detail::num_tag(supply) + "v.csv", "r_ohm", "i_delta_a", {}};
        for (std::size_t i = 0; i < cfg.ron_values.size(); ++i) {
            curve.points.emplace_back(cfg.ron_values[i], delta[i]);
        }
        report.curves.push_back(std::move(curve));
    }
    return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    switch (cfg.experiment) {
        case Experiment::freq_thd: return run_freq_thd(cfg);
        case Experiment::length_thd: return run_length_thd(cfg);
        case Experiment::dc_length: return run_dc_length(cfg);
        case Experiment::dc_ron: return run_dc_ron(cfg);
    }
    throw Error("unknown experiment");
}

/// Every experiment the netlist supports, in a fixed order. dc-ron is
/// skipped for memristor-free netlists.
inline std::vector<ExperimentReport> run_all(ExperimentConfig cfg) {
    std::vector<ExperimentReport> reports;
    const bool memristive = has_memristor(load_netlist(cfg.netlist));
    for (const Experiment e : {Experiment::freq_thd, Experiment::length_thd,
                               Experiment::dc_length, Experiment::dc_ron}) {
        if (e == Experiment::dc_ron && !memristive) continue;
        cfg.experiment = e;
        reports.push_back(run_experiment(cfg));
    }
    return reports;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

inline std::string csv_cell(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string report_body_csv(const ExperimentReport& report) {
    std::string out;
    for (std::size_t i = 0; i < report.columns.size(); ++i) {
        if (i) out += ',';
        out += report.columns[i];
    }
    out += '\n';
    for (const auto& row : report.rows) {
        for (std::size_t i = 0; i < report.columns.size(); ++i) {
            if (i) out += ',';
            const auto& col = report.columns[i];
            if (const auto it = row.text.find(col); it != row.text.end()) {
                out += it->second;
            } else if (const auto nit = row.num.find(col); nit != row.num.end()) {
                out += csv_cell(nit->second);
            }
        }
        out += '\n';
    }
    return out;
}

inline std::string slopes_body_csv(const ExperimentReport& report) {
    std::string out;
    for (std::size_t i = 0; i < report.slope_columns.size(); ++i) {
        if (i) out += ',';
        out += report.slope_columns[i];
    }
    out += '\n';
    for (const auto& entry : report.slopes) {
        for (std::size_t i = 0; i < report.slope_columns.size(); ++i) {
            if (i) out += ',';
            const auto& col = report.slope_columns[i];
            if (col == "slope") {
                out += csv_cell(entry.fit.slope);
            } else if (col == "intercept") {
                out += csv_cell(entry.fit.intercept);
            } else if (col == "r_squared") {
                out += csv_cell(entry.fit.r_squared);
            } else if (const auto it = entry.key_text.find(col); it != entry.key_text.end()) {
                out += it->second;
            } else if (const auto nit = entry.key_num.find(col); nit != entry.key_num.end()) {
                out += csv_cell(nit->second);
            }
        }
        out += '\n';
    }
    return out;
}

/// Write <experiment>.csv, optional <experiment>_slopes.csv and one
/// two-column file per curve. Returns the main file's path.
inline std::filesystem::path write_report_csv(const ExperimentReport& report,
                                              const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto open = [](const std::filesystem::path& p) {
        std::ofstream f(p);
        if (!f) throw Error("cannot write '" + p.string() + "'");
        return f;
    };
    auto header = [&report](std::ofstream& f) {
        for (const auto& line : report.provenance) f << "# " << line << '\n';
    };

    const std::filesystem::path main_path = out_dir / (report.experiment + ".csv");
    {
        std::ofstream f = open(main_path);
        header(f);
        f << report_body_csv(report);
    }
    if (!report.slopes.empty()) {
        std::ofstream f = open(out_dir / (report.experiment + "_slopes.csv"));
        header(f);
        f << slopes_body_csv(report);
    }
    for (const auto& curve : report.curves) {
        std::ofstream f = open(out_dir / curve.filename);
        f << curve.x_label << ',' << curve.y_label << '\n';
        for (const auto& [x, y] : curve.points) {
            f << csv_cell(x) << ',' << csv_cell(y) << '\n';
        }
    }
    return main_path;
}

} // namespace mirrorsim
