// mirrorsim command line: run the packaged experiments or execute a
// netlist's own analysis directives.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mirrorsim/mirrorsim.hpp"

namespace fs = std::filesystem;
using namespace mirrorsim;

namespace {

void print_operating_point(const Circuit& circuit, const OperatingPoint& op) {
    std::printf("operating point\n");
    for (const auto& [node, v] : op.node_voltages) {
        std::printf("  v(%s) = %.9g V\n", node.c_str(), v);
    }
    for (const auto& [dev, i] : op.branch_currents) {
        std::printf("  i(%s) = %.9g A\n", dev.c_str(), i);
    }
    for (const auto& [dev, ss] : op.device_small_signal) {
        std::printf("  %s: gm = %.9g S, gds = %.9g S\n", dev.c_str(), ss.gm, ss.gds);
    }
    for (const auto& [dev, x] : op.memristor_x) {
        std::printf("  %s: x = %.9g, R = %.9g ohm\n", dev.c_str(), x,
                    op.memristor_resistance.at(dev));
    }
    (void)circuit;
}

void print_sweep(const SweepResult& sweep) {
    std::printf("sweep %s\n", sweep.param_path.c_str());
    std::printf("%s", sweep.param_path.c_str());
    for (const auto& [name, values] : sweep.observables) {
        (void)values;
        std::printf(",%s", name.c_str());
    }
    std::printf("\n");
    for (std::size_t i = 0; i < sweep.param_values.size(); ++i) {
        std::printf("%s", csv_cell(sweep.param_values[i]).c_str());
        for (const auto& [name, values] : sweep.observables) {
            (void)name;
            std::printf(",%s", csv_cell(values[i]).c_str());
        }
        std::printf("\n");
    }
}

void write_waveforms_csv(const Waveforms& w, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << "time";
    for (const auto& [name, samples] : w.signals) {
        (void)samples;
        out << ',' << name;
    }
    for (const auto& [name, samples] : w.memristor_states) {
        (void)samples;
        out << ",x(" << name << ')';
    }
    out << '\n';
    for (std::size_t k = 0; k < w.time.size(); ++k) {
        out << csv_cell(w.time[k]);
        for (const auto& [name, samples] : w.signals) {
            (void)name;
            out << ',' << csv_cell(samples[k]);
        }
        for (const auto& [name, samples] : w.memristor_states) {
            (void)name;
            out << ',' << csv_cell(samples[k]);
        }
        out << '\n';
    }
}

int run_sim(const fs::path& netlist_path, const std::optional<fs::path>& out_dir) {
    const Circuit circuit = load_netlist(netlist_path);
    if (circuit.directives.empty()) {
        std::printf("netlist has no directives; nothing to do\n");
        return 0;
    }
    std::optional<Waveforms> last_waveforms;
    std::optional<TranDirective> last_tran;
    for (const auto& directive : circuit.directives) {
        if (std::holds_alternative<OpDirective>(directive)) {
            print_operating_point(circuit, solve_dc(circuit));
        } else if (const auto* dc = std::get_if<DcSweepDirective>(&directive)) {
            print_sweep(dc_sweep(circuit, *dc));
        } else if (const auto* tran = std::get_if<TranDirective>(&directive)) {
            last_waveforms = transient(circuit, *tran);
            last_tran = *tran;
            std::printf("transient: %zu samples, %zu signals\n", last_waveforms->time.size(),
                        last_waveforms->signals.size());
            if (out_dir) {
                fs::create_directories(*out_dir);
                const fs::path path = *out_dir / "waveforms.csv";
                write_waveforms_csv(*last_waveforms, path);
                std::printf("transient waveforms written to %s\n", path.string().c_str());
            }
        } else if (const auto* thd_dir = std::get_if<ThdDirective>(&directive)) {
            if (!last_waveforms) {
                throw Error(".thd requires a preceding .tran directive");
            }
            const int periods = last_tran->periods;
            const int analysis = std::max(1, periods / 2);
            const THDReport report = measure_thd(
                *last_waveforms, thd_dir->observable, thd_dir->fundamental_hz,
                thd_dir->n_harmonics, last_tran->points_per_period, periods - analysis, analysis);
            std::printf("thd(%s) at f0 = %s Hz over %d periods (%d warmup):\n",
                        thd_dir->observable.c_str(), csv_cell(report.fundamental_hz).c_str(),
                        report.period_count, report.first_period_index);
            for (std::size_t k = 0; k < report.harmonic_magnitudes.size(); ++k) {
                std::printf("  |c%zu| = %.9g\n", k + 1, report.harmonic_magnitudes[k]);
            }
            std::printf("  THD = %.9g %%\n", report.thd_percent);
        } else if (const auto* hp = std::get_if<HparamDirective>(&directive)) {
            const HParams h =
                extract_hparams_numeric(circuit, hp->input_source, hp->output_source);
            std::printf("h-parameters (in = %s, out = %s):\n", hp->input_source.c_str(),
                        hp->output_source.c_str());
            std::printf("  h11 = %.9g ohm\n  h12 = %.9g\n  h21 = %.9g\n  h22 = %.9g S\n",
                        h.h11, h.h12, h.h21, h.h22);
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"memristor-aware current mirror simulator"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "key=value file applied before the flags; run options live in a [run] "
                   "section; command-line flags win on conflict");

    // run
    auto* run = app.add_subcommand("run", "run a packaged experiment over a netlist");
    std::string experiment;
    ExperimentConfig cfg;
    std::string observable;
    std::string netlist;
    std::string out_dir;
    run->add_option("experiment", experiment, "freq-thd | length-thd | dc-length | dc-ron | all")
        ->required()
        ->check(CLI::IsMember({"freq-thd", "length-thd", "dc-length", "dc-ron", "all"}));
    run->add_option("--netlist", netlist, "circuit file")->required();
    run->add_option("--out", out_dir, "output directory for CSV reports")->required();
    run->add_option("--freqs", cfg.frequencies, "drive frequencies, Hz");
    run->add_option("--lengths", cfg.lengths, "channel lengths, m");
    run->add_option("--supplies", cfg.supplies, "supply voltages, V");
    run->add_option("--ron-sweep", cfg.ron_values, "output memristor resistances, ohm");
    run->add_option("--lint-sweep", cfg.lint_values, "LINT values, m");
    run->add_option("--ppp", cfg.points_per_period, "transient points per period");
    run->add_option("--periods", cfg.periods, "simulated fundamental periods");
    run->add_option("--harmonics", cfg.n_harmonics, "harmonics for the THD report");
    run->add_option("--observable", observable, "THD observable, e.g. i(VOUT)");

    // sim
    auto* sim = app.add_subcommand("sim", "execute a netlist's own directives");
    std::string sim_netlist;
    std::string sim_out;
    sim->add_option("netlist", sim_netlist, "circuit file")->required();
    sim->add_option("--out", sim_out, "directory for transient waveform dumps");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            cfg.netlist = netlist;
            cfg.observable = observable;
            cfg.out_dir = out_dir;
            std::vector<ExperimentReport> reports;
            if (experiment == "all") {
                reports = run_all(cfg);
            } else {
                cfg.experiment = *experiment_from_name(experiment);
                reports.push_back(run_experiment(cfg));
            }
            for (const auto& report : reports) {
                const fs::path path = write_report_csv(report, cfg.out_dir);
                std::printf("%s: %zu rows -> %s\n", report.experiment.c_str(),
                            report.rows.size(), path.string().c_str());
            }
            return 0;
        }
        return run_sim(sim_netlist, sim_out.empty() ? std::nullopt
                                                    : std::optional<fs::path>(sim_out));
    } catch (const Error& e) {
        std::fprintf(stderr, "mirrorsim: error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "mirrorsim: internal error: %s\n", e.what());
        return 2;
    }
}
