#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "mirrorsim/experiments.hpp"

using namespace mirrorsim;

namespace {

const std::filesystem::path kNetlistDir = MIRRORSIM_NETLIST_DIR;

std::filesystem::path write_temp_netlist(const std::string& name, const std::string& text) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << text;
    return path;
}

const std::string kLambdaZeroMirror =
    "VIN in 0 SIN(0 3 1e6)\n"
    "VOUT out 0 3\n"
    "RB in a 10k\n"
    "XMEM1 mem a d1 RON=500 ROFF=1500 RINIT=1400 MU=1e-13\n"
    "M1 nmos d1 d1 0 W=1.8u L=180n LAMBDA=0\n"
    "XMEM2 mem out d2 RON=500 ROFF=1500 RINIT=1400 MU=1e-13\n"
    "M2 nmos d2 d1 0 W=1.8u L=180n LAMBDA=0\n";

double row_value(const ExperimentReport& report, std::size_t index, const std::string& col) {
    return report.rows.at(index).num.at(col);
}

} // namespace

TEST_CASE("without_memristors collapses the series branches", "[experiments]") {
    const Circuit base = load_netlist(kNetlistDir / "memristor_cm.cir");
    const Circuit bare = without_memristors(base);
    CHECK_FALSE(has_memristor(bare));
    CHECK(bare.devices.size() == base.devices.size() - 2);
    // M1's drain now sits on the bias resistor's output node
    const Device* m1 = bare.find_device("M1");
    const Device* rb = bare.find_device("RB");
    REQUIRE(m1 != nullptr);
    REQUIRE(rb != nullptr);
    CHECK(m1->terminals[0] == rb->terminals[1]);
    // M2's drain merged into the output source node
    CHECK(bare.find_device("M2")->terminals[0] == bare.find_device("VOUT")->terminals[0]);
}

TEST_CASE("freq-thd: six frequencies, two variants, declining trend", "[experiments]") {
    ExperimentConfig cfg;
    cfg.netlist = kNetlistDir / "memristor_cm.cir";
    cfg.experiment = Experiment::freq_thd;
    const ExperimentReport report = run_freq_thd(cfg);

    REQUIRE(report.rows.size() == 12);
    std::map<double, double> with_mem;
    std::map<double, double> without_mem;
    for (const auto& row : report.rows) {
        const double f = row.num.at("frequency_hz");
        const double t = row.num.at("thd_percent");
        if (row.text.at("variant") == "with_memristor") {
            with_mem[f] = t;
        } else {
            without_mem[f] = t;
        }
        if (f > 1e9) {
            CHECK(row.text.at("note") == "quasi-static extrapolation");
        } else {
            CHECK(row.text.at("note").empty());
        }
    }
    REQUIRE(with_mem.size() == 6);
    REQUIRE(without_mem.size() == 6);

    // memristive circuit: THD non-increasing over the top two decades
    CHECK(with_mem.at(1e8) <= with_mem.at(1e6));
    CHECK(with_mem.at(1e10) <= with_mem.at(1e8));
    // and strictly below the low-frequency values
    for (const double low : {1.0, 1e2, 1e4}) {
        CHECK(with_mem.at(1e8) < with_mem.at(low));
        CHECK(with_mem.at(1e10) < with_mem.at(low));
    }
}

TEST_CASE("freq-thd: single-frequency run equals a manual transient + thd", "[experiments]") {
    ExperimentConfig cfg;
    cfg.netlist = kNetlistDir / "memristor_cm.cir";
    cfg.experiment = Experiment::freq_thd;
    cfg.frequencies = {1e6};
    const ExperimentReport report = run_freq_thd(cfg);
    REQUIRE(report.rows.size() == 2);

    Circuit c = load_netlist(cfg.netlist);
    const Waveforms w = transient(c, TranDirective{1e-5, 1024, 10});
    const THDReport manual = measure_thd(w, "i(VOUT)", 1e6, 9, 1024, 5, 5);
    CHECK(row_value(report, 0, "thd_percent") ==
          Catch::Approx(manual.thd_percent).epsilon(1e-12));
}

TEST_CASE("length-thd: grid, slopes per frequency, single cell", "[experiments]") {
    ExperimentConfig cfg;
    cfg.netlist = kNetlistDir / "memristor_cm.cir";
    cfg.experiment = Experiment::length_thd;
    cfg.frequencies = {1e4, 1e6};
    const ExperimentReport report = run_length_thd(cfg);
    REQUIRE(report.rows.size() == 4 * 2 * 2);  // lengths x frequencies x variants
    REQUIRE(report.slopes.size() == 2 * 2);    // one per (variant, frequency)
    for (const auto& s : report.slopes) {
        CHECK(s.key_text.contains("variant"));
        CHECK(s.key_num.contains("frequency_hz"));
    }

    cfg.frequencies = {1e6};
    cfg.lengths = {20e-9};
    const ExperimentReport single = run_length_thd(cfg);
    REQUIRE(single.rows.size() == 2);  // one cell per variant
    CHECK(single.slopes.empty());      // no fit from one point
}

TEST_CASE("dc-length: reference current fixed, slopes symmetric", "[experiments]") {
    ExperimentConfig cfg;
    cfg.netlist = kNetlistDir / "memristor_cm.cir";
    cfg.experiment = Experiment::dc_length;
    const ExperimentReport report = run_dc_length(cfg);
    REQUIRE(report.rows.size() == 9 * 3 * 2 * 2);  // lint x supplies x devices x variants

    // I_ref untouched while M2 is swept
    std::map<std::string, std::vector<double>> iref_blocks;
    for (const auto& row : report.rows) {
        if (row.text.at("swept_device") != "M2") continue;
        const std::string key = row.text.at("variant") + "/" + csv_cell(row.num.at("supply_v"));
        iref_blocks[key].push_back(row.num.at("i_ref_a"));
    }
    REQUIRE(iref_blocks.size() == 6);
    for (const auto& [key, block] : iref_blocks) {
        for (const double v : block) {
            REQUIRE(v == Catch::Approx(block.front()).epsilon(1e-9));
        }
    }

    // |slope(M1 sweep)| matches |slope(M2 sweep)| within 5% per (variant, supply)
    std::map<std::string, std::map<std::string, double>> slopes;
    for (const auto& s : report.slopes) {
        const std::string key = s.key_text.at("variant") + "/" + csv_cell(s.key_num.at("supply_v"));
        slopes[key][s.key_text.at("swept_device")] = s.fit.slope;
        CHECK(s.fit.r_squared > 0.99);
    }
    REQUIRE(slopes.size() == 6);
    for (const auto& [key, by_device] : slopes) {
        const double m1 = std::abs(by_device.at("M1"));
        const double m2 = std::abs(by_device.at("M2"));
        INFO(key << ": |M1| = " << m1 << ", |M2| = " << m2);
        REQUIRE(std::abs(m1 - m2) / m2 < 0.05);
    }
}

TEST_CASE("dc-length: matched lambda=0 mirror has zero imbalance", "[experiments]") {
    ExperimentConfig cfg;
    cfg.netlist = write_temp_netlist("mirrorsim_test_lambda0.cir", kLambdaZeroMirror);
    cfg.experiment = Experiment::dc_length;
    cfg.supplies = {3.0};
    const ExperimentReport report = run_dc_length(cfg);
    for (const auto& row : report.rows) {
        if (row.num.at("lint_m") == 0.0) {
            REQUIRE(std::abs(row.num.at("i_delta_a")) < 1e-9 * row.num.at("i_ref_a"));
        }
    }
    std::filesystem::remove(cfg.netlist);
}

TEST_CASE("dc-ron: eleven points per supply, linear response", "[experiments]") {
    ExperimentConfig cfg;
    cfg.netlist = kNetlistDir / "memristor_cm.cir";
    cfg.experiment = Experiment::dc_ron;
    const ExperimentReport report = run_dc_ron(cfg);
    REQUIRE(report.rows.size() == 11 * 3);
    REQUIRE(report.slopes.size() == 3);
    for (const auto& s : report.slopes) {
        CHECK(s.fit.r_squared > 0.99);
        CHECK(s.fit.slope < 0.0);  // more series resistance, less output current
    }
}

TEST_CASE("dc-ron: zero-width sweep reproduces a direct solve", "[experiments]") {
    ExperimentConfig cfg;
    cfg.netlist = kNetlistDir / "memristor_cm.cir";
    cfg.experiment = Experiment::dc_ron;
    cfg.ron_values = {520.0};
    cfg.supplies = {5.0};
    const ExperimentReport report = run_dc_ron(cfg);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.slopes.empty());

    Circuit c = load_netlist(cfg.netlist);
    set_all_sources_dc(c, 5.0);
    set_device_param(c, "XMEM2", "rinit", 520.0);
    set_device_param(c, "XMEM2", "ron", 520.0);
    const OperatingPoint op = solve_dc(c);
    CHECK(row_value(report, 0, "i_out_a") ==
          Catch::Approx(op.branch_currents.at("M2")).epsilon(1e-12));
    CHECK(row_value(report, 0, "i_ref_a") ==
          Catch::Approx(op.branch_currents.at("M1")).epsilon(1e-12));
}

TEST_CASE("experiment CSV bodies are deterministic", "[experiments]") {
    ExperimentConfig cfg;
    cfg.netlist = kNetlistDir / "memristor_cm.cir";
    cfg.experiment = Experiment::freq_thd;
    cfg.frequencies = {1e4, 1e6};
    const ExperimentReport a = run_freq_thd(cfg);
    const ExperimentReport b = run_freq_thd(cfg);
    CHECK(report_body_csv(a) == report_body_csv(b));
}

TEST_CASE("write_report_csv emits provenance plus body and curve files", "[experiments]") {
    ExperimentConfig cfg;
    cfg.netlist = kNetlistDir / "memristor_cm.cir";
    cfg.experiment = Experiment::dc_ron;
    cfg.supplies = {3.0};
    const ExperimentReport report = run_dc_ron(cfg);

    const auto dir = std::filesystem::temp_directory_path() / "mirrorsim_test_csv";
    std::filesystem::remove_all(dir);
    const auto main_path = write_report_csv(report, dir);
    REQUIRE(std::filesystem::exists(main_path));
    REQUIRE(std::filesystem::exists(dir / "dc-ron_slopes.csv"));
    REQUIRE(std::filesystem::exists(dir / "dc_ron_3v.csv"));

    std::ifstream in(main_path);
    std::string line;
    std::size_t hash_lines = 0;
    std::size_t data_lines = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        if (line.starts_with("#")) {
            ++hash_lines;
        } else if (!saw_header) {
            saw_header = true;
            CHECK(line == "supply_v,r_ohm,i_ref_a,i_out_a,i_delta_a");
        } else {
            ++data_lines;
        }
    }
    CHECK(hash_lines >= 4);
    CHECK(data_lines == report.rows.size());
    std::filesystem::remove_all(dir);
}

TEST_CASE("config validation rejects bad sweeps", "[experiments]") {
    ExperimentConfig cfg;
    cfg.netlist = kNetlistDir / "memristor_cm.cir";
    cfg.experiment = Experiment::freq_thd;
    cfg.frequencies = {1e6, 1e4};  // not increasing
    CHECK_THROWS_AS(run_freq_thd(cfg), ValidationError);
    cfg.frequencies = {};
    CHECK_THROWS_AS(run_freq_thd(cfg), ValidationError);
    cfg.frequencies = {1e6};
    cfg.supplies = {0.0};
    CHECK_THROWS_AS(run_freq_thd(cfg), ValidationError);
}

TEST_CASE("dc-ron refuses memristor-free netlists", "[experiments]") {
    ExperimentConfig cfg;
    cfg.netlist = kNetlistDir / "basic_cm.cir";
    cfg.experiment = Experiment::dc_ron;
    CHECK_THROWS_AS(run_dc_ron(cfg), ValidationError);
}
