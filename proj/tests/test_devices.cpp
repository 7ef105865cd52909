#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mirrorsim/devices.hpp"

using namespace mirrorsim;

namespace {

MemristorParams knowm(double r_init) {
    MemristorParams p;
    p.r_init = r_init;
    return p;
}

} // namespace

TEST_CASE("mss_on_fraction endpoints and midpoint", "[devices]") {
    CHECK(mss_on_fraction(knowm(500.0)) == 1.0);
    CHECK(mss_on_fraction(knowm(1500.0)) == 0.0);
    const double x = mss_on_fraction(knowm(750.0));
    CHECK(x == Catch::Approx(0.5).margin(1e-15));
    CHECK(mss_conductance(x, knowm(750.0)) == Catch::Approx(1.0 / 750.0).epsilon(1e-13));
}

TEST_CASE("mss_conductance limits", "[devices]") {
    CHECK(mss_conductance(1.0, knowm(500.0)) == Catch::Approx(2e-3).epsilon(1e-15));
    CHECK(mss_conductance(0.0, knowm(500.0)) == Catch::Approx(1.0 / 1500.0).epsilon(1e-15));
}

TEST_CASE("conductance identity over random parameters", "[devices]") {
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
        MemristorParams p;
        p.r_on = 10.0 + 1e4 * uni(rng);
        p.r_off = p.r_on * (1.5 + 100.0 * uni(rng));
        p.r_init = p.r_on + (p.r_off - p.r_on) * uni(rng);
        const double g = mss_conductance(mss_on_fraction(p), p);
        REQUIRE(g * p.r_init == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("window endpoints, center and hand value", "[devices]") {
    for (int p = 1; p <= 10; ++p) {
        CHECK(window(0.0, p) == 0.0);
        CHECK(window(1.0, p) == 0.0);
        CHECK(window(0.5, p) == 1.0);
    }
    CHECK(window(0.25, 1) == Catch::Approx(0.75).margin(1e-15));
}

TEST_CASE("window symmetry and range on a grid", "[devices]") {
    for (int p = 1; p <= 10; ++p) {
        for (int i = 0; i <= 1000; ++i) {
            const double x = static_cast<double>(i) / 1000.0;
            const double f = window(x, p);
            REQUIRE(f >= 0.0);
            REQUIRE(f <= 1.0);
            REQUIRE(f == Catch::Approx(window(1.0 - x, p)).margin(1e-12));
        }
    }
}

TEST_CASE("window boundary transition sharpens with p", "[devices]") {
    // With F = 1 - (2x-1)^(2p) and |2x-1| < 1, a larger p pushes the flat
    // top closer to the boundaries: F grows with p at boundary-adjacent x,
    // equivalently the leftover edge term (1 - F) shrinks.
    for (double x : {0.02, 0.05, 0.09, 0.91, 0.95, 0.98}) {
        for (int p = 1; p < 10; ++p) {
            REQUIRE(1.0 - window(x, p + 1) < 1.0 - window(x, p));
        }
    }
}

TEST_CASE("memristance interpolates Ron..Roff", "[devices]") {
    CHECK(memristance(1.0, knowm(500.0)) == 500.0);
    CHECK(memristance(0.0, knowm(500.0)) == 1500.0);
    CHECK(memristance(0.5, knowm(500.0)) == 1000.0);
}

TEST_CASE("memristor_step threshold gate and sign", "[devices]") {
    const MemristorParams p = knowm(750.0);
    const MemristorState s{0.5};

    // below threshold: frozen even with large current
    CHECK(memristor_step(s, 1.0, 0.1, 1e-6, p).x == 0.5);
    // above threshold: positive current raises x, negative lowers it
    CHECK(memristor_step(s, 1e-3, 0.5, 1e-6, p).x > 0.5);
    CHECK(memristor_step(s, -1e-3, -0.5, 1e-6, p).x < 0.5);
    // boundary is locked by the window
    CHECK(memristor_step({1.0}, 10.0, 5.0, 1.0, p).x == 1.0);
    CHECK(memristor_step({0.0}, -10.0, -5.0, 1.0, p).x == 0.0);
}

TEST_CASE("memristor_step keeps x in [0,1] for any drive", "[devices]") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    MemristorState s{0.5};
    const MemristorParams p = knowm(750.0);
    for (int k = 0; k < 20000; ++k) {
        const double i = 10.0 * uni(rng);
        const double v = 5.0 * uni(rng);
        s = memristor_step(s, i, v, 1e-4, p);
        REQUIRE(s.x >= 0.0);
        REQUIRE(s.x <= 1.0);
    }
}

TEST_CASE("mosfet_eval regions and hand values", "[devices]") {
    MosfetParams p;
    p.w = 10e-6;
    p.l = 1e-6;
    p.vt0 = 0.5;
    p.kp = 200e-6;
    p.lambda = 0.0;

    // cutoff
    const DeviceEval off = mosfet_eval(0.3, 1.0, p);
    CHECK(off.current == 0.0);
    CHECK(off.gm == 0.0);

    // saturation, lambda = 0: id = kp/2 * (W/L) * vov^2 = 250 uA
    const DeviceEval sat = mosfet_eval(1.0, 2.0, p);
    CHECK(sat.current == Catch::Approx(250e-6).epsilon(1e-12));

    // channel-length modulation multiplies by (1 + lambda*vds)
    p.lambda = 0.02;
    const DeviceEval clm = mosfet_eval(1.0, 2.0, p);
    CHECK(clm.current == Catch::Approx(260e-6).epsilon(1e-12));
}

TEST_CASE("mosfet id and gm continuous at the triode boundary", "[devices]") {
    MosfetParams p;
    p.w = 5e-6;
    p.l = 0.5e-6;
    p.vt0 = 0.45;
    p.kp = 180e-6;
    p.lambda = 0.04;
    const double vgs = 1.2;
    const double boundary = vgs - p.vt0;
    const double eps = 1e-12;
    const DeviceEval below = mosfet_eval(vgs, boundary - eps, p);
    const DeviceEval above = mosfet_eval(vgs, boundary + eps, p);
    CHECK(below.current == Catch::Approx(above.current).epsilon(1e-9));
    CHECK(below.gm == Catch::Approx(above.gm).epsilon(1e-9));
    const DeviceEval at = mosfet_eval(vgs, boundary, p);
    CHECK(at.current == Catch::Approx(above.current).epsilon(1e-12));
    CHECK(at.gm == Catch::Approx(above.gm).epsilon(1e-12));
}

TEST_CASE("mosfet derivatives match finite differences", "[devices]") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
        MosfetParams p;
        p.w = 1e-6 * (0.5 + 9.5 * uni(rng));
        p.l = 1e-7 * (1.0 + 9.0 * uni(rng));
        p.vt0 = 0.3 + 0.4 * uni(rng);
        p.kp = 1e-4 * (0.5 + 3.0 * uni(rng));
        p.lambda = 0.1 * uni(rng);
        const double vgs = 2.0 * uni(rng);
        const double vds = 4.0 * uni(rng) - 2.0;  // both orientations
        const double vov = vgs - p.vt0;
        if (std::abs(vov) < 2e-3 || std::abs(vds) < 2e-3 || std::abs(vds - vov) < 2e-3 ||
            std::abs((vgs - vds) - p.vt0) < 2e-3 || std::abs(-vds - (vgs - vds - p.vt0)) < 2e-3) {
            continue;  // keep the difference stencil inside one region
        }
        const double h = 1e-7;
        const DeviceEval e = mosfet_eval(vgs, vds, p);
        const double gm_fd =
            (mosfet_eval(vgs + h, vds, p).current - mosfet_eval(vgs - h, vds, p).current) /
            (2.0 * h);
        const double gds_fd =
            (mosfet_eval(vgs, vds + h, p).current - mosfet_eval(vgs, vds - h, p).current) /
            (2.0 * h);
        const double scale = std::max({std::abs(e.gm), std::abs(e.gds), 1e-9});
        REQUIRE(std::abs(e.gm - gm_fd) / scale < 1e-6);
        REQUIRE(std::abs(e.gds - gds_fd) / scale < 1e-6);
    }
}
