#include "dp4d/error.hpp"
#include "dp4d/fiber_sim.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dp4d;

namespace {

SimConfig small(int symbols = 1 << 12)
{
    SimConfig s;
    s.symbols_per_run = symbols;
    s.discard_symbols = 64;
    return s;
}

LinkConfig linear_link()
{
    LinkConfig l;
    l.gamma_per_w_km = 0.0;
    return l;
}

double db(double x) { return 10.0 * std::log10(x); }

} // namespace

TEST_CASE("nonlinear step preserves power")
{
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    std::vector<cplx> x(1000), y(1000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = {g(rng), g(rng)};
        y[i] = {g(rng), g(rng)};
    }
    double e0 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) e0 += std::norm(x[i]) + std::norm(y[i]);
    const auto x0 = x, y0 = y;
    nonlinear_step(x, y, 0.37);
    double e1 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) e1 += std::norm(x[i]) + std::norm(y[i]);
    CHECK(std::abs(e1 - e0) / e0 < 1e-12);
    // Common phase rotation: the relative phase between polarizations is kept.
    for (std::size_t i = 0; i < x.size(); i += 97) {
        const double phi = 0.37 * (std::norm(x0[i]) + std::norm(y0[i]));
        CHECK(std::abs(x[i] - x0[i] * std::polar(1.0, phi)) < 1e-12);
        CHECK(std::abs(x[i] * std::conj(y[i]) - x0[i] * std::conj(y0[i])) < 1e-12);
    }
    std::vector<cplx> shorter(999);
    CHECK_THROWS_AS(nonlinear_step(x, shorter, 0.1), InvalidArgument);
}

TEST_CASE("linear noiseless link returns the transmitted symbols")
{
    const TxConfig t;
    SimConfig s = small();
    s.ase = AseInjection::Off;
    for (const char* name : {"pm-qpsk", "pm-16qam", "4d-64prs"}) {
        const auto c = catalog_format(name);
        const auto cloud = simulate(c, linear_link(), t, 10, 1e-3, s);
        CHECK(cloud.rx_points.size() == static_cast<std::size_t>(s.symbols_per_run - 2 * s.discard_symbols));
        double worst = 0.0;
        for (std::size_t k = 0; k < cloud.rx_points.size(); ++k)
            for (int d = 0; d < 4; ++d)
                worst = std::max(worst, std::abs(cloud.rx_points[k][d] - c[cloud.tx_indices[k]][d]));
        CHECK(worst < 1e-8);
    }
}

TEST_CASE("linear link SNR matches the amplifier noise")
{
    const TxConfig t;
    const auto c = catalog_format("pm-qpsk");
    for (int n : {1, 5, 10}) {
        SimConfig s = small(1 << 14);
        s.rng_seed = 100 + n;
        const double p = 1e-3;
        const auto cloud = simulate(c, linear_link(), t, n, p, s);
        const double expected = p / (2.0 * ase_power(linear_link(), t, n));
        CHECK(std::abs(db(cloud.snr_4d) - db(expected)) < 0.2);
        CHECK(std::abs(db(cloud.snr_x) - db(0.5 * p / ase_power(linear_link(), t, n))) < 0.2);
    }
}

TEST_CASE("simulation is deterministic for a fixed seed")
{
    const LinkConfig l;
    const TxConfig t;
    SimConfig s = small(1 << 10);
    s.steps_per_span = 200;
    const auto c = catalog_format("pm-16qam");
    const auto a = simulate(c, l, t, 2, 1e-3, s);
    const auto b = simulate(c, l, t, 2, 1e-3, s);
    REQUIRE(a.rx_points.size() == b.rx_points.size());
    bool same = a.tx_indices == b.tx_indices;
    for (std::size_t k = 0; k < a.rx_points.size(); ++k) same = same && a.rx_points[k] == b.rx_points[k];
    CHECK(same);
    s.rng_seed = 2;
    const auto d = simulate(c, l, t, 2, 1e-3, s);
    CHECK(d.tx_indices != a.tx_indices);
}

TEST_CASE("step halving changes the nonlinear SNR by little")
{
    const LinkConfig l;
    const TxConfig t;
    const auto c = catalog_format("pm-16qam");
    const double p = optimal_launch(c, l, t, 2).p_opt_w * 2.0;
    SimConfig s = small(1 << 12);
    s.ase = AseInjection::Off;
    s.steps_per_span = 250;
    const double coarse = simulate(c, l, t, 2, p, s).snr_4d;
    s.steps_per_span = 500;
    const double fine = simulate(c, l, t, 2, p, s).snr_4d;
    MESSAGE("NLI-only SNR at 2 spans: ", db(coarse), " dB (250 steps), ", db(fine), " dB (500 steps)");
    CHECK(std::abs(db(coarse) - db(fine)) < 0.05);
}

TEST_CASE("coarse steps at high power are rejected")
{
    const LinkConfig l;
    const TxConfig t;
    SimConfig s = small(1 << 8);
    s.steps_per_span = 1;
    CHECK_THROWS_AS(simulate(catalog_format("pm-qpsk"), l, t, 1, 1e-2, s), NumericalError);
}

TEST_CASE("calibration recovers an injected cubic coefficient")
{
    const LinkConfig l;
    const TxConfig t;
    const auto c = catalog_format("pm-16qam");
    const int n = 10;
    const auto model = compute_nli_coefficients(l, t, n);
    const double a = model.nli_power(moments(c), 1.0).x;
    SimConfig s = small(1 << 14);
    s.injected_nli_per_w2 = a;
    const auto r = calibrate_eta(c, l, t, n, s, {0.0, 2.0, 4.0});
    CHECK(r.coeffs.provenance == NliProvenance::SsfmFitted);
    CHECK(r.coeffs.chi0.x == doctest::Approx(a).epsilon(0.05));
    CHECK(r.coeffs.chi0.y == doctest::Approx(a).epsilon(0.05));
    CHECK(r.r2_x > 0.99);
    CHECK(r.powers_w.size() == 3);

    CHECK_THROWS_AS(calibrate_eta(c, linear_link(), t, n, small()), NumericalError);
    CHECK_THROWS_AS(calibrate_eta(c, l, t, n, s, {0.0, 1.0}), InvalidArgument);
}

TEST_CASE("short high-SNR link delivers the full rate")
{
    const LinkConfig l;
    const TxConfig t;
    const auto c = catalog_format("pm-qpsk");
    SimConfig s = small(1 << 12);
    s.steps_per_span = 200;
    const auto a = ssfm_air(c, l, t, 1, optimal_launch(c, l, t, 1).p_opt_w, s);
    CHECK(a.rate_bit_per_4d > 4.0 - 2.0 * a.std_error.value_or(0.0) - 1e-3);
    CHECK(a.rate_bit_per_4d <= 4.0 + 1e-9);
    CHECK(a.noise.p_ase == doctest::Approx(ase_power(l, t, 1)));
}

TEST_CASE("simulation configuration validation")
{
    SimConfig s;
    s.samples_per_symbol = 3;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.symbols_per_run = 8;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.discard_symbols = s.symbols_per_run / 2;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.injected_nli_per_w2 = -1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_THROWS_AS(simulate(catalog_format("pm-qpsk"), LinkConfig{}, TxConfig{}, 0, 1e-3, small()),
                    InvalidArgument);
}
