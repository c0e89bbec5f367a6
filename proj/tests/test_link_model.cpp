#include "dp4d/constellation.hpp"
#include "dp4d/error.hpp"
#include "dp4d/link_model.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace dp4d;
using std::numbers::pi;

namespace {

// Span response by direct quadrature in z, summed span by span.
cplx oracle_kernel(const LinkConfig& l, const TxConfig& t, int n, double delta)
{
    const double a = l.alpha_np_per_m() * l.span_length_m();
    const double x = 4 * pi * pi * l.beta2_s2_per_m() * l.span_length_m() * t.symbol_rate_hz() * t.symbol_rate_hz() *
                     delta;
    const int steps = 20000;
    cplx span = 0;
    for (int i = 0; i <= steps; ++i) {
        const double z = static_cast<double>(i) / steps;
        const double w = (i == 0 || i == steps) ? 1 : (i % 2 ? 4 : 2);
        span += w * std::exp(cplx(-a * z, x * z));
    }
    span /= 3.0 * steps;
    cplx sum = 0;
    for (int s = 0; s < n; ++s) sum += std::polar(1.0, x * s);
    return sum * span;
}

// Closed form of the same, for the costlier integrals below.
struct FastKernel {
    double a, theta;
    int n;
    FastKernel(const LinkConfig& l, const TxConfig& t, int n_spans)
        : a(l.alpha_np_per_m() * l.span_length_m()),
          theta(4 * pi * pi * l.beta2_s2_per_m() * l.span_length_m() * t.symbol_rate_hz() * t.symbol_rate_hz()),
          n(n_spans)
    {
    }
    cplx operator()(double delta) const
    {
        const double x = theta * delta;
        const cplx span = (1.0 - std::exp(cplx(-a, x))) / cplx(a, -x);
        cplx sum = 0;
        for (int s = 0; s < n; ++s) sum += std::polar(1.0, x * s);
        return sum * span;
    }
};

bool in_band(double f) { return f >= -0.5 && f <= 0.5; }

NliCoefficientSet fitted(double a)
{
    NliCoefficientSet c;
    c.provenance = NliProvenance::SsfmFitted;
    c.chi0 = {a, a};
    c.n_spans = 1;
    return c;
}

} // namespace

TEST_CASE("link defaults")
{
    const LinkConfig l;
    const TxConfig t;
    CHECK(l.alpha_db_per_km == 0.2);
    CHECK(l.dispersion_ps_nm_km == 17.0);
    CHECK(l.span_length_km == 100.0);
    CHECK(l.edfa_noise_figure_db == 5.0);
    CHECK(t.symbol_rate_gbaud == 50.0);
    CHECK(t.num_channels == 1);
    CHECK(l.span_gain() == doctest::Approx(100.0));
    CHECK(l.beta2_s2_per_m() < 0);
    LinkConfig bad;
    bad.span_length_km = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("ase power")
{
    const LinkConfig l;
    const TxConfig t;
    const double nu = 299792458.0 / 1550e-9;
    const double want = 99.0 * (std::pow(10.0, 0.5) / 2) * 6.62607015e-34 * nu * 50e9;
    CHECK(ase_power(l, t, 1) == doctest::Approx(want).epsilon(1e-12));
    CHECK(ase_power(l, t, 1) == doctest::Approx(1.00e-6).epsilon(0.01));
    CHECK(w_to_dbm(ase_power(l, t, 1)) == doctest::Approx(-30.0).epsilon(0.01));
    CHECK(ase_power(l, t, 10) == doctest::Approx(10 * ase_power(l, t, 1)).epsilon(1e-15));
    LinkConfig lossless = l;
    lossless.alpha_db_per_km = 0;
    lossless.edfa_noise_figure_db = 0;
    CHECK(ase_power(lossless, t, 5) == 0.0);
    CHECK_THROWS_AS(ase_power(l, t, 0), InvalidArgument);
}

TEST_CASE("link kernel matches direct integration")
{
    const LinkConfig l;
    const TxConfig t;
    for (int n : {1, 3, 10})
        for (double d : {0.0, 1e-4, 0.003, -0.02, 0.17, -0.6, 1.0}) {
            const cplx h = link_kernel(l, t, n, d);
            const cplx o = oracle_kernel(l, t, n, d);
            CHECK(std::abs(h - o) < 1e-9 * (1 + std::abs(o)));
        }
}

TEST_CASE("kernel integrals against independent oracles")
{
    const LinkConfig l;
    const TxConfig t;
    const double len2 = l.span_length_m() * l.span_length_m();
    for (int n : {1, 5}) {
        const FastKernel hk(l, t, n);
        const KernelResult kr = integrate_nli_kernels(l, t, n);
        CHECK(kr.rel_error < 1e-2);

        CHECK(kr.kernels.degenerate == doctest::Approx(std::norm(hk(0.0)) * len2).epsilon(1e-9));

        // Monte Carlo over the frequency triple.
        std::mt19937_64 rng(42 + n);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        const long samples = 2000000;
        double s2 = 0, q2 = 0;
        cplx s1 = 0;
        for (long i = 0; i < samples; ++i) {
            const double v = u(rng), v1 = u(rng), v3 = u(rng);
            if (!in_band(v1 + v3 - v)) continue;
            const cplx h = hk((v1 - v) * (v3 - v));
            s2 += std::norm(h);
            q2 += std::norm(h) * std::norm(h);
            s1 += h;
        }
        const double gn_mc = s2 / samples * len2;
        const double gn_se = std::sqrt(q2 / samples - std::pow(s2 / samples, 2)) / std::sqrt(samples) * len2;
        CHECK(std::abs(kr.kernels.gn - gn_mc) < 4 * gn_se + 2e-3 * gn_mc);
        const double k4_mc = std::norm(s1 / static_cast<double>(samples)) * len2;
        CHECK(kr.kernels.k4_sq == doctest::Approx(k4_mc).epsilon(0.02));
    }

    // Nested midpoint grids for the partially coherent kernels (one span).
    const FastKernel hk(l, t, 1);
    const KernelResult kr = integrate_nli_kernels(l, t, 1);
    const int nv = 100, nu = 400;
    const double hv = 1.0 / nv, hu = 2.0 / nu;
    double a = 0, b = 0, six = 0;
    for (int iv = 0; iv < nv; ++iv) {
        const double v = -0.5 + (iv + 0.5) * hv;
        cplx inner6 = 0;
        for (int iu = 0; iu < nu; ++iu) {
            const double uu = -1 + (iu + 0.5) * hu;
            if (!in_band(v + uu)) continue;
            cplx ia = 0, ib = 0;
            for (int iw = 0; iw < nu; ++iw) {
                const double w = -1 + (iw + 0.5) * hu;
                if (in_band(v + w) && in_band(v + uu + w)) ia += hk(uu * w);
                // b: tau = uu, integration variable w plays the role of u.
                if (in_band(v + w) && in_band(v + uu - w)) ib += hk(w * (uu - w));
            }
            a += std::norm(ia * hu) * hu * hv;
            b += std::norm(ib * hu) * hu * hv;
            inner6 += ia * hu * hu;
        }
        six += std::norm(inner6) * hv;
    }
    CHECK(kr.kernels.a == doctest::Approx(a * len2).epsilon(0.02));
    CHECK(kr.kernels.b == doctest::Approx(b * len2).epsilon(0.02));
    CHECK(kr.kernels.six == doctest::Approx(six * len2).epsilon(0.02));
}

TEST_CASE("incoherent accumulation adds span contributions")
{
    const LinkConfig l;
    const TxConfig t;
    KernelOptions inc;
    inc.accumulation = SpanAccumulation::Incoherent;
    const auto one = integrate_nli_kernels(l, t, 1).kernels;
    const auto five = integrate_nli_kernels(l, t, 5, inc).kernels;
    CHECK(five.gn == doctest::Approx(5 * one.gn).epsilon(1e-12));
    CHECK(five.six == doctest::Approx(5 * one.six).epsilon(1e-12));
    // Coherent accumulation grows faster than linearly for this link.
    CHECK(integrate_nli_kernels(l, t, 5).kernels.gn > five.gn);
}

TEST_CASE("coefficients: symmetry and zero nonlinearity")
{
    const LinkConfig l;
    const TxConfig t;
    const auto c = compute_nli_coefficients(l, t, 10);
    CHECK(c.chi0.x == c.chi0.y);
    CHECK(c.chi_phi.x == c.chi_phi.y);
    CHECK(c.chi_psi.x == c.chi_psi.y);
    CHECK(c.chi_xpol.x == c.chi_xpol.y);
    CHECK(c.chi0.x > 0);
    CHECK(c.chi_phi.x > 0);
    CHECK(c.provenance == NliProvenance::KernelIntegrated);

    LinkConfig lin = l;
    lin.gamma_per_w_km = 0;
    const auto z = compute_nli_coefficients(lin, t, 10);
    for (double v : {z.chi0.x, z.chi0.y, z.chi_phi.x, z.chi_psi.x, z.chi_xpol.x, z.chi_xpol.y}) CHECK(v == 0.0);
    const auto p = nli_power(z, moments(catalog_format("pm-16qam")), 1e-2);
    CHECK(p.x == 0.0);
    CHECK(p.y == 0.0);
}

TEST_CASE("nli power: cubic law, gaussian limit, format ordering, polarization swap")
{
    const LinkConfig l;
    const TxConfig t;
    const auto c = compute_nli_coefficients(l, t, 10);
    const MomentSet m16 = moments(catalog_format("pm-16qam"));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    const auto base = nli_power(c, m16, 1e-3);
    for (int i = 0; i < 20; ++i) {
        const double s = u(rng);
        const auto p = nli_power(c, m16, s * 1e-3);
        CHECK(p.x == doctest::Approx(s * s * s * base.x).epsilon(1e-12));
        CHECK(p.y == doctest::Approx(s * s * s * base.y).epsilon(1e-12));
    }
    const auto dbl = nli_power(c, m16, 2e-3);
    CHECK(dbl.x == doctest::Approx(8 * base.x).epsilon(1e-14));

    const MomentSet gauss = MomentSet::from_summary(0.5, 0.5, 0, 0, 0, 0, 0);
    const double p = 2e-3;
    const auto g = nli_power(c, gauss, p);
    CHECK(g.x == doctest::Approx(c.chi0.x * p * p * p).epsilon(1e-9));

    const auto qpsk = nli_power(c, moments(catalog_format("pm-qpsk")), p);
    const auto qam = nli_power(c, m16, p);
    CHECK(qpsk.x < qam.x);
    CHECK(qam.x < g.x);

    // Asymmetric constellation: swapping polarizations swaps the NLI powers.
    std::mt19937_64 r2(8);
    std::normal_distribution<double> gd;
    std::vector<Point4> pts(32), sw(32);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        pts[i] = {gd(r2), gd(r2), 0.5 * gd(r2), 0.5 * gd(r2)};
        sw[i] = {pts[i][2], pts[i][3], pts[i][0], pts[i][1]};
    }
    const auto a = nli_power(c, moments(normalize_unit_energy(Constellation4D("a", pts))), p);
    const auto b = nli_power(c, moments(normalize_unit_energy(Constellation4D("b", sw))), p);
    CHECK(a.x != doctest::Approx(a.y));
    CHECK(a.x == doctest::Approx(b.y).epsilon(1e-12));
    CHECK(a.y == doctest::Approx(b.x).epsilon(1e-12));
}

TEST_CASE("effective snr")
{
    const LinkConfig l;
    const TxConfig t;
    const auto c16 = catalog_format("pm-16qam");
    LinkConfig lin = l;
    lin.gamma_per_w_km = 0;
    const double pase = ase_power(lin, t, 10);
    const auto r = effective_snr(c16, 1e-3, lin, t, 10);
    CHECK(r.snr_4d == doctest::Approx(1e-3 / (2 * pase)).epsilon(1e-14));
    CHECK(r.snr_x == doctest::Approx(0.5e-3 / pase).epsilon(1e-14));

    auto snr_db = [&](double dbm) { return lin_to_db(effective_snr(c16, dbm_to_w(dbm), l, t, 10).snr_4d); };
    CHECK(snr_db(-29) - snr_db(-30) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(snr_db(21) - snr_db(20) == doctest::Approx(-2.0).epsilon(2e-3));

    // Single interior maximum on a bracket.
    int sign_changes = 0;
    double prev = snr_db(-20) - snr_db(-20.1);
    for (double p = -19.9; p <= 20; p += 0.1) {
        const double d = snr_db(p) - snr_db(p - 0.1);
        if ((d > 0) != (prev > 0)) ++sign_changes;
        prev = d;
    }
    CHECK(sign_changes == 1);
}

TEST_CASE("optimal launch")
{
    const LinkConfig l;
    const TxConfig t;
    const auto c16 = catalog_format("pm-16qam");
    const auto opt = optimal_launch(c16, l, t, 10);
    const auto& n = opt.report.noise;
    // Stationarity of P / (a + b P^3): total NLI is half the total ASE.
    CHECK((n.p_nli_x + n.p_nli_y) == doctest::Approx(n.p_ase).epsilon(0.02));
    CHECK(w_to_dbm(opt.p_opt_w) > -5);
    CHECK(w_to_dbm(opt.p_opt_w) < 10);

    // Eight times the NLI coefficient halves the optimal power.
    const MomentSet m = moments(c16);
    const double pase = ase_power(l, t, 10);
    const double p1 = w_to_dbm(optimal_launch(m, pase, fitted(1e3)).p_opt_w);
    const double p8 = w_to_dbm(optimal_launch(m, pase, fitted(8e3)).p_opt_w);
    CHECK(p8 - p1 == doctest::Approx(-10 * std::log10(2.0)).epsilon(0.01));

    LinkConfig lin = l;
    lin.gamma_per_w_km = 0;
    CHECK_THROWS_AS(optimal_launch(c16, lin, t, 10), NumericalError);
}

TEST_CASE("coefficient cache persists and reloads")
{
    const auto dir = std::filesystem::temp_directory_path() / "dp4d_cache_test";
    std::filesystem::remove_all(dir);
    const LinkConfig l;
    const TxConfig t;
    NliCoefficientSet first;
    {
        CoefficientCache cache(dir);
        first = cache.get(l, t, 3);
    }
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.path().extension() == ".json";
    CHECK(files == 1);
    CoefficientCache again(dir);
    const auto second = again.get(l, t, 3);
    CHECK(second.chi0.x == first.chi0.x);
    CHECK(second.chi_xpol.y == first.chi_xpol.y);
    REQUIRE(second.kernels.has_value());
    CHECK(second.kernels->six == first.kernels->six);
    CHECK(CoefficientCache::key(l, t, 3, SpanAccumulation::Coherent) !=
          CoefficientCache::key(l, t, 4, SpanAccumulation::Coherent));
    std::filesystem::remove_all(dir);
}
