#include "dp4d/error.hpp"
#include "dp4d/optimizer.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dp4d;

namespace {

Constellation4D rotate(const Constellation4D& c, double tx, double ty)
{
    std::vector<Point4> pts;
    for (const auto& p : c.points()) {
        const cplx x = pol_x(p) * std::polar(1.0, tx), y = pol_y(p) * std::polar(1.0, ty);
        pts.push_back({x.real(), x.imag(), y.real(), y.imag()});
    }
    return Constellation4D(c.name(), pts);
}

Constellation4D gaussian_seed(std::size_t m, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<Point4> pts(m);
    for (auto& p : pts)
        for (double& v : p) v = g(rng);
    return normalize_unit_energy(Constellation4D("gauss16", pts));
}

// Amplifier noise 10 dB above the defaults shortens every distance, which
// keeps the kernel integrations cheap.
LinkConfig noisy()
{
    LinkConfig l;
    l.edfa_noise_figure_db = 15.0;
    return l;
}

void check_monotone(const OptimizationTrace& t)
{
    REQUIRE(!t.records.empty());
    for (std::size_t i = 1; i < t.records.size(); ++i)
        CHECK(t.records[i].objective >= t.records[i - 1].objective - 1e-12);
}

} // namespace

TEST_CASE("antipodal pair is already optimal")
{
    const LinkConfig l;
    const TxConfig t;
    const Constellation4D bpsk("bpsk", {{1, 0, 0, 0}, {-1, 0, 0, 0}});
    const auto r = optimize(bpsk, l, t, 20);
    CHECK(r.trace.records.size() <= 3);
    CHECK(r.trace.status == TerminalStatus::GradientTolerance);
    CHECK(r.trace.records.back().grad_norm < 1e-5);
    CHECK(r.best.mean_energy() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gaussian seed climbs monotonically")
{
    const LinkConfig l = noisy();
    const TxConfig t;
    OptimizerConfig cfg;
    cfg.max_iterations = 300;
    const auto seed = gaussian_seed(16, 3);
    const auto r = optimize(seed, l, t, 20, cfg);
    check_monotone(r.trace);
    const auto& first = r.trace.records.front();
    const auto& last = r.trace.records.back();
    CHECK(last.objective > first.objective + 0.1);
    CHECK(std::abs(r.best.mean_energy() - 1.0) < 1e-12);
    CHECK(evaluate_model(r.best, l, t, 20).air.rate_bit_per_4d == doctest::Approx(last.objective).epsilon(1e-12));
    MESSAGE("gaussian M=16: ", first.objective, " -> ", last.objective, " after ", last.iteration, " iterations, ",
            to_string(r.trace.status), ", |g| = ", last.grad_norm);
    if (r.trace.status == TerminalStatus::GradientTolerance) CHECK(last.grad_norm < cfg.gradient_tolerance);
}

TEST_CASE("deterministic and phase-rotation invariant")
{
    const LinkConfig l;
    const TxConfig t;
    OptimizerConfig cfg;
    cfg.max_iterations = 15;
    const auto seed = catalog_format("pm-qpsk");
    const auto a = optimize(seed, l, t, 30, cfg);
    const auto b = optimize(seed, l, t, 30, cfg);
    REQUIRE(a.trace.records.size() == b.trace.records.size());
    for (std::size_t i = 0; i < a.trace.records.size(); ++i) {
        CHECK(a.trace.records[i].objective == b.trace.records[i].objective);
        CHECK(a.trace.records[i].step == b.trace.records[i].step);
    }
    const auto fa = a.best.flat(), fb = b.best.flat();
    for (std::size_t i = 0; i < fa.size(); ++i) CHECK(fa[i] == fb[i]);

    const auto r = optimize(rotate(gaussian_seed(16, 5), 0.4, 1.1), l, t, 30, cfg);
    const auto u = optimize(gaussian_seed(16, 5), l, t, 30, cfg);
    CHECK(r.trace.records.back().objective == doctest::Approx(u.trace.records.back().objective).epsilon(1e-9));
}

TEST_CASE("frozen constraint mode and fixed-covariance gradient still ascend")
{
    const LinkConfig l;
    const TxConfig t;
    for (auto mode : {ConstraintMode::Frozen, ConstraintMode::Eliminate}) {
        OptimizerConfig cfg;
        cfg.max_iterations = 10;
        cfg.constraint_mode = mode;
        cfg.gradient_mode = GradientMode::FixedCovariance;
        const auto r = optimize(gaussian_seed(16, 9), l, t, 20, cfg);
        check_monotone(r.trace);
    }
}

TEST_CASE("configuration validation")
{
    OptimizerConfig cfg;
    cfg.max_iterations = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.step_rule.shrink = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.points_per_dim = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("seed selection")
{
    const LinkConfig l;
    const TxConfig t;
    CHECK(select_seed({catalog_format("pm-qpsk")}, l, t, 10).name() == "pm-qpsk");
    const auto twin = catalog_format("pm-qpsk").renamed("twin");
    CHECK(select_seed({catalog_format("pm-qpsk"), twin}, l, t, 10).name() == "pm-qpsk");

    const auto a = catalog_format("pm-8qam"), b = catalog_format("4d-64prs");
    const double ra = evaluate_model(a, l, t, 80).air.rate_bit_per_4d;
    const double rb = evaluate_model(b, l, t, 80).air.rate_bit_per_4d;
    CHECK(select_seed({a, b}, l, t, 80).name() == (ra >= rb ? a.name() : b.name()));
    CHECK_THROWS_AS(select_seed({a, catalog_format("pm-qpsk")}, l, t, 10), InvalidArgument);
}

TEST_CASE("target distance")
{
    const LinkConfig l = noisy();
    const TxConfig t;
    const auto c = catalog_format("pm-qpsk");
    const int n = target_distance(c, l, t, 3.9);
    CHECK(evaluate_model(c, l, t, n).air.rate_bit_per_4d >= 3.9);
    CHECK(evaluate_model(c, l, t, n + 1).air.rate_bit_per_4d < 3.9);
    // AIR is non-increasing with distance.
    double prev = 5;
    for (int k = std::max(1, n - 5); k <= n + 5; ++k) {
        const double r = evaluate_model(c, l, t, k).air.rate_bit_per_4d;
        CHECK(r <= prev + 1e-12);
        prev = r;
    }
    // Near log2 M the answer is a short link or an unreachable-target error.
    try {
        const int near = target_distance(c, l, t, 4.0 - 1e-9);
        CHECK(near < n);
        CHECK(evaluate_model(c, l, t, near).air.rate_bit_per_4d >= 4.0 - 1e-9);
    } catch (const NumericalError&) {
        CHECK(evaluate_model(c, l, t, 1).air.rate_bit_per_4d < 4.0 - 1e-9);
    }
    CHECK_THROWS_AS(target_distance(c, l, t, 4.5), InvalidArgument);
}
