#include "dp4d/error.hpp"
#include "dp4d/workflows.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dp4d;
namespace fs = std::filesystem;

namespace {

SweepResult synthetic(const std::string& name, std::vector<std::pair<double, double>> rows)
{
    SweepResult s;
    s.constellation = name;
    for (const auto& [d, r] : rows) {
        SweepRow row;
        row.n_spans = static_cast<int>(d / 100.0);
        row.distance_km = d;
        row.air_bit_per_4d = r;
        s.rows.push_back(row);
    }
    return s;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("dp4d_test_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("table defaults")
{
    const LinkConfig l;
    const TxConfig t;
    CHECK(l.alpha_db_per_km == 0.2);
    CHECK(l.dispersion_ps_nm_km == 17.0);
    CHECK(l.span_length_km == 100.0);
    CHECK(l.edfa_noise_figure_db == 5.0);
    CHECK(t.symbol_rate_gbaud == 50.0);
    CHECK(t.num_channels == 1);
}

TEST_CASE("reach interpolates between bracketing rows")
{
    const auto s = synthetic("f", {{1000, 6.5}, {1100, 6.3}});
    CHECK(reach(s, 6.4) == doctest::Approx(1050.0).epsilon(1e-14));
    CHECK(reach(s, 6.5) == doctest::Approx(1000.0));
    CHECK_THROWS_AS(reach(s, 6.6), InvalidArgument);
    CHECK_THROWS_AS(reach(s, 6.2), InvalidArgument);
    CHECK(rate_at(s, 1025.0) == doctest::Approx(6.45));
    CHECK_THROWS_AS(rate_at(s, 900.0), InvalidArgument);
}

TEST_CASE("comparison on synthetic sweeps")
{
    // Linear sweeps with hand-computed crossings:
    //   qpsk  : 4.0 - d/5000   reaches 3.2 at 4000 km
    //   16qam : 8.0 - d/1000   reaches 6.4 at 1600 km
    const auto q = synthetic("qpsk", {{1000, 3.8}, {2000, 3.6}, {3000, 3.4}, {4000, 3.2}, {5000, 3.0}});
    const auto h = synthetic("16qam", {{1000, 7.0}, {2000, 6.0}, {3000, 5.0}, {4000, 4.0}, {5000, 3.0}});
    const auto r = compare_sweeps({q, h}, {3.2, 6.4});
    REQUIRE(r.formats.size() == 2);
    CHECK(r.formats[0].reach_km == doctest::Approx(4000.0));
    CHECK(r.formats[1].reach_km == doctest::Approx(1600.0));
    CHECK(r.reference_km == doctest::Approx(4000.0));
    CHECK(r.formats[1].rate_at_reference == doctest::Approx(4.0));
    REQUIRE(r.pairs.size() == 2);
    CHECK(r.pairs[0].a == "qpsk");
    CHECK(r.pairs[0].reach_gain_pct == doctest::Approx(150.0));
    CHECK(r.pairs[0].rate_gain == doctest::Approx(3.2 - 4.0));
    CHECK(r.pairs[1].reach_gain_pct == doctest::Approx(-60.0));

    const auto self = compare_sweeps({q, q}, {3.2, 3.2});
    for (const auto& p : self.pairs) {
        CHECK(p.rate_gain == 0.0);
        CHECK(p.reach_gain_pct == 0.0);
    }
    CHECK_THROWS_AS(compare_sweeps({q}, {3.2}), InvalidArgument);
    CHECK_THROWS_AS(compare_sweeps({q, h}, {3.2}), InvalidArgument);
}

TEST_CASE("model sweep is monotone and distances follow span count")
{
    const LinkConfig l;
    const TxConfig t;
    std::vector<int> spans;
    for (int n = 10; n <= 60; n += 10) spans.push_back(n);
    const auto s = sweep_distance(catalog_format("pm-16qam"), l, t, spans);
    REQUIRE(s.rows.size() == spans.size());
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
        CHECK(s.rows[i].distance_km == 100.0 * s.rows[i].n_spans);
        if (i > 0) CHECK(s.rows[i].air_bit_per_4d < s.rows[i - 1].air_bit_per_4d);
    }
    const auto one = sweep_distance(catalog_format("pm-16qam"), l, t, {7});
    REQUIRE(one.rows.size() == 1);
    CHECK(one.rows[0].distance_km == 700.0);
    CHECK_THROWS_AS(sweep_distance(catalog_format("pm-16qam"), l, t, {}), InvalidArgument);

    const auto back = parse_sweep_csv(sweep_csv(s), s.constellation);
    REQUIRE(back.rows.size() == s.rows.size());
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
        CHECK(back.rows[i].n_spans == s.rows[i].n_spans);
        CHECK(back.rows[i].air_bit_per_4d == doctest::Approx(s.rows[i].air_bit_per_4d).epsilon(1e-9));
    }
}

TEST_CASE("compare of a format with itself and of mixed sizes")
{
    LinkConfig l;
    l.edfa_noise_figure_db = 15.0;
    const TxConfig t;
    const auto q = catalog_format("pm-qpsk");
    const auto r = compare({q, q.renamed("copy")}, l, t);
    for (const auto& p : r.pairs) {
        CHECK(p.rate_gain == doctest::Approx(0.0));
        CHECK(p.reach_gain_pct == doctest::Approx(0.0));
    }
    CHECK_THROWS_AS(compare({q, catalog_format("pm-16qam")}, l, t), InvalidArgument);
}

TEST_CASE("config errors name the offending field")
{
    try {
        run_config_text(R"({"schema_version": 1, "workflow": "air", "formats": ["pm-qpsk"], "bogus": 3})", {});
        FAIL("accepted an unknown key");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    }
    try {
        run_config_text(R"({"schema_version": 1, "workflow": "air", "link": {"span_km": 80}})", {});
        FAIL("accepted an unknown link key");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("span_km") != std::string::npos);
    }
    CHECK_THROWS_AS(run_config_text(R"({"schema_version": 2, "workflow": "air"})", {}), ConfigError);
    CHECK_THROWS_AS(run_config_text(R"({"schema_version": 1})", {}), ConfigError);
    CHECK_THROWS_AS(run_config_text(R"({"schema_version": 1, "workflow": "fly"})", {}), ConfigError);
    CHECK_THROWS_AS(run_config_text(R"({"schema_version": 1, "workflow": "air", "n_spans": "ten"})", {}),
                    ConfigError);
    CHECK_THROWS(run_config_text("{not json", {}));
}

TEST_CASE("minimal air config yields one row")
{
    const fs::path dir = scratch("air");
    const auto out = run_config_text(R"({"schema_version": 1, "workflow": "air", "formats": ["pm-qpsk"]})", dir);
    const std::string csv = slurp(dir / "air.csv");
    int lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == 2);  // header plus one row
    CHECK(fs::exists(dir / "config.json"));
    fs::remove_all(dir);
}

TEST_CASE("run directories reproduce themselves")
{
    const std::vector<std::string> configs = {
        R"({"schema_version": 1, "workflow": "sweep", "formats": ["pm-qpsk", "pm-16qam"],
            "span_range": {"first": 5, "last": 25, "step": 5}})",
        R"({"schema_version": 1, "workflow": "optimize", "formats": ["pm-qpsk"], "n_spans": 30,
            "optimizer": {"max_iterations": 5}})",
        R"({"schema_version": 1, "workflow": "ssfm", "formats": ["pm-qpsk"], "n_spans": 2, "seed": 11,
            "sim": {"symbols_per_run": 1024, "steps_per_span": 100, "discard_symbols": 64}})",
    };
    int k = 0;
    for (const auto& cfg : configs) {
        const fs::path a = scratch("repro_a" + std::to_string(k)), b = scratch("repro_b" + std::to_string(k));
        ++k;
        const auto first = run_config_text(cfg, a);
        run_config(a / "config.json", b);
        CHECK(slurp(a / "config.json") == slurp(b / "config.json"));
        int compared = 0;
        for (const auto& f : fs::directory_iterator(a)) {
            if (f.path().extension() != ".csv") continue;
            CHECK_MESSAGE(slurp(f.path()) == slurp(b / f.path().filename()), f.path().filename().string());
            ++compared;
        }
        CHECK(compared > 0);
        fs::remove_all(a);
        fs::remove_all(b);
    }
}

TEST_CASE("reach workflow from a saved sweep")
{
    const fs::path dir = scratch("reach");
    fs::create_directories(dir);
    const fs::path csv = dir / "in.csv";
    std::ofstream(csv) << sweep_csv(synthetic("f", {{1000, 6.5}, {1100, 6.3}}));
    const auto out = run_config_text(R"({"schema_version": 1, "workflow": "reach", "rate_threshold": 6.4,
                                         "sweep_csv": ")" + csv.string() + R"("})",
                                     {});
    CHECK(out.summary.find("1050") != std::string::npos);
    fs::remove_all(dir);
}
