#include "dp4d/workflows.hpp"

#include "dp4d/error.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dp4d {

std::string to_string(SweepBackend b) { return b == SweepBackend::Model ? "model" : "ssfm"; }

std::string link_hash(const LinkConfig& link, const TxConfig& tx)
{
    const std::string key = CoefficientCache::key(link, tx, 0, SpanAccumulation::Coherent);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : key) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

SweepResult sweep_distance(const Constellation4D& c, const LinkConfig& link, const TxConfig& tx,
                           std::vector<int> spans, const SweepOptions& opt)
{
    if (spans.empty()) throw InvalidArgument("span range is empty");
    std::sort(spans.begin(), spans.end());
    spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
    if (spans.front() < 1) throw InvalidArgument("n_spans must be >= 1");

    SweepResult out;
    out.constellation = c.name();
    out.link_hash = link_hash(link, tx);
    out.rows.resize(spans.size());
    detail::parallel_for(spans.size(), [&](std::size_t i) {
        const int n = spans[i];
        const ModelPoint mp = evaluate_model(c, link, tx, n, opt.points_per_dim);
        SweepRow& row = out.rows[i];
        row.n_spans = n;
        row.distance_km = n * link.span_length_km;
        row.p_opt_dbm = w_to_dbm(mp.launch.p_opt_w);
        row.backend = opt.backend;
        if (opt.backend == SweepBackend::Model) {
            row.snr_4d_db = lin_to_db(mp.launch.report.snr_4d);
            row.air_bit_per_4d = mp.air.rate_bit_per_4d;
        } else {
            const AirEstimate a = ssfm_air(c, link, tx, n, mp.launch.p_opt_w, opt.sim);
            row.snr_4d_db = lin_to_db(a.noise.snr_4d());
            row.air_bit_per_4d = a.rate_bit_per_4d;
        }
    });
    return out;
}

double reach(const SweepResult& s, double threshold)
{
    if (s.rows.empty()) throw InvalidArgument("sweep has no rows");
    for (std::size_t i = 0; i + 1 < s.rows.size(); ++i) {
        const SweepRow& a = s.rows[i];
        const SweepRow& b = s.rows[i + 1];
        if (a.air_bit_per_4d >= threshold && b.air_bit_per_4d < threshold) {
            const double t = (a.air_bit_per_4d - threshold) / (a.air_bit_per_4d - b.air_bit_per_4d);
            return a.distance_km + t * (b.distance_km - a.distance_km);
        }
    }
    if (s.rows.size() == 1 && s.rows.front().air_bit_per_4d == threshold) return s.rows.front().distance_km;
    throw InvalidArgument("rate threshold " + std::to_string(threshold) + " is not crossed within the sweep");
}

double rate_at(const SweepResult& s, double d)
{
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
        if (s.rows[i].distance_km == d) return s.rows[i].air_bit_per_4d;
        if (i + 1 < s.rows.size() && s.rows[i].distance_km < d && d < s.rows[i + 1].distance_km) {
            const SweepRow& a = s.rows[i];
            const SweepRow& b = s.rows[i + 1];
            const double t = (d - a.distance_km) / (b.distance_km - a.distance_km);
            return a.air_bit_per_4d + t * (b.air_bit_per_4d - a.air_bit_per_4d);
        }
    }
    throw InvalidArgument("distance " + std::to_string(d) + " km lies outside the sweep");
}

CompareReport compare_sweeps(const std::vector<SweepResult>& sweeps, const std::vector<double>& thresholds)
{
    if (sweeps.size() < 2) throw InvalidArgument("comparison needs at least two formats");
    if (sweeps.size() != thresholds.size()) throw InvalidArgument("one threshold per sweep is required");
    CompareReport r;
    for (std::size_t i = 0; i < sweeps.size(); ++i)
        r.formats.push_back({sweeps[i].constellation, thresholds[i], reach(sweeps[i], thresholds[i]), 0.0});
    r.reference_km = r.formats.front().reach_km;
    for (std::size_t i = 0; i < sweeps.size(); ++i) r.formats[i].rate_at_reference = rate_at(sweeps[i], r.reference_km);
    for (const auto& a : r.formats)
        for (const auto& b : r.formats) {
            if (&a == &b) continue;
            r.pairs.push_back({a.name, b.name, a.rate_at_reference - b.rate_at_reference,
                               100.0 * (a.reach_km - b.reach_km) / b.reach_km});
        }
    return r;
}

CompareReport compare(const std::vector<Constellation4D>& formats, const LinkConfig& link, const TxConfig& tx,
                      const CompareOptions& opt)
{
    if (formats.size() < 2) throw InvalidArgument("comparison needs at least two formats");
    for (const auto& f : formats)
        if (f.size() != formats.front().size()) throw InvalidArgument("compared formats must share the same M");
    const double m_bits = std::log2(static_cast<double>(formats.front().size()));
    const double thr = opt.rate_threshold ? *opt.rate_threshold : opt.threshold_fraction * m_bits;

    // Span counts bracketing each crossing, then the reference distance.
    std::vector<int> last_good(formats.size());
    detail::parallel_for(formats.size(), [&](std::size_t i) {
        last_good[i] = target_distance(formats[i], link, tx, thr, opt.points_per_dim, opt.max_spans);
    });
    const double span_km = link.span_length_km;
    SweepOptions so;
    so.points_per_dim = opt.points_per_dim;
    std::vector<SweepResult> sweeps;
    const SweepResult first = sweep_distance(formats[0], link, tx, {last_good[0], last_good[0] + 1}, so);
    const double ref = reach(first, thr);
    const int ref_lo = std::max(1, static_cast<int>(std::floor(ref / span_km)));
    for (std::size_t i = 0; i < formats.size(); ++i)
        sweeps.push_back(sweep_distance(formats[i], link, tx, {last_good[i], last_good[i] + 1, ref_lo, ref_lo + 1}, so));
    return compare_sweeps(sweeps, std::vector<double>(formats.size(), thr));
}

namespace {

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace

std::string sweep_csv(const SweepResult& s)
{
    std::ostringstream os;
    os << "n_spans,distance_km,p_opt_dbm,snr_4d_db,air_bit_per_4d,backend\n";
    for (const auto& r : s.rows)
        os << r.n_spans << ',' << fmt(r.distance_km) << ',' << fmt(r.p_opt_dbm) << ',' << fmt(r.snr_4d_db) << ','
           << fmt(r.air_bit_per_4d) << ',' << to_string(r.backend) << '\n';
    return os.str();
}

std::string sweep_dat(const SweepResult& s)
{
    std::ostringstream os;
    os << "# " << s.constellation << " link " << s.link_hash << '\n';
    os << "# distance_km air_bit_per_4d snr_4d_db p_opt_dbm n_spans\n";
    for (const auto& r : s.rows)
        os << fmt(r.distance_km) << ' ' << fmt(r.air_bit_per_4d) << ' ' << fmt(r.snr_4d_db) << ' ' << fmt(r.p_opt_dbm)
           << ' ' << r.n_spans << '\n';
    return os.str();
}

SweepResult parse_sweep_csv(const std::string& text, std::string name)
{
    SweepResult s;
    s.constellation = std::move(name);
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1) {
            if (line.rfind("n_spans,", 0) != 0) throw ParseError("expected sweep CSV header", lineno);
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cols.push_back(cell);
        if (cols.size() != 6) throw ParseError("expected 6 columns", lineno);
        SweepRow r;
        try {
            r.n_spans = std::stoi(cols[0]);
            r.distance_km = std::stod(cols[1]);
            r.p_opt_dbm = std::stod(cols[2]);
            r.snr_4d_db = std::stod(cols[3]);
            r.air_bit_per_4d = std::stod(cols[4]);
        } catch (const std::exception&) {
            throw ParseError("malformed number", lineno);
        }
        if (cols[5] == "model")
            r.backend = SweepBackend::Model;
        else if (cols[5] == "ssfm")
            r.backend = SweepBackend::Ssfm;
        else
            throw ParseError("unknown backend '" + cols[5] + "'", lineno);
        s.rows.push_back(r);
    }
    std::sort(s.rows.begin(), s.rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.n_spans < b.n_spans; });
    return s;
}

std::string trace_csv(const OptimizationTrace& t)
{
    std::ostringstream os;
    os << "iteration,objective,grad_norm,p_opt_dbm,snr_db,step\n";
    for (const auto& r : t.records)
        os << r.iteration << ',' << fmt(r.objective) << ',' << fmt(r.grad_norm) << ',' << fmt(r.p_opt_dbm) << ','
           << fmt(r.snr_db) << ',' << fmt(r.step) << '\n';
    return os.str();
}

std::string cloud_csv(const SymbolCloud& c)
{
    std::ostringstream os;
    os << "tx_index,rx_0,rx_1,rx_2,rx_3\n";
    char buf[160];
    for (std::size_t k = 0; k < c.tx_indices.size(); ++k) {
        const Point4& p = c.rx_points[k];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", c.tx_indices[k], p[0], p[1], p[2], p[3]);
        os << buf;
    }
    return os.str();
}

std::string compare_csv(const CompareReport& r)
{
    std::ostringstream os;
    os << "format_a,format_b,reach_a_km,reach_b_km,rate_a,rate_b,rate_gain_bit_per_4d,reach_gain_pct,reference_km\n";
    auto find = [&](const std::string& n) -> const CompareEntry& {
        for (const auto& e : r.formats)
            if (e.name == n) return e;
        return r.formats.front();
    };
    for (const auto& p : r.pairs) {
        const CompareEntry& a = find(p.a);
        const CompareEntry& b = find(p.b);
        os << p.a << ',' << p.b << ',' << fmt(a.reach_km) << ',' << fmt(b.reach_km) << ',' << fmt(a.rate_at_reference)
           << ',' << fmt(b.rate_at_reference) << ',' << fmt(p.rate_gain) << ',' << fmt(p.reach_gain_pct) << ','
           << fmt(r.reference_km) << '\n';
    }
    return os.str();
}

std::string air_csv_header()
{
    return "format,backend,rate_bit_per_4d,std_error,nodes_or_samples,launch_power_dbm,snr_4d_db,var_x_w,var_y_w\n";
}

std::string air_csv_row(const std::string& name, const AirEstimate& a)
{
    std::ostringstream os;
    os << name << ',' << to_string(a.backend) << ',' << fmt(a.rate_bit_per_4d) << ','
       << (a.std_error ? fmt(*a.std_error) : std::string()) << ',' << a.nodes_or_samples << ','
       << fmt(w_to_dbm(a.noise.launch_power_w)) << ',' << fmt(lin_to_db(a.noise.snr_4d())) << ','
       << fmt(a.noise.var_x) << ',' << fmt(a.noise.var_y) << '\n';
    return os.str();
}

} // namespace dp4d
