#include "dp4d/constellation.hpp"

#include "dp4d/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace dp4d {

Constellation4D::Constellation4D(std::string name, std::vector<Point4> points)
    : name_(std::move(name)), points_(std::move(points))
{
    if (points_.size() < 2)
        throw InvalidArgument("constellation '" + name_ + "' needs at least 2 points");
    for (const auto& p : points_)
        for (double v : p)
            if (!std::isfinite(v))
                throw InvalidArgument("constellation '" + name_ + "' has a non-finite coordinate");
    // Sorting a copy keeps the duplicate check O(M log M).
    std::vector<Point4> sorted = points_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw InvalidArgument("constellation '" + name_ + "' contains duplicate points");
}

double Constellation4D::bits() const noexcept { return std::log2(static_cast<double>(points_.size())); }

double Constellation4D::mean_energy() const noexcept
{
    double s = 0.0;
    for (const auto& p : points_) s += energy(p);
    return s / static_cast<double>(points_.size());
}

double Constellation4D::min_distance() const noexcept
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points_.size(); ++i)
        for (std::size_t j = i + 1; j < points_.size(); ++j) {
            double d = 0.0;
            for (int k = 0; k < 4; ++k) {
                const double t = points_[i][k] - points_[j][k];
                d += t * t;
            }
            best = std::min(best, d);
        }
    return std::sqrt(best);
}

std::vector<double> Constellation4D::flat() const
{
    std::vector<double> out;
    out.reserve(points_.size() * 4);
    for (const auto& p : points_) out.insert(out.end(), p.begin(), p.end());
    return out;
}

Constellation4D Constellation4D::from_flat(std::string name, std::span<const double> flat)
{
    if (flat.size() % 4 != 0) throw InvalidArgument("flat coordinate vector length must be a multiple of 4");
    std::vector<Point4> pts(flat.size() / 4);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (int k = 0; k < 4; ++k) pts[i][k] = flat[4 * i + k];
    return Constellation4D(std::move(name), std::move(pts));
}

Constellation4D Constellation4D::renamed(std::string name) const
{
    Constellation4D out = *this;
    out.name_ = std::move(name);
    return out;
}

Constellation4D normalize_unit_energy(const Constellation4D& c)
{
    const double e = c.mean_energy();
    if (!(e > 0.0)) throw InvalidArgument("cannot normalize an all-zero constellation");
    const double g = 1.0 / std::sqrt(e);
    std::vector<Point4> pts(c.points().begin(), c.points().end());
    for (auto& p : pts)
        for (double& v : p) v *= g;
    return Constellation4D(c.name(), std::move(pts));
}

Constellation4D pm_from_2d(const Constellation2D& q)
{
    if (q.points.size() < 2) throw InvalidArgument("2D constellation needs at least 2 points");
    std::vector<Point4> pts;
    pts.reserve(q.points.size() * q.points.size());
    for (const auto& a : q.points)
        for (const auto& b : q.points) pts.push_back({a.real(), a.imag(), b.real(), b.imag()});
    return Constellation4D("pm-" + q.name, std::move(pts));
}

namespace {

Constellation2D normalized_2d(std::string name, std::vector<cplx> pts)
{
    double e = 0.0;
    for (const auto& z : pts) e += std::norm(z);
    e /= static_cast<double>(pts.size());
    for (auto& z : pts) z /= std::sqrt(e);
    return {std::move(name), std::move(pts)};
}

std::vector<cplx> square_grid(int side)
{
    std::vector<cplx> pts;
    for (int i = 0; i < side; ++i)
        for (int q = 0; q < side; ++q) pts.emplace_back(2 * i - side + 1, 2 * q - side + 1);
    return pts;
}

} // namespace

Constellation2D generate_qam(int order)
{
    switch (order) {
    case 4:
        return normalized_2d("qpsk", square_grid(2));
    case 8: {
        std::vector<cplx> pts;
        for (int i = 0; i < 4; ++i)
            for (int q = 0; q < 2; ++q) pts.emplace_back(2 * i - 3, 2 * q - 1);
        return normalized_2d("8qam", std::move(pts));
    }
    case 16:
        return normalized_2d("16qam", square_grid(4));
    case 32: {
        std::vector<cplx> pts;
        for (const auto& z : square_grid(6))
            if (!(std::abs(z.real()) == 5 && std::abs(z.imag()) == 5)) pts.push_back(z);
        return normalized_2d("32qam", std::move(pts));
    }
    case 64:
        return normalized_2d("64qam", square_grid(8));
    default:
        throw InvalidArgument("unsupported QAM order " + std::to_string(order) + " (use 4, 8, 16, 32 or 64)");
    }
}

namespace {

std::vector<Point4> prs_points(double r_in, double r_out)
{
    constexpr double pi = std::numbers::pi;
    std::vector<Point4> pts;
    for (int swap = 0; swap < 2; ++swap)
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 8; ++b) {
                const cplx inner = std::polar(r_in, pi / 8 + a * pi / 2);
                const cplx outer = std::polar(r_out, b * pi / 4);
                const cplx sx = swap ? outer : inner;
                const cplx sy = swap ? inner : outer;
                pts.push_back({sx.real(), sx.imag(), sy.real(), sy.imag()});
            }
    return pts;
}

double prs_min_distance(double r_in)
{
    const double r_out = std::sqrt(2.0 - r_in * r_in);
    return Constellation4D("tmp", prs_points(r_in, r_out)).min_distance();
}

} // namespace

Constellation4D ring_switching_64()
{
    // Golden-section maximin over the inner radius (r_in^2 + r_out^2 = 2).
    double lo = 0.3, hi = 0.99;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    double fa = prs_min_distance(a), fb = prs_min_distance(b);
    for (int it = 0; it < 80; ++it) {
        if (fa < fb) {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = prs_min_distance(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = prs_min_distance(a);
        }
    }
    const double r_in = 0.5 * (lo + hi);
    return normalize_unit_energy(Constellation4D("4d-64prs", prs_points(r_in, std::sqrt(2.0 - r_in * r_in))));
}

std::vector<std::string> catalog_names() { return {"pm-qpsk", "pm-8qam", "pm-16qam", "pm-32qam", "pm-64qam", "4d-64prs"}; }

Constellation4D catalog_format(std::string_view name)
{
    if (name == "pm-qpsk") return normalize_unit_energy(pm_from_2d(generate_qam(4)));
    if (name == "pm-8qam") return normalize_unit_energy(pm_from_2d(generate_qam(8)));
    if (name == "pm-16qam") return normalize_unit_energy(pm_from_2d(generate_qam(16)));
    if (name == "pm-32qam") return normalize_unit_energy(pm_from_2d(generate_qam(32)));
    if (name == "pm-64qam") return normalize_unit_energy(pm_from_2d(generate_qam(64)));
    if (name == "4d-64prs") return ring_switching_64();
    throw InvalidArgument("unknown catalog format '" + std::string(name) + "'");
}

Constellation4D resolve_format(std::string_view spec)
{
    if (spec.starts_with("file:")) return load_constellation(std::filesystem::path(spec.substr(5)));
    if (spec.starts_with("pm:")) return pm_from_2d(load_constellation_2d(std::filesystem::path(spec.substr(3))));
    const auto names = catalog_names();
    if (std::find(names.begin(), names.end(), spec) != names.end()) return catalog_format(spec);
    if (std::filesystem::exists(std::filesystem::path(spec))) return load_constellation(std::filesystem::path(spec));
    throw InvalidArgument("'" + std::string(spec) + "' is neither a catalog format nor a readable file");
}

namespace {

struct ParsedTable {
    std::size_t n_cols = 0;
    std::vector<std::vector<double>> rows;
};

bool parse_double(std::string_view tok, double& out)
{
    // from_chars for double is available in libstdc++ 11.
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (!tok.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::vector<std::string_view> split_ws(std::string_view line)
{
    std::vector<std::string_view> toks;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) toks.push_back(line.substr(i, j - i));
        i = j;
    }
    return toks;
}

ParsedTable parse_table(std::string_view text, std::size_t required_cols_a, std::size_t required_cols_b)
{
    ParsedTable t;
    std::size_t expected = 0;
    bool have_header = false;
    int line_no = 0;
    int header_line = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        pos = end + 1;
        const auto toks = split_ws(line);
        if (toks.empty() || toks.front().starts_with("#")) {
            if (end == text.size()) break;
            continue;
        }
        if (!have_header) {
            if (toks.size() != 2) throw ParseError("header must be 'M N'", line_no);
            double m = 0, n = 0;
            if (!parse_double(toks[0], m) || !parse_double(toks[1], n) || m != std::floor(m) || n != std::floor(n) ||
                m < 1 || n < 1)
                throw ParseError("header must contain two positive integers 'M N'", line_no);
            expected = static_cast<std::size_t>(m);
            t.n_cols = static_cast<std::size_t>(n);
            if (t.n_cols != required_cols_a && t.n_cols != required_cols_b)
                throw ParseError("unsupported dimension N=" + std::to_string(t.n_cols), line_no);
            have_header = true;
            header_line = line_no;
        } else {
            if (toks.size() != t.n_cols)
                throw ParseError("expected " + std::to_string(t.n_cols) + " columns, found " +
                                     std::to_string(toks.size()),
                                 line_no);
            std::vector<double> row(t.n_cols);
            for (std::size_t k = 0; k < t.n_cols; ++k)
                if (!parse_double(toks[k], row[k]) || !std::isfinite(row[k]))
                    throw ParseError("malformed number '" + std::string(toks[k]) + "'", line_no);
            if (t.rows.size() == expected)
                throw ParseError("more rows than the header count M=" + std::to_string(expected), line_no);
            // Duplicate check is quadratic but catalogs are at most a few
            // thousand points.
            for (std::size_t r = 0; r < t.rows.size(); ++r)
                if (t.rows[r] == row)
                    throw ParseError("duplicate point (same as data row " + std::to_string(r + 1) + ")", line_no);
            t.rows.push_back(std::move(row));
        }
        if (end == text.size()) break;
    }
    if (!have_header) throw ParseError("missing 'M N' header", line_no);
    if (t.rows.size() != expected)
        throw ParseError("header declares M=" + std::to_string(expected) + " but " + std::to_string(t.rows.size()) +
                             " rows were found",
                         header_line);
    return t;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

Constellation4D parse_constellation(std::string_view text, std::string name)
{
    auto t = parse_table(text, 4, 4);
    std::vector<Point4> pts(t.rows.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (int k = 0; k < 4; ++k) pts[i][k] = t.rows[i][k];
    return Constellation4D(std::move(name), std::move(pts));
}

Constellation4D load_constellation(const std::filesystem::path& path)
{
    return parse_constellation(read_file(path), path.stem().string());
}

Constellation2D load_constellation_2d(const std::filesystem::path& path)
{
    auto t = parse_table(read_file(path), 2, 2);
    Constellation2D q{path.stem().string(), {}};
    for (const auto& r : t.rows) q.points.emplace_back(r[0], r[1]);
    return q;
}

std::string format_constellation(const Constellation4D& c)
{
    std::ostringstream os;
    os << "# " << c.name() << "\n" << c.size() << " 4\n";
    os << std::setprecision(17);
    for (const auto& p : c.points()) os << p[0] << ' ' << p[1] << ' ' << p[2] << ' ' << p[3] << '\n';
    return os.str();
}

void save_constellation(const Constellation4D& c, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << format_constellation(c);
}

namespace {

struct Var {
    int pol;   // 0 = x, 1 = y
    bool conj;
};

// Moment of a product of variables under independent uniform phase
// randomization of each polarization: nonzero only when every polarization
// appears as many times conjugated as not.
double randomized_moment(const std::array<std::array<double, 4>, 4>& raw, std::span<const Var> vars)
{
    int cnt[2][2] = {{0, 0}, {0, 0}};
    for (const auto& v : vars) ++cnt[v.pol][v.conj ? 1 : 0];
    if (cnt[0][0] != cnt[0][1] || cnt[1][0] != cnt[1][1]) return 0.0;
    if (cnt[0][0] + cnt[1][0] == 0) return 1.0;
    return raw[cnt[0][0]][cnt[1][0]];
}

// Joint cumulant through the moment-cumulant partition formula.
double joint_cumulant(const std::array<std::array<double, 4>, 4>& raw, const std::vector<Var>& vars)
{
    const std::size_t n = vars.size();
    std::vector<int> block(n, 0);
    double total = 0.0;
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int n_blocks) {
        if (i == n) {
            double prod = 1.0;
            for (int b = 0; b < n_blocks && prod != 0.0; ++b) {
                std::vector<Var> sub;
                for (std::size_t k = 0; k < n; ++k)
                    if (block[k] == b) sub.push_back(vars[k]);
                prod *= randomized_moment(raw, sub);
            }
            double coef = (n_blocks % 2 == 1) ? 1.0 : -1.0;
            for (int k = 2; k < n_blocks; ++k) coef *= k;
            total += coef * prod;
            return;
        }
        for (int b = 0; b <= n_blocks; ++b) {
            block[i] = b;
            rec(i + 1, std::max(n_blocks, b + 1));
        }
    };
    rec(0, 0);
    return total;
}

std::vector<Var> pairs(int a, int b)
{
    std::vector<Var> v;
    for (int i = 0; i < a; ++i) {
        v.push_back({0, false});
        v.push_back({0, true});
    }
    for (int i = 0; i < b; ++i) {
        v.push_back({1, false});
        v.push_back({1, true});
    }
    return v;
}

} // namespace

double MomentSet::kappa(int a, int b) const
{
    if (a < 0 || b < 0 || a + b > 3 || a + b == 0) throw InvalidArgument("cumulant order out of range");
    return kappa_[a][b];
}

void MomentSet::finalize()
{
    raw[0][0] = 1.0;
    for (int a = 0; a <= 3; ++a)
        for (int b = 0; a + b <= 3; ++b)
            kappa_[a][b] = (a + b == 0) ? 0.0 : joint_cumulant(raw, pairs(a, b));
    mu2_x = raw[1][0];
    mu2_y = raw[0][1];
    auto norm2 = [](double m2, double m4) { return m2 > 0 ? m4 / (m2 * m2) : 0.0; };
    auto norm3 = [](double m2, double m6) { return m2 > 0 ? m6 / (m2 * m2 * m2) : 0.0; };
    phi_x = mu2_x > 0 ? norm2(mu2_x, raw[2][0]) - 2.0 : 0.0;
    phi_y = mu2_y > 0 ? norm2(mu2_y, raw[0][2]) - 2.0 : 0.0;
    psi_x = mu2_x > 0 ? norm3(mu2_x, raw[3][0]) - 9.0 * norm2(mu2_x, raw[2][0]) + 12.0 : 0.0;
    psi_y = mu2_y > 0 ? norm3(mu2_y, raw[0][3]) - 9.0 * norm2(mu2_y, raw[0][2]) + 12.0 : 0.0;
    const double pxy = mu2_x * mu2_y;
    xpol4 = pxy > 0 ? raw[1][1] / pxy - 1.0 : 0.0;
    xpol6_xxy = pxy > 0 ? kappa_[2][1] / (mu2_x * pxy) : 0.0;
    xpol6_xyy = pxy > 0 ? kappa_[1][2] / (mu2_y * pxy) : 0.0;
}

MomentSet MomentSet::from_summary(double mu2_x, double mu2_y, double phi_x, double phi_y, double psi_x, double psi_y,
                                  double xpol4, double xpol6_xxy, double xpol6_xyy)
{
    MomentSet m;
    m.raw[1][0] = mu2_x;
    m.raw[0][1] = mu2_y;
    m.raw[2][0] = mu2_x * mu2_x * (phi_x + 2.0);
    m.raw[0][2] = mu2_y * mu2_y * (phi_y + 2.0);
    m.raw[3][0] = mu2_x * mu2_x * mu2_x * (psi_x + 9.0 * (phi_x + 2.0) - 12.0);
    m.raw[0][3] = mu2_y * mu2_y * mu2_y * (psi_y + 9.0 * (phi_y + 2.0) - 12.0);
    m.raw[1][1] = mu2_x * mu2_y * (xpol4 + 1.0);
    m.raw[2][1] = 0.0;
    m.raw[1][2] = 0.0;
    m.finalize();
    // The full moment enters its own cumulant with coefficient one.
    m.raw[2][1] = xpol6_xxy * mu2_x * mu2_x * mu2_y - m.kappa_[2][1];
    m.raw[1][2] = xpol6_xyy * mu2_x * mu2_y * mu2_y - m.kappa_[1][2];
    m.finalize();
    return m;
}

MomentSet MomentSet::from_raw(const std::array<std::array<double, 4>, 4>& raw)
{
    MomentSet m;
    m.raw = raw;
    m.finalize();
    return m;
}

MomentSet MomentSet::swapped() const
{
    MomentSet s = *this;
    for (int a = 0; a <= 3; ++a)
        for (int b = 0; a + b <= 3; ++b) s.raw[a][b] = raw[b][a];
    s.finalize();
    s.pseudo_x = pseudo_y;
    s.pseudo_y = pseudo_x;
    return s;
}

MomentSet moments(const Constellation4D& c)
{
    const Constellation4D n = normalize_unit_energy(c);
    const double inv_m = 1.0 / static_cast<double>(n.size());
    MomentSet m;
    for (auto& row : m.raw) row.fill(0.0);
    cplx sx2{0, 0}, sy2{0, 0}, cxy{0, 0}, pxy{0, 0};
    for (const auto& p : n.points()) {
        const cplx sx = pol_x(p), sy = pol_y(p);
        const double ex = std::norm(sx), ey = std::norm(sy);
        double pa = 1.0;
        for (int a = 0; a <= 3; ++a) {
            double pb = 1.0;
            for (int b = 0; a + b <= 3; ++b) {
                m.raw[a][b] += pa * pb * inv_m;
                pb *= ey;
            }
            pa *= ex;
        }
        sx2 += sx * sx * inv_m;
        sy2 += sy * sy * inv_m;
        cxy += sx * std::conj(sy) * inv_m;
        pxy += sx * sy * inv_m;
    }
    m.finalize();
    m.pseudo_x = m.mu2_x > 0 ? std::abs(sx2) / m.mu2_x : 0.0;
    m.pseudo_y = m.mu2_y > 0 ? std::abs(sy2) / m.mu2_y : 0.0;
    const double den = std::sqrt(m.mu2_x * m.mu2_y);
    m.xcorr_conj = den > 0 ? std::abs(cxy) / den : 0.0;
    m.xcorr_plain = den > 0 ? std::abs(pxy) / den : 0.0;
    return m;
}

EnergyProfile energy_levels(const Constellation4D& c, double tol)
{
    if (!(tol > 0.0)) throw InvalidArgument("energy clustering tolerance must be positive");
    const Constellation4D n = normalize_unit_energy(c);
    std::vector<double> e;
    e.reserve(n.size());
    for (const auto& p : n.points()) e.push_back(energy(p));
    std::sort(e.begin(), e.end());
    EnergyProfile out{{}, tol};
    std::size_t start = 0;
    for (std::size_t i = 1; i <= e.size(); ++i) {
        if (i == e.size() || e[i] - e[i - 1] > tol) {
            double s = 0.0;
            for (std::size_t k = start; k < i; ++k) s += e[k];
            out.levels.push_back({s / static_cast<double>(i - start), i - start});
            start = i;
        }
    }
    return out;
}

} // namespace dp4d
