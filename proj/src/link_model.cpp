#include "dp4d/link_model.hpp"

#include "dp4d/error.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dp4d {

void LinkConfig::validate() const
{
    auto pos = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
    };
    pos(alpha_db_per_km, "alpha_db_per_km");
    pos(dispersion_ps_nm_km, "dispersion_ps_nm_km");
    if (!(gamma_per_w_km >= 0.0) || !std::isfinite(gamma_per_w_km))
        throw ConfigError("gamma_per_w_km must be nonnegative");
    pos(span_length_km, "span_length_km");
    if (!(edfa_noise_figure_db >= 0.0) || !std::isfinite(edfa_noise_figure_db))
        throw ConfigError("edfa_noise_figure_db must be nonnegative");
    pos(center_wavelength_nm, "center_wavelength_nm");
}

double LinkConfig::alpha_np_per_m() const { return alpha_db_per_km * std::log(10.0) / 10.0 / 1e3; }

double LinkConfig::beta2_s2_per_m() const
{
    const double lambda = center_wavelength_nm * 1e-9;
    const double d = dispersion_ps_nm_km * 1e-6;  // s/m^2
    return -d * lambda * lambda / (2.0 * std::numbers::pi * phys::kLightSpeed);
}

double LinkConfig::gamma_per_w_m() const { return gamma_per_w_km * 1e-3; }
double LinkConfig::carrier_hz() const { return phys::kLightSpeed / (center_wavelength_nm * 1e-9); }
double LinkConfig::span_gain() const { return db_to_lin(alpha_db_per_km * span_length_km); }
double LinkConfig::noise_figure() const { return db_to_lin(edfa_noise_figure_db); }

void TxConfig::validate() const
{
    if (!(symbol_rate_gbaud > 0.0) || !std::isfinite(symbol_rate_gbaud))
        throw ConfigError("symbol_rate_gbaud must be positive");
    if (!(rrc_rolloff > 0.0 && rrc_rolloff < 1.0)) throw ConfigError("rrc_rolloff must lie in (0, 1)");
    if (num_channels != 1) throw ConfigError("num_channels must be 1 (single-channel model)");
}

double ase_power(const LinkConfig& link, const TxConfig& tx, int n_spans)
{
    if (n_spans < 1) throw InvalidArgument("n_spans must be >= 1");
    return n_spans * (link.span_gain() - 1.0) * 0.5 * link.noise_figure() * phys::kPlanck * link.carrier_hz() *
           tx.symbol_rate_hz();
}

std::string to_string(NliProvenance p)
{
    return p == NliProvenance::KernelIntegrated ? "kernel-integrated" : "ssfm-fitted";
}

PolPair NliCoefficientSet::nli_power(const MomentSet& mom, double p) const
{
    if (!(p >= 0.0)) throw InvalidArgument("launch power must be nonnegative");
    const double p3 = p * p * p;
    if (kernels) {
        const double g2 = gamma_eff * gamma_eff;
        return {g2 * p3 * nli_variance_factor(*kernels, mom, 0), g2 * p3 * nli_variance_factor(*kernels, mom, 1)};
    }
    auto lin = [&](double c0, double cphi, double cpsi, double cx, double phi, double psi) {
        return std::max(0.0, p3 * (c0 + cphi * phi + cpsi * psi + cx * mom.xpol4));
    };
    return {lin(chi0.x, chi_phi.x, chi_psi.x, chi_xpol.x, mom.phi_x, mom.psi_x),
            lin(chi0.y, chi_phi.y, chi_psi.y, chi_xpol.y, mom.phi_y, mom.psi_y)};
}

PolPair nli_power(const NliCoefficientSet& coeffs, const MomentSet& mom, double launch_power_w)
{
    return coeffs.nli_power(mom, launch_power_w);
}

NliCoefficientSet coefficients_from_kernels(const NliKernels& k, double gamma_eff, int n_spans, SpanAccumulation acc,
                                            double rel_error)
{
    NliCoefficientSet c;
    c.n_spans = n_spans;
    c.provenance = NliProvenance::KernelIntegrated;
    c.accumulation = acc;
    c.kernels = k;
    c.gamma_eff = gamma_eff;
    c.rel_error = rel_error;

    // Linearization around the balanced Gaussian. Both polarizations are
    // perturbed together, which is exact to first order for PM formats.
    // The variance factor is quadratic in the moments, so central
    // differences give the exact derivative.
    const double g2 = gamma_eff * gamma_eff;
    auto eval = [&](double phi, double psi, double xp) {
        const MomentSet m = MomentSet::from_summary(0.5, 0.5, phi, phi, psi, psi, xp);
        return PolPair{g2 * nli_variance_factor(k, m, 0), g2 * nli_variance_factor(k, m, 1)};
    };
    const double h = 0.5;
    const PolPair base = eval(0, 0, 0);
    auto diff = [&](PolPair plus, PolPair minus) {
        return PolPair{(plus.x - minus.x) / (2 * h), (plus.y - minus.y) / (2 * h)};
    };
    c.chi0 = base;
    c.chi_phi = diff(eval(h, 0, 0), eval(-h, 0, 0));
    c.chi_psi = diff(eval(0, h, 0), eval(0, -h, 0));
    c.chi_xpol = diff(eval(0, 0, h), eval(0, 0, -h));
    return c;
}

namespace {

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

nlohmann::json to_json(const NliCoefficientSet& c, const std::string& key)
{
    auto pp = [](PolPair p) { return nlohmann::json::array({p.x, p.y}); };
    nlohmann::json j = {{"key", key},
                        {"chi0", pp(c.chi0)},
                        {"chi_phi", pp(c.chi_phi)},
                        {"chi_psi", pp(c.chi_psi)},
                        {"chi_xpol", pp(c.chi_xpol)},
                        {"n_spans", c.n_spans},
                        {"provenance", to_string(c.provenance)},
                        {"accumulation", c.accumulation == SpanAccumulation::Coherent ? "coherent" : "incoherent"},
                        {"gamma_eff", c.gamma_eff},
                        {"rel_error", c.rel_error}};
    if (c.kernels) {
        const auto& k = *c.kernels;
        j["kernels"] = {{"degenerate", k.degenerate}, {"cross", k.cross}, {"k4_sq", k.k4_sq}, {"gn", k.gn},
                        {"a", k.a},                   {"b", k.b},         {"six", k.six}};
    }
    return j;
}

NliCoefficientSet from_json(const nlohmann::json& j)
{
    auto pp = [](const nlohmann::json& a) { return PolPair{a.at(0).get<double>(), a.at(1).get<double>()}; };
    NliCoefficientSet c;
    c.chi0 = pp(j.at("chi0"));
    c.chi_phi = pp(j.at("chi_phi"));
    c.chi_psi = pp(j.at("chi_psi"));
    c.chi_xpol = pp(j.at("chi_xpol"));
    c.n_spans = j.at("n_spans").get<int>();
    c.provenance = j.at("provenance").get<std::string>() == "ssfm-fitted" ? NliProvenance::SsfmFitted
                                                                          : NliProvenance::KernelIntegrated;
    c.accumulation = j.at("accumulation").get<std::string>() == "incoherent" ? SpanAccumulation::Incoherent
                                                                              : SpanAccumulation::Coherent;
    c.gamma_eff = j.at("gamma_eff").get<double>();
    c.rel_error = j.at("rel_error").get<double>();
    if (j.contains("kernels")) {
        const auto& k = j.at("kernels");
        c.kernels = NliKernels{k.at("degenerate"), k.at("cross"), k.at("k4_sq"), k.at("gn"),
                               k.at("a"),          k.at("b"),     k.at("six")};
    }
    return c;
}

} // namespace

std::string CoefficientCache::key(const LinkConfig& link, const TxConfig& tx, int n_spans, SpanAccumulation acc)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, "v%d|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%d|%d|%s", kNliModelVersion,
                  link.alpha_db_per_km, link.dispersion_ps_nm_km, link.gamma_per_w_km, link.span_length_km,
                  link.edfa_noise_figure_db, link.center_wavelength_nm, tx.symbol_rate_gbaud, tx.rrc_rolloff,
                  tx.num_channels, n_spans, acc == SpanAccumulation::Coherent ? "coherent" : "incoherent");
    return buf;
}

NliCoefficientSet CoefficientCache::get(const LinkConfig& link, const TxConfig& tx, int n_spans, SpanAccumulation acc)
{
    const std::string k = key(link, tx, n_spans, acc);
    {
        std::shared_lock lock(mutex_);
        if (auto it = memo_.find(k); it != memo_.end()) return it->second;
    }
    std::optional<std::filesystem::path> file;
    if (dir_) {
        char name[64];
        std::snprintf(name, sizeof name, "nli_%016llx.json", static_cast<unsigned long long>(fnv1a(k)));
        file = *dir_ / name;
        std::ifstream in(*file);
        if (in) {
            try {
                const auto j = nlohmann::json::parse(in);
                if (j.at("key").get<std::string>() == k) {
                    NliCoefficientSet c = from_json(j);
                    std::unique_lock lock(mutex_);
                    return memo_.emplace(k, c).first->second;
                }
            } catch (const nlohmann::json::exception&) {
                // Corrupt entry: recompute and overwrite.
            }
        }
    }
    const KernelResult r = integrate_nli_kernels(link, tx, n_spans, {acc});
    NliCoefficientSet c =
        coefficients_from_kernels(r.kernels, 8.0 / 9.0 * link.gamma_per_w_m(), n_spans, acc, r.rel_error);
    std::unique_lock lock(mutex_);
    if (file) {
        std::error_code ec;
        std::filesystem::create_directories(*dir_, ec);
        const auto tmp = file->string() + ".tmp";
        {
            std::ofstream out(tmp);
            if (!out) throw IoError("cannot write coefficient cache file " + tmp);
            out << to_json(c, k).dump(2) << '\n';
        }
        std::filesystem::rename(tmp, *file, ec);
        if (ec) throw IoError("cannot write coefficient cache file " + file->string());
    }
    return memo_.emplace(k, c).first->second;
}

namespace {
std::mutex g_default_mutex;
std::unique_ptr<CoefficientCache> g_default;
} // namespace

CoefficientCache& default_cache()
{
    std::lock_guard lock(g_default_mutex);
    if (!g_default) g_default = std::make_unique<CoefficientCache>();
    return *g_default;
}

void set_default_cache_dir(const std::filesystem::path& dir)
{
    std::lock_guard lock(g_default_mutex);
    g_default = std::make_unique<CoefficientCache>(dir);
}

NliCoefficientSet compute_nli_coefficients(const LinkConfig& link, const TxConfig& tx, int n_spans,
                                           SpanAccumulation acc)
{
    link.validate();
    tx.validate();
    if (n_spans < 1) throw InvalidArgument("n_spans must be >= 1");
    return default_cache().get(link, tx, n_spans, acc);
}

NoiseProfile NoiseProfile::isotropic_snr(double snr_4d_linear, double launch_power_w)
{
    if (!(snr_4d_linear > 0.0)) throw InvalidArgument("SNR must be positive");
    NoiseProfile n;
    n.launch_power_w = launch_power_w;
    n.var_x = n.var_y = launch_power_w / (2.0 * snr_4d_linear);
    n.p_ase = n.var_x;
    return n;
}

SnrReport effective_snr(const MomentSet& mom, double p, double p_ase, const NliCoefficientSet& coeffs)
{
    if (!(p > 0.0)) throw InvalidArgument("launch power must be positive");
    const PolPair nli = coeffs.nli_power(mom, p);
    SnrReport r;
    r.noise.launch_power_w = p;
    r.noise.p_ase = p_ase;
    r.noise.p_nli_x = nli.x;
    r.noise.p_nli_y = nli.y;
    r.noise.var_x = p_ase + nli.x;
    r.noise.var_y = p_ase + nli.y;
    r.snr_x = mom.mu2_x * p / r.noise.var_x;
    r.snr_y = mom.mu2_y * p / r.noise.var_y;
    r.snr_4d = p / (r.noise.var_x + r.noise.var_y);
    return r;
}

SnrReport effective_snr(const Constellation4D& c, double p, const LinkConfig& link, const TxConfig& tx, int n_spans)
{
    return effective_snr(moments(c), p, ase_power(link, tx, n_spans), compute_nli_coefficients(link, tx, n_spans));
}

OptimalLaunch optimal_launch(const MomentSet& mom, double p_ase, const NliCoefficientSet& coeffs,
                             const LaunchSearch& s)
{
    if (!(s.hi_dbm > s.lo_dbm) || !(s.tol_db > 0.0)) throw InvalidArgument("invalid launch power bracket");
    auto f = [&](double dbm) { return effective_snr(mom, dbm_to_w(dbm), p_ase, coeffs).snr_4d; };
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = s.lo_dbm, b = s.hi_dbm;
    double c = b - ratio * (b - a), d = a + ratio * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > s.tol_db) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    const double best = 0.5 * (a + b);
    if (best - s.lo_dbm < s.tol_db || s.hi_dbm - best < s.tol_db)
        throw NumericalError("optimal launch power search hit the bracket edge at " + std::to_string(best) +
                             " dBm; SNR curve has no interior maximum");
    OptimalLaunch out;
    out.p_opt_w = dbm_to_w(best);
    out.report = effective_snr(mom, out.p_opt_w, p_ase, coeffs);
    return out;
}

OptimalLaunch optimal_launch(const Constellation4D& c, const LinkConfig& link, const TxConfig& tx, int n_spans,
                             const LaunchSearch& s)
{
    return optimal_launch(moments(c), ase_power(link, tx, n_spans), compute_nli_coefficients(link, tx, n_spans), s);
}

} // namespace dp4d
