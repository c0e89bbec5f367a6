#include "dp4d/dp4d.h"

#include "dp4d/error.hpp"
#include "dp4d/workflows.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <new>

struct dp4d_constellation {
    dp4d::Constellation4D c;
};
struct dp4d_trace {
    dp4d::OptimizationTrace t;
    std::string status;
};
struct dp4d_cloud {
    dp4d::SymbolCloud cloud;
};
struct dp4d_sweep {
    dp4d::SweepResult s;
};

namespace {

thread_local std::string g_last_error;

dp4d_status fail(dp4d_status s, const char* what)
{
    g_last_error = what;
    return s;
}

template <class F>
dp4d_status guarded(F&& f)
{
    try {
        g_last_error.clear();
        f();
        return DP4D_OK;
    } catch (const dp4d::Error& e) {
        switch (e.kind()) {
        case dp4d::ErrorKind::InvalidArgument: return fail(DP4D_INVALID_ARGUMENT, e.what());
        case dp4d::ErrorKind::Config: return fail(DP4D_CONFIG, e.what());
        case dp4d::ErrorKind::Numerical: return fail(DP4D_NUMERICAL, e.what());
        case dp4d::ErrorKind::Io: return fail(DP4D_IO, e.what());
        case dp4d::ErrorKind::Parse: return fail(DP4D_PARSE, e.what());
        }
        return fail(DP4D_INTERNAL, e.what());
    } catch (const std::bad_alloc&) {
        return fail(DP4D_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(DP4D_INTERNAL, e.what());
    } catch (...) {
        return fail(DP4D_INTERNAL, "unknown exception");
    }
}

void need(const void* p, const char* name)
{
    if (!p) throw dp4d::InvalidArgument(std::string(name) + " is null");
}

char* dup(const std::string& s)
{
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

dp4d::LinkConfig to_cpp(const dp4d_link* l)
{
    need(l, "link");
    dp4d::LinkConfig c;
    c.alpha_db_per_km = l->alpha_db_per_km;
    c.dispersion_ps_nm_km = l->dispersion_ps_nm_km;
    c.gamma_per_w_km = l->gamma_per_w_km;
    c.span_length_km = l->span_length_km;
    c.edfa_noise_figure_db = l->edfa_noise_figure_db;
    c.center_wavelength_nm = l->center_wavelength_nm;
    c.validate();
    return c;
}

dp4d::TxConfig to_cpp(const dp4d_tx* t)
{
    need(t, "tx");
    dp4d::TxConfig c;
    c.symbol_rate_gbaud = t->symbol_rate_gbaud;
    c.rrc_rolloff = t->rrc_rolloff;
    c.num_channels = t->num_channels;
    c.validate();
    return c;
}

void fill(const dp4d::AirEstimate& a, dp4d_air* out)
{
    out->rate_bit_per_4d = a.rate_bit_per_4d;
    out->std_error = a.std_error ? *a.std_error : std::numeric_limits<double>::quiet_NaN();
    out->nodes_or_samples = a.nodes_or_samples;
    out->noise = {a.noise.var_x, a.noise.var_y, a.noise.p_ase, a.noise.p_nli_x, a.noise.p_nli_y,
                  a.noise.launch_power_w};
}

} // namespace

extern "C" {

const char* dp4d_version(void) { return "1.0.0"; }
const char* dp4d_last_error(void) { return g_last_error.c_str(); }
void dp4d_string_free(char* s) { std::free(s); }

void dp4d_link_default(dp4d_link* out)
{
    if (!out) return;
    const dp4d::LinkConfig c;
    *out = {c.alpha_db_per_km,       c.dispersion_ps_nm_km, c.gamma_per_w_km, c.span_length_km,
            c.edfa_noise_figure_db, c.center_wavelength_nm};
}

void dp4d_tx_default(dp4d_tx* out)
{
    if (!out) return;
    const dp4d::TxConfig c;
    *out = {c.symbol_rate_gbaud, c.rrc_rolloff, c.num_channels};
}

void dp4d_optimizer_default(dp4d_optimizer_options* out)
{
    if (!out) return;
    const dp4d::OptimizerConfig c;
    *out = {c.max_iterations, c.gradient_tolerance, c.points_per_dim, c.rng_seed, 0};
}

void dp4d_sim_default(dp4d_sim_options* out)
{
    if (!out) return;
    const dp4d::SimConfig c;
    *out = {c.symbols_per_run, c.samples_per_symbol, c.steps_per_span, c.rng_seed, 0};
}

dp4d_status dp4d_set_cache_dir(const char* dir)
{
    return guarded([&] {
        need(dir, "dir");
        dp4d::set_default_cache_dir(dir);
    });
}

dp4d_status dp4d_catalog_names(char** out)
{
    if (out) *out = nullptr;
    return guarded([&] {
        need(out, "out");
        std::string s;
        for (const auto& n : dp4d::catalog_names()) s += n + "\n";
        *out = dup(s);
    });
}

dp4d_status dp4d_constellation_from_format(const char* spec, dp4d_constellation** out)
{
    if (out) *out = nullptr;
    return guarded([&] {
        need(spec, "spec");
        need(out, "out");
        *out = new dp4d_constellation{dp4d::normalize_unit_energy(dp4d::resolve_format(spec))};
    });
}

dp4d_status dp4d_constellation_from_points(const char* name, const double* coords, size_t m,
                                           dp4d_constellation** out)
{
    if (out) *out = nullptr;
    return guarded([&] {
        need(coords, "coords");
        need(out, "out");
        *out = new dp4d_constellation{
            dp4d::Constellation4D::from_flat(name ? name : "custom", std::span<const double>(coords, 4 * m))};
    });
}

void dp4d_constellation_free(dp4d_constellation* c) { delete c; }
size_t dp4d_constellation_size(const dp4d_constellation* c) { return c ? c->c.size() : 0; }
const char* dp4d_constellation_name(const dp4d_constellation* c) { return c ? c->c.name().c_str() : ""; }

dp4d_status dp4d_constellation_points(const dp4d_constellation* c, double* coords)
{
    return guarded([&] {
        need(c, "constellation");
        need(coords, "coords");
        const auto f = c->c.flat();
        std::copy(f.begin(), f.end(), coords);
    });
}

dp4d_status dp4d_constellation_save(const dp4d_constellation* c, const char* path)
{
    return guarded([&] {
        need(c, "constellation");
        need(path, "path");
        dp4d::save_constellation(c->c, path);
    });
}

dp4d_status dp4d_moments_of(const dp4d_constellation* c, dp4d_moments* out)
{
    return guarded([&] {
        need(c, "constellation");
        need(out, "out");
        const dp4d::MomentSet m = dp4d::moments(c->c);
        *out = {m.mu2_x, m.mu2_y, m.phi_x, m.phi_y, m.psi_x, m.psi_y, m.xpol4};
    });
}

dp4d_status dp4d_energy_level_count(const dp4d_constellation* c, double tol, size_t* out)
{
    return guarded([&] {
        need(c, "constellation");
        need(out, "out");
        *out = dp4d::energy_levels(c->c, tol).levels.size();
    });
}

dp4d_status dp4d_ase_power(const dp4d_link* link, const dp4d_tx* tx, int n_spans, double* out_w)
{
    return guarded([&] {
        need(out_w, "out");
        *out_w = dp4d::ase_power(to_cpp(link), to_cpp(tx), n_spans);
    });
}

dp4d_status dp4d_nli_coefficients(const dp4d_link* link, const dp4d_tx* tx, int n_spans, dp4d_nli* out)
{
    return guarded([&] {
        need(out, "out");
        const auto c = dp4d::compute_nli_coefficients(to_cpp(link), to_cpp(tx), n_spans);
        *out = {{c.chi0.x, c.chi0.y},     {c.chi_phi.x, c.chi_phi.y}, {c.chi_psi.x, c.chi_psi.y},
                {c.chi_xpol.x, c.chi_xpol.y}, c.gamma_eff,           c.rel_error,
                c.n_spans};
    });
}

dp4d_status dp4d_optimal_launch(const dp4d_constellation* c, const dp4d_link* link, const dp4d_tx* tx, int n_spans,
                                double* p_opt_dbm, double* snr_4d_db)
{
    return guarded([&] {
        need(c, "constellation");
        const auto r = dp4d::optimal_launch(c->c, to_cpp(link), to_cpp(tx), n_spans);
        if (p_opt_dbm) *p_opt_dbm = dp4d::w_to_dbm(r.p_opt_w);
        if (snr_4d_db) *snr_4d_db = dp4d::lin_to_db(r.report.snr_4d);
    });
}

dp4d_status dp4d_air_awgn(const dp4d_constellation* c, double snr_4d_db, int points_per_dim, dp4d_air* out)
{
    return guarded([&] {
        need(c, "constellation");
        need(out, "out");
        fill(dp4d::gh_air(c->c, dp4d::NoiseProfile::isotropic_snr(dp4d::db_to_lin(snr_4d_db)), points_per_dim), out);
    });
}

dp4d_status dp4d_air_link(const dp4d_constellation* c, const dp4d_link* link, const dp4d_tx* tx, int n_spans,
                          double launch_power_dbm, int points_per_dim, dp4d_air* out)
{
    return guarded([&] {
        need(c, "constellation");
        need(out, "out");
        const auto l = to_cpp(link);
        const auto t = to_cpp(tx);
        const double p = std::isnan(launch_power_dbm) ? dp4d::optimal_launch(c->c, l, t, n_spans).p_opt_w
                                                      : dp4d::dbm_to_w(launch_power_dbm);
        const auto r = dp4d::effective_snr(c->c, p, l, t, n_spans);
        fill(dp4d::gh_air(c->c, r.noise, points_per_dim), out);
    });
}

dp4d_status dp4d_optimize(const dp4d_constellation* seed, const dp4d_link* link, const dp4d_tx* tx, int n_spans,
                          const dp4d_optimizer_options* opt, dp4d_constellation** best, dp4d_trace** trace)
{
    if (best) *best = nullptr;
    if (trace) *trace = nullptr;
    return guarded([&] {
        need(seed, "seed");
        need(best, "best");
        dp4d::OptimizerConfig cfg;
        if (opt) {
            cfg.max_iterations = opt->max_iterations;
            cfg.gradient_tolerance = opt->gradient_tolerance;
            cfg.points_per_dim = opt->points_per_dim;
            cfg.rng_seed = opt->seed;
            cfg.gradient_mode =
                opt->fixed_covariance_gradient ? dp4d::GradientMode::FixedCovariance : dp4d::GradientMode::Total;
        }
        auto r = dp4d::optimize(seed->c, to_cpp(link), to_cpp(tx), n_spans, cfg);
        auto* b = new dp4d_constellation{std::move(r.best)};
        if (trace) {
            try {
                *trace = new dp4d_trace{std::move(r.trace), ""};
                (*trace)->status = dp4d::to_string((*trace)->t.status);
            } catch (...) {
                delete b;
                throw;
            }
        }
        *best = b;
    });
}

void dp4d_trace_free(dp4d_trace* t) { delete t; }
size_t dp4d_trace_length(const dp4d_trace* t) { return t ? t->t.records.size() : 0; }
const char* dp4d_trace_status(const dp4d_trace* t) { return t ? t->status.c_str() : ""; }

dp4d_status dp4d_trace_record_at(const dp4d_trace* t, size_t i, dp4d_trace_record* out)
{
    return guarded([&] {
        need(t, "trace");
        need(out, "out");
        if (i >= t->t.records.size()) throw dp4d::InvalidArgument("trace index out of range");
        const auto& r = t->t.records[i];
        *out = {r.iteration, r.objective, r.grad_norm, r.p_opt_dbm, r.snr_db, r.step};
    });
}

dp4d_status dp4d_simulate(const dp4d_constellation* c, const dp4d_link* link, const dp4d_tx* tx, int n_spans,
                          double launch_power_dbm, const dp4d_sim_options* opt, dp4d_cloud** out)
{
    if (out) *out = nullptr;
    return guarded([&] {
        need(c, "constellation");
        need(out, "out");
        dp4d::SimConfig sim;
        if (opt) {
            sim.symbols_per_run = opt->symbols_per_run;
            sim.samples_per_symbol = opt->samples_per_symbol;
            sim.steps_per_span = opt->steps_per_span;
            sim.rng_seed = opt->seed;
            sim.ase = opt->ase_off ? dp4d::AseInjection::Off : dp4d::AseInjection::PerSpan;
        }
        *out = new dp4d_cloud{
            dp4d::simulate(c->c, to_cpp(link), to_cpp(tx), n_spans, dp4d::dbm_to_w(launch_power_dbm), sim)};
    });
}

void dp4d_cloud_free(dp4d_cloud* cl) { delete cl; }
size_t dp4d_cloud_size(const dp4d_cloud* cl) { return cl ? cl->cloud.rx_points.size() : 0; }

dp4d_status dp4d_cloud_snr(const dp4d_cloud* cl, double* snr_x_db, double* snr_y_db, double* snr_4d_db)
{
    return guarded([&] {
        need(cl, "cloud");
        if (snr_x_db) *snr_x_db = dp4d::lin_to_db(cl->cloud.snr_x);
        if (snr_y_db) *snr_y_db = dp4d::lin_to_db(cl->cloud.snr_y);
        if (snr_4d_db) *snr_4d_db = dp4d::lin_to_db(cl->cloud.snr_4d);
    });
}

dp4d_status dp4d_cloud_air(const dp4d_cloud* cl, const dp4d_constellation* c, dp4d_air* out)
{
    return guarded([&] {
        need(cl, "cloud");
        need(c, "constellation");
        need(out, "out");
        fill(dp4d::mc_air(c->c, cl->cloud.tx_indices, cl->cloud.rx_points), out);
    });
}

dp4d_status dp4d_sweep_model(const dp4d_constellation* c, const dp4d_link* link, const dp4d_tx* tx,
                             const int* spans, size_t count, int points_per_dim, dp4d_sweep** out)
{
    if (out) *out = nullptr;
    return guarded([&] {
        need(c, "constellation");
        need(spans, "spans");
        need(out, "out");
        dp4d::SweepOptions so;
        so.points_per_dim = points_per_dim;
        *out = new dp4d_sweep{
            dp4d::sweep_distance(c->c, to_cpp(link), to_cpp(tx), std::vector<int>(spans, spans + count), so)};
    });
}

void dp4d_sweep_free(dp4d_sweep* s) { delete s; }
size_t dp4d_sweep_length(const dp4d_sweep* s) { return s ? s->s.rows.size() : 0; }

dp4d_status dp4d_sweep_row_at(const dp4d_sweep* s, size_t i, dp4d_sweep_row* out)
{
    return guarded([&] {
        need(s, "sweep");
        need(out, "out");
        if (i >= s->s.rows.size()) throw dp4d::InvalidArgument("sweep index out of range");
        const auto& r = s->s.rows[i];
        *out = {r.n_spans, r.distance_km, r.p_opt_dbm, r.snr_4d_db, r.air_bit_per_4d};
    });
}

dp4d_status dp4d_sweep_reach(const dp4d_sweep* s, double rate_threshold, double* reach_km)
{
    return guarded([&] {
        need(s, "sweep");
        need(reach_km, "reach_km");
        *reach_km = dp4d::reach(s->s, rate_threshold);
    });
}

dp4d_status dp4d_run_config_json(const char* json, const char* run_dir, char** summary)
{
    if (summary) *summary = nullptr;
    return guarded([&] {
        need(json, "json");
        std::optional<std::filesystem::path> dir;
        if (run_dir) dir = run_dir;
        const auto r = dp4d::run_config_text(json, dir);
        if (summary) *summary = dup(r.summary);
    });
}

dp4d_status dp4d_run_config_file(const char* path, const char* run_dir, char** summary)
{
    if (summary) *summary = nullptr;
    return guarded([&] {
        need(path, "path");
        std::optional<std::filesystem::path> dir;
        if (run_dir) dir = run_dir;
        const auto r = dp4d::run_config(path, dir);
        if (summary) *summary = dup(r.summary);
    });
}

} // extern "C"
