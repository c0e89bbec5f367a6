// Command-line front end. Every subcommand is translated into a JSON run
// config and executed through the C API.

#include "dp4d/dp4d.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

using nlohmann::json;

namespace {

struct LinkFlags {
    std::optional<double> alpha, dispersion, gamma, span_km, nf, wavelength;
    std::optional<double> baud, rolloff;

    void add(CLI::App* app)
    {
        app->add_option("--alpha", alpha, "Attenuation [dB/km]");
        app->add_option("--dispersion", dispersion, "Dispersion [ps/nm/km]");
        app->add_option("--gamma", gamma, "Nonlinear coefficient [1/W/km]");
        app->add_option("--span-km", span_km, "Span length [km]");
        app->add_option("--nf", nf, "EDFA noise figure [dB]");
        app->add_option("--wavelength", wavelength, "Carrier wavelength [nm]");
        app->add_option("--baud", baud, "Symbol rate [GBd]");
        app->add_option("--rolloff", rolloff, "RRC roll-off");
    }

    void apply(json& j) const
    {
        json l = json::object();
        if (alpha) l["alpha_db_per_km"] = *alpha;
        if (dispersion) l["dispersion_ps_nm_km"] = *dispersion;
        if (gamma) l["gamma_per_w_km"] = *gamma;
        if (span_km) l["span_length_km"] = *span_km;
        if (nf) l["edfa_noise_figure_db"] = *nf;
        if (wavelength) l["center_wavelength_nm"] = *wavelength;
        if (!l.empty()) j["link"] = l;
        json t = json::object();
        if (baud) t["symbol_rate_gbaud"] = *baud;
        if (rolloff) t["rrc_rolloff"] = *rolloff;
        if (!t.empty()) j["tx"] = t;
    }
};

struct SpanFlags {
    std::optional<int> n_spans, first, last;
    int step = 1;

    void add(CLI::App* app, bool range)
    {
        app->add_option("-n,--n-spans", n_spans, "Number of spans");
        if (range) {
            app->add_option("--first", first, "First span count of a range");
            app->add_option("--last", last, "Last span count of a range");
            app->add_option("--step", step, "Span step of a range")->check(CLI::PositiveNumber);
        }
    }

    void apply(json& j) const
    {
        if (n_spans) j["n_spans"] = *n_spans;
        if (first || last) {
            const int f = first.value_or(1);
            j["span_range"] = {{"first", f}, {"last", last.value_or(f)}, {"step", step}};
        }
    }
};

int exit_code(dp4d_status s)
{
    switch (s) {
    case DP4D_OK: return 0;
    case DP4D_CONFIG:
    case DP4D_INVALID_ARGUMENT:
    case DP4D_PARSE: return 2;
    case DP4D_NUMERICAL: return 3;
    default: return 1;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Four-dimensional modulation format design and evaluation"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::uint64_t> seed;
    std::optional<std::string> cache_dir, out_dir;
    bool print_config = false;
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--cache-dir", cache_dir, "Directory for cached NLI coefficients");
    app.add_option("-o,--out", out_dir, "Run directory for artifacts");
    app.add_flag("--print-config", print_config, "Print the generated config and exit");

    json cfg;
    LinkFlags link;
    SpanFlags spans;
    std::vector<std::string> formats;
    std::optional<double> launch_dbm, snr_db, threshold, fraction, target_fraction;
    std::string backend = "model";
    std::optional<int> ppd, iterations, symbols, sps, steps;
    std::string gradient = "total";
    std::optional<std::string> sweep_csv, config_path;
    bool incoherent = false, select_seed = false, calibrate = false, full_gamma = false, no_ase = false;

    auto add_common = [&](CLI::App* sub, bool range) {
        link.add(sub);
        spans.add(sub, range);
        sub->add_flag("--incoherent", incoherent, "Incoherent NLI accumulation over spans");
    };
    auto add_backend = [&](CLI::App* sub) {
        sub->add_option("--backend", backend, "model or ssfm")->check(CLI::IsMember({"model", "ssfm"}));
        sub->add_option("--ppd", ppd, "Gauss-Hermite points per dimension");
    };

    app.add_subcommand("catalog", "List the built-in formats with their moments");

    auto* moments = app.add_subcommand("moments", "Moments and energy levels of formats");
    moments->add_option("formats", formats, "Catalog name, pm:<2D file> or 4D file")->required();

    auto* nli = app.add_subcommand("nli-coeffs", "NLI coefficients of a link");
    add_common(nli, true);

    auto* air = app.add_subcommand("air", "Achievable information rate");
    air->add_option("formats", formats)->required();
    add_common(air, true);
    add_backend(air);
    air->add_option("--launch-dbm", launch_dbm, "Launch power; default is the model optimum");
    air->add_option("--snr-db", snr_db, "Evaluate on an AWGN channel of this 4D SNR instead of a link");

    auto* opt = app.add_subcommand("optimize", "Optimize a constellation for a link");
    opt->add_option("formats", formats, "Seed format, or candidates with --select-seed")->required();
    add_common(opt, false);
    opt->add_option("--ppd", ppd);
    opt->add_option("--iterations", iterations, "Maximum iterations");
    opt->add_option("--gradient", gradient, "total or fixed-covariance")
        ->check(CLI::IsMember({"total", "fixed-covariance"}));
    opt->add_option("--target-fraction", target_fraction,
                    "Pick the distance where the seed reaches this fraction of log2 M");
    opt->add_flag("--select-seed", select_seed, "Start from the best listed format");

    auto* ssfm = app.add_subcommand("ssfm", "Split-step Fourier simulation");
    ssfm->add_option("formats", formats)->required()->expected(1);
    add_common(ssfm, false);
    ssfm->add_option("--launch-dbm", launch_dbm);
    ssfm->add_option("--symbols", symbols, "Symbols per run");
    ssfm->add_option("--sps", sps, "Samples per symbol");
    ssfm->add_option("--steps", steps, "Steps per span");
    ssfm->add_flag("--calibrate", calibrate, "Fit the NLI coefficient from three runs");
    ssfm->add_flag("--full-gamma", full_gamma, "Use gamma instead of the 8/9 Manakov factor");
    ssfm->add_flag("--no-ase", no_ase, "Disable amplifier noise");

    auto* sweep = app.add_subcommand("sweep", "AIR versus distance");
    sweep->add_option("formats", formats)->required();
    add_common(sweep, true);
    add_backend(sweep);
    sweep->add_option("--symbols", symbols, "Symbols per SSFM run");

    auto* reach = app.add_subcommand("reach", "Distance at a rate threshold");
    reach->add_option("formats", formats);
    add_common(reach, true);
    add_backend(reach);
    reach->add_option("--sweep-csv", sweep_csv, "Use a precomputed sweep");
    reach->add_option("--threshold", threshold, "Rate threshold [bit/4D]");
    reach->add_option("--fraction", fraction, "Threshold as a fraction of log2 M");

    auto* cmp = app.add_subcommand("compare", "Reach and rate gains between formats");
    cmp->add_option("formats", formats)->required();
    add_common(cmp, false);
    cmp->add_option("--ppd", ppd);
    cmp->add_option("--threshold", threshold);
    cmp->add_option("--fraction", fraction);

    auto* run = app.add_subcommand("run", "Execute a JSON config");
    run->add_option("config", config_path)->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (cache_dir && dp4d_set_cache_dir(cache_dir->c_str()) != DP4D_OK) {
        std::fprintf(stderr, "error: %s\n", dp4d_last_error());
        return 1;
    }

    char* summary = nullptr;
    dp4d_status st;
    if (run->parsed()) {
        st = dp4d_run_config_file(config_path->c_str(), out_dir ? out_dir->c_str() : nullptr, &summary);
    } else {
        cfg["schema_version"] = 1;
        cfg["workflow"] = app.get_subcommands().front()->get_name();
        if (seed) cfg["seed"] = *seed;
        if (cache_dir) cfg["cache_dir"] = *cache_dir;
        link.apply(cfg);
        spans.apply(cfg);
        if (incoherent) cfg["accumulation"] = "incoherent";
        if (!formats.empty()) cfg["formats"] = formats;
        if (launch_dbm) cfg["launch_power_dbm"] = *launch_dbm;
        if (snr_db) cfg["snr_db"] = *snr_db;
        if (backend != "model") cfg["backend"] = backend;
        if (ppd) cfg["points_per_dim"] = *ppd;
        if (threshold) cfg["rate_threshold"] = *threshold;
        if (fraction) cfg["threshold_fraction"] = *fraction;
        if (sweep_csv) cfg["sweep_csv"] = *sweep_csv;
        if (target_fraction) cfg["target_fraction"] = *target_fraction;
        if (select_seed) cfg["select_seed"] = true;
        if (calibrate) cfg["calibrate"] = true;
        if (opt->parsed()) {
            json o = {{"gradient_mode", gradient}};
            if (iterations) o["max_iterations"] = *iterations;
            cfg["optimizer"] = o;
        }
        json sim = json::object();
        if (symbols) sim["symbols_per_run"] = *symbols;
        if (sps) sim["samples_per_symbol"] = *sps;
        if (steps) sim["steps_per_span"] = *steps;
        if (full_gamma) sim["nonlinearity"] = "full-gamma";
        if (no_ase) sim["ase_injection"] = "off";
        if (!sim.empty()) cfg["sim"] = sim;
        if (print_config) {
            std::printf("%s\n", cfg.dump(2).c_str());
            return 0;
        }
        st = dp4d_run_config_json(cfg.dump().c_str(), out_dir ? out_dir->c_str() : nullptr, &summary);
    }

    if (st != DP4D_OK) {
        std::fprintf(stderr, "error: %s\n", dp4d_last_error());
        return exit_code(st);
    }
    std::fputs(summary, stdout);
    dp4d_string_free(summary);
    return 0;
}
