// Declarative experiment runner: parses and validates the JSON config,
// dispatches to a workflow and writes the artifacts.

#include "dp4d/error.hpp"
#include "dp4d/workflows.hpp"

#include <json.hpp>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace dp4d {

namespace {

using nlohmann::json;

const std::set<std::string> kWorkflows = {"catalog", "moments", "nli-coeffs", "air",   "optimize",
                                          "ssfm",    "sweep",   "reach",      "compare"};

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where)
{
    if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + (where.empty() ? it.key() : where + "." + it.key()) + "'");
}

template <class T>
T get(const json& obj, const char* key, T fallback, const std::string& where)
{
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("field '" + (where.empty() ? std::string(key) : where + "." + key) + "' has the wrong type");
    }
}

struct RunSpec {
    std::string workflow;
    std::uint64_t seed = 1;
    std::optional<std::string> cache_dir;
    LinkConfig link;
    TxConfig tx;
    SpanAccumulation accumulation = SpanAccumulation::Coherent;
    std::vector<std::string> formats;
    int n_spans = 10;
    std::vector<int> spans;
    std::optional<double> launch_power_dbm;
    std::optional<double> snr_db;
    SweepBackend backend = SweepBackend::Model;
    int points_per_dim = 8;
    std::optional<double> rate_threshold;
    double threshold_fraction = 0.8;
    std::optional<std::string> sweep_csv;
    double energy_tolerance = kDefaultEnergyTolerance;
    bool calibrate = false;
    bool select_seed = false;
    std::optional<double> target_fraction;
    OptimizerConfig optimizer;
    SimConfig sim;
};

std::string accumulation_name(SpanAccumulation a) { return a == SpanAccumulation::Coherent ? "coherent" : "incoherent"; }

RunSpec parse_spec(const json& j)
{
    check_keys(j, {"schema_version", "workflow", "seed", "cache_dir", "link", "tx", "accumulation", "format", "formats",
                   "n_spans", "spans", "span_range", "launch_power_dbm", "snr_db", "backend", "points_per_dim",
                   "rate_threshold", "threshold_fraction", "sweep_csv", "energy_tolerance", "calibrate",
                   "select_seed", "target_fraction", "optimizer", "sim"},
               "");
    RunSpec s;
    const int version = get<int>(j, "schema_version", kConfigSchemaVersion, "");
    if (version != kConfigSchemaVersion)
        throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                          std::to_string(kConfigSchemaVersion) + ")");
    if (!j.contains("workflow")) throw ConfigError("missing required key 'workflow'");
    s.workflow = get<std::string>(j, "workflow", "", "");
    if (!kWorkflows.count(s.workflow)) throw ConfigError("unknown workflow '" + s.workflow + "'");
    s.seed = get<std::uint64_t>(j, "seed", 1, "");
    if (j.contains("cache_dir")) s.cache_dir = get<std::string>(j, "cache_dir", "", "");

    if (j.contains("link")) {
        const json& l = j.at("link");
        check_keys(l, {"alpha_db_per_km", "dispersion_ps_nm_km", "gamma_per_w_km", "span_length_km",
                       "edfa_noise_figure_db", "center_wavelength_nm"},
                   "link");
        s.link.alpha_db_per_km = get<double>(l, "alpha_db_per_km", s.link.alpha_db_per_km, "link");
        s.link.dispersion_ps_nm_km = get<double>(l, "dispersion_ps_nm_km", s.link.dispersion_ps_nm_km, "link");
        s.link.gamma_per_w_km = get<double>(l, "gamma_per_w_km", s.link.gamma_per_w_km, "link");
        s.link.span_length_km = get<double>(l, "span_length_km", s.link.span_length_km, "link");
        s.link.edfa_noise_figure_db = get<double>(l, "edfa_noise_figure_db", s.link.edfa_noise_figure_db, "link");
        s.link.center_wavelength_nm = get<double>(l, "center_wavelength_nm", s.link.center_wavelength_nm, "link");
    }
    s.link.validate();
    if (j.contains("tx")) {
        const json& t = j.at("tx");
        check_keys(t, {"symbol_rate_gbaud", "rrc_rolloff", "num_channels"}, "tx");
        s.tx.symbol_rate_gbaud = get<double>(t, "symbol_rate_gbaud", s.tx.symbol_rate_gbaud, "tx");
        s.tx.rrc_rolloff = get<double>(t, "rrc_rolloff", s.tx.rrc_rolloff, "tx");
        s.tx.num_channels = get<int>(t, "num_channels", s.tx.num_channels, "tx");
    }
    s.tx.validate();
    const std::string acc = get<std::string>(j, "accumulation", "coherent", "");
    if (acc == "coherent")
        s.accumulation = SpanAccumulation::Coherent;
    else if (acc == "incoherent")
        s.accumulation = SpanAccumulation::Incoherent;
    else
        throw ConfigError("field 'accumulation' must be 'coherent' or 'incoherent'");

    if (j.contains("format")) s.formats.push_back(get<std::string>(j, "format", "", ""));
    if (j.contains("formats")) {
        const auto more = get<std::vector<std::string>>(j, "formats", {}, "");
        s.formats.insert(s.formats.end(), more.begin(), more.end());
    }
    s.n_spans = get<int>(j, "n_spans", s.n_spans, "");
    if (s.n_spans < 1) throw ConfigError("field 'n_spans' must be >= 1");
    if (j.contains("spans")) s.spans = get<std::vector<int>>(j, "spans", {}, "");
    if (j.contains("span_range")) {
        const json& r = j.at("span_range");
        check_keys(r, {"first", "last", "step"}, "span_range");
        const int first = get<int>(r, "first", 1, "span_range");
        const int last = get<int>(r, "last", first, "span_range");
        const int step = get<int>(r, "step", 1, "span_range");
        if (first < 1 || last < first || step < 1) throw ConfigError("field 'span_range' is inconsistent");
        for (int n = first; n <= last; n += step) s.spans.push_back(n);
    }
    if (j.contains("launch_power_dbm")) s.launch_power_dbm = get<double>(j, "launch_power_dbm", 0.0, "");
    if (j.contains("snr_db")) s.snr_db = get<double>(j, "snr_db", 0.0, "");
    const std::string backend = get<std::string>(j, "backend", "model", "");
    if (backend == "model")
        s.backend = SweepBackend::Model;
    else if (backend == "ssfm")
        s.backend = SweepBackend::Ssfm;
    else
        throw ConfigError("field 'backend' must be 'model' or 'ssfm'");
    s.points_per_dim = get<int>(j, "points_per_dim", s.points_per_dim, "");
    if (s.points_per_dim < 2 || s.points_per_dim > kMaxPointsPerDim)
        throw ConfigError("field 'points_per_dim' out of range");
    if (j.contains("rate_threshold")) s.rate_threshold = get<double>(j, "rate_threshold", 0.0, "");
    s.threshold_fraction = get<double>(j, "threshold_fraction", s.threshold_fraction, "");
    if (!(s.threshold_fraction > 0.0 && s.threshold_fraction < 1.0))
        throw ConfigError("field 'threshold_fraction' must lie in (0, 1)");
    if (j.contains("sweep_csv")) s.sweep_csv = get<std::string>(j, "sweep_csv", "", "");
    s.energy_tolerance = get<double>(j, "energy_tolerance", s.energy_tolerance, "");
    s.calibrate = get<bool>(j, "calibrate", false, "");
    s.select_seed = get<bool>(j, "select_seed", false, "");
    if (j.contains("target_fraction")) s.target_fraction = get<double>(j, "target_fraction", 0.8, "");

    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        check_keys(o, {"max_iterations", "gradient_tolerance", "initial_step", "shrink", "sufficient_increase",
                       "max_backtracks", "constraint_mode", "gradient_mode", "snr_refresh_every", "min_distance",
                       "restarts", "restart_perturbation"},
                   "optimizer");
        OptimizerConfig& c = s.optimizer;
        c.max_iterations = get<int>(o, "max_iterations", c.max_iterations, "optimizer");
        c.gradient_tolerance = get<double>(o, "gradient_tolerance", c.gradient_tolerance, "optimizer");
        c.step_rule.initial_step = get<double>(o, "initial_step", c.step_rule.initial_step, "optimizer");
        c.step_rule.shrink = get<double>(o, "shrink", c.step_rule.shrink, "optimizer");
        c.step_rule.sufficient_increase =
            get<double>(o, "sufficient_increase", c.step_rule.sufficient_increase, "optimizer");
        c.step_rule.max_backtracks = get<int>(o, "max_backtracks", c.step_rule.max_backtracks, "optimizer");
        const std::string cm = get<std::string>(o, "constraint_mode", "eliminate", "optimizer");
        if (cm == "eliminate")
            c.constraint_mode = ConstraintMode::Eliminate;
        else if (cm == "frozen")
            c.constraint_mode = ConstraintMode::Frozen;
        else
            throw ConfigError("field 'optimizer.constraint_mode' must be 'eliminate' or 'frozen'");
        const std::string gm = get<std::string>(o, "gradient_mode", "total", "optimizer");
        if (gm == "total")
            c.gradient_mode = GradientMode::Total;
        else if (gm == "fixed-covariance")
            c.gradient_mode = GradientMode::FixedCovariance;
        else
            throw ConfigError("field 'optimizer.gradient_mode' must be 'total' or 'fixed-covariance'");
        c.snr_refresh_every = get<int>(o, "snr_refresh_every", c.snr_refresh_every, "optimizer");
        c.min_distance = get<double>(o, "min_distance", c.min_distance, "optimizer");
        c.restarts = get<int>(o, "restarts", c.restarts, "optimizer");
        c.restart_perturbation = get<double>(o, "restart_perturbation", c.restart_perturbation, "optimizer");
    }
    s.optimizer.points_per_dim = s.points_per_dim;
    s.optimizer.rng_seed = s.seed;
    try {
        s.optimizer.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("optimizer: ") + e.what());
    }

    if (j.contains("sim")) {
        const json& m = j.at("sim");
        check_keys(m, {"symbols_per_run", "samples_per_symbol", "steps_per_span", "nonlinearity", "ase_injection",
                       "discard_symbols"},
                   "sim");
        SimConfig& c = s.sim;
        c.symbols_per_run = get<int>(m, "symbols_per_run", c.symbols_per_run, "sim");
        c.samples_per_symbol = get<int>(m, "samples_per_symbol", c.samples_per_symbol, "sim");
        c.steps_per_span = get<int>(m, "steps_per_span", c.steps_per_span, "sim");
        c.discard_symbols = get<int>(m, "discard_symbols", c.discard_symbols, "sim");
        const std::string nl = get<std::string>(m, "nonlinearity", "manakov-8/9", "sim");
        if (nl == "manakov-8/9")
            c.nonlinearity = NonlinearityScaling::Manakov;
        else if (nl == "full-gamma")
            c.nonlinearity = NonlinearityScaling::FullGamma;
        else
            throw ConfigError("field 'sim.nonlinearity' must be 'manakov-8/9' or 'full-gamma'");
        const std::string ase = get<std::string>(m, "ase_injection", "per-span", "sim");
        if (ase == "per-span")
            c.ase = AseInjection::PerSpan;
        else if (ase == "off")
            c.ase = AseInjection::Off;
        else
            throw ConfigError("field 'sim.ase_injection' must be 'per-span' or 'off'");
    }
    s.sim.rng_seed = s.seed;
    s.sim.validate();
    return s;
}

json resolved(const RunSpec& s)
{
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["workflow"] = s.workflow;
    j["seed"] = s.seed;
    if (s.cache_dir) j["cache_dir"] = *s.cache_dir;
    j["link"] = {{"alpha_db_per_km", s.link.alpha_db_per_km},
                 {"dispersion_ps_nm_km", s.link.dispersion_ps_nm_km},
                 {"gamma_per_w_km", s.link.gamma_per_w_km},
                 {"span_length_km", s.link.span_length_km},
                 {"edfa_noise_figure_db", s.link.edfa_noise_figure_db},
                 {"center_wavelength_nm", s.link.center_wavelength_nm}};
    j["tx"] = {{"symbol_rate_gbaud", s.tx.symbol_rate_gbaud},
               {"rrc_rolloff", s.tx.rrc_rolloff},
               {"num_channels", s.tx.num_channels}};
    j["accumulation"] = accumulation_name(s.accumulation);
    if (!s.formats.empty()) j["formats"] = s.formats;
    j["n_spans"] = s.n_spans;
    if (!s.spans.empty()) j["spans"] = s.spans;
    if (s.launch_power_dbm) j["launch_power_dbm"] = *s.launch_power_dbm;
    if (s.snr_db) j["snr_db"] = *s.snr_db;
    j["backend"] = to_string(s.backend);
    j["points_per_dim"] = s.points_per_dim;
    if (s.rate_threshold) j["rate_threshold"] = *s.rate_threshold;
    j["threshold_fraction"] = s.threshold_fraction;
    if (s.sweep_csv) j["sweep_csv"] = *s.sweep_csv;
    j["energy_tolerance"] = s.energy_tolerance;
    j["calibrate"] = s.calibrate;
    j["select_seed"] = s.select_seed;
    if (s.target_fraction) j["target_fraction"] = *s.target_fraction;
    const OptimizerConfig& o = s.optimizer;
    j["optimizer"] = {{"max_iterations", o.max_iterations},
                      {"gradient_tolerance", o.gradient_tolerance},
                      {"initial_step", o.step_rule.initial_step},
                      {"shrink", o.step_rule.shrink},
                      {"sufficient_increase", o.step_rule.sufficient_increase},
                      {"max_backtracks", o.step_rule.max_backtracks},
                      {"constraint_mode", o.constraint_mode == ConstraintMode::Eliminate ? "eliminate" : "frozen"},
                      {"gradient_mode", o.gradient_mode == GradientMode::Total ? "total" : "fixed-covariance"},
                      {"snr_refresh_every", o.snr_refresh_every},
                      {"min_distance", o.min_distance},
                      {"restarts", o.restarts},
                      {"restart_perturbation", o.restart_perturbation}};
    const SimConfig& m = s.sim;
    j["sim"] = {{"symbols_per_run", m.symbols_per_run},
                {"samples_per_symbol", m.samples_per_symbol},
                {"steps_per_span", m.steps_per_span},
                {"discard_symbols", m.discard_symbols},
                {"nonlinearity", m.nonlinearity == NonlinearityScaling::Manakov ? "manakov-8/9" : "full-gamma"},
                {"ase_injection", m.ase == AseInjection::PerSpan ? "per-span" : "off"}};
    return j;
}

class Artifacts {
public:
    explicit Artifacts(const std::optional<std::filesystem::path>& dir) : dir_(dir)
    {
        if (dir_) {
            std::error_code ec;
            std::filesystem::create_directories(*dir_, ec);
            if (ec) throw IoError("cannot create run directory " + dir_->string());
        }
    }
    void write(const std::string& name, const std::string& content)
    {
        if (!dir_) return;
        const auto path = *dir_ / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << content;
        files.push_back(path);
    }
    std::vector<std::filesystem::path> files;

private:
    std::optional<std::filesystem::path> dir_;
};

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string safe_name(std::string n)
{
    for (char& ch : n)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
    return n;
}

std::vector<Constellation4D> load_formats(const RunSpec& s, std::size_t at_least)
{
    if (s.formats.size() < at_least)
        throw ConfigError("workflow '" + s.workflow + "' needs at least " + std::to_string(at_least) +
                          " format(s) in 'format' or 'formats'");
    std::vector<Constellation4D> out;
    for (const auto& f : s.formats) {
        try {
            out.push_back(normalize_unit_energy(resolve_format(f)));
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    }
    return out;
}

std::vector<int> spans_of(const RunSpec& s) { return s.spans.empty() ? std::vector<int>{s.n_spans} : s.spans; }

NliCoefficientSet coeffs_of(const RunSpec& s, int n)
{
    return s.accumulation == SpanAccumulation::Coherent ? compute_nli_coefficients(s.link, s.tx, n)
                                                        : compute_nli_coefficients(s.link, s.tx, n, s.accumulation);
}

json coeffs_json(const NliCoefficientSet& c)
{
    json j = {{"provenance", to_string(c.provenance)},
              {"n_spans", c.n_spans},
              {"accumulation", accumulation_name(c.accumulation)},
              {"chi0", {c.chi0.x, c.chi0.y}},
              {"chi_phi", {c.chi_phi.x, c.chi_phi.y}},
              {"chi_psi", {c.chi_psi.x, c.chi_psi.y}},
              {"chi_xpol", {c.chi_xpol.x, c.chi_xpol.y}},
              {"gamma_eff_per_w_m", c.gamma_eff},
              {"rel_error", c.rel_error}};
    if (c.kernels)
        j["kernels_m2"] = {{"degenerate", c.kernels->degenerate}, {"cross", c.kernels->cross},
                           {"k4_sq", c.kernels->k4_sq},           {"gn", c.kernels->gn},
                           {"a", c.kernels->a},                   {"b", c.kernels->b},
                           {"six", c.kernels->six}};
    return j;
}

std::string moments_header()
{
    return "format,m,mu2_x,mu2_y,phi_x,phi_y,psi_x,psi_y,xpol4,xpol6_xxy,xpol6_xyy,pseudo_x,pseudo_y,xcorr_conj,"
           "xcorr_plain,energy_levels,min_distance\n";
}

std::string moments_row(const Constellation4D& c, double tol)
{
    const MomentSet m = moments(c);
    std::ostringstream os;
    os << c.name() << ',' << c.size();
    for (double v : {m.mu2_x, m.mu2_y, m.phi_x, m.phi_y, m.psi_x, m.psi_y, m.xpol4, m.xpol6_xxy, m.xpol6_xyy,
                     m.pseudo_x, m.pseudo_y, m.xcorr_conj, m.xcorr_plain})
        os << ',' << fmt(v);
    os << ',' << energy_levels(c, tol).levels.size() << ',' << fmt(normalize_unit_energy(c).min_distance()) << '\n';
    return os.str();
}

AirEstimate air_for(const RunSpec& s, const Constellation4D& c, int n)
{
    if (s.snr_db) {
        if (s.backend != SweepBackend::Model) throw ConfigError("'snr_db' evaluation supports the model backend only");
        return gh_air(c, NoiseProfile::isotropic_snr(db_to_lin(*s.snr_db)), s.points_per_dim);
    }
    const NliCoefficientSet co = coeffs_of(s, n);
    const double p_ase = ase_power(s.link, s.tx, n);
    const double p =
        s.launch_power_dbm ? dbm_to_w(*s.launch_power_dbm) : optimal_launch(moments(c), p_ase, co).p_opt_w;
    if (s.backend == SweepBackend::Ssfm) return ssfm_air(c, s.link, s.tx, n, p, s.sim);
    return gh_air(c, effective_snr(moments(c), p, p_ase, co).noise, s.points_per_dim);
}

RunOutput execute(const RunSpec& s, Artifacts& art)
{
    RunOutput out;
    out.workflow = s.workflow;
    if (s.cache_dir) set_default_cache_dir(*s.cache_dir);
    art.write("config.json", resolved(s).dump(2) + "\n");

    if (s.workflow == "catalog") {
        std::string csv = moments_header();
        for (const auto& name : catalog_names()) csv += moments_row(catalog_format(name), s.energy_tolerance);
        art.write("catalog.csv", csv);
        out.summary = csv;
    } else if (s.workflow == "moments") {
        std::string csv = moments_header();
        for (const auto& c : load_formats(s, 1)) {
            csv += moments_row(c, s.energy_tolerance);
            std::ostringstream lv;
            lv << "energy,multiplicity\n";
            for (const auto& l : energy_levels(c, s.energy_tolerance).levels)
                lv << fmt(l.energy) << ',' << l.multiplicity << '\n';
            art.write("levels_" + safe_name(c.name()) + ".csv", lv.str());
        }
        art.write("moments.csv", csv);
        out.summary = csv;
    } else if (s.workflow == "nli-coeffs") {
        json all = json::array();
        for (int n : spans_of(s)) all.push_back(coeffs_json(coeffs_of(s, n)));
        const std::string text = all.dump(2) + "\n";
        art.write("nli_coeffs.json", text);
        out.summary = text;
    } else if (s.workflow == "air") {
        std::string csv = "n_spans," + air_csv_header();
        for (const auto& c : load_formats(s, 1))
            for (int n : spans_of(s)) csv += std::to_string(s.snr_db ? 0 : n) + "," + air_csv_row(c.name(), air_for(s, c, n));
        art.write("air.csv", csv);
        out.summary = csv;
    } else if (s.workflow == "optimize") {
        const auto formats = load_formats(s, 1);
        Constellation4D seed = formats.front();
        int n = s.n_spans;
        if (s.target_fraction) {
            const double target = *s.target_fraction * std::log2(static_cast<double>(seed.size()));
            n = target_distance(seed, s.link, s.tx, target, s.points_per_dim);
        }
        if (s.select_seed) seed = select_seed(formats, s.link, s.tx, n, s.points_per_dim);
        const OptimizationResult r =
            optimize(seed, coeffs_of(s, n), ase_power(s.link, s.tx, n), s.optimizer);
        const Constellation4D best = r.best.renamed(seed.name() + "-opt");
        art.write("trace.csv", trace_csv(r.trace));
        art.write("optimized.txt", format_constellation(best));
        std::ostringstream os;
        const auto& first = r.trace.records.front();
        const auto& last = r.trace.records.back();
        os << "seed,n_spans,distance_km,iterations,status,seed_air,final_air,gain,final_p_opt_dbm,final_snr_db,"
              "energy_levels\n";
        os << seed.name() << ',' << n << ',' << fmt(n * s.link.span_length_km) << ',' << last.iteration << ','
           << to_string(r.trace.status) << ',' << fmt(first.objective) << ',' << fmt(last.objective) << ','
           << fmt(last.objective - first.objective) << ',' << fmt(last.p_opt_dbm) << ',' << fmt(last.snr_db) << ','
           << energy_levels(best, s.energy_tolerance).levels.size() << '\n';
        art.write("summary.csv", os.str());
        out.summary = os.str();
    } else if (s.workflow == "ssfm") {
        const auto formats = load_formats(s, 1);
        const Constellation4D& c = formats.front();
        const int n = s.n_spans;
        const double p = s.launch_power_dbm ? dbm_to_w(*s.launch_power_dbm) : optimal_launch(c, s.link, s.tx, n).p_opt_w;
        const SymbolCloud cloud = simulate(c, s.link, s.tx, n, p, s.sim);
        const AirEstimate a = mc_air(c, cloud.tx_indices, cloud.rx_points);
        json side = {{"format", c.name()},
                     {"n_spans", n},
                     {"launch_power_dbm", w_to_dbm(p)},
                     {"seed", s.seed},
                     {"config", resolved(s)},
                     {"var_x", cloud.var_x},
                     {"var_y", cloud.var_y},
                     {"snr_x_db", lin_to_db(cloud.snr_x)},
                     {"snr_y_db", lin_to_db(cloud.snr_y)},
                     {"snr_4d_db", lin_to_db(cloud.snr_4d)},
                     {"air_bit_per_4d", a.rate_bit_per_4d},
                     {"air_std_error", *a.std_error}};
        std::ostringstream os;
        os << "format,n_spans,launch_power_dbm,snr_x_db,snr_y_db,snr_4d_db,air_bit_per_4d,std_error\n"
           << c.name() << ',' << n << ',' << fmt(w_to_dbm(p)) << ',' << fmt(lin_to_db(cloud.snr_x)) << ','
           << fmt(lin_to_db(cloud.snr_y)) << ',' << fmt(lin_to_db(cloud.snr_4d)) << ',' << fmt(a.rate_bit_per_4d)
           << ',' << fmt(*a.std_error) << '\n';
        if (s.calibrate) {
            const CalibrationResult cal = calibrate_eta(c, s.link, s.tx, n, s.sim);
            json cj = coeffs_json(cal.coeffs);
            cj["powers_w"] = cal.powers_w;
            cj["p_nli_x_w"] = cal.p_nli_x;
            cj["p_nli_y_w"] = cal.p_nli_y;
            cj["r2_x"] = cal.r2_x;
            cj["r2_y"] = cal.r2_y;
            side["calibration"] = cj;
            art.write("calibration.json", cj.dump(2) + "\n");
        }
        art.write("cloud.csv", cloud_csv(cloud));
        art.write("cloud.json", side.dump(2) + "\n");
        art.write("summary.csv", os.str());
        out.summary = os.str();
    } else if (s.workflow == "sweep" || s.workflow == "reach") {
        std::vector<SweepResult> sweeps;
        if (s.workflow == "reach" && s.sweep_csv) {
            std::ifstream in(*s.sweep_csv);
            if (!in) throw IoError("cannot read sweep CSV " + *s.sweep_csv);
            std::stringstream buf;
            buf << in.rdbuf();
            sweeps.push_back(parse_sweep_csv(buf.str(), std::filesystem::path(*s.sweep_csv).stem().string()));
        } else {
            SweepOptions so;
            so.backend = s.backend;
            so.points_per_dim = s.points_per_dim;
            so.sim = s.sim;
            for (const auto& c : load_formats(s, 1)) {
                if (s.spans.empty()) throw ConfigError("workflow '" + s.workflow + "' needs 'spans' or 'span_range'");
                SweepResult r = sweep_distance(c, s.link, s.tx, s.spans, so);
                art.write("sweep_" + safe_name(c.name()) + ".csv", sweep_csv(r));
                art.write("sweep_" + safe_name(c.name()) + ".dat", sweep_dat(r));
                sweeps.push_back(std::move(r));
            }
        }
        if (s.workflow == "sweep") {
            std::ostringstream os;
            for (const auto& r : sweeps) os << "# " << r.constellation << '\n' << sweep_csv(r);
            out.summary = os.str();
        } else {
            std::ostringstream os;
            os << "format,rate_threshold,reach_km\n";
            for (const auto& r : sweeps) {
                double thr;
                if (s.rate_threshold) {
                    thr = *s.rate_threshold;
                } else {
                    const auto formats = load_formats(s, 1);
                    thr = s.threshold_fraction * std::log2(static_cast<double>(formats.front().size()));
                }
                os << r.constellation << ',' << fmt(thr) << ',' << fmt(reach(r, thr)) << '\n';
            }
            art.write("reach.csv", os.str());
            out.summary = os.str();
        }
    } else if (s.workflow == "compare") {
        CompareOptions co;
        co.rate_threshold = s.rate_threshold;
        co.threshold_fraction = s.threshold_fraction;
        co.points_per_dim = s.points_per_dim;
        const CompareReport r = compare(load_formats(s, 2), s.link, s.tx, co);
        json j = {{"reference_km", r.reference_km}};
        for (const auto& e : r.formats)
            j["formats"].push_back({{"name", e.name},
                                    {"threshold", e.threshold},
                                    {"reach_km", e.reach_km},
                                    {"rate_at_reference", e.rate_at_reference}});
        for (const auto& p : r.pairs)
            j["pairs"].push_back(
                {{"a", p.a}, {"b", p.b}, {"rate_gain", p.rate_gain}, {"reach_gain_pct", p.reach_gain_pct}});
        art.write("compare.csv", compare_csv(r));
        art.write("compare.json", j.dump(2) + "\n");
        out.summary = compare_csv(r);
    }
    out.files = art.files;
    return out;
}

} // namespace

RunOutput run_config_text(const std::string& text, const std::optional<std::filesystem::path>& run_dir)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    const RunSpec spec = parse_spec(j);
    Artifacts art(run_dir);
    return execute(spec, art);
}

RunOutput run_config(const std::filesystem::path& path, const std::optional<std::filesystem::path>& run_dir)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return run_config_text(buf.str(), run_dir);
}

} // namespace dp4d
