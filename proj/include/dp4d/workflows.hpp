#pragma once

#include "dp4d/air.hpp"
#include "dp4d/constellation.hpp"
#include "dp4d/fiber_sim.hpp"
#include "dp4d/link_model.hpp"
#include "dp4d/optimizer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dp4d {

enum class SweepBackend { Model, Ssfm };
std::string to_string(SweepBackend b);

struct SweepRow {
    int n_spans = 0;
    double distance_km = 0.0;
    double p_opt_dbm = 0.0;
    double snr_4d_db = 0.0;
    double air_bit_per_4d = 0.0;
    SweepBackend backend = SweepBackend::Model;
};

struct SweepResult {
    std::string constellation;
    std::string link_hash;
    std::vector<SweepRow> rows;  // sorted by n_spans
};

// Short stable hash of the link and transmitter parameters.
std::string link_hash(const LinkConfig& link, const TxConfig& tx);

struct SweepOptions {
    SweepBackend backend = SweepBackend::Model;
    int points_per_dim = 8;
    SimConfig sim;
};

SweepResult sweep_distance(const Constellation4D& c, const LinkConfig& link, const TxConfig& tx,
                           std::vector<int> span_range, const SweepOptions& opt = {});

// Distance at which the AIR falls to rate_threshold, interpolated linearly in
// distance between the bracketing rows.
double reach(const SweepResult& sweep, double rate_threshold);

// AIR at a distance inside the sweep, interpolated linearly.
double rate_at(const SweepResult& sweep, double distance_km);

struct CompareEntry {
    std::string name;
    double threshold = 0.0;
    double reach_km = 0.0;
    double rate_at_reference = 0.0;
};

struct ComparePair {
    std::string a, b;
    double rate_gain = 0.0;       // rate_a - rate_b at the reference distance
    double reach_gain_pct = 0.0;  // 100 (reach_a - reach_b) / reach_b
};

struct CompareReport {
    double reference_km = 0.0;  // reach of the first format
    std::vector<CompareEntry> formats;
    std::vector<ComparePair> pairs;  // every ordered pair a != b
};

// Comparison on precomputed sweeps with one threshold per sweep.
CompareReport compare_sweeps(const std::vector<SweepResult>& sweeps, const std::vector<double>& thresholds);

struct CompareOptions {
    std::optional<double> rate_threshold;  // absolute; otherwise fraction of log2 M
    double threshold_fraction = 0.8;
    int points_per_dim = 8;
    int max_spans = 2000;
};

// Model-backend comparison of formats with equal M.
CompareReport compare(const std::vector<Constellation4D>& formats, const LinkConfig& link, const TxConfig& tx,
                      const CompareOptions& opt = {});

// CSV and plot-data writers with fixed column order.
std::string sweep_csv(const SweepResult& s);
std::string sweep_dat(const SweepResult& s);
SweepResult parse_sweep_csv(const std::string& text, std::string name = "sweep");
std::string trace_csv(const OptimizationTrace& t);
std::string cloud_csv(const SymbolCloud& c);
std::string compare_csv(const CompareReport& r);
std::string air_csv_header();
std::string air_csv_row(const std::string& name, const AirEstimate& a);

// Outcome of a declarative run: the primary table as text plus the files
// written (empty when no run directory was given).
struct RunOutput {
    std::string workflow;
    std::string summary;
    std::vector<std::filesystem::path> files;
};

// Executes a JSON experiment config. With a run directory all artifacts and
// the resolved config are written there.
RunOutput run_config_text(const std::string& json_text, const std::optional<std::filesystem::path>& run_dir);
RunOutput run_config(const std::filesystem::path& path, const std::optional<std::filesystem::path>& run_dir = {});

inline constexpr int kConfigSchemaVersion = 1;

} // namespace dp4d
