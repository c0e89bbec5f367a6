#pragma once

#include "dp4d/air.hpp"
#include "dp4d/constellation.hpp"
#include "dp4d/link_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dp4d {

// Model AIR of a constellation at its own optimal launch power.
struct ModelPoint {
    AirEstimate air;
    OptimalLaunch launch;
};
ModelPoint evaluate_model(const Constellation4D& c, const NliCoefficientSet& coeffs, double p_ase,
                          int points_per_dim = 8, const LaunchSearch& search = {});
ModelPoint evaluate_model(const Constellation4D& c, const LinkConfig& link, const TxConfig& tx, int n_spans,
                          int points_per_dim = 8, const LaunchSearch& search = {});

struct LineSearchRule {
    double initial_step = 0.0;  // 0: Barzilai-Borwein after the first iteration
    double shrink = 0.5;
    double sufficient_increase = 1e-4;
    int max_backtracks = 30;
};

enum class ConstraintMode { Eliminate, Frozen };

// FixedCovariance differentiates the AIR at the current covariance only.
// Total adds the path through the SNR-consistent covariance (moments ->
// NLI -> optimal power -> variances); it only differs in eliminate mode.
enum class GradientMode { FixedCovariance, Total };

struct OptimizerConfig {
    int max_iterations = 200;
    double gradient_tolerance = 1e-5;
    LineSearchRule step_rule;
    ConstraintMode constraint_mode = ConstraintMode::Eliminate;
    int snr_refresh_every = 1;
    GradientMode gradient_mode = GradientMode::Total;
    std::uint64_t rng_seed = 1;
    int points_per_dim = 8;
    double min_distance = 1e-6;
    // Extra starts from the seed perturbed by N(0, restart_perturbation^2)
    // per coordinate; the best final objective wins.
    int restarts = 0;
    double restart_perturbation = 0.02;
    LaunchSearch launch;

    void validate() const;
};

struct TraceRecord {
    int iteration = 0;
    double objective = 0.0;  // bit/4D
    double grad_norm = 0.0;
    double p_opt_dbm = 0.0;
    double snr_db = 0.0;
    double step = 0.0;
};

enum class TerminalStatus { GradientTolerance, MaxIterations, StepCollapse };
std::string to_string(TerminalStatus s);

struct OptimizationTrace {
    std::vector<TraceRecord> records;
    TerminalStatus status = TerminalStatus::MaxIterations;
};

struct OptimizationResult {
    Constellation4D best;
    OptimizationTrace trace;
};

OptimizationResult optimize(const Constellation4D& seed, const NliCoefficientSet& coeffs, double p_ase,
                            const OptimizerConfig& cfg = {});
OptimizationResult optimize(const Constellation4D& seed, const LinkConfig& link, const TxConfig& tx, int n_spans,
                            const OptimizerConfig& cfg = {});

// Highest model AIR at its own optimal power; ties go to the lower optimal
// power, then to catalog order.
Constellation4D select_seed(const std::vector<Constellation4D>& catalog, const LinkConfig& link, const TxConfig& tx,
                            int n_spans, int points_per_dim = 8);

// Largest n_spans whose model AIR still reaches rate_target.
int target_distance(const Constellation4D& baseline, const LinkConfig& link, const TxConfig& tx, double rate_target,
                    int points_per_dim = 8, int max_spans = 2000);

} // namespace dp4d
