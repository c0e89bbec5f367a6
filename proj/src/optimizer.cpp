#include "dp4d/optimizer.hpp"

#include "dp4d/error.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace dp4d {

ModelPoint evaluate_model(const Constellation4D& c, const NliCoefficientSet& coeffs, double p_ase, int points_per_dim,
                          const LaunchSearch& search)
{
    ModelPoint mp;
    mp.launch = optimal_launch(moments(c), p_ase, coeffs, search);
    mp.air = gh_air(normalize_unit_energy(c), mp.launch.report.noise, points_per_dim);
    return mp;
}

ModelPoint evaluate_model(const Constellation4D& c, const LinkConfig& link, const TxConfig& tx, int n_spans,
                          int points_per_dim, const LaunchSearch& search)
{
    return evaluate_model(c, compute_nli_coefficients(link, tx, n_spans), ase_power(link, tx, n_spans), points_per_dim,
                          search);
}

void OptimizerConfig::validate() const
{
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (!(gradient_tolerance > 0.0)) throw ConfigError("gradient_tolerance must be positive");
    if (!(step_rule.shrink > 0.0 && step_rule.shrink < 1.0)) throw ConfigError("step shrink must lie in (0, 1)");
    if (!(step_rule.sufficient_increase >= 0.0 && step_rule.sufficient_increase < 1.0))
        throw ConfigError("sufficient_increase must lie in [0, 1)");
    if (step_rule.max_backtracks < 1) throw ConfigError("max_backtracks must be >= 1");
    if (step_rule.initial_step < 0.0) throw ConfigError("initial_step must be nonnegative");
    if (snr_refresh_every < 1) throw ConfigError("snr_refresh_every must be >= 1");
    if (!(min_distance > 0.0)) throw ConfigError("min_distance must be positive");
    if (restarts < 0) throw ConfigError("restarts must be >= 0");
    if (points_per_dim < 2 || points_per_dim > kMaxPointsPerDim) throw ConfigError("points_per_dim out of range");
}

std::string to_string(TerminalStatus s)
{
    switch (s) {
    case TerminalStatus::GradientTolerance: return "gradient-tolerance";
    case TerminalStatus::MaxIterations: return "max-iterations";
    case TerminalStatus::StepCollapse: return "step-collapse";
    }
    return "unknown";
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Rescales a flat coordinate vector to unit mean point energy.
void renormalize(std::vector<double>& x)
{
    const double m = static_cast<double>(x.size() / 4);
    const double scale = std::sqrt(m / dot(x, x));
    for (double& v : x) v *= scale;
}

double min_distance_flat(const std::vector<double>& x)
{
    const std::size_t m = x.size() / 4;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            double d = 0.0;
            for (int k = 0; k < 4; ++k) d += (x[i * 4 + k] - x[j * 4 + k]) * (x[i * 4 + k] - x[j * 4 + k]);
            best = std::min(best, d);
        }
    return std::sqrt(best);
}

class Objective {
public:
    Objective(const NliCoefficientSet& coeffs, double p_ase, const OptimizerConfig& cfg)
        : coeffs_(coeffs), p_ase_(p_ase), cfg_(cfg) {}

    struct Eval {
        double value = 0.0;
        NoiseProfile noise;
        double p_opt_w = 0.0;
        double snr_4d = 0.0;
    };

    // Objective at the SNR-consistent covariance (eliminate) or at the
    // frozen one.
    Eval value(const Constellation4D& c) const
    {
        Eval e;
        if (cfg_.constraint_mode == ConstraintMode::Frozen && frozen_) {
            e.noise = *frozen_;
        } else {
            const OptimalLaunch ol = optimal_launch(moments(c), p_ase_, coeffs_, cfg_.launch);
            e.noise = ol.report.noise;
        }
        e.p_opt_w = e.noise.launch_power_w;
        e.snr_4d = e.noise.snr_4d();
        e.value = gh_air(c, e.noise, cfg_.points_per_dim).rate_bit_per_4d;
        return e;
    }

    void freeze(const NoiseProfile& n) { frozen_ = n; }

private:
    const NliCoefficientSet& coeffs_;
    double p_ase_;
    const OptimizerConfig& cfg_;
    std::optional<NoiseProfile> frozen_;
};

// Gradient of the normalized variances var_p / P of the SNR-consistent
// covariance with respect to the flat coordinates (tangent directions only).
// With a cubic NLI law P_opt^3 = p_ase / (N_x + N_y), N_p = p_nli_p / P^3.
void covariance_gradient(const std::vector<double>& x, const NliCoefficientSet& coeffs, double p_ase, double p,
                         std::vector<double>& gvx, std::vector<double>& gvy)
{
    const std::size_t m = x.size() / 4;
    const MomentSet base = moments(Constellation4D::from_flat("x", x));
    const PolPair n0 = coeffs.nli_power(base, 1.0);

    // dN_p / draw[a][b] by central differences on the raw moments.
    double dnx[4][4] = {}, dny[4][4] = {};
    for (int a = 0; a <= 3; ++a)
        for (int b = 0; a + b <= 3; ++b) {
            if (a + b == 0) continue;
            const double h = 1e-6 * std::max(1.0, std::abs(base.raw[a][b]));
            auto raw = base.raw;
            raw[a][b] += h;
            const PolPair up = coeffs.nli_power(MomentSet::from_raw(raw), 1.0);
            raw[a][b] -= 2 * h;
            const PolPair dn = coeffs.nli_power(MomentSet::from_raw(raw), 1.0);
            dnx[a][b] = (up.x - dn.x) / (2 * h);
            dny[a][b] = (up.y - dn.y) / (2 * h);
        }

    std::vector<double> gnx(x.size(), 0.0), gny(x.size(), 0.0);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* q = &x[i * 4];
        const double ex = q[0] * q[0] + q[1] * q[1], ey = q[2] * q[2] + q[3] * q[3];
        double sx = 0.0, sy = 0.0;  // d/dex and d/dey of sum_ab c_ab ex^a ey^b
        double tx = 0.0, ty = 0.0;
        for (int a = 0; a <= 3; ++a)
            for (int b = 0; a + b <= 3; ++b) {
                if (a > 0) {
                    const double d = a * std::pow(ex, a - 1) * std::pow(ey, b) * inv_m;
                    sx += dnx[a][b] * d;
                    tx += dny[a][b] * d;
                }
                if (b > 0) {
                    const double d = b * std::pow(ex, a) * std::pow(ey, b - 1) * inv_m;
                    sy += dnx[a][b] * d;
                    ty += dny[a][b] * d;
                }
            }
        for (int k = 0; k < 2; ++k) {
            gnx[i * 4 + k] = 2 * q[k] * sx;
            gny[i * 4 + k] = 2 * q[k] * tx;
            gnx[i * 4 + 2 + k] = 2 * q[2 + k] * sy;
            gny[i * 4 + 2 + k] = 2 * q[2 + k] * ty;
        }
    }

    const double s = n0.x + n0.y;
    gvx.assign(x.size(), 0.0);
    gvy.assign(x.size(), 0.0);
    if (!(s > 0.0)) return;
    const double dvx_dp = -p_ase / (p * p) + 2 * p * n0.x;
    const double dvy_dp = -p_ase / (p * p) + 2 * p * n0.y;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double dp = -(p / 3.0) * (gnx[k] + gny[k]) / s;
        gvx[k] = dvx_dp * dp + p * p * gnx[k];
        gvy[k] = dvy_dp * dp + p * p * gny[k];
    }
}

[[noreturn]] void non_finite(const std::vector<double>& x, int iteration)
{
    std::ostringstream os;
    os << "non-finite objective at iteration " << iteration << "; iterate:\n";
    os << format_constellation(Constellation4D::from_flat("iterate", x));
    throw NumericalError(os.str());
}

OptimizationResult run_single(const Constellation4D& seed, const NliCoefficientSet& coeffs, double p_ase,
                              const OptimizerConfig& cfg)
{
    const std::string name = seed.name();
    std::vector<double> x = seed.flat();
    renormalize(x);

    Objective obj(coeffs, p_ase, cfg);
    Objective::Eval cur = obj.value(Constellation4D::from_flat(name, x));
    if (!std::isfinite(cur.value)) non_finite(x, 0);
    if (cfg.constraint_mode == ConstraintMode::Frozen) obj.freeze(cur.noise);

    OptimizationTrace trace;
    NoiseProfile grad_noise = cur.noise;
    std::vector<double> prev_x, prev_g;
    double step = cfg.step_rule.initial_step;

    for (int it = 0;; ++it) {
        if (it % cfg.snr_refresh_every == 0) grad_noise = cur.noise;
        const Constellation4D c = Constellation4D::from_flat(name, x);
        const AirValueGrad vg = gh_air_value_grad(c, grad_noise, cfg.points_per_dim);
        std::vector<double> g = vg.grad;
        if (cfg.constraint_mode == ConstraintMode::Eliminate && cfg.gradient_mode == GradientMode::Total) {
            std::vector<double> gvx, gvy;
            covariance_gradient(x, coeffs, p_ase, grad_noise.launch_power_w, gvx, gvy);
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += vg.dvar_x * gvx[k] + vg.dvar_y * gvy[k];
        }
        // Tangent projection onto the unit-energy sphere.
        const double proj = dot(g, x) / dot(x, x);
        for (std::size_t k = 0; k < g.size(); ++k) g[k] -= proj * x[k];
        const double gnorm = std::sqrt(dot(g, g));

        TraceRecord rec{it, cur.value, gnorm, w_to_dbm(cur.p_opt_w), lin_to_db(cur.snr_4d), it == 0 ? 0.0 : step};
        trace.records.push_back(rec);

        if (gnorm < cfg.gradient_tolerance) {
            trace.status = TerminalStatus::GradientTolerance;
            break;
        }
        if (it >= cfg.max_iterations) {
            trace.status = TerminalStatus::MaxIterations;
            break;
        }

        // Trial step: Barzilai-Borwein when history exists, otherwise a step
        // moving the points by a small fraction of the minimum distance.
        double alpha;
        if (cfg.step_rule.initial_step > 0.0) {
            alpha = cfg.step_rule.initial_step;
        } else if (!prev_g.empty()) {
            std::vector<double> s(x.size()), y(x.size());
            for (std::size_t k = 0; k < x.size(); ++k) {
                s[k] = x[k] - prev_x[k];
                y[k] = g[k] - prev_g[k];
            }
            const double sy = dot(s, y);
            alpha = sy < 0.0 ? dot(s, s) / -sy : 2.0 * step;
        } else {
            alpha = 0.1 * min_distance_flat(x) / gnorm;
        }
        if (!std::isfinite(alpha) || alpha <= 0.0) alpha = 0.1 * min_distance_flat(x) / gnorm;

        bool accepted = false;
        std::vector<double> cand(x.size());
        Objective::Eval next;
        for (int bt = 0; bt < cfg.step_rule.max_backtracks; ++bt, alpha *= cfg.step_rule.shrink) {
            for (std::size_t k = 0; k < x.size(); ++k) cand[k] = x[k] + alpha * g[k];
            renormalize(cand);
            if (min_distance_flat(cand) < cfg.min_distance) continue;
            next = obj.value(Constellation4D::from_flat(name, cand));
            if (!std::isfinite(next.value)) non_finite(cand, it + 1);
            if (next.value > cur.value + cfg.step_rule.sufficient_increase * alpha * gnorm * gnorm) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            trace.status = TerminalStatus::StepCollapse;
            break;
        }
        prev_x = x;
        prev_g = g;
        x = cand;
        cur = next;
        step = alpha;
    }
    return {Constellation4D::from_flat(name, x), std::move(trace)};
}

} // namespace

OptimizationResult optimize(const Constellation4D& seed, const NliCoefficientSet& coeffs, double p_ase,
                            const OptimizerConfig& cfg)
{
    cfg.validate();
    OptimizationResult best = run_single(seed, coeffs, p_ase, cfg);
    if (cfg.restarts > 0) {
        std::mt19937_64 rng(cfg.rng_seed);
        std::normal_distribution<double> nd(0.0, cfg.restart_perturbation);
        for (int r = 0; r < cfg.restarts; ++r) {
            std::vector<double> x = normalize_unit_energy(seed).flat();
            for (double& v : x) v += nd(rng);
            OptimizationResult res = run_single(Constellation4D::from_flat(seed.name(), x), coeffs, p_ase, cfg);
            if (res.trace.records.back().objective > best.trace.records.back().objective) best = std::move(res);
        }
    }
    return best;
}

OptimizationResult optimize(const Constellation4D& seed, const LinkConfig& link, const TxConfig& tx, int n_spans,
                            const OptimizerConfig& cfg)
{
    return optimize(seed, compute_nli_coefficients(link, tx, n_spans), ase_power(link, tx, n_spans), cfg);
}

Constellation4D select_seed(const std::vector<Constellation4D>& catalog, const LinkConfig& link, const TxConfig& tx,
                            int n_spans, int points_per_dim)
{
    if (catalog.empty()) throw InvalidArgument("seed catalog is empty");
    for (const auto& c : catalog)
        if (c.size() != catalog.front().size()) throw InvalidArgument("seed catalog mixes constellation sizes");
    std::size_t best = 0;
    double best_rate = -1.0, best_power = 0.0;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        const ModelPoint mp = evaluate_model(catalog[i], link, tx, n_spans, points_per_dim);
        const double r = mp.air.rate_bit_per_4d, p = mp.launch.p_opt_w;
        if (i == 0 || r > best_rate || (r == best_rate && p < best_power)) {
            best = i;
            best_rate = r;
            best_power = p;
        }
    }
    return catalog[best];
}

int target_distance(const Constellation4D& baseline, const LinkConfig& link, const TxConfig& tx, double rate_target,
                    int points_per_dim, int max_spans)
{
    const double cap = std::log2(static_cast<double>(baseline.size()));
    if (!(rate_target > 0.0 && rate_target < cap)) throw InvalidArgument("rate target must lie in (0, log2 M)");
    auto rate = [&](int n) { return evaluate_model(baseline, link, tx, n, points_per_dim).air.rate_bit_per_4d; };
    if (rate(1) < rate_target) throw NumericalError("rate target unreachable even at one span");
    int good = 1, bad = 2;
    while (rate(bad) >= rate_target) {
        good = bad;
        bad *= 2;
        if (good >= max_spans) throw NumericalError("rate target not crossed within max_spans");
    }
    while (bad - good > 1) {
        const int mid = good + (bad - good) / 2;
        if (rate(mid) >= rate_target)
            good = mid;
        else
            bad = mid;
    }
    return good;
}

} // namespace dp4d
