#pragma once

#include "dp4d/constellation.hpp"

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

namespace dp4d {

namespace phys {
inline constexpr double kPlanck = 6.62607015e-34;
inline constexpr double kLightSpeed = 299792458.0;
} // namespace phys

inline double dbm_to_w(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double w_to_dbm(double w) { return 10.0 * std::log10(w / 1e-3); }
inline double lin_to_db(double x) { return 10.0 * std::log10(x); }
inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }

// Fiber, amplifier and carrier parameters. Defaults are the standard SSMF
// single-channel link: 0.2 dB/km, 17 ps/nm/km, gamma 1.2 /W/km, 100 km spans,
// 5 dB noise figure, 1550 nm.
struct LinkConfig {
    double alpha_db_per_km = 0.2;
    double dispersion_ps_nm_km = 17.0;
    double gamma_per_w_km = 1.2;
    double span_length_km = 100.0;
    double edfa_noise_figure_db = 5.0;
    double center_wavelength_nm = 1550.0;

    void validate() const;

    double alpha_np_per_m() const;   // power attenuation, nepers per metre
    double beta2_s2_per_m() const;   // group-velocity dispersion
    double gamma_per_w_m() const;
    double span_length_m() const { return span_length_km * 1e3; }
    double carrier_hz() const;
    double span_gain() const;        // linear EDFA gain, equals span loss
    double noise_figure() const;     // linear
};

struct TxConfig {
    double symbol_rate_gbaud = 50.0;
    double rrc_rolloff = 0.01;
    int num_channels = 1;

    void validate() const;
    double symbol_rate_hz() const { return symbol_rate_gbaud * 1e9; }
};

// ASE power per polarization referenced to the symbol-rate bandwidth:
// n_spans (G - 1) (F / 2) h nu R_s.
double ase_power(const LinkConfig& link, const TxConfig& tx, int n_spans);

enum class SpanAccumulation { Coherent, Incoherent };

struct PolPair {
    double x = 0.0;
    double y = 0.0;
};

// Link integrals of the first-order perturbation kernel over the signal band,
// in m^2 (the kernel eta has units of length). Names follow the index
// coincidence pattern they come from; see nli_kernels.cpp.
struct NliKernels {
    double degenerate = 0.0;  // |eta0|^2
    double cross = 0.0;       // Re(eta0 * conj(K4))
    double k4_sq = 0.0;       // |K4|^2
    double gn = 0.0;
    double a = 0.0;
    double b = 0.0;
    double six = 0.0;
};

enum class NliProvenance { KernelIntegrated, SsfmFitted };
std::string to_string(NliProvenance p);

// Per-link NLI coefficient set, in 1/W^2. The chi fields are the moment
// basis: p_nli_p / P^3 = chi0_p + chi_phi_p phi_p + chi_psi_p psi_p +
// chi_xpol_p xpol4. For kernel-integrated sets the chi fields are the
// linearization around a balanced Gaussian input and nli_power() evaluates
// the full cumulant expansion from `kernels`; ssfm-fitted sets only carry
// chi0 and use the linear form.
struct NliCoefficientSet {
    PolPair chi0, chi_phi, chi_psi, chi_xpol;
    int n_spans = 0;
    NliProvenance provenance = NliProvenance::KernelIntegrated;
    SpanAccumulation accumulation = SpanAccumulation::Coherent;
    std::optional<NliKernels> kernels;
    double gamma_eff = 0.0;       // 1/(W m), Manakov-scaled
    double rel_error = 0.0;       // integration error estimate

    PolPair nli_power(const MomentSet& mom, double launch_power_w) const;
};

// Normalized NLI variance factor sigma^2 / (gamma_eff^2 P^2) of polarization
// `pol` (0 = x, 1 = y) for a unit-energy input with moments `mom`, after the
// receiver removes the component correlated with the transmitted symbol.
double nli_variance_factor(const NliKernels& k, const MomentSet& mom, int pol);

struct KernelOptions {
    SpanAccumulation accumulation = SpanAccumulation::Coherent;
    double max_rel_error = 1e-2;
    int refinement = 1;   // >1 refines all grids proportionally
};

// Integrates the kernels for a link of n_spans identical spans.
struct KernelResult {
    NliKernels kernels;
    double rel_error;
};
KernelResult integrate_nli_kernels(const LinkConfig& link, const TxConfig& tx, int n_spans, const KernelOptions& opt = {});

// Normalized link kernel H(delta) in units of span length, where delta is the
// product of the normalized detunings (f1 - f)(f3 - f) / R_s^2. Exposed for
// independent checks.
std::complex<double> link_kernel(const LinkConfig& link, const TxConfig& tx, int n_spans, double delta,
                                 SpanAccumulation acc = SpanAccumulation::Coherent);

NliCoefficientSet coefficients_from_kernels(const NliKernels& k, double gamma_eff, int n_spans, SpanAccumulation acc,
                                            double rel_error);

// Thread-safe memo of coefficient sets keyed by (link, tx, n_spans, model
// version, accumulation), optionally persisted as JSON files in a directory.
class CoefficientCache {
public:
    CoefficientCache() = default;
    explicit CoefficientCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    NliCoefficientSet get(const LinkConfig& link, const TxConfig& tx, int n_spans,
                          SpanAccumulation acc = SpanAccumulation::Coherent);

    static std::string key(const LinkConfig& link, const TxConfig& tx, int n_spans, SpanAccumulation acc);
    const std::optional<std::filesystem::path>& dir() const { return dir_; }

private:
    std::optional<std::filesystem::path> dir_;
    std::shared_mutex mutex_;
    std::map<std::string, NliCoefficientSet> memo_;
};

// Process-wide default cache (memory only unless a directory is set).
CoefficientCache& default_cache();
void set_default_cache_dir(const std::filesystem::path& dir);

inline constexpr int kNliModelVersion = 1;

NliCoefficientSet compute_nli_coefficients(const LinkConfig& link, const TxConfig& tx, int n_spans,
                                           SpanAccumulation acc = SpanAccumulation::Coherent);

PolPair nli_power(const NliCoefficientSet& coeffs, const MomentSet& mom, double launch_power_w);

// Diagonal 4D Gaussian noise: covariance diag(var_x/2, var_x/2, var_y/2, var_y/2).
struct NoiseProfile {
    double var_x = 0.0;
    double var_y = 0.0;
    double p_ase = 0.0;
    double p_nli_x = 0.0;
    double p_nli_y = 0.0;
    double launch_power_w = 0.0;

    // Variances relative to the launch power, i.e. for a unit-energy input.
    double norm_var_x() const { return var_x / launch_power_w; }
    double norm_var_y() const { return var_y / launch_power_w; }
    double snr_4d() const { return launch_power_w / (var_x + var_y); }

    static NoiseProfile isotropic_snr(double snr_4d_linear, double launch_power_w = 1.0);
};

struct SnrReport {
    NoiseProfile noise;
    double snr_x = 0.0;
    double snr_y = 0.0;
    double snr_4d = 0.0;
};

SnrReport effective_snr(const MomentSet& mom, double launch_power_w, double p_ase, const NliCoefficientSet& coeffs);
SnrReport effective_snr(const Constellation4D& c, double launch_power_w, const LinkConfig& link, const TxConfig& tx,
                        int n_spans);

struct LaunchSearch {
    double lo_dbm = -30.0;
    double hi_dbm = 30.0;
    double tol_db = 0.01;
};

struct OptimalLaunch {
    double p_opt_w = 0.0;
    SnrReport report;
};

OptimalLaunch optimal_launch(const MomentSet& mom, double p_ase, const NliCoefficientSet& coeffs,
                             const LaunchSearch& search = {});
OptimalLaunch optimal_launch(const Constellation4D& c, const LinkConfig& link, const TxConfig& tx, int n_spans,
                             const LaunchSearch& search = {});

} // namespace dp4d
