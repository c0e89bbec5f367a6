#pragma once

#include "dp4d/air.hpp"
#include "dp4d/constellation.hpp"
#include "dp4d/link_model.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dp4d {

enum class NonlinearityScaling { Manakov, FullGamma };
enum class AseInjection { PerSpan, Off };

struct SimConfig {
    int symbols_per_run = 1 << 16;
    int samples_per_symbol = 4;
    int steps_per_span = 1000;
    std::uint64_t rng_seed = 1;
    NonlinearityScaling nonlinearity = NonlinearityScaling::Manakov;
    AseInjection ase = AseInjection::PerSpan;
    int discard_symbols = 256;  // per side
    // Test hook: replaces the fiber nonlinearity by circular Gaussian noise
    // of power a P^3 per polarization added to the received symbols.
    std::optional<double> injected_nli_per_w2;

    void validate() const;
};

// Received symbols after DSP, in the units of the unit-energy constellation.
// Variances are per polarization over both quadratures, relative to P.
struct SymbolCloud {
    std::vector<std::size_t> tx_indices;
    std::vector<Point4> rx_points;
    double var_x = 0.0;
    double var_y = 0.0;
    double snr_x = 0.0;  // mu2_x / var_x
    double snr_y = 0.0;
    double snr_4d = 0.0;  // 1 / (var_x + var_y)
    double launch_power_w = 0.0;
};

// Deterministic Manakov nonlinear step: both polarizations rotate by
// gamma_dz (|x|^2 + |y|^2). Norm preserving.
void nonlinear_step(std::span<cplx> x, std::span<cplx> y, double gamma_dz);

SymbolCloud simulate(const Constellation4D& c, const LinkConfig& link, const TxConfig& tx, int n_spans,
                     double launch_power_w, const SimConfig& sim = {});

struct CalibrationResult {
    NliCoefficientSet coeffs;  // provenance ssfm-fitted, chi0 only
    std::vector<double> powers_w;
    std::vector<double> p_nli_x, p_nli_y;
    double r2_x = 0.0, r2_y = 0.0;
};

// Fits p_nli_p = a_p P^3 through the origin to SSFM runs at the model's
// optimal power shifted by each of offsets_db.
CalibrationResult calibrate_eta(const Constellation4D& c, const LinkConfig& link, const TxConfig& tx, int n_spans,
                                const SimConfig& sim = {}, const std::vector<double>& offsets_db = {-2.0, 0.0, 2.0});

AirEstimate ssfm_air(const Constellation4D& c, const LinkConfig& link, const TxConfig& tx, int n_spans,
                     double launch_power_w, const SimConfig& sim = {});

} // namespace dp4d
