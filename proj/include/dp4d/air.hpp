#pragma once

#include "dp4d/constellation.hpp"
#include "dp4d/link_model.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dp4d {

// Nodes and weights for int exp(-t^2) f(t) dt, from the eigen-decomposition
// of the Jacobi matrix. Cached per order; the returned reference stays valid.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
const GaussHermiteRule& gauss_hermite_rule(int n);

inline constexpr int kMaxPointsPerDim = 32;

enum class AirBackend { GaussHermite, MonteCarlo };
std::string to_string(AirBackend b);

struct AirEstimate {
    double rate_bit_per_4d = 0.0;
    AirBackend backend = AirBackend::GaussHermite;
    std::size_t nodes_or_samples = 0;
    NoiseProfile noise;
    std::optional<double> std_error;  // Monte-Carlo only
};

// AIR with the diagonal Gaussian metric of `noise`. The constellation is used
// as given (expected at unit energy) and is scaled by sqrt(P) against the
// noise variances, i.e. only var_p / P matters.
AirEstimate gh_air(const Constellation4D& c, const NoiseProfile& noise, int points_per_dim = 8);

// dI/d(flat coordinates) of gh_air at fixed noise, 4M entries point-major.
std::vector<double> gh_air_gradient(const Constellation4D& c, const NoiseProfile& noise, int points_per_dim = 8);

// Both at once; the gradient pass reuses the forward sums.
struct AirValueGrad {
    double rate = 0.0;
    std::vector<double> grad;
    // dI/d(var_p / P), the sensitivity to the normalized noise variances.
    double dvar_x = 0.0;
    double dvar_y = 0.0;
};
AirValueGrad gh_air_value_grad(const Constellation4D& c, const NoiseProfile& noise, int points_per_dim = 8);

// Same evaluator for a single-polarization constellation in AWGN with total
// (two-quadrature) noise variance `noise_var` relative to unit symbol energy.
double gh_air_2d(std::span<const cplx> points, double noise_var, int points_per_dim = 8);

// Monte-Carlo estimate from aligned (tx index, rx point) samples in
// constellation units. Without a profile, per-polarization metric variances
// are the mean squared rx - tx deviation of that polarization.
AirEstimate mc_air(const Constellation4D& c, std::span<const std::size_t> tx_indices, std::span<const Point4> rx_points,
                   const std::optional<NoiseProfile>& noise = std::nullopt);

} // namespace dp4d
