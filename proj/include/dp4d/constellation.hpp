#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dp4d {

using cplx = std::complex<double>;

// One 4D symbol: (Re s_x, Im s_x, Re s_y, Im s_y).
using Point4 = std::array<double, 4>;

inline cplx pol_x(const Point4& p) { return {p[0], p[1]}; }
inline cplx pol_y(const Point4& p) { return {p[2], p[3]}; }
inline double energy(const Point4& p) { return p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]; }

// A 2D (single polarization) constellation, used to build PM products.
struct Constellation2D {
    std::string name;
    std::vector<cplx> points;
};

// M points in R^4 with uniform priors. Construction validates that M >= 2,
// every coordinate is finite and no two points coincide.
class Constellation4D {
public:
    Constellation4D(std::string name, std::vector<Point4> points);

    const std::string& name() const noexcept { return name_; }
    std::size_t size() const noexcept { return points_.size(); }
    double bits() const noexcept;
    std::span<const Point4> points() const noexcept { return points_; }
    const Point4& operator[](std::size_t i) const noexcept { return points_[i]; }

    double mean_energy() const noexcept;
    double min_distance() const noexcept;

    // Flat 4M view, point-major.
    std::vector<double> flat() const;
    static Constellation4D from_flat(std::string name, std::span<const double> flat);

    Constellation4D renamed(std::string name) const;

private:
    std::string name_;
    std::vector<Point4> points_;
};

// Uniform positive scaling to unit mean 4D symbol energy.
Constellation4D normalize_unit_energy(const Constellation4D& c);

// Cartesian product: x_i = (q_a, q_b) for every ordered pair (a, b).
Constellation4D pm_from_2d(const Constellation2D& q);

// Unit-energy QAM for order in {4, 8, 16, 32, 64}. Order 8 is the 4x2
// rectangular grid, order 32 the 6x6 cross.
Constellation2D generate_qam(int order);

// Constant-modulus 64-point polarization-ring-switching format: one
// polarization on an inner 4-PSK ring while the other sits on an outer 8-PSK
// ring, and the swapped assignment. Ring radii maximize the minimum distance.
Constellation4D ring_switching_64();

// Catalog names: pm-qpsk, pm-8qam, pm-16qam, pm-32qam, pm-64qam, 4d-64prs.
std::vector<std::string> catalog_names();
Constellation4D catalog_format(std::string_view name);

// Resolves a catalog name, "file:<path>", "pm:<2D file>" or an existing path.
Constellation4D resolve_format(std::string_view spec);

// Text format: first non-comment line "M N", then M rows of N floats.
// Lines starting with '#' are ignored. Not normalized on load.
Constellation4D load_constellation(const std::filesystem::path& path);
Constellation2D load_constellation_2d(const std::filesystem::path& path);
Constellation4D parse_constellation(std::string_view text, std::string name);
void save_constellation(const Constellation4D& c, const std::filesystem::path& path);
std::string format_constellation(const Constellation4D& c);

// Statistical moments of the unit-energy-normalized constellation.
//
// The named fields follow the usual EGN definitions per polarization
// p in {x, y} with s_p the complex symbol:
//   phi_p  = E|s|^4 / E|s|^2^2 - 2
//   psi_p  = E|s|^6 / E|s|^2^3 - 9 E|s|^4 / E|s|^2^2 + 12
//   xpol4  = E|s_x|^2|s_y|^2 / (E|s_x|^2 E|s_y|^2) - 1
// The raw balanced moments E|s_x|^{2a} |s_y|^{2b} (a + b <= 3) are kept as
// well; they fully determine the joint cumulants of the constellation after
// independent uniform phase randomization of each polarization, which is
// what the nonlinear interference model consumes.
struct MomentSet {
    double mu2_x = 0.5, mu2_y = 0.5;
    double phi_x = 0, phi_y = 0;
    double psi_x = 0, psi_y = 0;
    double xpol4 = 0;
    // Normalized mixed sixth-order cumulants kappa(x,x*,x,x*,y,y*)/(mu_x^2 mu_y)
    // and kappa(x,x*,y,y*,y,y*)/(mu_x mu_y^2); zero for PM products.
    double xpol6_xxy = 0, xpol6_xyy = 0;
    double pseudo_x = 0, pseudo_y = 0;
    double xcorr_conj = 0, xcorr_plain = 0;

    // raw[a][b] = E|s_x|^{2a} |s_y|^{2b}, a + b <= 3.
    std::array<std::array<double, 4>, 4> raw{};

    // Phase-randomized joint cumulant with a x-pairs (x, x*) and b y-pairs.
    double kappa(int a, int b) const;

    // Builds a moment set from summary statistics (raw moments derived).
    static MomentSet from_summary(double mu2_x, double mu2_y, double phi_x, double phi_y, double psi_x,
                                  double psi_y, double xpol4, double xpol6_xxy = 0, double xpol6_xyy = 0);

    // Builds a moment set from raw[a][b]; raw[0][0] is forced to one.
    static MomentSet from_raw(const std::array<std::array<double, 4>, 4>& raw);

    // Moments of the polarization-swapped constellation.
    MomentSet swapped() const;

private:
    friend MomentSet moments(const Constellation4D&);
    void finalize();
    std::array<std::array<double, 4>, 4> kappa_{};
};

MomentSet moments(const Constellation4D& c);

struct EnergyLevel {
    double energy;
    std::size_t multiplicity;
};

struct EnergyProfile {
    std::vector<EnergyLevel> levels;
    double tolerance;
};

inline constexpr double kDefaultEnergyTolerance = 0.02;

// Single-linkage clustering of the unit-energy point energies.
EnergyProfile energy_levels(const Constellation4D& c, double tol = kDefaultEnergyTolerance);

} // namespace dp4d
