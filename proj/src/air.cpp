#include "dp4d/air.hpp"

#include "dp4d/error.hpp"
#include "parallel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace dp4d {

const GaussHermiteRule& gauss_hermite_rule(int n)
{
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
    if (n < 1 || n > kMaxPointsPerDim)
        throw InvalidArgument("Gauss-Hermite order must lie in [1, " + std::to_string(kMaxPointsPerDim) + "]");
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot) {
        Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd sub(std::max(0, n - 1));
        for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(0.5 * k);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
        auto rule = std::make_unique<GaussHermiteRule>();
        for (int k = 0; k < n; ++k) {
            rule->nodes.push_back(es.eigenvalues()[k]);
            const double v0 = es.eigenvectors()(0, k);
            rule->weights.push_back(std::sqrt(std::numbers::pi) * v0 * v0);
        }
        slot = std::move(rule);
    }
    return *slot;
}

std::string to_string(AirBackend b) { return b == AirBackend::GaussHermite ? "gauss-hermite" : "monte-carlo"; }

namespace {

// Terms whose exponent is below this bound on the whole grid are dropped;
// the own-symbol term contributes exactly one, so the loss is < e^-50.
constexpr double kPruneExponent = -50.0;

template <int D, int K>
inline void accumulate(const double* const* e, int n, double pre, double*& out)
{
    if constexpr (K == D - 1) {
        const double* ek = e[K];
        for (int q = 0; q < n; ++q) *out++ += pre * ek[q];
    } else {
        for (int q = 0; q < n; ++q) accumulate<D, K + 1>(e, n, pre * e[K][q], out);
    }
}

// p0 = sum_n R_n E_n and p1_k = sum_n R_n E_n t_{n_k} over the node grid.
template <int D, int K>
inline void contract(const double* const* e, const double* t, int n, double pre, double* tc, const double*& r,
                     double& p0, double* p1)
{
    if constexpr (K == D - 1) {
        const double* ek = e[K];
        double q = 0.0, qt = 0.0;
        for (int i = 0; i < n; ++i) {
            const double v = ek[i] * *r++;
            q += v;
            qt += v * t[i];
        }
        p0 += pre * q;
        p1[K] += pre * qt;
        for (int k = 0; k < K; ++k) p1[k] += pre * q * tc[k];
    } else {
        for (int i = 0; i < n; ++i) {
            tc[K] = t[i];
            contract<D, K + 1>(e, t, n, pre * e[K][i], tc, r, p0, p1);
        }
    }
}

// Returns the AIR in bits; fills grad (M * D entries) when non-null.
template <int D>
double gh_core(std::span<const double> pts, const std::array<double, D>& sigma, int order, std::vector<double>* grad,
               std::array<double, D>* dsigma = nullptr)
{
    const std::size_t m = pts.size() / D;
    const GaussHermiteRule& rule = gauss_hermite_rule(order);
    const int n = order;
    std::size_t grid = 1;
    for (int k = 0; k < D; ++k) grid *= static_cast<std::size_t>(n);

    const double norm = std::pow(std::numbers::pi, -0.5 * D);
    std::vector<double> wgrid(grid);
    for (std::size_t g = 0; g < grid; ++g) {
        std::size_t rem = g;
        double w = norm;
        for (int k = D - 1; k >= 0; --k) {
            w *= rule.weights[rem % n];
            rem /= n;
        }
        wgrid[g] = w;
    }
    double tmax = 0.0;
    for (double t : rule.nodes) tmax = std::max(tmax, std::abs(t));
    const double tnorm = std::sqrt(static_cast<double>(D)) * tmax;
    const double s2 = std::numbers::sqrt2;

    std::vector<double> rate_i(m, 0.0);
    std::vector<double> v;  // v[(i * m + j) * D + k]
    if (grad) v.assign(m * m * D, 0.0);

    detail::parallel_for(m, [&](std::size_t i) {
        std::vector<double> s(grid, 1.0);
        std::vector<std::size_t> kept;
        std::vector<std::array<double, D>> dts;
        std::vector<double> exps;  // per kept j: D * n factors
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            std::array<double, D> dt;
            double r2 = 0.0;
            for (int k = 0; k < D; ++k) {
                dt[k] = (pts[i * D + k] - pts[j * D + k]) / sigma[k];
                r2 += dt[k] * dt[k];
            }
            const double r = std::sqrt(r2);
            if (-0.5 * r2 + s2 * r * tnorm < kPruneExponent) continue;
            const double c = -0.5 * r2 / D;
            const std::size_t base = exps.size();
            exps.resize(base + static_cast<std::size_t>(D) * n);
            for (int k = 0; k < D; ++k)
                for (int q = 0; q < n; ++q) exps[base + k * n + q] = std::exp(c - s2 * dt[k] * rule.nodes[q]);
            const double* e[D];
            for (int k = 0; k < D; ++k) e[k] = &exps[base + k * n];
            double* out = s.data();
            accumulate<D, 0>(e, n, 1.0, out);
            kept.push_back(j);
            dts.push_back(dt);
        }
        double acc = 0.0;
        for (std::size_t g = 0; g < grid; ++g) acc += wgrid[g] * std::log2(s[g]);
        rate_i[i] = acc;

        if (!grad) return;
        for (std::size_t g = 0; g < grid; ++g) s[g] = wgrid[g] / s[g];
        for (std::size_t kk = 0; kk < kept.size(); ++kk) {
            const double* e[D];
            for (int k = 0; k < D; ++k) e[k] = &exps[kk * D * n + k * n];
            double p0 = 0.0, p1[D] = {}, tc[D] = {};
            const double* r = s.data();
            contract<D, 0>(e, rule.nodes.data(), n, 1.0, tc, r, p0, p1);
            double* vij = &v[(i * m + kept[kk]) * D];
            for (int k = 0; k < D; ++k) vij[k] = (-dts[kk][k] * p0 - s2 * p1[k]) / sigma[k];
        }
    }, 1);

    double mean = 0.0;
    for (double r : rate_i) mean += r;
    mean /= static_cast<double>(m);
    const double rate = std::log2(static_cast<double>(m)) - mean;

    if (grad) {
        grad->assign(m * D, 0.0);
        if (dsigma) dsigma->fill(0.0);
        const double scale = -1.0 / (static_cast<double>(m) * std::numbers::ln2);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                for (int k = 0; k < D; ++k) {
                    const double val = v[(i * m + j) * D + k];
                    (*grad)[i * D + k] += scale * val;
                    (*grad)[j * D + k] -= scale * val;
                    // The exponent depends on d_k and sigma_k only through d_k / sigma_k.
                    if (dsigma) (*dsigma)[k] -= scale * val * (pts[i * D + k] - pts[j * D + k]) / sigma[k];
                }
    }
    return rate;
}

std::array<double, 4> sigma_of(const NoiseProfile& noise, int points_per_dim)
{
    if (!(noise.launch_power_w > 0.0)) throw InvalidArgument("noise profile needs a positive launch power");
    if (!(noise.var_x > 0.0) || !(noise.var_y > 0.0)) throw InvalidArgument("noise variances must be positive");
    if (points_per_dim < 2 || points_per_dim > kMaxPointsPerDim)
        throw InvalidArgument("points_per_dim must lie in [2, " + std::to_string(kMaxPointsPerDim) + "]");
    const double sx = std::sqrt(0.5 * noise.norm_var_x());
    const double sy = std::sqrt(0.5 * noise.norm_var_y());
    return {sx, sx, sy, sy};
}

std::size_t grid_size(int n) { return static_cast<std::size_t>(n) * n * n * n; }

// The tensor-product rule is symmetric only under quarter turns of each
// polarization plane. Every estimate is therefore taken in a canonical frame
// where the power sum sum s^k of each polarization has a fixed argument (k = 4
// first, so QAM grids stay axis-aligned), which leaves only quarter-turn
// ambiguities and makes the result invariant to any per-polarization phase.
struct PlaneFrame {
    cplx rot = 1.0;               // e^{j theta}
    std::vector<cplx> dtheta;     // d theta / d Re s + j d theta / d Im s, per point
};

PlaneFrame canonical_frame(std::span<const double> flat, int stride, int offset)
{
    const std::size_t m = flat.size() / stride;
    PlaneFrame f;
    f.dtheta.assign(m, 0.0);
    for (int k : {4, 2, 1}) {
        cplx sum = 0.0;
        double mag = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const cplx z(flat[i * stride + offset], flat[i * stride + offset + 1]);
            sum += std::pow(z, k);
            mag += std::pow(std::abs(z), k);
        }
        if (!(std::abs(sum) > 1e-9 * mag)) continue;
        const double target = k == 4 ? std::numbers::pi : 0.0;
        f.rot = std::polar(1.0, (target - std::arg(sum)) / k);
        for (std::size_t i = 0; i < m; ++i) {
            const cplx z(flat[i * stride + offset], flat[i * stride + offset + 1]);
            const cplx q = std::pow(z, k - 1) / sum;
            f.dtheta[i] = {-q.imag(), -q.real()};
        }
        break;
    }
    return f;
}

// Rotates each plane of `flat` (stride 2 or 4) into its canonical frame.
std::vector<PlaneFrame> to_canonical(std::vector<double>& flat, int stride)
{
    std::vector<PlaneFrame> frames;
    for (int off = 0; off < stride; off += 2) frames.push_back(canonical_frame(flat, stride, off));
    for (std::size_t i = 0; i < flat.size(); i += stride)
        for (int off = 0, p = 0; off < stride; off += 2, ++p) {
            const cplx z = cplx(flat[i + off], flat[i + off + 1]) * frames[p].rot;
            flat[i + off] = z.real();
            flat[i + off + 1] = z.imag();
        }
    return frames;
}

// Maps a gradient taken in the canonical frame back to the input coordinates,
// including the dependence of the frame angle on the points.
void from_canonical(std::vector<double>& grad, const std::vector<double>& rotated, const std::vector<PlaneFrame>& frames,
                    int stride)
{
    const std::size_t m = grad.size() / stride;
    for (int off = 0, p = 0; off < stride; off += 2, ++p) {
        double di_dtheta = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const cplx g(grad[i * stride + off], grad[i * stride + off + 1]);
            const cplx s(rotated[i * stride + off], rotated[i * stride + off + 1]);
            di_dtheta += (std::conj(g) * cplx(0.0, 1.0) * s).real();
        }
        const cplx back = std::conj(frames[p].rot);
        for (std::size_t i = 0; i < m; ++i) {
            const cplx g = cplx(grad[i * stride + off], grad[i * stride + off + 1]) * back;
            grad[i * stride + off] = g.real() + di_dtheta * frames[p].dtheta[i].real();
            grad[i * stride + off + 1] = g.imag() + di_dtheta * frames[p].dtheta[i].imag();
        }
    }
}

} // namespace

AirEstimate gh_air(const Constellation4D& c, const NoiseProfile& noise, int points_per_dim)
{
    const auto sigma = sigma_of(noise, points_per_dim);
    std::vector<double> flat = c.flat();
    to_canonical(flat, 4);
    AirEstimate out;
    out.rate_bit_per_4d = gh_core<4>(flat, sigma, points_per_dim, nullptr);
    out.backend = AirBackend::GaussHermite;
    out.nodes_or_samples = grid_size(points_per_dim);
    out.noise = noise;
    return out;
}

AirValueGrad gh_air_value_grad(const Constellation4D& c, const NoiseProfile& noise, int points_per_dim)
{
    const auto sigma = sigma_of(noise, points_per_dim);
    std::vector<double> flat = c.flat();
    const auto frames = to_canonical(flat, 4);
    AirValueGrad out;
    std::array<double, 4> ds{};
    out.rate = gh_core<4>(flat, sigma, points_per_dim, &out.grad, &ds);
    from_canonical(out.grad, flat, frames, 4);
    // sigma = sqrt(var / 2)  =>  d sigma / d var = 1 / (4 sigma)
    out.dvar_x = (ds[0] + ds[1]) / (4.0 * sigma[0]);
    out.dvar_y = (ds[2] + ds[3]) / (4.0 * sigma[2]);
    return out;
}

std::vector<double> gh_air_gradient(const Constellation4D& c, const NoiseProfile& noise, int points_per_dim)
{
    return gh_air_value_grad(c, noise, points_per_dim).grad;
}

double gh_air_2d(std::span<const cplx> points, double noise_var, int points_per_dim)
{
    if (points.size() < 2) throw InvalidArgument("need at least two points");
    if (!(noise_var > 0.0)) throw InvalidArgument("noise variance must be positive");
    if (points_per_dim < 2 || points_per_dim > kMaxPointsPerDim) throw InvalidArgument("points_per_dim out of range");
    std::vector<double> flat;
    for (const cplx& p : points) {
        flat.push_back(p.real());
        flat.push_back(p.imag());
    }
    to_canonical(flat, 2);
    const double s = std::sqrt(0.5 * noise_var);
    return gh_core<2>(flat, {s, s}, points_per_dim, nullptr);
}

AirEstimate mc_air(const Constellation4D& c, std::span<const std::size_t> tx, std::span<const Point4> rx,
                   const std::optional<NoiseProfile>& noise)
{
    if (tx.empty()) throw InvalidArgument("mc_air needs at least one sample");
    if (tx.size() != rx.size()) throw InvalidArgument("tx and rx sample counts differ");
    const std::size_t m = c.size();
    for (std::size_t t : tx)
        if (t >= m) throw InvalidArgument("tx index out of range");

    double vx, vy;
    NoiseProfile used;
    if (noise) {
        if (!(noise->var_x > 0.0) || !(noise->var_y > 0.0) || !(noise->launch_power_w > 0.0))
            throw InvalidArgument("noise variances must be positive");
        vx = noise->norm_var_x();
        vy = noise->norm_var_y();
        used = *noise;
    } else {
        double sx = 0.0, sy = 0.0;
        for (std::size_t k = 0; k < tx.size(); ++k) {
            const Point4& x = c[tx[k]];
            const Point4& y = rx[k];
            sx += (y[0] - x[0]) * (y[0] - x[0]) + (y[1] - x[1]) * (y[1] - x[1]);
            sy += (y[2] - x[2]) * (y[2] - x[2]) + (y[3] - x[3]) * (y[3] - x[3]);
        }
        vx = sx / static_cast<double>(tx.size());
        vy = sy / static_cast<double>(tx.size());
        if (!(vx > 0.0) || !(vy > 0.0)) throw NumericalError("estimated metric variance is zero");
        used.launch_power_w = 1.0;
        used.var_x = vx;
        used.var_y = vy;
    }
    const double ix = 1.0 / vx, iy = 1.0 / vy;  // exponent -|d|^2 / var per polarization

    const std::size_t k_total = tx.size();
    std::vector<double> terms(k_total);
    detail::parallel_for(k_total, [&](std::size_t k) {
        const Point4& y = rx[k];
        auto metric = [&](const Point4& x) {
            const double dx = (y[0] - x[0]) * (y[0] - x[0]) + (y[1] - x[1]) * (y[1] - x[1]);
            const double dy = (y[2] - x[2]) * (y[2] - x[2]) + (y[3] - x[3]) * (y[3] - x[3]);
            return -dx * ix - dy * iy;
        };
        double mx = -INFINITY;
        for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, metric(c[j]));
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += std::exp(metric(c[j]) - mx);
        terms[k] = (metric(c[tx[k]]) - mx - std::log(s)) / std::numbers::ln2;
    }, 4096);

    double mean = 0.0;
    for (double t : terms) mean += t;
    mean /= static_cast<double>(k_total);
    double var = 0.0;
    for (double t : terms) var += (t - mean) * (t - mean);
    var /= static_cast<double>(k_total > 1 ? k_total - 1 : 1);

    AirEstimate out;
    out.rate_bit_per_4d = std::log2(static_cast<double>(m)) + mean;
    out.backend = AirBackend::MonteCarlo;
    out.nodes_or_samples = k_total;
    out.noise = used;
    out.std_error = std::sqrt(var / static_cast<double>(k_total));
    return out;
}

} // namespace dp4d
