#include "dp4d/fiber_sim.hpp"

#include "dp4d/error.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <random>

namespace dp4d {

void SimConfig::validate() const
{
    if (symbols_per_run < 16) throw ConfigError("symbols_per_run must be >= 16");
    if (samples_per_symbol < 2 || samples_per_symbol % 2 != 0)
        throw ConfigError("samples_per_symbol must be even and >= 2");
    if (steps_per_span < 1) throw ConfigError("steps_per_span must be >= 1");
    if (discard_symbols < 0 || 2 * discard_symbols >= symbols_per_run)
        throw ConfigError("discard_symbols leaves no symbols");
    if (injected_nli_per_w2 && !(*injected_nli_per_w2 >= 0.0))
        throw ConfigError("injected NLI coefficient must be nonnegative");
}

namespace {

using std::numbers::pi;

std::mutex g_plan_mutex;  // FFTW planning is not thread-safe

// Two-polarization buffer with forward/backward plans.
class Field {
public:
    explicit Field(int n) : n_(n)
    {
        data_ = fftw_alloc_complex(2 * static_cast<std::size_t>(n));
        if (!data_) throw NumericalError("cannot allocate simulation buffer");
        std::lock_guard lock(g_plan_mutex);
        fwd_ = fftw_plan_many_dft(1, &n_, 2, data_, nullptr, 1, n_, data_, nullptr, 1, n_, FFTW_FORWARD,
                                  FFTW_ESTIMATE);
        bwd_ = fftw_plan_many_dft(1, &n_, 2, data_, nullptr, 1, n_, data_, nullptr, 1, n_, FFTW_BACKWARD,
                                  FFTW_ESTIMATE);
    }
    ~Field()
    {
        std::lock_guard lock(g_plan_mutex);
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(data_);
    }
    Field(const Field&) = delete;
    Field& operator=(const Field&) = delete;

    cplx* pol(int p) { return reinterpret_cast<cplx*>(data_) + static_cast<std::size_t>(p) * n_; }
    int size() const { return n_; }

    void forward() { fftw_execute(fwd_); }
    void backward()
    {
        fftw_execute(bwd_);
        const double inv = 1.0 / n_;
        cplx* d = pol(0);
        for (std::size_t i = 0; i < 2 * static_cast<std::size_t>(n_); ++i) d[i] *= inv;
    }

    // Multiplies both polarizations by a per-bin factor (frequency domain).
    void apply(const std::vector<cplx>& h)
    {
        for (int p = 0; p < 2; ++p) {
            cplx* d = pol(p);
            for (int i = 0; i < n_; ++i) d[i] *= h[i];
        }
    }

    double energy()
    {
        double e = 0.0;
        const cplx* d = pol(0);
        for (std::size_t i = 0; i < 2 * static_cast<std::size_t>(n_); ++i) e += std::norm(d[i]);
        return e;
    }

private:
    int n_;
    fftw_complex* data_ = nullptr;
    fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

// sqrt of the raised-cosine spectrum, unity in the flat band; f in units of R_s.
double rrc_amplitude(double f, double beta)
{
    const double a = std::abs(f);
    const double f1 = 0.5 * (1.0 - beta), f2 = 0.5 * (1.0 + beta);
    if (a <= f1) return 1.0;
    if (a > f2) return 0.0;
    return std::sqrt(0.5 * (1.0 + std::cos(pi / beta * (a - f1))));
}

} // namespace

void nonlinear_step(std::span<cplx> x, std::span<cplx> y, double gamma_dz)
{
    if (x.size() != y.size()) throw InvalidArgument("polarization buffers differ in length");
    for (std::size_t i = 0; i < x.size(); ++i) {
        const cplx rot = std::polar(1.0, gamma_dz * (std::norm(x[i]) + std::norm(y[i])));
        x[i] *= rot;
        y[i] *= rot;
    }
}

SymbolCloud simulate(const Constellation4D& c_in, const LinkConfig& link, const TxConfig& tx, int n_spans,
                     double p, const SimConfig& sim)
{
    link.validate();
    tx.validate();
    sim.validate();
    if (n_spans < 1) throw InvalidArgument("n_spans must be >= 1");
    if (!(p > 0.0) || !std::isfinite(p)) throw InvalidArgument("launch power must be positive");

    const Constellation4D c = normalize_unit_energy(c_in);
    const MomentSet mom = moments(c);
    const int nsym = sim.symbols_per_run, sps = sim.samples_per_symbol;
    const int n = nsym * sps;
    const double rs = tx.symbol_rate_hz();
    const double fs = rs * sps;

    std::mt19937_64 rng(sim.rng_seed);
    std::uniform_int_distribution<std::size_t> pick(0, c.size() - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SymbolCloud out;
    out.launch_power_w = p;
    out.tx_indices.resize(nsym);
    for (auto& t : out.tx_indices) t = pick(rng);

    // Angular frequency per bin and pulse spectrum.
    std::vector<double> omega(n);
    std::vector<cplx> pulse(n);
    for (int i = 0; i < n; ++i) {
        const double f = (i < n / 2 ? i : i - n) * fs / n;
        omega[i] = 2.0 * pi * f;
        pulse[i] = rrc_amplitude(f / rs, tx.rrc_rolloff);
    }

    Field field(n);
    const double amp = std::sqrt(p);
    for (int q = 0; q < 2; ++q) {
        cplx* d = field.pol(q);
        std::fill(d, d + n, cplx(0.0));
        for (int k = 0; k < nsym; ++k) {
            const Point4& s = c[out.tx_indices[k]];
            d[static_cast<std::size_t>(k) * sps] = amp * (q == 0 ? pol_x(s) : pol_y(s));
        }
    }
    field.forward();
    {
        std::vector<cplx> tx_filter(n);
        for (int i = 0; i < n; ++i) tx_filter[i] = static_cast<double>(sps) * pulse[i];
        field.apply(tx_filter);
    }

    const double alpha = link.alpha_np_per_m();
    const double beta2 = link.beta2_s2_per_m();
    const double gamma = link.gamma_per_w_m() *
                         (sim.nonlinearity == NonlinearityScaling::Manakov ? 8.0 / 9.0 : 1.0) *
                         (sim.injected_nli_per_w2 ? 0.0 : 1.0);
    const double span = link.span_length_m();
    const int steps = gamma > 0.0 ? sim.steps_per_span : 1;
    const double dz = span / steps;
    if (gamma * p * dz > 5e-3)
        throw NumericalError("nonlinear phase per step " + std::to_string(gamma * p * dz) +
                             " rad exceeds 5e-3; increase steps_per_span");

    auto linear_op = [&](double len) {
        std::vector<cplx> h(n);
        for (int i = 0; i < n; ++i)
            h[i] = std::exp(cplx(-0.5 * alpha * len, 0.5 * beta2 * omega[i] * omega[i] * len));
        return h;
    };
    const std::vector<cplx> half = linear_op(0.5 * dz);
    const std::vector<cplx> full = linear_op(dz);

    const double gain = std::exp(alpha * span);
    const double ase_var = (gain - 1.0) * 0.5 * link.noise_figure() * phys::kPlanck * link.carrier_hz() * fs;
    const double ase_sd = std::sqrt(0.5 * ase_var);

    // The field stays in the frequency domain between steps.
    for (int s = 0; s < n_spans; ++s) {
        if (gamma > 0.0) {
            field.apply(half);
            for (int k = 0; k < steps; ++k) {
                field.backward();
                nonlinear_step({field.pol(0), static_cast<std::size_t>(n)}, {field.pol(1), static_cast<std::size_t>(n)},
                               gamma * dz);
                field.forward();
                field.apply(k + 1 < steps ? full : half);
            }
        } else {
            field.apply(full);
        }
        // EDFA
        field.backward();
        const double g = std::sqrt(gain);
        for (int q = 0; q < 2; ++q) {
            cplx* d = field.pol(q);
            for (int i = 0; i < n; ++i) d[i] *= g;
            if (sim.ase == AseInjection::PerSpan)
                for (int i = 0; i < n; ++i) d[i] += cplx(ase_sd * gauss(rng), ase_sd * gauss(rng));
        }
        field.forward();
    }

    // Receiver: dispersion compensation and matched filter in one pass.
    {
        const double total = span * n_spans;
        std::vector<cplx> rx(n);
        for (int i = 0; i < n; ++i) rx[i] = pulse[i] * std::exp(cplx(0.0, -0.5 * beta2 * omega[i] * omega[i] * total));
        field.apply(rx);
    }
    field.backward();

    const int lo = sim.discard_symbols, hi = nsym - sim.discard_symbols;
    std::vector<cplx> ry[2];
    for (int q = 0; q < 2; ++q) {
        ry[q].resize(hi - lo);
        const cplx* d = field.pol(q);
        for (int k = lo; k < hi; ++k) ry[q][k - lo] = d[static_cast<std::size_t>(k) * sps] / amp;
    }
    if (sim.injected_nli_per_w2) {
        const double var = *sim.injected_nli_per_w2 * p * p * p / p;  // relative to P
        const double sd = std::sqrt(0.5 * var);
        for (int q = 0; q < 2; ++q)
            for (auto& v : ry[q]) v += cplx(sd * gauss(rng), sd * gauss(rng));
    }

    // Per-polarization complex least-squares scale and phase.
    cplx coef[2];
    bool have[2];
    for (int q = 0; q < 2; ++q) {
        cplx num = 0.0;
        double den = 0.0;
        for (int k = lo; k < hi; ++k) {
            const Point4& s = c[out.tx_indices[k]];
            const cplx sv = q == 0 ? pol_x(s) : pol_y(s);
            num += ry[q][k - lo] * std::conj(sv);
            den += std::norm(sv);
        }
        have[q] = den > 0.0;
        coef[q] = have[q] ? num / den : cplx(1.0);
    }
    if (!have[0] && have[1]) coef[0] = coef[1];
    if (!have[1] && have[0]) coef[1] = coef[0];
    if (std::abs(coef[0]) == 0.0 || std::abs(coef[1]) == 0.0 || !std::isfinite(std::abs(coef[0])) ||
        !std::isfinite(std::abs(coef[1])))
        throw NumericalError("receiver scale estimate is degenerate");

    const std::vector<std::size_t> all_tx = std::move(out.tx_indices);
    out.tx_indices.assign(all_tx.begin() + lo, all_tx.begin() + hi);
    out.rx_points.resize(hi - lo);
    double sx = 0.0, sy = 0.0;
    for (int k = 0; k < hi - lo; ++k) {
        const cplx x = ry[0][k] / coef[0], y = ry[1][k] / coef[1];
        out.rx_points[k] = {x.real(), x.imag(), y.real(), y.imag()};
        const Point4& s = c[out.tx_indices[k]];
        sx += std::norm(x - pol_x(s));
        sy += std::norm(y - pol_y(s));
    }
    const double cnt = static_cast<double>(hi - lo);
    out.var_x = sx / cnt;
    out.var_y = sy / cnt;
    if (!std::isfinite(out.var_x) || !std::isfinite(out.var_y)) throw NumericalError("simulation overflow");
    out.snr_x = out.var_x > 0 ? mom.mu2_x / out.var_x : INFINITY;
    out.snr_y = out.var_y > 0 ? mom.mu2_y / out.var_y : INFINITY;
    out.snr_4d = out.var_x + out.var_y > 0 ? 1.0 / (out.var_x + out.var_y) : INFINITY;
    return out;
}

CalibrationResult calibrate_eta(const Constellation4D& c, const LinkConfig& link, const TxConfig& tx, int n_spans,
                                const SimConfig& sim, const std::vector<double>& offsets_db)
{
    if (offsets_db.size() < 3) throw InvalidArgument("calibration needs at least three launch powers");
    if (link.gamma_per_w_km == 0.0 && !sim.injected_nli_per_w2)
        throw NumericalError("no nonlinear interference to fit (gamma = 0)");
    const double p_opt = optimal_launch(c, link, tx, n_spans).p_opt_w;
    const double p_ase = sim.ase == AseInjection::PerSpan ? ase_power(link, tx, n_spans) : 0.0;

    CalibrationResult r;
    for (double off : offsets_db) {
        const double p = p_opt * db_to_lin(off);
        const SymbolCloud cloud = simulate(c, link, tx, n_spans, p, sim);
        const double nx = cloud.var_x * p - p_ase, ny = cloud.var_y * p - p_ase;
        const bool need_x = moments(c).mu2_x > 0, need_y = moments(c).mu2_y > 0;
        if ((need_x && !(nx > 0.0)) || (need_y && !(ny > 0.0)))
            throw NumericalError("inferred NLI power is not positive at " + std::to_string(w_to_dbm(p)) +
                                 " dBm; the run is ASE dominated, use higher launch powers");
        r.powers_w.push_back(p);
        r.p_nli_x.push_back(nx);
        r.p_nli_y.push_back(ny);
    }
    auto fit = [&](const std::vector<double>& y, double& r2) {
        double num = 0.0, den = 0.0, mean = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double p3 = std::pow(r.powers_w[i], 3);
            num += y[i] * p3;
            den += p3 * p3;
            mean += y[i];
        }
        const double a = num / den;
        mean /= static_cast<double>(y.size());
        double ss_res = 0.0, ss_tot = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double pred = a * std::pow(r.powers_w[i], 3);
            ss_res += (y[i] - pred) * (y[i] - pred);
            ss_tot += (y[i] - mean) * (y[i] - mean);
        }
        r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
        return a;
    };
    r.coeffs.provenance = NliProvenance::SsfmFitted;
    r.coeffs.n_spans = n_spans;
    r.coeffs.gamma_eff = link.gamma_per_w_m() * (sim.nonlinearity == NonlinearityScaling::Manakov ? 8.0 / 9.0 : 1.0);
    r.coeffs.chi0 = {fit(r.p_nli_x, r.r2_x), fit(r.p_nli_y, r.r2_y)};
    return r;
}

AirEstimate ssfm_air(const Constellation4D& c, const LinkConfig& link, const TxConfig& tx, int n_spans, double p,
                     const SimConfig& sim)
{
    const SymbolCloud cloud = simulate(c, link, tx, n_spans, p, sim);
    AirEstimate a = mc_air(normalize_unit_energy(c), cloud.tx_indices, cloud.rx_points);
    NoiseProfile np;
    np.launch_power_w = p;
    np.var_x = a.noise.var_x * p;
    np.var_y = a.noise.var_y * p;
    np.p_ase = sim.ase == AseInjection::PerSpan ? ase_power(link, tx, n_spans) : 0.0;
    np.p_nli_x = std::max(0.0, np.var_x - np.p_ase);
    np.p_nli_y = std::max(0.0, np.var_y - np.p_ase);
    a.noise = np;
    return a;
}

} // namespace dp4d
