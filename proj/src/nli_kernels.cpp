// First-order perturbation NLI kernels for a single channel.
//
// With i.i.d. 4D symbols, the NLI on the received symbol of polarization p is
//   D_p = j g P sum_{k,l,m} X_klm (s_k s_l* s_m terms of both polarizations)
// and its second moment expands over the set partitions of the six symbol
// positions {k, l, m, k', l', m'} into joint cumulants of the constellation
// times a link integral. Using Poisson summation with a rectangular spectrum,
// every partition whose blocks are phase balanced reduces to one of a handful
// of integrals of the link kernel H over the normalized band:
//   degenerate  |H(0)|^2                     (constant-phase terms)
//   gn          int |H|^2                    (3D, the GN term)
//   a           int dnu du |int dw H(uw)|^2
//   b           int dnu dtau |int du H(u(tau-u))|^2
//   six         int dnu |int du dw H(uw)|^2
//   K4          int dnu du dw H(uw)           (correlation with own symbol)
// u = nu1 - nu, w = nu3 - nu, all frequencies normalized to R_s and confined
// to [-1/2, 1/2] together with nu2 = nu + u + w.

#include "dp4d/error.hpp"
#include "dp4d/link_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace dp4d {

namespace {

using std::numbers::pi;

constexpr std::array<double, 4> kGlX = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                        0.8611363115940526};
constexpr std::array<double, 4> kGlW = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                        0.3478548451374538};

struct KernelShape {
    double a;      // span loss in nepers
    double theta;  // dispersion phase per unit delta per span
    int n;         // spans summed coherently
};

KernelShape shape_of(const LinkConfig& link, const TxConfig& tx, int n_spans, SpanAccumulation acc)
{
    const double rs = tx.symbol_rate_hz();
    return {link.alpha_np_per_m() * link.span_length_m(),
            4.0 * pi * pi * link.beta2_s2_per_m() * link.span_length_m() * rs * rs,
            acc == SpanAccumulation::Coherent ? n_spans : 1};
}

// Phased-array factor sum_{s<n} e^{jsx} and its derivative.
void phased_array(double x, int n, cplx& f, cplx& df)
{
    if (n == 1) {
        f = 1.0;
        df = 0.0;
        return;
    }
    const double half = 0.5 * x;
    const double s = std::sin(half);
    if (std::abs(s) > 1e-5) {
        const double c = std::cos(half);
        const double sn = std::sin(n * half), cn = std::cos(n * half);
        const double r = sn / s;
        const double dr = (0.5 * n * cn * s - 0.5 * sn * c) / (s * s);
        const cplx ph = std::polar(1.0, (n - 1) * half);
        f = ph * r;
        df = ph * (cplx(0.0, 0.5 * (n - 1)) * r + dr);
        return;
    }
    f = 0.0;
    df = 0.0;
    for (int k = 0; k < n; ++k) {
        const cplx e = std::polar(1.0, k * x);
        f += e;
        df += cplx(0.0, k) * e;
    }
}

// H(delta) and dH/ddelta, normalized to the span length.
void kernel_eval(const KernelShape& ks, double delta, cplx& h, cplx& dh)
{
    const double x = ks.theta * delta;
    const cplx den(ks.a, -x);
    const cplx e = std::exp(cplx(-ks.a, x));
    const cplx span = (1.0 - e) / den;
    const cplx dspan = cplx(0.0, 1.0) * ((1.0 - e) - e * den) / (den * den);
    cplx pa, dpa;
    phased_array(x, ks.n, pa, dpa);
    h = pa * span;
    dh = ks.theta * (dpa * span + pa * dspan);
}

// Tabulated H with its antiderivatives G = int H and J = int |H|^2, all
// interpolated as cubic Hermite splines on a uniform grid over [-1, 1].
class KernelTable {
public:
    KernelTable(const KernelShape& ks, double step) : ks_(ks)
    {
        half_ = static_cast<int>(std::ceil(1.0 / step)) + 2;
        h_ = 1.0 / (half_ - 2);
        const int n = 2 * half_ + 1;
        hv_.resize(n);
        dhv_.resize(n);
        gv_.resize(n);
        jv_.resize(n);
        for (int i = 0; i < n; ++i) kernel_eval(ks_, (i - half_) * h_, hv_[i], dhv_[i]);
        gv_[half_] = 0.0;
        jv_[half_] = 0.0;
        for (int i = half_; i < n - 1; ++i) {
            cplx g;
            double j;
            cell_integral(i, g, j);
            gv_[i + 1] = gv_[i] + g;
            jv_[i + 1] = jv_[i] + j;
        }
        for (int i = half_; i > 0; --i) {
            cplx g;
            double j;
            cell_integral(i - 1, g, j);
            gv_[i - 1] = gv_[i] - g;
            jv_[i - 1] = jv_[i] - j;
        }
    }

    cplx h0() const { return hv_[half_]; }

    cplx H(double d) const
    {
        int i;
        double t;
        locate(d, i, t);
        return hermite(hv_[i], h_ * dhv_[i], hv_[i + 1], h_ * dhv_[i + 1], t);
    }

    cplx G(double d) const
    {
        int i;
        double t;
        locate(d, i, t);
        return hermite(gv_[i], h_ * hv_[i], gv_[i + 1], h_ * hv_[i + 1], t);
    }

    double J(double d) const
    {
        int i;
        double t;
        locate(d, i, t);
        return hermite(cplx(jv_[i]), h_ * std::norm(hv_[i]), cplx(jv_[i + 1]), h_ * std::norm(hv_[i + 1]), t).real();
    }

private:
    void cell_integral(int i, cplx& g, double& j) const
    {
        const double lo = (i - half_) * h_;
        g = 0.0;
        j = 0.0;
        for (std::size_t q = 0; q < kGlX.size(); ++q) {
            cplx v, dv;
            kernel_eval(ks_, lo + 0.5 * h_ * (kGlX[q] + 1.0), v, dv);
            g += 0.5 * h_ * kGlW[q] * v;
            j += 0.5 * h_ * kGlW[q] * std::norm(v);
        }
    }

    void locate(double d, int& i, double& t) const
    {
        const double pos = d / h_ + half_;
        i = std::clamp(static_cast<int>(std::floor(pos)), 0, 2 * half_ - 1);
        t = pos - i;
    }

    static cplx hermite(cplx p0, cplx m0, cplx p1, cplx m1, double t)
    {
        const double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * m1;
    }

    KernelShape ks_;
    int half_ = 0;
    double h_ = 0.0;
    std::vector<cplx> hv_, dhv_, gv_;
    std::vector<double> jv_;
};

// Composite 4-point Gauss-Legendre nodes on [lo, hi] with panels no wider
// than max_width.
struct Nodes {
    std::vector<double> x, w;
};

void append_nodes(Nodes& out, double lo, double hi, double max_width)
{
    if (hi <= lo) return;
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_width)));
    const double pw = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
        const double a = lo + p * pw;
        for (std::size_t q = 0; q < kGlX.size(); ++q) {
            out.x.push_back(a + 0.5 * pw * (kGlX[q] + 1.0));
            out.w.push_back(0.5 * pw * kGlW[q]);
        }
    }
}

struct RawKernels {
    double h0 = 0.0;
    cplx k4 = 0.0;
    double gn = 0.0, a = 0.0, b = 0.0, six = 0.0;
};

RawKernels integrate(const KernelShape& ks, int refinement)
{
    const double peak = 2.0 * pi / (ks.n * std::abs(ks.theta));
    const double lorentz = ks.a / std::abs(ks.theta);
    const double feature = std::min({peak, lorentz, 0.05});
    const KernelTable table(ks, feature / (8.0 * refinement));
    const double pw = feature / refinement;

    Nodes nu;
    append_nodes(nu, -0.5, 0.5, 1.0 / (8.0 * refinement));

    RawKernels r;
    r.h0 = table.h0().real();
    const cplx h0 = table.h0();
    const double h0sq = std::norm(h0);

    for (std::size_t in = 0; in < nu.x.size(); ++in) {
        const double v = nu.x[in], wv = nu.w[in];
        const double lo = -0.5 - v, hi = 0.5 - v;

        Nodes un;
        append_nodes(un, lo, 0.0, pw);
        append_nodes(un, 0.0, hi, pw);
        cplx acc4 = 0.0;
        double accgn = 0.0, acca = 0.0;
        for (std::size_t iu = 0; iu < un.x.size(); ++iu) {
            const double u = un.x[iu];
            const double wl = u >= 0 ? lo : lo - u;
            const double wh = u >= 0 ? hi - u : hi;
            if (wh <= wl) continue;
            cplx fg;
            double fj;
            if (std::abs(u) > 1e-12) {
                fg = (table.G(u * wh) - table.G(u * wl)) / u;
                fj = (table.J(u * wh) - table.J(u * wl)) / u;
            } else {
                fg = h0 * (wh - wl);
                fj = h0sq * (wh - wl);
            }
            acc4 += un.w[iu] * fg;
            accgn += un.w[iu] * fj;
            acca += un.w[iu] * std::norm(fg);
        }
        r.k4 += wv * acc4;
        r.gn += wv * accgn;
        r.a += wv * acca;
        r.six += wv * std::norm(acc4);

        // b: tau = u + w = nu2 - nu ranges over the same interval.
        Nodes tn;
        append_nodes(tn, lo, hi, 1.0 / (8.0 * refinement));
        double accb = 0.0;
        for (std::size_t it = 0; it < tn.x.size(); ++it) {
            const double tau = tn.x[it];
            const double ulo = std::max(lo, tau - hi), uhi = std::min(hi, tau - lo);
            Nodes in_u;
            append_nodes(in_u, ulo, uhi, pw);
            cplx inner = 0.0;
            for (std::size_t k = 0; k < in_u.x.size(); ++k) {
                const double u = in_u.x[k];
                inner += in_u.w[k] * table.H(u * (tau - u));
            }
            accb += tn.w[it] * std::norm(inner);
        }
        r.b += wv * accb;
    }
    return r;
}

NliKernels to_kernels(const RawKernels& r, double len2, double scale)
{
    NliKernels k;
    k.degenerate = scale * len2 * r.h0 * r.h0;
    k.cross = scale * len2 * r.h0 * r.k4.real();
    k.k4_sq = scale * len2 * std::norm(r.k4);
    k.gn = scale * len2 * r.gn;
    k.a = scale * len2 * r.a;
    k.b = scale * len2 * r.b;
    k.six = scale * len2 * r.six;
    return k;
}

} // namespace

std::complex<double> link_kernel(const LinkConfig& link, const TxConfig& tx, int n_spans, double delta,
                                 SpanAccumulation acc)
{
    cplx h, dh;
    kernel_eval(shape_of(link, tx, n_spans, acc), delta, h, dh);
    return h;
}

KernelResult integrate_nli_kernels(const LinkConfig& link, const TxConfig& tx, int n_spans, const KernelOptions& opt)
{
    link.validate();
    tx.validate();
    if (n_spans < 1) throw InvalidArgument("n_spans must be >= 1");
    const KernelShape ks = shape_of(link, tx, n_spans, opt.accumulation);
    const double len2 = link.span_length_m() * link.span_length_m();
    // Incoherent accumulation adds per-span variances.
    const double scale = opt.accumulation == SpanAccumulation::Coherent ? 1.0 : static_cast<double>(n_spans);

    const RawKernels coarse = integrate(ks, opt.refinement);
    const RawKernels fine = integrate(ks, 2 * opt.refinement);
    const NliKernels kc = to_kernels(coarse, len2, scale);
    const NliKernels kf = to_kernels(fine, len2, scale);

    // Error relative to the GN integral, which sets the scale of every
    // surviving (non-cancelling) contribution.
    const double ref = std::abs(kf.gn);
    double err = 0.0;
    for (auto [c, f] : {std::pair{kc.gn, kf.gn}, {kc.a, kf.a}, {kc.b, kf.b}, {kc.six, kf.six},
                        {std::sqrt(kc.k4_sq), std::sqrt(kf.k4_sq)}})
        err = std::max(err, std::abs(c - f) / ref);
    if (!std::isfinite(err) || err > opt.max_rel_error)
        throw NumericalError("NLI kernel integration did not converge (estimated relative error " +
                             std::to_string(err) + ")");
    return {kf, err};
}

namespace {

struct Pos {
    int pol;
    bool conj;
};

double block_cumulant(const MomentSet& m, std::span<const Pos> pos, unsigned mask)
{
    int cnt[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < pos.size(); ++i)
        if (mask & (1u << i)) ++cnt[pos[i].pol][pos[i].conj ? 1 : 0];
    if (cnt[0][0] != cnt[0][1] || cnt[1][0] != cnt[1][1]) return 0.0;
    return m.kappa(cnt[0][0], cnt[1][0]);
}

enum class Kid { Degenerate, Gn, A, B, Cross, Six };

struct Partition {
    Kid kernel;
    std::array<unsigned, 3> blocks;
    int n_blocks;
};

constexpr unsigned bits(std::initializer_list<int> idx)
{
    unsigned m = 0;
    for (int i : idx) m |= 1u << i;
    return m;
}

// Positions: 0 = k, 1 = l (conj), 2 = m, 3 = k' (conj), 4 = l', 5 = m' (conj).
// These are the phase-balanced partitions without singleton blocks.
const std::array<Partition, 16> kPartitions = {{
    {Kid::Degenerate, {bits({0, 1}), bits({2, 3}), bits({4, 5})}, 3},
    {Kid::Degenerate, {bits({0, 1}), bits({2, 5}), bits({3, 4})}, 3},
    {Kid::Degenerate, {bits({0, 3}), bits({1, 2}), bits({4, 5})}, 3},
    {Kid::Degenerate, {bits({0, 5}), bits({1, 2}), bits({3, 4})}, 3},
    {Kid::Gn, {bits({0, 3}), bits({2, 5}), bits({1, 4})}, 3},
    {Kid::Gn, {bits({0, 5}), bits({2, 3}), bits({1, 4})}, 3},
    {Kid::A, {bits({0, 3}), bits({1, 2, 4, 5}), 0}, 2},
    {Kid::A, {bits({0, 5}), bits({1, 2, 3, 4}), 0}, 2},
    {Kid::A, {bits({2, 3}), bits({0, 1, 4, 5}), 0}, 2},
    {Kid::A, {bits({2, 5}), bits({0, 1, 3, 4}), 0}, 2},
    {Kid::B, {bits({1, 4}), bits({0, 2, 3, 5}), 0}, 2},
    {Kid::Cross, {bits({0, 1}), bits({2, 3, 4, 5}), 0}, 2},
    {Kid::Cross, {bits({1, 2}), bits({0, 3, 4, 5}), 0}, 2},
    {Kid::Cross, {bits({3, 4}), bits({0, 1, 2, 5}), 0}, 2},
    {Kid::Cross, {bits({4, 5}), bits({0, 1, 2, 3}), 0}, 2},
    {Kid::Six, {bits({0, 1, 2, 3, 4, 5}), 0, 0}, 1},
}};

double kernel_value(const NliKernels& k, Kid id)
{
    switch (id) {
    case Kid::Degenerate: return k.degenerate;
    case Kid::Gn: return k.gn;
    case Kid::A: return k.a;
    case Kid::B: return k.b;
    case Kid::Cross: return k.cross;
    case Kid::Six: return k.six;
    }
    return 0.0;
}

} // namespace

double nli_variance_factor(const NliKernels& k, const MomentSet& mom, int pol)
{
    const int p = pol, q = 1 - pol;
    const double mu = pol == 0 ? mom.mu2_x : mom.mu2_y;
    if (mu <= 1e-300) return 0.0;

    double second = 0.0;
    double corr_pair = 0.0, corr_four = 0.0;
    for (int t : {p, q}) {
        for (int tp : {p, q}) {
            const std::array<Pos, 6> pos = {
                Pos{t, false}, Pos{t, true}, Pos{p, false}, Pos{tp, true}, Pos{tp, false}, Pos{p, true}};
            for (const auto& part : kPartitions) {
                double prod = 1.0;
                for (int b = 0; b < part.n_blocks && prod != 0.0; ++b) prod *= block_cumulant(mom, pos, part.blocks[b]);
                if (prod != 0.0) second += kernel_value(k, part.kernel) * prod;
            }
        }
        const std::array<Pos, 4> cpos = {Pos{t, false}, Pos{t, true}, Pos{p, false}, Pos{p, true}};
        corr_pair += block_cumulant(mom, cpos, bits({0, 1})) * block_cumulant(mom, cpos, bits({2, 3})) +
                     block_cumulant(mom, cpos, bits({1, 2})) * block_cumulant(mom, cpos, bits({0, 3}));
        corr_four += block_cumulant(mom, cpos, bits({0, 1, 2, 3}));
    }
    const double corr_sq =
        k.degenerate * corr_pair * corr_pair + 2.0 * k.cross * corr_pair * corr_four + k.k4_sq * corr_four * corr_four;
    return std::max(0.0, second - corr_sq / mu);
}

} // namespace dp4d
