#pragma once
// Rescaled-flow integrator (exponential RK on the coefficients), physical-frame oracle, energy monitors.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "basis.hpp"
#include "cutoff.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "modulation.hpp"

namespace neckpinch {

// amp * psi_{n_1}(y_1)...psi_{n_d}(y_d) * {1, cos m th, sin m th}; psi orthonormal for e^{-y^2/4}
struct Perturbation {
    std::array<int, 3> n{0, 0, 0};
    int mode = 0;
    double amp = 0.0;
};

struct Symmetry {
    bool even_y = false;      // every Hermite degree even
    bool theta_free = false;  // no theta modes at all
    bool no_sine = false;     // no sin(m theta) modes
};

struct RunConfig {
    int d = 1, ny = 32, ntheta = 1;
    double tau0 = 20.0, tau_end = 30.0, dt = 1e-3;
    CutoffSpec cutoff{};
    double delta = 0.25;
    Mat3 B0 = Mat3::Zero();
    double a0 = std::numeric_limits<double>::quiet_NaN();  // NaN: 1/2 + trB0/2
    std::vector<Perturbation> perturbations;
    double noise = 0.0;  // random amplitudes on the modes of degree <= 4, drawn from seed
    std::uint64_t seed = 12345;
    Symmetry symmetry;
    double cadence = 0.25;
    bool recenter = true;
    double recenter_interval = 2.0;
    bool adapt_dt = true;
    double doubling_tol = 1e-7;
    // the nonlinear remainder is faded out between these radii (nodal values are unreliable further out)
    double taper_inner = 10.0, taper_outer = 13.0;
};

inline void validate(const RunConfig& c) {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (c.d < 1 || c.d > 3) fail("d must be 1, 2 or 3");
    if (c.ny < 6 || c.ny > 120) fail("Ny must lie in [6, 120]");
    if (c.ntheta < 1) fail("Ntheta must be >= 1");
    if (!(c.tau0 >= std::numbers::e)) fail("tau0 must be >= e");
    if (!(c.tau_end > c.tau0)) fail("tau_end must exceed tau0");
    if (!(c.dt > 0.0)) fail("dt must be positive");
    if (!(c.cadence > 0.0)) fail("cadence must be positive");
    if (c.dt > c.cadence) fail("dt larger than the output cadence");
    if (!(c.delta > 0.0)) fail("delta must be positive");
    if (!(c.cutoff.eps > 0.0 && c.cutoff.eps < 1.0)) fail("eps must lie in (0, 1)");
    if (!(c.taper_inner > 0.0 && c.taper_outer > c.taper_inner)) fail("taper radii must satisfy 0 < inner < outer");
    if (c.recenter) {
        double k = c.recenter_interval / c.cadence;
        if (!(k >= 1.0) || std::abs(k - std::round(k)) > 1e-9) fail("recenter_interval must be a multiple of cadence");
    }
    if (!(c.noise >= 0.0) || c.noise > c.delta) fail("noise must lie in [0, delta]");
    if (spectral_norm(c.B0, c.d) > c.delta) fail("|B0| exceeds delta");
    for (const auto& p : c.perturbations) {
        for (int k = 0; k < 3; ++k)
            if (p.n[k] < 0 || p.n[k] >= c.ny || (k >= c.d && p.n[k] != 0)) fail("perturbation degree out of range");
        if (p.mode < 0 || p.mode > 2 * c.ntheta) fail("perturbation theta mode out of range");
        if (std::abs(p.amp) > c.delta) fail("perturbation amplitude exceeds delta");
    }
}

namespace detail {

inline double smooth_fade(double r, double r0, double r1) {
    if (r <= r0) return 1.0;
    if (r >= r1) return 0.0;
    double s = (r - r0) / (r1 - r0);
    return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

// phi_1..3 of a real argument
inline std::array<double, 3> phi123(double z) {
    if (std::abs(z) < 1.0) {
        std::array<double, 3> r{0, 0, 0};
        // phi_k(z) = sum_j z^j / (j + k)!
        double term = 1.0;  // z^j / j!
        double fk[3] = {1.0, 2.0, 6.0};
        for (int j = 0; j < 30; ++j) {
            for (int k = 0; k < 3; ++k) r[k] += term / fk[k];
            term *= z / (j + 1);
            for (int k = 0; k < 3; ++k) fk[k] *= (j + k + 2.0) / (j + 1.0);
        }
        return r;
    }
    double e = std::expm1(z);
    return {e / z, (e - z) / (z * z), (e - z - 0.5 * z * z) / (z * z * z)};
}

inline std::vector<char> symmetry_mask(const Basis& b, const Symmetry& s) {
    std::vector<char> keep(b.ncoef(), 1);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        auto n = b.mode_multi(i / b.nf);
        int m = int(i % b.nf);
        if (s.even_y)
            for (int k = 0; k < b.d; ++k)
                if (n[k] % 2) keep[i] = 0;
        if (s.theta_free && m != 0) keep[i] = 0;
        if (s.no_sine && fourier_kind(m) == 2) keep[i] = 0;
    }
    return keep;
}

inline double trig_unit(int mode, double th) {
    int m = fourier_freq(mode);
    switch (fourier_kind(mode)) {
        case 0: return 1.0;
        case 1: return std::cos(m * th);
        default: return std::sin(m * th);
    }
}

}  // namespace detail

inline double initial_a(const RunConfig& c) {
    return std::isnan(c.a0) ? 0.5 + 0.5 * c.B0.topLeftCorner(c.d, c.d).trace() : c.a0;
}

// explicit list of perturbations, noise expanded deterministically from the seed
inline std::vector<Perturbation> all_perturbations(const RunConfig& c) {
    std::vector<Perturbation> out = c.perturbations;
    if (c.noise > 0.0) {
        std::mt19937_64 rng(c.seed);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        int top[3] = {0, 0, 0};
        for (int k = 0; k < c.d; ++k) top[k] = 4;
        for (int n0 = 0; n0 <= top[0]; ++n0)
            for (int n1 = 0; n1 <= top[1]; ++n1)
                for (int n2 = 0; n2 <= top[2]; ++n2) {
                    if (n0 + n1 + n2 > 4) continue;
                    for (int m = 0; m <= std::min(2 * c.ntheta, 4); ++m) {
                        Perturbation p;
                        p.n = {n0, n1, n2};
                        p.mode = m;
                        p.amp = c.noise * U(rng);
                        out.push_back(p);
                    }
                }
    }
    return out;
}

// initial radius at the nodes of b, with y = x / b.scale
inline Field initial_v(const RunConfig& c, const Basis& b) {
    const double a = initial_a(c);
    if (!(a > 0.0)) throw RegimeExit("initial a is not positive");
    auto perts = all_perturbations(c);
    Basis unit = build_basis(b.d, 6, 1);  // only psi_at at scale 1 is used
    int maxdeg = 0;
    for (auto& p : perts) maxdeg = std::max({maxdeg, p.n[0], p.n[1], p.n[2]});
    Field v = b.zero_field();
    for (std::size_t i = 0; i < v.size(); ++i) {
        double y[3] = {0, 0, 0};
        for (int k = 0; k < b.d; ++k) y[k] = b.coord(i, k) / b.scale;
        double r = std::sqrt(b.radius2(i)) / b.scale;
        double rad = 2.0 + detail::quad_form(c.B0, y, b.d);
        double V;
        if (rad > 0.0) {
            V = std::sqrt(rad / (2.0 * a));
        } else if (r <= c.taper_outer) {
            throw RegimeExit("initial profile radicand " + std::to_string(rad) + " at |y| = " + std::to_string(r));
        } else {
            V = std::sqrt(2.0);
        }
        double th = b.theta(i);
        std::array<std::vector<double>, 3> ps;
        for (int k = 0; k < b.d; ++k) ps[k] = unit.psi_at(y[k], maxdeg + 1);
        for (auto& p : perts) {
            double f = p.amp * detail::trig_unit(p.mode, th);
            for (int k = 0; k < b.d; ++k) f *= ps[k][p.n[k]];
            V += f;
        }
        v[i] = V;
    }
    return v;
}

// ETDRK4 for eta = v - sqrt(2): d/dtau eta = -L0 eta + fade * (remainder)
struct Stepper {
    Basis b;
    Symmetry sym;
    std::vector<char> keep;
    std::vector<double> fade;
    double unit_const = 0.0;  // coefficient of the constant function 1
    double cyl = 0.0;         // rescaled right side at the cylinder, zero up to rounding
    long long evals = 0;

    double h_cached = -1.0;
    std::vector<double> E, E2, Q, f1, f2, f3;

    Stepper(const Basis& basis, const Symmetry& s, double r_in, double r_out) : b(basis), sym(s) {
        keep = detail::symmetry_mask(b, sym);
        fade.resize(b.npts());
        for (std::size_t i = 0; i < fade.size(); ++i)
            fade[i] = detail::smooth_fade(std::sqrt(b.radius2(i)) / b.scale, r_in, r_out);
        unit_const = analyze(constant_field(b, 1.0), b)[0];
        Local L;
        L.d = b.d;
        L.v = std::sqrt(2.0);
        cyl = rescaled_local(L);
    }

    Coeffs from_v(const Field& v) const {
        Field e = v;
        for (auto& x : e.v) x -= std::sqrt(2.0);
        Coeffs c = analyze(e, b);
        project(c);
        return c;
    }
    Field to_v(const Coeffs& eta) const {
        Field v = synthesize(eta, b);
        for (auto& x : v.v) x += std::sqrt(2.0);
        return v;
    }
    void project(Coeffs& c) const {
        for (std::size_t i = 0; i < c.size(); ++i)
            if (!keep[i]) c[i] = 0.0;
    }

    // everything in the v equation except -L0 eta, faded out at large |y|
    Coeffs remainder(const Coeffs& eta) {
        ++evals;
        Jets J = compute_jets(eta, b);
        Field out = b.zero_field();
        const double s2 = std::sqrt(2.0);
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (fade[i] == 0.0) continue;
            Local L = J.at(b, i);
            const double e = L.v;
            L.v = s2 + e;
            const bool inner = fade[i] == 1.0;
            // inside the fade band a bad nodal value is truncation garbage and is treated as far field
            if (!(L.v > 0.0)) {
                if (inner) throw RegimeExit("radius vanished at node " + node_location(b, i));
                continue;
            }
            double lin = e + 0.5 * L.tt;
            for (int k = 0; k < b.d; ++k) lin += L.h[k][k] - 0.5 * L.y[k] * L.g[k];
            double r = rescaled_local(L) - cyl - lin;
            if (!std::isfinite(r)) {
                if (inner) throw NumericalFailure("non-finite right-hand side at node " + node_location(b, i));
                continue;
            }
            out[i] = fade[i] * r;
        }
        return analyze(out, b);
    }

    // full right side in coefficients, for residual checks
    Coeffs rhs(const Coeffs& eta) {
        Coeffs r = remainder(eta);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b.eigvals[i] * eta[i];
        return r;
    }

    void prepare(double h) {
        if (h == h_cached) return;
        const std::size_t n = b.ncoef();
        E.resize(n), E2.resize(n), Q.resize(n), f1.resize(n), f2.resize(n), f3.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double c = -b.eigvals[i];
            E[i] = std::exp(c * h);
            E2[i] = std::exp(0.5 * c * h);
            Q[i] = 0.5 * h * detail::phi123(0.5 * c * h)[0];
            auto p = detail::phi123(c * h);
            f1[i] = h * (p[0] - 3.0 * p[1] + 4.0 * p[2]);
            f2[i] = h * (p[1] - 2.0 * p[2]);
            f3[i] = h * (-p[1] + 4.0 * p[2]);
        }
        h_cached = h;
    }

    void step(Coeffs& u, double h) {
        prepare(h);
        const std::size_t n = u.size();
        Coeffs Nu = remainder(u);
        Coeffs a = u;
        for (std::size_t i = 0; i < n; ++i) a[i] = E2[i] * u[i] + Q[i] * Nu[i];
        Coeffs Na = remainder(a);
        Coeffs bb = u;
        for (std::size_t i = 0; i < n; ++i) bb[i] = E2[i] * u[i] + Q[i] * Na[i];
        Coeffs Nb = remainder(bb);
        Coeffs cc = u;
        for (std::size_t i = 0; i < n; ++i) cc[i] = E2[i] * a[i] + Q[i] * (2.0 * Nb[i] - Nu[i]);
        Coeffs Nc = remainder(cc);
        for (std::size_t i = 0; i < n; ++i) {
            u[i] = E[i] * u[i] + f1[i] * Nu[i] + 2.0 * f2[i] * (Na[i] + Nb[i]) + f3[i] * Nc[i];
            if (!std::isfinite(u[i])) throw NumericalFailure("non-finite coefficient after step");
        }
        project(u);
    }

    // v(y) -> v(s y) / s, the rescaled picture of shifting the blowup time
    Coeffs dilate(const Coeffs& eta, double s) const {
        std::vector<double> xs(b.nq);
        for (int i = 0; i < b.nq; ++i) xs[i] = s * b.nodes_y[i];
        Mat D = b.proj * b.psi_matrix(xs);
        std::vector<int> dims(b.d, b.ny);
        dims.push_back(b.nf);
        std::vector<double> c = eta.c;
        for (int k = 0; k < b.d; ++k) c = detail::apply_axis(D, c, dims, k);
        Coeffs out = eta;
        for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i] / s;
        out[0] += std::sqrt(2.0) * (1.0 / s - 1.0) * unit_const;
        project(out);
        return out;
    }
};

// crude bound on the fastest explicit rate: theta diffusion defect plus gradient-weighted y diffusion
inline double explicit_rate_estimate(const Field& v, const Basis& b, double radius) {
    Jets J = compute_jets(analyze(v, b), b);
    J.v = v;
    double rate = 0.0;
    const double lam_y = 0.5 * (b.ny - 1) / (b.scale * b.scale);
    const double m2 = double(b.ntheta) * b.ntheta;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (b.radius2(i) > radius * radius * b.scale * b.scale) continue;
        Local L = J.at(b, i);
        double g2 = 0.0;
        for (int k = 0; k < b.d; ++k) g2 += L.g[k] * L.g[k];
        rate = std::max(rate, std::abs(1.0 / (L.v * L.v) - 0.5) * m2 + g2 / W2_of(L) * lam_y * b.d);
    }
    return rate;
}

// ---- trajectory ----

enum class RunStatus { ok, regime_exit, numerical_failure };

inline const char* status_name(RunStatus s) {
    switch (s) {
        case RunStatus::ok: return "ok";
        case RunStatus::regime_exit: return "regime_exit";
        default: return "numerical_failure";
    }
}

struct Record {
    double tau = 0.0;
    Params p;
    NormTable nt;
    double F = 0.0, gradF2 = 0.0;
    double F_frame = 0.0;  // F in the current blowup-time frame; F itself is continued across re-centering
    double gradF2_left = std::numeric_limits<double>::quiet_NaN();  // previous frame's value at a re-centering
    double Rs = std::numeric_limits<double>::quiet_NaN();
    double R = 0.0;        // cutoff scale R(tau)
    double sup_w = 0.0;    // sup |w| on the guarded ball
    double H1 = 0.0, H2 = 0.0;
    double res_B = std::numeric_limits<double>::quiet_NaN();
    double res_a = std::numeric_limits<double>::quiet_NaN();
    CaseKind case_so_far = CaseKind::inconclusive;
    int segment = 0;  // re-centering events split the series into segments
    double log_dilation = 0.0;
    double dt = 0.0;
};

struct TimeSeries {
    int d = 1;
    std::vector<Record> rows;
    Classification classification;
    RunStatus status = RunStatus::ok;
    std::string message;
    long long steps = 0;
    Coeffs final_eta;
};

// indices of a five-sample window around row i that stays inside its segment, empty if none
inline std::vector<std::size_t> segment_window(const std::vector<Record>& rows, std::size_t i) {
    std::size_t s0 = i, s1 = i;
    while (s0 > 0 && rows[s0 - 1].segment == rows[i].segment) --s0;
    while (s1 + 1 < rows.size() && rows[s1 + 1].segment == rows[i].segment) ++s1;
    if (s1 - s0 + 1 < 5) return {};
    std::size_t lo = i >= s0 + 2 ? i - 2 : s0;
    lo = std::min(lo, s1 - 4);
    return {lo, lo + 1, lo + 2, lo + 3, lo + 4};
}

namespace detail {

inline Record measure(const Field& v, const Basis& b, const RunConfig& c, double tau, const Params& guess) {
    Record r;
    r.tau = tau;
    r.R = R_of_tau(tau, c.tau0);
    DecomposeOptions o;
    o.R = r.R;
    o.cutoff = c.cutoff;
    Decomposition dec = decompose(v, b, guess, o);
    r.p = dec.params;
    r.nt = norm_table(dec.w, b, r.R, c.cutoff, c.taper_inner);
    const double guard = std::min((1.0 + c.cutoff.eps) * r.R, c.taper_inner);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (b.radius2(i) <= guard * guard) r.sup_w = std::max(r.sup_w, std::abs(dec.w[i]));
    HuiskenValues hv = huisken(v, b, c.taper_inner);
    r.F = hv.F;
    r.gradF2 = hv.gradF_sq;
    return r;
}

inline void regime_guard(const Record& r, const RunConfig& c) {
    const int d = c.d;
    auto bad = [&](const std::string& what, double x) {
        throw RegimeExit("regime guard at tau = " + std::to_string(r.tau) + ": " + what + " = " + std::to_string(x) +
                         " exceeds delta = " + std::to_string(c.delta));
    };
    if (std::abs(r.p.a - 0.5) > c.delta) bad("|a - 1/2|", std::abs(r.p.a - 0.5));
    if (spectral_norm(r.p.B, d) > c.delta) bad("|B|", spectral_norm(r.p.B, d));
    for (int j = 0; j < 3; ++j)
        if (r.p.beta[j].head(d).norm() > c.delta) bad("|beta" + std::to_string(j + 1) + "|", r.p.beta[j].head(d).norm());
    for (int l = 0; l < 2; ++l)
        if (std::abs(r.p.alpha[l]) > c.delta) bad("|alpha" + std::to_string(l + 1) + "|", std::abs(r.p.alpha[l]));
    if (r.sup_w > c.delta) bad("sup |w|", r.sup_w);
}

}  // namespace detail

// post-run columns: shrinker scale, modulation residuals, controlling functionals, running classification
inline void finalize(TimeSeries& ts, const RunConfig& c) {
    auto& rows = ts.rows;
    const int d = ts.d;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto find = [&](double t) -> const Record* {
            for (auto& r : rows)
                if (std::abs(r.tau - t) < 1e-9) return &r;
            return nullptr;
        };
        const Record *m = find(rows[i].tau - 1.0), *p = find(rows[i].tau + 1.0);
        if (m && p) rows[i].Rs = m->F > p->F ? shrinker_scale(m->F, p->F) : std::numeric_limits<double>::infinity();

        auto win = segment_window(rows, i);
        Params rate;
        rate.d = d;
        if (!win.empty()) {
            std::vector<double> ts_;
            std::vector<Params> ps;
            std::size_t centre = 0;
            for (std::size_t k = 0; k < win.size(); ++k) {
                ts_.push_back(rows[win[k]].tau);
                ps.push_back(rows[win[k]].p);
                if (win[k] == i) centre = k;
            }
            rate = param_rates(ts_, ps, centre);
            Controlling h = controlling_H1_Psi_H2(rows[i].p, rate.a, rows[i].nt, rows[i].R);
            rows[i].H1 = h.H1;
            rows[i].H2 = h.H2;
            ModulationResiduals mr = modulation_residuals(ts_, ps, centre, h.H1, h.H2, rows[i].R, c.delta);
            rows[i].res_B = mr.res_B;
            rows[i].res_a = mr.res_a;
        } else {
            Controlling h = controlling_H1_Psi_H2(rows[i].p, 0.0, rows[i].nt, rows[i].R);
            rows[i].H1 = h.H1;
            rows[i].H2 = h.H2;
        }
    }
    std::vector<double> taus;
    std::vector<Mat3> Bs;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        taus.push_back(rows[i].tau);
        Bs.push_back(rows[i].p.B);
        bool failed_here = ts.status != RunStatus::ok && i + 1 == rows.size();
        rows[i].case_so_far = classify_dichotomy(taus, Bs, d, failed_here).kind;
    }
    ts.classification = classify_dichotomy(taus, Bs, d, ts.status != RunStatus::ok);
    if (ts.status != RunStatus::ok) ts.classification.note = ts.message;
}

inline TimeSeries evolve(const RunConfig& c) {
    validate(c);
    TimeSeries ts;
    ts.d = c.d;
    Basis b = build_basis(c.d, c.ny, c.ntheta);
    Stepper st(b, c.symmetry, c.taper_inner, c.taper_outer);
    Coeffs eta;
    double dt = c.dt;
    try {
        Field v0 = initial_v(c, b);
        double rate = explicit_rate_estimate(v0, b, c.taper_inner);
        if (dt > 0.5 / std::max(rate, 1e-300))
            throw ConfigError("dt = " + std::to_string(dt) + " above the explicit bound " + std::to_string(0.5 / rate));
        eta = st.from_v(v0);
    } catch (const RegimeExit& e) {
        ts.status = RunStatus::regime_exit;
        ts.message = e.what();
        ts.classification.kind = CaseKind::exited;
        ts.classification.note = e.what();
        return ts;
    }

    const long long nrec = std::llround(std::floor((c.tau_end - c.tau0) / c.cadence + 1e-9));
    const long long rc_every = c.recenter ? std::llround(c.recenter_interval / c.cadence) : 0;
    auto substeps = [&](double dtv) {
        double k = c.cadence / dtv;
        long long n = std::llround(k);
        if (std::abs(k - double(n)) > 1e-9 * k) n = (long long)std::ceil(k);
        return std::max(1LL, n);
    };

    Params guess = Params::cylinder(c.d);
    guess.a = initial_a(c);
    guess.B = c.B0;
    int segment = 0;
    double log_dil = 0.0;
    bool have_q = false;
    double q_after = 0.0, tau_after = 0.0;
    double F_offset = 0.0, F_pre = std::numeric_limits<double>::quiet_NaN();
    double G_pre = std::numeric_limits<double>::quiet_NaN();

    try {
        for (long long k = 0; k <= nrec; ++k) {
            const double tau = c.tau0 + double(k) * c.cadence;
            if (k > 0) {
                if (c.adapt_dt) {
                    // step doubling on the current state; halve while the two answers disagree
                    for (int tries = 0; tries < 6; ++tries) {
                        double h = c.cadence / double(substeps(dt));
                        Coeffs one = eta, two = eta;
                        st.step(one, h);
                        st.step(two, 0.5 * h);
                        st.step(two, 0.5 * h);
                        double err = 0.0;
                        for (std::size_t i = 0; i < one.size(); ++i) err = std::max(err, std::abs(one[i] - two[i]));
                        if (err <= c.doubling_tol) break;
                        dt *= 0.5;
                    }
                }
                const long long n = substeps(dt);
                const double h = c.cadence / double(n);
                for (long long s = 0; s < n; ++s) st.step(eta, h);
                ts.steps += n;
            }
            Field v = st.to_v(eta);
            if (rc_every > 0 && k % rc_every == 0) {
                Record pre = detail::measure(v, b, c, tau, guess);
                F_pre = pre.F;
                G_pre = pre.gradF2;
                const double a = pre.p.a, tr = pre.p.trB();
                double target = 0.0;
                if (have_q) {
                    // q grows like e^{2a tau} away from its slaved value; solve for that value
                    double g = std::exp(2.0 * a * (tau - tau_after));
                    target = (pre.p.q() - g * q_after) / (1.0 - g);
                }
                double s2 = (0.5 + target) / (a - 0.5 * tr);
                if (!(s2 > 0.25 && s2 < 4.0))
                    throw RegimeExit("re-centering needs dilation s^2 = " + std::to_string(s2));
                double s = std::sqrt(s2);
                if (s != 1.0) {
                    eta = st.dilate(eta, s);
                    v = st.to_v(eta);
                    log_dil += std::log(s);
                }
                guess = pre.p;
                guess.a = a * s2;
                guess.B = pre.p.B * s2;
                ++segment;
            }
            Record r = detail::measure(v, b, c, tau, guess);
            r.F_frame = r.F;
            if (!std::isnan(F_pre)) F_offset += r.F - F_pre;
            F_pre = std::numeric_limits<double>::quiet_NaN();
            r.F -= F_offset;
            r.gradF2_left = G_pre;
            G_pre = std::numeric_limits<double>::quiet_NaN();
            r.segment = segment;
            r.log_dilation = log_dil;
            r.dt = dt;
            guess = r.p;
            if (rc_every > 0 && k % rc_every == 0) {
                have_q = true;
                q_after = r.p.q();
                tau_after = tau;
            }
            ts.rows.push_back(r);
            detail::regime_guard(r, c);
        }
    } catch (const RegimeExit& e) {
        ts.status = RunStatus::regime_exit;
        ts.message = e.what();
    } catch (const NumericalFailure& e) {
        ts.status = RunStatus::numerical_failure;
        ts.message = e.what();
    }
    ts.final_eta = eta;
    finalize(ts, c);
    return ts;
}

// ---- physical frame ----

// u_t = Delta u + (rest of the graph equation), the rest faded out beyond |x| = r_in * scale.
// Outside, -1/u is replaced by -1/ubar with ubar the weighted mean radius.
struct PhysicalStepper {
    Basis b;
    std::vector<double> fade;

    PhysicalStepper(const Basis& basis, double r_in, double r_out) : b(basis) {
        fade.resize(b.npts());
        for (std::size_t i = 0; i < fade.size(); ++i)
            fade[i] = detail::smooth_fade(std::sqrt(b.radius2(i)) / b.scale, r_in, r_out);
    }

    double mean_radius(const Coeffs& u) const { return b.poly_coefficient(u, {0, 0, 0}, 0); }

    Coeffs rhs(const Coeffs& u) const {
        const double ubar = mean_radius(u);
        if (!(ubar > 0.0)) throw RegimeExit("physical mean radius is not positive");
        Jets J = compute_jets(u, b);
        Field out = b.zero_field();
        for (std::size_t i = 0; i < out.size(); ++i) {
            double far = -1.0 / ubar;
            if (fade[i] == 0.0) {
                out[i] = far;
                continue;
            }
            Local L = J.at(b, i);
            const bool inner = fade[i] == 1.0;
            out[i] = far;
            if (!(L.v > 0.0)) {
                if (inner) throw RegimeExit("physical radius vanished at node " + node_location(b, i));
                continue;
            }
            double lap = 0.0;
            for (int k = 0; k < b.d; ++k) lap += L.h[k][k];
            double r = physical_local(L) - lap;
            if (!std::isfinite(r)) {
                if (inner) throw NumericalFailure("non-finite physical right side at node " + node_location(b, i));
                continue;
            }
            out[i] = fade[i] * r + (1.0 - fade[i]) * far;
        }
        Coeffs res = analyze(out, b);
        for (int k = 0; k < b.d; ++k) res += deriv_y(deriv_y(u, b, k), b, k);
        return res;
    }

    void step(Coeffs& u, double h) const {
        Coeffs k1 = rhs(u);
        Coeffs k2 = rhs(u + (0.5 * h) * k1);
        Coeffs k3 = rhs(u + (0.5 * h) * k2);
        Coeffs k4 = rhs(u + h * k3);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
};

// constant radius u0 on the physical grid, integrated to half the collapse time; sup error against sqrt(u0^2 - 2t)
inline double shrinking_cylinder_error(double u0, int steps = 1000, int ny = 16) {
    if (!(u0 > 0.0) || steps < 1) throw std::invalid_argument("shrinking_cylinder_error: bad arguments");
    const double T = 0.5 * u0 * u0;
    Basis b = build_basis(1, ny, 1, std::sqrt(T));
    PhysicalStepper ps(b, 10.0, 13.0);
    Coeffs u = analyze(constant_field(b, u0), b);
    const double t1 = 0.5 * T, h = t1 / steps;
    for (int s = 0; s < steps; ++s) ps.step(u, h);
    Field f = synthesize(u, b);
    const double exact = std::sqrt(u0 * u0 - 2.0 * t1);
    double err = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (b.radius2(i) <= 100.0 * b.scale * b.scale) err = std::max(err, std::abs(f[i] - exact));
    return err;
}

struct FrameReport {
    double discrepancy = 0.0;
    double compare_radius = 8.0;
    std::size_t nodes = 0;
    double tau0 = 0.0, tau1 = 0.0;
    int physical_ny = 0, physical_steps = 0;
};

// Rescaled run (no re-centering) against the physical flow with T - t0 = e^{-tau0}, compared on |y| <= radius.
inline FrameReport evolve_physical_and_compare(const RunConfig& c, double dtau = 1.0, int physical_ny = 0,
                                               int physical_steps = 4000, double radius = 8.0) {
    validate(c);
    if (!(dtau > 0.0 && dtau <= 1.0)) throw std::invalid_argument("frame comparison window must lie in (0, 1]");
    if (physical_ny == 0) physical_ny = c.ny;
    if (radius * std::exp(-0.5 * dtau) > c.taper_inner || radius > c.taper_inner)
        throw std::invalid_argument("comparison ball maps outside the resolved physical region");
    FrameReport rep;
    rep.compare_radius = radius;
    rep.tau0 = c.tau0;
    rep.tau1 = c.tau0 + dtau;
    rep.physical_ny = physical_ny;
    rep.physical_steps = physical_steps;

    Basis b = build_basis(c.d, c.ny, c.ntheta);
    Stepper st(b, c.symmetry, c.taper_inner, c.taper_outer);
    Coeffs eta = st.from_v(initial_v(c, b));
    const long long n = std::max(1LL, (long long)std::ceil(dtau / c.dt - 1e-9));
    for (long long s = 0; s < n; ++s) st.step(eta, dtau / double(n));
    Field v = st.to_v(eta);

    const double s0 = std::exp(-0.5 * c.tau0), s1 = s0 * std::exp(-0.5 * dtau);
    Basis pb = build_basis(c.d, physical_ny, c.ntheta, s0);
    PhysicalStepper ps(pb, c.taper_inner, c.taper_outer);
    Field u0 = initial_v(c, pb);
    for (auto& x : u0.v) x *= s0;
    Coeffs u = analyze(u0, pb);
    const double dt_phys = (s0 * s0 - s1 * s1) / physical_steps;
    for (int s = 0; s < physical_steps; ++s) ps.step(u, dt_phys);

    for (std::size_t i = 0; i < v.size(); ++i) {
        if (b.radius2(i) > radius * radius) continue;
        std::array<double, 3> x{0, 0, 0};
        for (int k = 0; k < b.d; ++k) x[k] = s1 * b.coord(i, k);
        double up = evaluate(u, pb, x, b.theta(i)) / s1;
        rep.discrepancy = std::max(rep.discrepancy, std::abs(up - v[i]));
        ++rep.nodes;
    }
    return rep;
}

// ---- energy inequalities ----

struct InequalityFit {
    std::string name;
    double c_fit = 0.0;  // smallest c making lhs <= c * rhs at every sample
    double max_lhs = 0.0, max_rhs = 0.0;
    int samples = 0;
};

struct LyapunovReport {
    std::vector<InequalityFit> fits;
    double c_max = 100.0;
    bool flagged = false;  // some fitted constant above c_max
};

// [d/dtau + 1/4] of the squared localized norms against their bracketed right sides, on rows [first, last]
inline LyapunovReport lyapunov_monitor(const std::vector<Record>& rows, std::size_t first, std::size_t last,
                                       double delta_tilde, double c_max = 100.0) {
    if (last >= rows.size() || last < first || last - first + 1 < 5)
        throw std::invalid_argument("lyapunov_monitor: window shorter than five samples");
    LyapunovReport rep;
    rep.c_max = c_max;
    const char* names[4] = {"wL2", "grad", "theta", "hess"};
    auto energy = [](const Record& r, int j) {
        const NormTable& t = r.nt;
        switch (j) {
            case 0: return t.wL2 * t.wL2;
            case 1: return t.wL2_grad * t.wL2_grad;
            case 2: return t.wL2_theta2 * t.wL2_theta2 + t.wL2_ytheta * t.wL2_ytheta;
            default: return t.wL2_hess * t.wL2_hess;
        }
    };
    auto bracket = [&](const Record& r, int j) {
        const Params& p = r.p;
        const int d = p.d;
        double all = spectral_norm(p.B, d), th = 0.0;
        for (int k = 0; k < 3; ++k) all += p.beta[k].head(d).norm();
        for (int k = 1; k < 3; ++k) th += p.beta[k].head(d).norm();
        for (int l = 0; l < 2; ++l) all += std::abs(p.alpha[l]), th += std::abs(p.alpha[l]);
        const double tail = delta_tilde * std::exp(-r.R * r.R / 5.0);
        const NormTable& t = r.nt;
        switch (j) {
            case 0:
            case 1: return std::pow(all, 4) + delta_tilde * t.wL2_theta2 * t.wL2_theta2 + tail;
            case 2: return th * th * all * all + tail;
            default:
                return std::pow(all, 4) + delta_tilde * (t.wL2_grad * t.wL2_grad + t.wL2_theta * t.wL2_theta) + tail;
        }
    };
    std::vector<Record> sub(rows.begin() + first, rows.begin() + last + 1);
    for (int j = 0; j < 4; ++j) {
        InequalityFit f;
        f.name = names[j];
        for (std::size_t i = 0; i < sub.size(); ++i) {
            auto win = segment_window(sub, i);
            if (win.empty()) continue;
            // energies at round-off relative to the plain L2 energy carry no information
            double top = 0.0;
            for (auto k : win) top = std::max(top, energy(sub[k], j));
            if (top <= 1e-20 * energy(sub[i], 0)) {
                ++f.samples;
                continue;
            }
            std::vector<double> xs;
            for (auto k : win) xs.push_back(sub[k].tau);
            auto w = detail::lagrange_deriv_weights(xs, sub[i].tau);
            double dE = 0.0;
            for (std::size_t k = 0; k < win.size(); ++k) dE += w[k] * energy(sub[win[k]], j);
            double lhs = dE + 0.25 * energy(sub[i], j);
            double rhs = bracket(sub[i], j);
            f.max_lhs = std::max(f.max_lhs, lhs);
            f.max_rhs = std::max(f.max_rhs, rhs);
            ++f.samples;
            if (lhs <= 0.0) continue;
            f.c_fit = std::max(f.c_fit, rhs > 0.0 ? lhs / rhs : std::numeric_limits<double>::infinity());
        }
        rep.flagged = rep.flagged || f.c_fit > c_max;
        rep.fits.push_back(f);
    }
    return rep;
}

// ---- Huisken checks along a series ----

struct EnergyWindow {
    double tau = 0.0;
    double drop = 0.0;      // F(tau - 1) - F(tau + 1)
    double integral = 0.0;  // Simpson integral of gradF_sq over the window
    double rel_err = 0.0;
};

namespace detail {

// composite Newton-Cotes on n uniform intervals
inline double uniform_rule(const std::vector<double>& f, double h) {
    const std::size_t n = f.size() - 1;
    auto simpson = [&](std::size_t a, std::size_t m) {
        double s = f[a] + f[a + m];
        for (std::size_t k = 1; k < m; ++k) s += (k % 2 ? 4.0 : 2.0) * f[a + k];
        return s * h / 3.0;
    };
    if (n == 0) return 0.0;
    if (n == 1) return 0.5 * h * (f[0] + f[1]);
    if (n % 2 == 0) return simpson(0, n);
    double tail = 3.0 * h / 8.0 * (f[n - 3] + 3.0 * f[n - 2] + 3.0 * f[n - 1] + f[n]);
    return (n > 3 ? simpson(0, n - 3) : 0.0) + tail;
}

}  // namespace detail

// Windows [tau - 1, tau + 1]. gradF_sq jumps at re-centering, so the integral is taken piecewise per segment,
// and the centres sit on segment starts when there are several segments.
inline std::vector<EnergyWindow> energy_windows(const std::vector<Record>& rows, int count) {
    std::vector<EnergyWindow> out;
    if (rows.size() < 3 || count < 1) return out;
    const double h = rows[1].tau - rows[0].tau;
    const long long half = std::llround(1.0 / h);
    if (std::abs(double(half) * h - 1.0) > 1e-9) throw std::invalid_argument("energy_windows: cadence must divide 1");
    const long long lo = half, hi = (long long)rows.size() - 1 - half;
    if (hi < lo) return out;
    std::vector<long long> cand;
    for (long long c = lo; c <= hi; ++c)
        if (rows[c].segment != rows[c - 1].segment) cand.push_back(c);
    if (cand.size() < std::size_t(count)) {
        cand.clear();
        for (long long c = lo; c <= hi; ++c) cand.push_back(c);
    }
    count = std::min<int>(count, int(cand.size()));
    for (int k = 0; k < count; ++k) {
        std::size_t pick = count == 1 ? cand.size() / 2 : (cand.size() - 1) * std::size_t(k) / std::size_t(count - 1);
        long long c = cand[pick];
        EnergyWindow w;
        w.tau = rows[c].tau;
        w.drop = rows[c - half].F - rows[c + half].F;
        std::vector<double> piece{rows[c - half].gradF2};
        for (long long j = c - half + 1; j <= c + half; ++j) {
            if (rows[j].segment != rows[j - 1].segment) {
                piece.push_back(std::isnan(rows[j].gradF2_left) ? rows[j].gradF2 : rows[j].gradF2_left);
                w.integral += detail::uniform_rule(piece, h);
                piece.clear();
            }
            piece.push_back(rows[j].gradF2);
        }
        w.integral += detail::uniform_rule(piece, h);
        w.rel_err = std::abs(w.drop - w.integral) / std::max(std::abs(w.integral), 1e-300);
        out.push_back(w);
    }
    return out;
}

}  // namespace neckpinch
