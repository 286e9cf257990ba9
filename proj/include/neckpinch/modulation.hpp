#pragma once
// Neck profile, orthogonal decomposition into modulation parameters plus remainder,
// the source terms of the remainder equation and the controlling functionals.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "basis.hpp"
#include "cutoff.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "geometry.hpp"

namespace neckpinch {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

struct Params {
    int d = 1;
    double a = 0.5;
    Mat3 B = Mat3::Zero();
    Vec3 beta[3] = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    double alpha[2] = {0.0, 0.0};

    static int count(int d) { return 3 + 3 * d + d * (d + 1) / 2; }

    // a, B (k <= l), beta1, beta2, beta3, alpha1, alpha2
    Vec pack() const {
        Vec x(count(d));
        int i = 0;
        x(i++) = a;
        for (int k = 0; k < d; ++k)
            for (int l = k; l < d; ++l) x(i++) = B(k, l);
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < d; ++k) x(i++) = beta[j](k);
        x(i++) = alpha[0];
        x(i++) = alpha[1];
        return x;
    }
    static Params unpack(const Vec& x, int d) {
        if (x.size() != count(d)) throw std::invalid_argument("Params::unpack: wrong length");
        Params p;
        p.d = d;
        int i = 0;
        p.a = x(i++);
        for (int k = 0; k < d; ++k)
            for (int l = k; l < d; ++l) p.B(k, l) = p.B(l, k) = x(i++);
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < d; ++k) p.beta[j](k) = x(i++);
        p.alpha[0] = x(i++);
        p.alpha[1] = x(i++);
        return p;
    }
    static Params cylinder(int d) {
        Params p;
        p.d = d;
        return p;
    }
    double trB() const { return B.topLeftCorner(d, d).trace(); }
    // blowup-time direction, zero on the slow manifold
    double q() const { return a - 0.5 - 0.5 * trB(); }
};

inline double spectral_norm(const Mat3& B, int d) {
    if (d == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(B.topLeftCorner(d, d)));
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace detail {

inline double quad_form(const Mat3& B, const double* y, int d) {
    double s = 0.0;
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) s += B(k, l) * y[k] * y[l];
    return s;
}

inline void node_y(const Basis& b, std::size_t i, double* y) {
    auto m = b.node_multi(i / b.mtheta);
    for (int k = 0; k < 3; ++k) y[k] = k < b.d ? b.nodes_y[m[k]] : 0.0;
}

}  // namespace detail

// radicand 2 + y^T B y at every node
inline Field profile_radicand(const Mat3& B, const Basis& b) {
    Field r = b.zero_field();
    double y[3];
    for (std::size_t i = 0; i < r.size(); ++i) {
        detail::node_y(b, i, y);
        r[i] = 2.0 + detail::quad_form(B, y, b.d);
    }
    return r;
}

// V_{a,B}; nodes outside |y| <= active_radius with a bad radicand are set to NaN
inline Field profile_V(const Params& p, const Basis& b,
                       double active_radius = std::numeric_limits<double>::infinity()) {
    if (!(p.a > 0.0)) throw RegimeExit("profile: a = " + std::to_string(p.a) + " is not positive");
    Field r = profile_radicand(p.B, b);
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] > 0.0) {
            r[i] = std::sqrt(r[i] / (2.0 * p.a));
        } else if (b.radius2(i) <= active_radius * active_radius) {
            throw RegimeExit("profile: radicand 2 + y^T B y = " + std::to_string(r[i]) + " at node " +
                             node_location(b, i));
        } else {
            r[i] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return r;
}

// beta1.y + beta2.y cos + beta3.y sin + alpha1 cos + alpha2 sin
inline Field linear_part(const Params& p, const Basis& b) {
    Field f = b.zero_field();
    double y[3];
    for (std::size_t i = 0; i < f.size(); ++i) {
        detail::node_y(b, i, y);
        double th = b.theta(i), c = std::cos(th), s = std::sin(th);
        double l1 = 0, l2 = 0, l3 = 0;
        for (int k = 0; k < b.d; ++k) {
            l1 += p.beta[0](k) * y[k];
            l2 += p.beta[1](k) * y[k];
            l3 += p.beta[2](k) * y[k];
        }
        f[i] = l1 + l2 * c + l3 * s + p.alpha[0] * c + p.alpha[1] * s;
    }
    return f;
}

// field built from params and a remainder, the inverse of decompose
inline Field compose(const Params& p, const Field& w, const Basis& b) {
    return profile_V(p, b) + linear_part(p, b) + w;
}

// the orthonormal modes with nonpositive eigenvalue, in parameter order
struct PairingSet {
    std::vector<std::size_t> modes;  // flat Coeffs indices
    Mat values;                      // npts x count
};

inline PairingSet pairing_set(const Basis& b) {
    if (b.ny < 3 || b.ntheta < 1) throw std::invalid_argument("pairing_set: basis too small");
    PairingSet ps;
    auto add = [&](std::array<int, 3> n, int mode) { ps.modes.push_back(b.mode_index(n, mode)); };
    add({0, 0, 0}, 0);
    for (int k = 0; k < b.d; ++k)
        for (int l = k; l < b.d; ++l) {
            std::array<int, 3> n{0, 0, 0};
            n[k] += 1;
            n[l] += 1;
            add(n, 0);
        }
    for (int mode : {0, 1, 2})
        for (int k = 0; k < b.d; ++k) {
            std::array<int, 3> n{0, 0, 0};
            n[k] = 1;
            add(n, mode);
        }
    add({0, 0, 0}, 1);
    add({0, 0, 0}, 2);
    const std::size_t np = b.npts();
    ps.values = Mat::Zero(np, ps.modes.size());
    for (std::size_t j = 0; j < ps.modes.size(); ++j) {
        auto n = b.mode_multi(ps.modes[j] / b.nf);
        int mode = int(ps.modes[j] % b.nf);
        for (std::size_t i = 0; i < np; ++i) {
            auto m = b.node_multi(i / b.mtheta);
            double v = b.trig(i % b.mtheta, mode);
            for (int k = 0; k < b.d; ++k) v *= b.psi(m[k], n[k]);
            ps.values(i, j) = v;
        }
    }
    return ps;
}

struct DecomposeOptions {
    double R = 20.0;
    CutoffSpec cutoff{};
    double tol = 1e-12;
    int max_iter = 50;
};

struct Decomposition {
    Params params;
    Field w;
    Vec residuals;
    int iterations = 0;
};

// Newton solve of <chi_R (v - V - lin), phi_i> = 0 over the nonpositive modes
inline Decomposition decompose(const Field& v, const Basis& b, const Params& guess,
                               const DecomposeOptions& opt = {}) {
    check_grid(v, b);
    const int d = b.d;
    const int np = Params::count(d);
    PairingSet ps = pairing_set(b);
    const std::size_t n = b.npts();

    // chi_R times quadrature weight
    std::vector<double> cw(n);
    std::vector<char> active(n);
    for (std::size_t i = 0; i < n; ++i) {
        double c = chi(std::sqrt(b.radius2(i)) / opt.R, opt.cutoff);
        cw[i] = c * b.weight(i);
        active[i] = c > 0.0;
    }
    // linear-part derivative columns do not depend on the params
    Mat dlin = Mat::Zero(n, np);
    {
        double y[3];
        const int off = 1 + d * (d + 1) / 2;
        for (std::size_t i = 0; i < n; ++i) {
            detail::node_y(b, i, y);
            double th = b.theta(i), c = std::cos(th), s = std::sin(th);
            for (int k = 0; k < d; ++k) {
                dlin(i, off + k) = y[k];
                dlin(i, off + d + k) = y[k] * c;
                dlin(i, off + 2 * d + k) = y[k] * s;
            }
            dlin(i, off + 3 * d) = c;
            dlin(i, off + 3 * d + 1) = s;
        }
    }

    Params p = guess;
    p.d = d;
    Vec x = p.pack();
    Decomposition out;
    Field w = b.zero_field();
    Vec r(np);

    auto evaluate = [&](const Params& pp, Mat* J) {
        Field lin = linear_part(pp, b);
        double y[3];
        if (J) *J = Mat::Zero(np, np);
        Vec rr = Vec::Zero(np);
        for (std::size_t i = 0; i < n; ++i) {
            detail::node_y(b, i, y);
            double rad = 2.0 + detail::quad_form(pp.B, y, d);
            if (!(rad > 0.0) || !(pp.a > 0.0)) {
                if (active[i])
                    throw RegimeExit("decompose: profile radicand " + std::to_string(rad) + " at active node " +
                                     node_location(b, i));
                w[i] = 0.0;
                continue;
            }
            double V = std::sqrt(rad / (2.0 * pp.a));
            w[i] = v[i] - V - lin[i];
            if (cw[i] == 0.0) continue;
            Eigen::RowVectorXd phi = ps.values.row(i);
            rr += cw[i] * w[i] * phi.transpose();
            if (J) {
                // d(V + lin)/dx at this node
                Vec g = dlin.row(i).transpose();
                g(0) = -V / (2.0 * pp.a);
                int j = 1;
                for (int k = 0; k < d; ++k)
                    for (int l = k; l < d; ++l) g(j++) = (k == l ? 1.0 : 2.0) * y[k] * y[l] / (4.0 * pp.a * V);
                J->noalias() -= cw[i] * phi.transpose() * g.transpose();
            }
        }
        return rr;
    };

    Mat J;
    int it = 0;
    for (;; ++it) {
        r = evaluate(p, &J);
        if (!r.allFinite()) throw NumericalFailure("decompose: non-finite residual");
        if (r.cwiseAbs().maxCoeff() <= opt.tol) break;
        if (it >= opt.max_iter)
            throw RegimeExit("decompose: Newton did not converge in " + std::to_string(opt.max_iter) +
                             " iterations, residual " + std::to_string(r.cwiseAbs().maxCoeff()));
        Eigen::FullPivLU<Mat> lu(J);
        if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-300)
            throw NumericalFailure("decompose: singular Jacobian");
        Vec dx = lu.solve(-r);
        x += dx;
        p = Params::unpack(x, d);
        // stagnation at round-off level
        if (dx.cwiseAbs().maxCoeff() <= 1e-15 * std::max(1.0, x.cwiseAbs().maxCoeff())) {
            r = evaluate(p, nullptr);
            ++it;
            if (r.cwiseAbs().maxCoeff() <= std::max(opt.tol, 1e-14)) break;
        }
    }
    out.params = p;
    out.w = w;
    out.residuals = r;
    out.iterations = it;
    return out;
}

// ---- source terms of the remainder equation ----

// the four printed terms; Bdot is the tau derivative of B
inline Field F_source(double a, double adot, const Mat3& B, const Mat3& Bdot, const Basis& b) {
    if (!(a > 0.0)) throw RegimeExit("F_source: a not positive");
    const int d = b.d;
    Mat3 BB = B.transpose() * B;
    Mat3 M1 = Bdot + BB;
    const double tr = B.topLeftCorner(d, d).trace();
    const double s2a = std::sqrt(2.0 * a);
    Field f = b.zero_field();
    double y[3];
    for (std::size_t i = 0; i < f.size(); ++i) {
        detail::node_y(b, i, y);
        double Q = 2.0 + detail::quad_form(B, y, d);
        if (!(Q > 0.0)) throw RegimeExit("F_source: radicand " + std::to_string(Q) + " at " + node_location(b, i));
        double sQ = std::sqrt(Q);
        double t1 = -detail::quad_form(M1, y, d) / (2.0 * s2a * sQ);
        double t2 = (adot / a + 1.0 - 2.0 * a + tr) / (s2a * sQ);
        double t3 = detail::quad_form(BB, y, d) * (Q - 2.0) / (2.0 * s2a * Q * sQ);
        double t4 = adot / std::pow(2.0 * a, 1.5) * (Q - 2.0) / sQ;
        f[i] = t1 + t2 + t3 + t4;
    }
    return f;
}

inline Field G_source(const Params& p, const Params& pdot, const Basis& b) {
    const int d = b.d;
    Field g = b.zero_field();
    double y[3];
    for (std::size_t i = 0; i < g.size(); ++i) {
        detail::node_y(b, i, y);
        double Q = 2.0 + detail::quad_form(p.B, y, d);
        if (!(Q > 0.0)) throw RegimeExit("G_source: radicand " + std::to_string(Q) + " at " + node_location(b, i));
        double th = b.theta(i), c = std::cos(th), s = std::sin(th);
        double t1 = 0, t2 = 0, t3 = 0;
        for (int k = 0; k < d; ++k) {
            t1 += (2.0 * p.a / Q * p.beta[0](k) - pdot.beta[0](k)) * y[k];
            t2 -= pdot.beta[1](k) * y[k];
            t3 -= pdot.beta[2](k) * y[k];
        }
        g[i] = t1 + t2 * c + t3 * s + (0.5 * p.alpha[0] - pdot.alpha[0]) * c +
               (0.5 * p.alpha[1] - pdot.alpha[1]) * s;
    }
    return g;
}

enum class N2Form { expanded, factored };

// eta = v - V; expanded: -1/v + 1/V - eta/V^2 + (v^-2 - V^-2) eta_thth,
// factored: -V^-2 v^-1 eta^2 - v^-2 V^-2 (v + V) eta eta_thth
inline Field N2_field(const Field& v, const Params& p, const Basis& b, N2Form form = N2Form::factored) {
    check_grid(v, b);
    require_positive(v, b);
    Field V = profile_V(p, b);
    Field vtt = spectral_derivative(v, b, b.d, 2);
    Field out = b.zero_field();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double vi = v[i], Vi = V[i], e = vi - Vi, ett = vtt[i];
        if (form == N2Form::expanded)
            out[i] = -1.0 / vi + 1.0 / Vi - e / (Vi * Vi) + (1.0 / (vi * vi) - 1.0 / (Vi * Vi)) * ett;
        else
            out[i] = -e * e / (Vi * Vi * vi) - (vi + Vi) * e * ett / (vi * vi * Vi * Vi);
    }
    return out;
}

// 1/2 (y.grad chi) w + chi_tau w - (Lap chi) w - 2 grad chi . grad w at one point,
// with r = |y| and yg = y.grad w, rg = (y/r).grad w
inline double mu_local(double r, int d, double w, double rg, double R, double Rdot, const CutoffSpec& s) {
    if (r <= R || r >= (1.0 + s.eps) * R) return 0.0;
    double c1 = chi_R(r, R, s, 1), c2 = chi_R(r, R, s, 2);
    double lap = c2 + (d - 1) * c1 / r;
    return 0.5 * r * c1 * w + dchi_R_dtau(r, R, Rdot, s) * w - lap * w - 2.0 * c1 * rg;
}

inline Field mu_w(const Field& w, const Basis& b, double R, double Rdot, const CutoffSpec& s) {
    check_grid(w, b);
    Coeffs cw = analyze(w, b);
    Field gw[3];
    for (int k = 0; k < b.d; ++k) gw[k] = synthesize(deriv_y(cw, b, k), b);
    Field out = b.zero_field();
    for (std::size_t i = 0; i < out.size(); ++i) {
        double r = std::sqrt(b.radius2(i));
        if (r <= R || r >= (1.0 + s.eps) * R) continue;
        double rg = 0.0;
        for (int k = 0; k < b.d; ++k) rg += b.coord(i, k) * gw[k][i] / r;
        out[i] = mu_local(r, b.d, w[i], rg, R, Rdot, s);
    }
    return out;
}

// -L f = Lap f - 1/2 y.grad f + V^-2 f_thth + 1/2 f + V^-2 f, with derivative fields supplied
inline double minus_L_local(double f, const double* g, const double* hdiag, double ftt, const double* y, int d,
                            double V) {
    double s = 0.5 * f + (f + ftt) / (V * V);
    for (int k = 0; k < d; ++k) s += hdiag[k] - 0.5 * y[k] * g[k];
    return s;
}

struct RhsWParts {
    Field total, minus_L, F, G, N1, N2, mu;
};

// right side of the chi_R w equation
inline RhsWParts rhs_w(const Field& v, const Decomposition& dec, const Params& pdot, const Basis& b, double R,
                       double Rdot, const CutoffSpec& s) {
    check_grid(v, b);
    require_positive(v, b);
    const Params& p = dec.params;
    const Field& w = dec.w;
    CutoffFields c = cutoff_fields(b, R, s);
    LocalizedJets J = localized_jets(w, b, c);
    Field V = profile_V(p, b, (1.0 + s.eps) * R);
    RhsWParts out;
    out.minus_L = b.zero_field();
    out.N1 = b.zero_field();
    Jets jv = compute_jets(analyze(v, b), b);
    jv.v = v;
    double y[3], g[3], hd[3];
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (c.chi[i] == 0.0) continue;
        detail::node_y(b, i, y);
        for (int k = 0; k < b.d; ++k) {
            g[k] = J.g[k][i];
            hd[k] = J.h[k][k][i];
        }
        out.minus_L[i] = minus_L_local(J.W[i], g, hd, J.tt[i], y, b.d, V[i]);
        out.N1[i] = N1_local(jv.at(b, i));
    }
    Mat3 Bdot = pdot.B;
    out.F = F_source(p.a, pdot.a, p.B, Bdot, b);
    out.G = G_source(p, pdot, b);
    // N2 on the cutoff support only; V may be undefined far out
    out.N2 = b.zero_field();
    {
        Field vtt = spectral_derivative(v, b, b.d, 2);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (c.chi[i] == 0.0) continue;
            double vi = v[i], Vi = V[i], e = vi - Vi;
            out.N2[i] = -e * e / (Vi * Vi * vi) - (vi + Vi) * e * vtt[i] / (vi * vi * Vi * Vi);
        }
    }
    out.mu = mu_w(w, b, R, Rdot, s);
    out.total = out.minus_L + out.mu;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.total[i] += c.chi[i] * (out.F[i] + out.G[i] + out.N1[i] + out.N2[i]);
    return out;
}

// ---- controlling functionals ----

struct Controlling {
    double H1 = 0.0, H2 = 0.0, Psi = 0.0;
};

inline Controlling controlling_H1_Psi_H2(const Params& p, double adot, const NormTable& nt, double R) {
    const int d = p.d;
    const double nB = spectral_norm(p.B, d);
    const double b1 = p.beta[0].head(d).norm(), b2 = p.beta[1].head(d).norm(), b3 = p.beta[2].head(d).norm();
    const double al = std::abs(p.alpha[0]) + std::abs(p.alpha[1]);
    const double al2 = p.alpha[0] * p.alpha[0] + p.alpha[1] * p.alpha[1];
    const double Psi = nt.Psi;
    const double R4 = std::pow(R, 4);
    Controlling c;
    c.Psi = Psi;
    c.H1 = nB * nB * nB + nB * nB * std::abs(adot) + b1 * b1 * b1 + b2 * b2 + b3 * b3 + al2 +
           Psi * (nB + b1 + b2 + b3 + al) + R4 * Psi * Psi;
    c.H2 = (b2 + b3 + al) * (nB * nB + b1 * b1 + b2 * b2 + b3 * b3 + al2 + Psi) +
           R4 * Psi * (nt.wL2_theta2 + nt.wL2_ytheta);
    return c;
}

// ---- modulation residuals ----

namespace detail {

// weights of the derivative at x0 of the Lagrange interpolant through xs
inline std::vector<double> lagrange_deriv_weights(const std::vector<double>& xs, double x0) {
    const std::size_t n = xs.size();
    std::vector<double> w(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double den = 1.0;
        for (std::size_t m = 0; m < n; ++m)
            if (m != j) den *= xs[j] - xs[m];
        double num = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == j) continue;
            double prod = 1.0;
            for (std::size_t m = 0; m < n; ++m)
                if (m != j && m != k) prod *= x0 - xs[m];
            num += prod;
        }
        w[j] = num / den;
    }
    return w;
}

}  // namespace detail

// tau derivative of the params at the centre sample of an odd-length window
inline Params param_rates(const std::vector<double>& taus, const std::vector<Params>& ps, std::size_t centre) {
    if (taus.size() != ps.size() || taus.size() < 5) throw std::invalid_argument("param_rates: window shorter than 5");
    const std::size_t n = taus.size();
    std::size_t lo = centre >= 2 ? centre - 2 : 0;
    lo = std::min(lo, n - 5);
    std::vector<double> xs(taus.begin() + lo, taus.begin() + lo + 5);
    auto w = detail::lagrange_deriv_weights(xs, taus[centre]);
    const int d = ps[centre].d;
    Vec r = Vec::Zero(Params::count(d));
    for (int j = 0; j < 5; ++j) r += w[j] * ps[lo + j].pack();
    return Params::unpack(r, d);
}

struct ModulationResiduals {
    double tau = 0.0;
    double res_B = 0.0;       // |Bdot + B^T B|
    double res_a = 0.0;       // |(a^-1 d/dtau - 2) q|
    double res_beta1 = 0.0;   // |beta1dot - a beta1|
    double corr_beta1 = 0.0;  // |a B beta1|, the O(|B|) correction reported separately
    double res_beta2 = 0.0, res_beta3 = 0.0;
    double res_alpha[2] = {0.0, 0.0};
    // right sides with the fitted constant left out
    double bound_B = 0.0, bound_a = 0.0, bound_beta1 = 0.0, bound_theta = 0.0;
};

// H1/H2 at the centre sample are supplied by the caller; delta_tilde e^{-R^2/5} is added to each bound
inline ModulationResiduals modulation_residuals(const std::vector<double>& taus, const std::vector<Params>& ps,
                                                std::size_t centre, double H1, double H2, double R,
                                                double delta_tilde) {
    Params rate = param_rates(taus, ps, centre);
    const Params& p = ps[centre];
    const int d = p.d;
    ModulationResiduals m;
    m.tau = taus[centre];
    Mat3 Bt = p.B;
    m.res_B = spectral_norm(rate.B + Bt.transpose() * Bt, d);
    double qdot = rate.a - 0.5 * rate.trB();
    m.res_a = std::abs(qdot / p.a - 2.0 * p.q());
    m.res_beta1 = (rate.beta[0] - p.a * p.beta[0]).head(d).norm();
    m.corr_beta1 = (p.a * p.B * p.beta[0]).head(d).norm();
    m.res_beta2 = rate.beta[1].head(d).norm();
    m.res_beta3 = rate.beta[2].head(d).norm();
    for (int l = 0; l < 2; ++l) m.res_alpha[l] = std::abs(rate.alpha[l] - 0.5 * p.alpha[l]);
    const double tail = delta_tilde * std::exp(-R * R / 5.0);
    const double nB = spectral_norm(p.B, d);
    m.bound_B = H1 + tail;
    m.bound_a = nB * nB + H1 + tail;
    m.bound_beta1 = H1 + tail;
    m.bound_theta = H2 + tail;
    return m;
}

// ---- dichotomy ----

inline double ode_b_oracle(double b0, double tau0, double tau) {
    if (b0 == 0.0) return 0.0;
    double den = 1.0 / b0 + (tau - tau0);
    // the pole sits at tau0 - 1/b0, reached only when b0 < 0
    if (b0 < 0.0 && tau >= tau0 - 1.0 / b0)
        throw RegimeExit("ode_b_oracle: pole at tau = " + std::to_string(tau0 - 1.0 / b0));
    return 1.0 / den;
}

enum class CaseKind { case1, case2, exited, inconclusive };

inline const char* case_name(CaseKind k) {
    switch (k) {
        case CaseKind::case1: return "case1";
        case CaseKind::case2: return "case2";
        case CaseKind::exited: return "exited";
        default: return "inconclusive";
    }
}

struct Classification {
    CaseKind kind = CaseKind::inconclusive;
    int l = 0;                      // rank of the tau^{-1} projector in case 1
    Eigen::MatrixXd rotation;       // eigenvectors of B at the last sample, columns by decreasing eigenvalue
    std::vector<double> tau_b;      // tau b_k at the last sample
    double gamma = 0.0;             // fitted decay exponent of |B| on the late window
    std::string note;
};

struct ClassifyOptions {
    double late_fraction = 0.25;  // last quarter of the tau range
    double band_lo = 0.8, band_hi = 1.2, small = 0.2;
};

inline Classification classify_dichotomy(const std::vector<double>& taus, const std::vector<Mat3>& Bs, int d,
                                         bool failed = false, const ClassifyOptions& o = {}) {
    Classification c;
    if (failed) {
        c.kind = CaseKind::exited;
        c.note = "decomposition or regime guard failed";
        return c;
    }
    if (taus.size() < 2 || taus.size() != Bs.size()) {
        c.note = "trajectory too short";
        return c;
    }
    const double t0 = taus.front(), t1 = taus.back();
    const double tl = t0 + (1.0 - o.late_fraction) * (t1 - t0);
    std::vector<std::vector<double>> tb;  // per sample, sorted descending
    std::vector<double> lt, lnorm;
    for (std::size_t s = 0; s < taus.size(); ++s) {
        if (taus[s] < tl) continue;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(Bs[s].topLeftCorner(d, d)));
        std::vector<double> e(d);
        for (int k = 0; k < d; ++k) e[k] = taus[s] * es.eigenvalues()(d - 1 - k);
        tb.push_back(e);
        lt.push_back(std::log(taus[s]));
        lnorm.push_back(std::log(std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300)));
    }
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(Bs.back().topLeftCorner(d, d)));
        c.rotation = es.eigenvectors().rowwise().reverse();
    }
    c.tau_b = tb.back();
    if (lt.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < lt.size(); ++i) mx += lt[i], my += lnorm[i];
        mx /= lt.size();
        my /= lt.size();
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < lt.size(); ++i) sxy += (lt[i] - mx) * (lnorm[i] - my), sxx += (lt[i] - mx) * (lt[i] - mx);
        c.gamma = sxx > 0 ? -sxy / sxx : 0.0;
    }
    // a negative eigenvalue of non-negligible size whose magnitude grows: the blowup branch
    for (int k = 0; k < d; ++k) {
        double first = tb.front()[k] / std::exp(lt.front()), last = tb.back()[k] / std::exp(lt.back());
        if (last < 0.0 && tb.back()[k] < -o.small && std::abs(last) > std::abs(first)) {
            c.kind = CaseKind::exited;
            c.note = "negative eigenvalue of B growing";
            return c;
        }
    }
    int in_band = 0, small = 0;
    for (int k = 0; k < d; ++k) {
        bool band = true, sm = true;
        for (auto& e : tb) {
            band = band && e[k] >= o.band_lo && e[k] <= o.band_hi;
            sm = sm && std::abs(e[k]) <= o.small;
        }
        in_band += band;
        small += sm;
    }
    if (in_band + small == d && in_band > 0) {
        c.kind = CaseKind::case1;
        c.l = in_band;
        return c;
    }
    if (small == d) {
        double env = 0.0;
        for (std::size_t i = 0; i < lt.size(); ++i) env = std::max(env, std::exp(lnorm[i] + 2.0 * lt[i]));
        if (c.gamma >= 2.0 || env <= 1.0) {
            c.kind = CaseKind::case2;
            return c;
        }
        c.note = "tau b small but |B| not under the tau^-2 envelope";
        return c;
    }
    c.note = "eigenvalues between the bands";
    return c;
}

}  // namespace neckpinch
