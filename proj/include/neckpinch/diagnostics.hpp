#pragma once
// Gaussian-weighted norms of cut-off remainders.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "basis.hpp"
#include "cutoff.hpp"

namespace neckpinch {

inline double weighted_L2(const Field& f, const Basis& b) { return std::sqrt(std::max(0.0, inner(f, f, b))); }

// max over nodes with |y| <= R of <y>^{-k} |f|
inline double weighted_Linf(const Field& f, const Basis& b, int k, double R) {
    check_grid(f, b);
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        double r2 = b.radius2(i);
        if (r2 > R * R) continue;
        m = std::max(m, std::pow(1.0 + r2, -0.5 * k) * std::abs(f[i]));
    }
    return m;
}

// chi_R and its y-derivatives on the grid
struct CutoffFields {
    Field chi, lap;
    Field grad[3];
    Field hess[3][3];
};

inline CutoffFields cutoff_fields(const Basis& b, double R, const CutoffSpec& s) {
    CutoffFields c;
    c.chi = b.zero_field();
    c.lap = b.zero_field();
    for (int k = 0; k < b.d; ++k) {
        c.grad[k] = b.zero_field();
        for (int l = 0; l < b.d; ++l) c.hess[k][l] = b.zero_field();
    }
    for (std::size_t i = 0; i < c.chi.size(); ++i) {
        double r = std::sqrt(b.radius2(i));
        c.chi[i] = chi(r / R, s);
        if (r <= R || r >= (1.0 + s.eps) * R) continue;
        double d1 = chi(r / R, s, 1) / R, d2 = chi(r / R, s, 2) / (R * R);
        c.lap[i] = d2 + (b.d - 1) * d1 / r;
        for (int k = 0; k < b.d; ++k) {
            double yk = b.coord(i, k);
            c.grad[k][i] = d1 * yk / r;
            for (int l = 0; l < b.d; ++l) {
                double yl = b.coord(i, l);
                c.hess[k][l][i] = d2 * yk * yl / (r * r) + d1 * ((k == l ? 1.0 : 0.0) / r - yk * yl / (r * r * r));
            }
        }
    }
    return c;
}

// derivatives of chi_R w by the product rule with spectral derivatives of w
struct LocalizedJets {
    Field W;
    Field g[3];
    Field h[3][3];
    Field t, tt;
    Field gt[3];
};

inline LocalizedJets localized_jets(const Field& w, const Basis& b, const CutoffFields& c) {
    Coeffs cw = analyze(w, b);
    Field wt = synthesize(deriv_theta(cw, b), b);
    Field wtt = synthesize(deriv_theta(deriv_theta(cw, b), b), b);
    Field wg[3], wgt[3], wh[3][3];
    for (int k = 0; k < b.d; ++k) {
        Coeffs ck = deriv_y(cw, b, k);
        wg[k] = synthesize(ck, b);
        wgt[k] = synthesize(deriv_theta(ck, b), b);
        for (int l = k; l < b.d; ++l) wh[k][l] = synthesize(deriv_y(ck, b, l), b);
    }
    LocalizedJets J;
    const std::size_t n = w.size();
    J.W = b.zero_field();
    J.t = b.zero_field();
    J.tt = b.zero_field();
    for (int k = 0; k < b.d; ++k) {
        J.g[k] = b.zero_field();
        J.gt[k] = b.zero_field();
        for (int l = 0; l < b.d; ++l) J.h[k][l] = b.zero_field();
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double x = c.chi[i];
        J.W[i] = x * w[i];
        J.t[i] = x * wt[i];
        J.tt[i] = x * wtt[i];
        for (int k = 0; k < b.d; ++k) {
            J.g[k][i] = c.grad[k][i] * w[i] + x * wg[k][i];
            J.gt[k][i] = c.grad[k][i] * wt[i] + x * wgt[k][i];
            for (int l = k; l < b.d; ++l) {
                double v = c.hess[k][l][i] * w[i] + c.grad[k][i] * wg[l][i] + c.grad[l][i] * wg[k][i] +
                           x * wh[k][l][i];
                J.h[k][l][i] = v;
                J.h[l][k][i] = v;
            }
        }
    }
    return J;
}

struct NormTable {
    double wL2 = 0.0;         // ||e^{-|y|^2/8} chi_R w||
    double wL2_grad = 0.0;    // (sum_k ||d_k (chi_R w)||^2)^{1/2}
    double wL2_theta = 0.0;   // ||d_th (chi_R w)||
    double wL2_theta2 = 0.0;  // ||d_th^2 (chi_R w)||
    double wL2_ytheta = 0.0;  // (sum_k ||d_k d_th (chi_R w)||^2)^{1/2}
    double wL2_hess = 0.0;    // (sum_{k<=l} ||d_k d_l (chi_R w)||^2)^{1/2}
    double Psi = 0.0;         // sum over |k|+l <= 2 of the individual norms
    double Linf3 = 0.0;       // ||<y>^{-3} 1_R chi_R w||_inf
    double Linf2_grad = 0.0;  // ||<y>^{-2} 1_R grad(chi_R w)||_inf
    double Linf1_hess = 0.0;  // ||<y>^{-1} 1_R grad^2(chi_R w)||_inf
};

// the sup norms look at |y| <= min(R, linf_radius)
inline NormTable norm_table(const Field& w, const Basis& b, double R, const CutoffSpec& s,
                            double linf_radius = std::numeric_limits<double>::infinity()) {
    CutoffFields c = cutoff_fields(b, R, s);
    LocalizedJets J = localized_jets(w, b, c);
    NormTable t;
    t.wL2 = weighted_L2(J.W, b);
    t.Psi = t.wL2;
    double g2 = 0.0, yt2 = 0.0, h2 = 0.0;
    for (int k = 0; k < b.d; ++k) {
        double n1 = weighted_L2(J.g[k], b), n2 = weighted_L2(J.gt[k], b);
        g2 += n1 * n1;
        yt2 += n2 * n2;
        t.Psi += n1 + n2;
        for (int l = k; l < b.d; ++l) {
            double n3 = weighted_L2(J.h[k][l], b);
            h2 += n3 * n3;
            t.Psi += n3;
        }
    }
    t.wL2_grad = std::sqrt(g2);
    t.wL2_ytheta = std::sqrt(yt2);
    t.wL2_hess = std::sqrt(h2);
    t.wL2_theta = weighted_L2(J.t, b);
    t.wL2_theta2 = weighted_L2(J.tt, b);
    t.Psi += t.wL2_theta + t.wL2_theta2;

    const double RL = std::min(R, linf_radius);
    t.Linf3 = weighted_Linf(J.W, b, 3, RL);
    for (int k = 0; k < b.d; ++k) {
        t.Linf2_grad = std::max(t.Linf2_grad, weighted_Linf(J.g[k], b, 2, RL));
        for (int l = 0; l < b.d; ++l) t.Linf1_hess = std::max(t.Linf1_hess, weighted_Linf(J.h[k][l], b, 1, RL));
    }
    return t;
}

}  // namespace neckpinch
