#pragma once
// Graph flows over the cylinder, mean curvature and Gaussian area diagnostics.

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "basis.hpp"
#include "errors.hpp"

namespace neckpinch {

enum class Frame { rescaled, physical };

struct SurfaceSlice {
    Field vfield;
    int d = 1;
    Frame frame = Frame::rescaled;
    double time = 0.0;
};

// corrected: signs from the fundamental forms. printed: the two sign typos kept.
enum class N1Form { corrected, printed };

// pointwise derivative data of the radius function
struct Local {
    int d = 1;
    double v = 0.0;
    double g[3] = {0, 0, 0};
    double h[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    double t = 0.0, tt = 0.0;
    double gt[3] = {0, 0, 0};
    double y[3] = {0, 0, 0};
};

struct Jets {
    bool theta = false;  // any theta dependence
    Field v;
    Field g[3];
    Field h[3][3];  // filled for i <= j, mirrored on access
    Field t, tt;
    Field gt[3];

    Local at(const Basis& b, std::size_t i) const {
        Local L;
        L.d = b.d;
        L.v = v.v[i];
        auto m = b.node_multi(i / b.mtheta);
        for (int k = 0; k < b.d; ++k) {
            L.y[k] = b.nodes_y[m[k]];
            L.g[k] = g[k].v[i];
            for (int l = 0; l < b.d; ++l) L.h[k][l] = k <= l ? h[k][l].v[i] : h[l][k].v[i];
        }
        if (theta) {
            L.t = t.v[i];
            L.tt = tt.v[i];
            for (int k = 0; k < b.d; ++k) L.gt[k] = gt[k].v[i];
        }
        return L;
    }
};

inline bool has_theta_dependence(const Coeffs& c, const Basis& b) {
    for (std::size_t in = 0; in < b.nymodes(); ++in)
        for (int m = 1; m < b.nf; ++m)
            if (c.c[in * b.nf + m] != 0.0) return true;
    return false;
}

inline Jets compute_jets(const Coeffs& c, const Basis& b) {
    Jets J;
    J.theta = has_theta_dependence(c, b);
    J.v = synthesize(c, b);
    Coeffs cg[3];
    for (int k = 0; k < b.d; ++k) {
        cg[k] = deriv_y(c, b, k);
        J.g[k] = synthesize(cg[k], b);
        for (int l = k; l < b.d; ++l) J.h[k][l] = synthesize(deriv_y(cg[k], b, l), b);
    }
    if (J.theta) {
        Coeffs ct = deriv_theta(c, b);
        J.t = synthesize(ct, b);
        J.tt = synthesize(deriv_theta(ct, b), b);
        for (int k = 0; k < b.d; ++k) J.gt[k] = synthesize(deriv_y(ct, b, k), b);
    }
    return J;
}

inline std::string node_location(const Basis& b, std::size_t i) {
    std::ostringstream os;
    os << "(";
    for (int k = 0; k < b.d; ++k) os << (k ? ", " : "") << "y" << k + 1 << "=" << b.coord(i, k);
    os << ", theta=" << b.theta(i) << ")";
    return os.str();
}

inline void require_positive(const Field& v, const Basis& b) {
    for (std::size_t i = 0; i < v.v.size(); ++i)
        if (!(v.v[i] > 0.0))
            throw NumericalFailure("nonpositive radius " + std::to_string(v.v[i]) + " at node " +
                                   node_location(b, i));
}

inline double W2_of(const Local& L) {
    double s = 1.0;
    for (int k = 0; k < L.d; ++k) s += L.g[k] * L.g[k];
    double r = L.t / L.v;
    return s + r * r;
}

// the five-term nonlinearity
inline double N1_local(const Local& L, N1Form form = N1Form::corrected) {
    const double W2 = W2_of(L);
    const double v = L.v;
    double t1 = 0.0;
    for (int k = 0; k < L.d; ++k) t1 += L.g[k] * L.g[k] * L.h[k][k];
    double t2 = (L.t / v) * (L.t / v) * L.tt / (v * v);
    double mix = 0.0;
    for (int l = 0; l < L.d; ++l) mix += L.g[l] * L.gt[l];
    double t3 = 2.0 * L.t * mix / (v * v);
    double t4 = L.t * L.t / (v * v * v);
    double t5 = 0.0;
    for (int i = 0; i < L.d; ++i)
        for (int j = 0; j < L.d; ++j)
            if (i != j) t5 += L.g[i] * L.g[j] * L.h[i][j];
    double s = form == N1Form::corrected ? -1.0 : 1.0;
    return (-t1 - t2 + s * t3 + s * t4 - t5) / W2;
}

// Delta v + v^{-2} v_tt - 1/v + N1: the curvature part shared by both frames
inline double curvature_speed(const Local& L, N1Form form = N1Form::corrected) {
    double lap = 0.0;
    for (int k = 0; k < L.d; ++k) lap += L.h[k][k];
    return lap + L.tt / (L.v * L.v) - 1.0 / L.v + N1_local(L, form);
}

inline double rescaled_local(const Local& L, N1Form form = N1Form::corrected) {
    double drift = 0.0;
    for (int k = 0; k < L.d; ++k) drift += L.y[k] * L.g[k];
    return curvature_speed(L, form) - 0.5 * drift + 0.5 * L.v;
}

// physical graph equation, seven terms as a quasilinear operator
inline double physical_local(const Local& L) {
    const double u = L.v;
    const double W2 = W2_of(L);
    double grad2 = 0.0;
    for (int k = 0; k < L.d; ++k) grad2 += L.g[k] * L.g[k];
    const double r2 = (L.t / u) * (L.t / u);
    double a = 0.0;
    for (int k = 0; k < L.d; ++k) a += (1.0 + grad2 - L.g[k] * L.g[k] + r2) * L.h[k][k];
    a /= W2;
    double b = (1.0 + grad2) / W2 * L.tt / (u * u);
    double mix = 0.0;
    for (int l = 0; l < L.d; ++l) mix += L.g[l] * L.gt[l];
    double c = -2.0 * L.t * mix / (u * u * W2);
    double e = -L.t * L.t / (u * u * u * W2);
    double f = 0.0;
    for (int i = 0; i < L.d; ++i)
        for (int j = 0; j < L.d; ++j)
            if (i != j) f += L.g[i] * L.g[j] * L.h[i][j];
    f = -f / W2;
    return a + b + c + e + f - 1.0 / u;
}

inline Field rhs_from_jets(const Jets& J, const Basis& b, N1Form form = N1Form::corrected) {
    Field out = b.zero_field();
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        Local L = J.at(b, i);
        double r = rescaled_local(L, form);
        if (!std::isfinite(r))
            throw NumericalFailure("non-finite right-hand side at node " + node_location(b, i));
        out.v[i] = r;
    }
    return out;
}

inline Field rhs_rescaled(const Field& v, const Basis& b, N1Form form = N1Form::corrected) {
    check_grid(v, b);
    require_positive(v, b);
    Jets J = compute_jets(analyze(v, b), b);
    J.v = v;
    return rhs_from_jets(J, b, form);
}

// u on a basis whose nodes are the physical x (scale = sqrt(T - t) typically)
inline Field rhs_physical(const Field& u, const Basis& b) {
    check_grid(u, b);
    require_positive(u, b);
    Jets J = compute_jets(analyze(u, b), b);
    J.v = u;
    Field out = b.zero_field();
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        double r = physical_local(J.at(b, i));
        if (!std::isfinite(r))
            throw NumericalFailure("non-finite right-hand side at node " + node_location(b, i));
        out.v[i] = r;
    }
    return out;
}

// mean curvature from g and h of (y, v cos th, v sin th), outward normal, H(cylinder)=1/v
inline double mean_curvature_local(const Local& L) {
    const int n = L.d + 1;
    Eigen::Matrix4d g = Eigen::Matrix4d::Identity(), h = Eigen::Matrix4d::Zero();
    const double v = L.v;
    for (int i = 0; i < L.d; ++i) {
        for (int j = 0; j < L.d; ++j) {
            g(i, j) = (i == j ? 1.0 : 0.0) + L.g[i] * L.g[j];
            h(i, j) = L.h[i][j];
        }
        g(i, L.d) = g(L.d, i) = L.g[i] * L.t;
        h(i, L.d) = h(L.d, i) = L.gt[i] - L.g[i] * L.t / v;
    }
    g(L.d, L.d) = L.t * L.t + v * v;
    h(L.d, L.d) = L.tt - 2.0 * L.t * L.t / v - v;
    const double W = std::sqrt(W2_of(L));
    Eigen::MatrixXd gs = g.topLeftCorner(n, n), hs = h.topLeftCorner(n, n) / W;
    return -(gs.ldlt().solve(hs)).trace();
}

inline double support_local(const Local& L) {
    double s = L.v;
    for (int k = 0; k < L.d; ++k) s -= L.y[k] * L.g[k];
    return s / std::sqrt(W2_of(L));
}

inline double phi_local(const Local& L) { return mean_curvature_local(L) - 0.5 * support_local(L); }

inline Field mean_curvature(const Field& v, const Basis& b) {
    check_grid(v, b);
    require_positive(v, b);
    Jets J = compute_jets(analyze(v, b), b);
    J.v = v;
    Field out = b.zero_field();
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = mean_curvature_local(J.at(b, i));
    return out;
}

inline Field shrinker_residual_phi(const Field& v, const Basis& b) {
    check_grid(v, b);
    require_positive(v, b);
    Jets J = compute_jets(analyze(v, b), b);
    J.v = v;
    Field out = b.zero_field();
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        out.v[i] = phi_local(J.at(b, i));
        if (!std::isfinite(out.v[i]))
            throw NumericalFailure("non-finite shrinker residual at node " + node_location(b, i));
    }
    return out;
}

struct HuiskenValues {
    double F = 0.0;
    double gradF_sq = 0.0;
};

// nodes with |y| > radius are dropped; their Gaussian weight is below round-off once radius >= 10
inline HuiskenValues huisken_from_jets(const Jets& J, const Basis& b,
                                       double radius = std::numeric_limits<double>::infinity()) {
    const double pref = std::pow(4.0 * std::numbers::pi, -0.5 * (b.d + 1));
    HuiskenValues r;
    for (std::size_t i = 0; i < J.v.v.size(); ++i) {
        if (b.radius2(i) > radius * radius) continue;
        Local L = J.at(b, i);
        double dmu = b.weight(i) * std::exp(-0.25 * L.v * L.v) * L.v * std::sqrt(W2_of(L));
        double p = phi_local(L);
        r.F += dmu;
        r.gradF_sq += dmu * p * p;
    }
    r.F *= pref;
    r.gradF_sq *= pref;
    return r;
}

inline HuiskenValues huisken(const Field& v, const Basis& b,
                             double radius = std::numeric_limits<double>::infinity()) {
    check_grid(v, b);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (b.radius2(i) <= radius * radius && !(v[i] > 0.0))
            throw NumericalFailure("nonpositive radius " + std::to_string(v[i]) + " at node " + node_location(b, i));
    Jets J = compute_jets(analyze(v, b), b);
    J.v = v;
    return huisken_from_jets(J, b, radius);
}

inline double huisken_F(const Field& v, const Basis& b) { return huisken(v, b).F; }
inline double gradF_sq(const Field& v, const Basis& b) { return huisken(v, b).gradF_sq; }

inline double shrinker_scale(double F_minus, double F_plus) {
    if (F_minus < F_plus) throw std::invalid_argument("shrinker_scale: F increased over the window");
    if (F_minus == F_plus) return std::numeric_limits<double>::infinity();
    double drop = F_minus - F_plus;
    if (drop >= 1.0) return 0.0;
    return std::sqrt(-2.0 * std::log(drop));
}

}  // namespace neckpinch
