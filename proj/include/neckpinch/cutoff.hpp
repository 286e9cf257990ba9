#pragma once
// Radial cutoffs built from regularized incomplete beta kernels, and the localization scales.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace neckpinch {

struct CutoffSpec {
    double eps = 0.1;
    int p = 20;  // contact order at the outer edge
    int q = 6;   // smoothness at the inner edge
};

namespace detail {

inline double binom(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}
inline double falling(int a, int i) {
    if (i > a) return 0.0;
    double r = 1.0;
    for (int j = 0; j < i; ++j) r *= double(a - j);
    return r;
}
inline double beta_fn(int p, int q) {
    return std::exp(std::lgamma(double(p)) + std::lgamma(double(q)) - std::lgamma(double(p + q)));
}

// regularized incomplete beta for integer exponents, t in [0,1]
inline double ibeta_int(int p, int q, double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const int n = p + q - 1;
    double s = 0.0;
    for (int j = p; j <= n; ++j) s += binom(n, j) * std::pow(t, j) * std::pow(1.0 - t, n - j);
    return s;
}

// d^j/dt^j of t^a (1-t)^b
inline double dpow(int a, int b, int j, double t) {
    double s = 0.0;
    for (int i = 0; i <= j; ++i) {
        double fa = falling(a, i), fb = falling(b, j - i);
        if (fa == 0.0 || fb == 0.0) continue;
        double term = binom(j, i) * fa * std::pow(t, a - i) * fb * std::pow(1.0 - t, b - (j - i));
        s += ((j - i) % 2 ? -term : term);
    }
    return s;
}

// k-th derivative in t of I_t(p,q)
inline double ibeta_deriv(int p, int q, int k, double t) {
    if (k == 0) return ibeta_int(p, q, t);
    if (t <= 0.0 || t >= 1.0) return 0.0;
    return dpow(p - 1, q - 1, k - 1, t) / beta_fn(p, q);
}

inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    x.resize(n);
    w.resize(n);
    for (int i = 0; i < n; ++i) {
        x[i] = es.eigenvalues()(i);
        double v0 = es.eigenvectors()(0, i);
        w[i] = 2.0 * v0 * v0;
    }
}

}  // namespace detail

// k-th radial derivative of chi at r, k = 0..5
inline double chi(double r, const CutoffSpec& s, int k = 0) {
    if (k < 0 || k > s.q - 1) throw std::invalid_argument("chi: derivative order out of range");
    double t = (1.0 + s.eps - r) / s.eps;
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return k == 0 ? 1.0 : 0.0;
    double d = detail::ibeta_deriv(s.p, s.q, k, t);
    return (k % 2 ? -d : d) / std::pow(s.eps, k);
}

inline double norm_d(const std::array<double, 3>& y, int d) {
    double r2 = 0.0;
    for (int k = 0; k < d; ++k) r2 += y[k] * y[k];
    return std::sqrt(r2);
}

inline double chi_R(double r, double R, const CutoffSpec& s, int k = 0) {
    return chi(r / R, s, k) / std::pow(R, k);
}
inline double chi_R(const std::array<double, 3>& y, int d, double R, const CutoffSpec& s) {
    return chi(norm_d(y, d) / R, s);
}

// d/dtau chi(|y|/R(tau))
inline double dchi_R_dtau(double r, double R, double Rdot, const CutoffSpec& s) {
    return -(Rdot / (R * R)) * r * chi(r / R, s, 1);
}

struct TildeBand {
    double r_in = 0.0, r_out = 0.0;
};

inline TildeBand tilde_band(double R, const CutoffSpec& s) {
    const double q = std::pow(R, -0.25);
    if (2.0 * q >= 1.0 + s.eps) throw std::invalid_argument("tilde_chi_R: R too small, band inverted");
    return {R * (1.0 + s.eps - 2.0 * q), R * (1.0 + s.eps - q)};
}

inline double tilde_chi_R(double r, double R, const CutoffSpec& s, int k = 0) {
    TildeBand bd = tilde_band(R, s);
    const double width = bd.r_out - bd.r_in;
    double t = (bd.r_out - r) / width;
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return k == 0 ? 1.0 : 0.0;
    double d = detail::ibeta_deriv(6, 6, k, t);
    return (k % 2 ? -d : d) / std::pow(width, k);
}

// |tilde_chi_R y.grad chi_R / chi_R| as a function of |y|
inline double cutoff_potential(double r, double R, const CutoffSpec& s) {
    double tc = tilde_chi_R(r, R, s);
    if (tc == 0.0) return 0.0;
    double c = chi(r / R, s);
    return tc * std::abs(r * chi(r / R, s, 1) / R) / c;
}

inline double kappa(const CutoffSpec& s, int samples = 4000) {
    double total = 0.0;
    const int kmax = std::min(5, s.q - 1);
    for (int k = 1; k <= kmax; ++k) {
        const double h = s.eps / samples;
        double best = 0.0;
        int ibest = 0;
        for (int i = 0; i <= samples; ++i) {
            double v = std::abs(chi(1.0 + i * h, s, k));
            if (v > best) {
                best = v;
                ibest = i;
            }
        }
        // golden section on the bracketing cell pair
        double a = 1.0 + std::max(0, ibest - 1) * h, b = 1.0 + std::min(samples, ibest + 1) * h;
        const double g = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = b - g * (b - a), x2 = a + g * (b - a);
        double f1 = std::abs(chi(x1, s, k)), f2 = std::abs(chi(x2, s, k));
        for (int it = 0; it < 80; ++it) {
            if (f1 > f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = std::abs(chi(x1, s, k));
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = std::abs(chi(x2, s, k));
            }
        }
        total += std::max({best, f1, f2});
    }
    return total;
}

inline double R_of_tau(double tau, double tau0) {
    if (tau < tau0) throw std::invalid_argument("R_of_tau: tau < tau0");
    if (tau0 < std::numbers::e) throw std::invalid_argument("R_of_tau: tau0 < e");
    return std::sqrt(5.2 * std::log(tau) + 100.0 * std::log(1.0 + tau - tau0));
}
inline double Rdot_of_tau(double tau, double tau0) {
    return (5.2 / tau + 100.0 / (1.0 + tau - tau0)) / (2.0 * R_of_tau(tau, tau0));
}
inline double R0_of_tau(double tau) { return 2.4 * std::sqrt(std::log(tau)); }
inline double R1_of_tau(double tau) { return std::sqrt(5.6) * std::sqrt(std::log(tau)); }

// chi^{(k)}(1+eps-h) / h^{p-k}
inline double tail_contact_ratio(int k, double h, const CutoffSpec& s) {
    return chi(1.0 + s.eps - h, s, k) / std::pow(h, s.p - k);
}

// ||e^{-|y|^2/8} grad chi_R||_2 over R^d x S^1
inline double grad_chi_weighted_norm(double R, const CutoffSpec& s, int d) {
    std::vector<double> x, w;
    detail::gauss_legendre(16, x, w);
    const int panels = 400;
    const double a = R, b = (1.0 + s.eps) * R, hp = (b - a) / panels;
    double sum = 0.0;
    for (int p = 0; p < panels; ++p) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double r = a + hp * (p + 0.5 * (x[i] + 1.0));
            double g = chi_R(r, R, s, 1);
            sum += 0.5 * hp * w[i] * std::exp(-0.25 * r * r) * g * g * std::pow(r, d - 1);
        }
    }
    const double sphere = d == 1 ? 2.0 : (d == 2 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi);
    return std::sqrt(2.0 * std::numbers::pi * sphere * sum);
}

}  // namespace neckpinch
