#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "neckpinch/modulation.hpp"
#include "support/synthetic.hpp"

using namespace neckpinch;
using namespace synth;

namespace {

double sup(const Field& f) {
    double m = 0.0;
    for (double x : f.v) m = std::max(m, std::abs(x));
    return m;
}

// closed-form profile at a point, independent of the grid code
double V_at(double a, const Mat3& B, const std::array<double, 3>& y, int d) {
    double q = 2.0;
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) q += B(k, l) * y[k] * y[l];
    return std::sqrt(q / (2 * a));
}

// Lap V - y.grad V / 2 + V/2 - 1/V - dV/dtau by central differences
double F_direct(double a, double adot, const Mat3& B, const Mat3& Bdot, std::array<double, 3> y, int d) {
    const double h = 1e-4;
    double V = V_at(a, B, y, d);
    double lap = 0.0, yg = 0.0;
    for (int k = 0; k < d; ++k) {
        auto yp = y, ym = y;
        yp[k] += h;
        ym[k] -= h;
        double vp = V_at(a, B, yp, d), vm = V_at(a, B, ym, d);
        lap += (vp - 2 * V + vm) / (h * h);
        yg += y[k] * (vp - vm) / (2 * h);
    }
    double vt = (V_at(a + h * adot, B + h * Bdot, y, d) - V_at(a - h * adot, B - h * Bdot, y, d)) / (2 * h);
    return lap - 0.5 * yg + 0.5 * V - 1.0 / V - vt;
}

Mat3 sym(std::mt19937_64& rng, int d, double s) {
    std::uniform_real_distribution<double> U(-s, s);
    Mat3 B = Mat3::Zero();
    for (int k = 0; k < d; ++k)
        for (int l = k; l < d; ++l) B(k, l) = B(l, k) = U(rng);
    return B;
}

}  // namespace

TEST(Modulation, ParamCountMatchesNonpositiveModes) {
    for (int d = 1; d <= 3; ++d) {
        Basis b = build_basis(d, 6, 2);
        int nonpos = 0;
        for (double l : b.eigvals) nonpos += l <= 1e-14;
        EXPECT_EQ(Params::count(d), nonpos);
        EXPECT_EQ(int(pairing_set(b).modes.size()), nonpos);
    }
    EXPECT_EQ(Params::count(3), 18);
}

TEST(Modulation, PackRoundTrip) {
    std::mt19937_64 rng(1);
    Params p = random_params(rng, 3, 0.1);
    EXPECT_EQ(max_param_diff(Params::unpack(p.pack(), 3), p), 0.0);
}

TEST(Modulation, ProfileExamples) {
    Basis b = build_basis(2, 8, 1);
    Field V = profile_V(Params::cylinder(2), b);
    for (double x : V.v) EXPECT_DOUBLE_EQ(x, std::sqrt(2.0));
    const double tau = 7.3;
    Mat3 B = Mat3::Zero();
    B(0, 0) = 1.0 / tau;
    EXPECT_NEAR(V_at(0.5, B, {std::sqrt(tau), 0, 0}, 1), std::sqrt(3.0), 1e-14);
    Basis b1 = build_basis(1, 8, 1);
    Params p = Params::cylinder(1);
    p.B(0, 0) = -1.0;
    EXPECT_THROW(profile_V(p, b1, 2.0), RegimeExit);
}

TEST(Modulation, DecomposeCylinder) {
    Basis b = build_basis(2, 8, 2);
    Decomposition dec = decompose(constant_field(b, std::sqrt(2.0)), b, Params::cylinder(2));
    EXPECT_LE(max_param_diff(dec.params, Params::cylinder(2)), 1e-14);
    EXPECT_LE(sup(dec.w), 1e-14);
}

TEST(Modulation, DecomposeSyntheticExample) {
    Basis b = build_basis(3, 8, 2);
    Params p = Params::cylinder(3);
    p.a = 0.51;
    p.B = 0.02 * Mat3::Identity();
    p.beta[1](0) = 1e-3;
    p.alpha[0] = 5e-4;
    Field w = make_field(b, [](auto y, double) {
        double x = y[0] / 2;
        return 1e-4 * (16 * x * x * x * x - 48 * x * x + 12);
    });
    Decomposition dec = decompose(compose(p, w, b), b, Params::cylinder(3));
    EXPECT_LE(max_param_diff(dec.params, p), 1e-9);
    EXPECT_LE(sup(dec.w - w), 1e-9);
    EXPECT_LE(dec.residuals.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Modulation, DecomposeTiltedCylinder) {
    Basis b = build_basis(1, 10, 1);
    Field v = make_field(b, [](auto y, double) { return std::sqrt(2.0) + 1e-3 * y[0]; });
    Decomposition dec = decompose(v, b, Params::cylinder(1));
    EXPECT_NEAR(dec.params.beta[0](0), 1e-3, 1e-6);
    EXPECT_NEAR(dec.params.a, 0.5, 1e-6);
}

TEST(Modulation, DecomposeIdempotent) {
    std::mt19937_64 rng(3);
    Basis b = build_basis(2, 10, 2);
    Field v = compose(random_params(rng, 2, 0.03), high_mode_field(b, rng, 1e-3), b);
    Decomposition d1 = decompose(v, b, Params::cylinder(2));
    Decomposition d2 = decompose(compose(d1.params, d1.w, b), b, Params::cylinder(2));
    EXPECT_LE(max_param_diff(d1.params, d2.params), 1e-10);
}

TEST(Modulation, OrthogonalityAfterDecompose) {
    std::mt19937_64 rng(4);
    Basis b = build_basis(2, 10, 2);
    DecomposeOptions o;
    o.R = 4.0;  // cutoff active inside the grid
    Field v = compose(random_params(rng, 2, 0.02), high_mode_field(b, rng, 1e-3), b);
    Decomposition dec = decompose(v, b, Params::cylinder(2), o);
    PairingSet ps = pairing_set(b);
    for (std::size_t j = 0; j < ps.modes.size(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += b.weight(i) * chi(std::sqrt(b.radius2(i)) / o.R, o.cutoff) * dec.w[i] * ps.values(i, j);
        EXPECT_LE(std::abs(s), 1e-12);
    }
}

TEST(Modulation, DecomposeRejectsBadProfile) {
    Basis b = build_basis(1, 8, 1);
    Field v = make_field(b, [](auto y, double) { return std::sqrt(std::max(0.05, 2.0 - 0.5 * y[0] * y[0])); });
    EXPECT_THROW(decompose(v, b, Params::cylinder(1)), RegimeExit);
}

// the round-trip acceptance setting, d=3
TEST(Modulation, RoundTripBatch) {
    std::mt19937_64 rng(2024);
    Basis b = build_basis(3, 8, 2);
    auto t0 = std::chrono::steady_clock::now();
    int worst_it = 0;
    for (int rep = 0; rep < 20; ++rep) {
        Params p = random_params(rng, 3, 0.05 / std::sqrt(18.0));
        Field w = high_mode_field(b, rng, 1e-3);
        Decomposition dec = decompose(compose(p, w, b), b, Params::cylinder(3));
        EXPECT_LE(max_param_diff(dec.params, p), 1e-9);
        EXPECT_LE(dec.residuals.cwiseAbs().maxCoeff(), 1e-10);
        worst_it = std::max(worst_it, dec.iterations);
    }
    EXPECT_LE(worst_it, 10);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 30.0);
}

TEST(Modulation, FSourceZeroAtCylinder) {
    Basis b = build_basis(2, 8, 1);
    EXPECT_LE(sup(F_source(0.5, 0.0, Mat3::Zero(), Mat3::Zero(), b)), 1e-15);
}

TEST(Modulation, FSourceAtOrigin) {
    Basis b = build_basis(1, 10, 1);
    const double a = 0.52, adot = 0.01, bb = 0.03;
    Mat3 B = Mat3::Zero(), Bd = Mat3::Zero();
    B(0, 0) = bb;
    Bd(0, 0) = -0.002;
    Field F = F_source(a, adot, B, Bd, b);
    std::size_t i0 = (b.nq / 2) * b.mtheta;
    ASSERT_NEAR(b.coord(i0, 0), 0.0, 1e-15);
    EXPECT_NEAR(F[i0], (adot / a + 1 - 2 * a + bb) / (std::sqrt(2 * a) * std::sqrt(2.0)), 1e-15);
}

TEST(Modulation, FSourceEqualsProfileDefect) {
    std::mt19937_64 rng(7);
    for (int d = 1; d <= 3; ++d) {
        Basis b = build_basis(d, 6, 1);
        Mat3 B = psd(rng, d, 0.05), Bd = sym(rng, d, 0.01);
        const double a = 0.49, adot = -0.003;
        Field F = F_source(a, adot, B, Bd, b);
        for (std::size_t i = 0; i < F.size(); i += 3) {
            if (b.radius2(i) > 16) continue;
            std::array<double, 3> y{b.coord(i, 0), d > 1 ? b.coord(i, 1) : 0.0, d > 2 ? b.coord(i, 2) : 0.0};
            EXPECT_NEAR(F[i], F_direct(a, adot, B, Bd, y, d), 2e-6) << "d=" << d;
        }
    }
}

TEST(Modulation, FSourceOnSlowManifold) {
    Basis b = build_basis(1, 8, 1);
    for (double bb : {0.02, 0.01, 0.005}) {
        Mat3 B = Mat3::Zero();
        B(0, 0) = bb;
        Mat3 Bd = -B.transpose() * B;
        Field F = F_source(0.5 + 0.5 * bb, 0.0, B, Bd, b);
        double m = 0.0;
        for (std::size_t i = 0; i < F.size(); ++i)
            if (b.radius2(i) <= 9) m = std::max(m, std::abs(F[i]));
        EXPECT_LE(m, 10.0 * bb * bb) << bb;
    }
}

TEST(Modulation, GSourceExamples) {
    Basis b = build_basis(2, 8, 2);
    Params z = Params::cylinder(2);
    EXPECT_LE(sup(G_source(z, z, b)), 0.0);
    Params p = z, pd = z;
    p.alpha[0] = 0.01;
    pd.a = 0.0;
    pd.alpha[0] = 0.005;
    EXPECT_LE(sup(G_source(p, pd, b)), 1e-18);
    Params q = z, qd = z;
    qd.a = 0.0;
    q.beta[1](0) = 0.02;
    Coeffs c = analyze(G_source(q, qd, b), b);
    EXPECT_NEAR(c[b.mode_index({1, 0, 0}, 1)], 0.0, 1e-16);
    qd.beta[1](0) = 0.004;
    c = analyze(G_source(q, qd, b), b);
    EXPECT_NEAR(b.poly_coefficient(c, {1, 0, 0}, 1), -0.004, 1e-15);
}

// G = -L xi - xi_tau with L applied by finite differences
TEST(Modulation, GSourceEqualsLinearDefect) {
    std::mt19937_64 rng(8);
    const int d = 2;
    Basis b = build_basis(d, 6, 2);
    Params p = random_params(rng, d, 0.04), pd = random_params(rng, d, 0.02);
    Field G = G_source(p, pd, b);
    auto xi = [&](const Params& q, std::array<double, 3> y, double th) {
        double l1 = 0, l2 = 0, l3 = 0;
        for (int k = 0; k < d; ++k) l1 += q.beta[0](k) * y[k], l2 += q.beta[1](k) * y[k], l3 += q.beta[2](k) * y[k];
        return l1 + (l2 + q.alpha[0]) * std::cos(th) + (l3 + q.alpha[1]) * std::sin(th);
    };
    const double h = 1e-4;
    for (std::size_t i = 0; i < G.size(); i += 5) {
        std::array<double, 3> y{b.coord(i, 0), b.coord(i, 1), 0.0};
        double th = b.theta(i);
        double V = V_at(p.a, p.B, y, d);
        double x0 = xi(p, y, th);
        double yg = 0, lap = 0;
        for (int k = 0; k < d; ++k) {
            auto yp = y, ym = y;
            yp[k] += h;
            ym[k] -= h;
            yg += y[k] * (xi(p, yp, th) - xi(p, ym, th)) / (2 * h);
            lap += (xi(p, yp, th) - 2 * x0 + xi(p, ym, th)) / (h * h);
        }
        double tt = (xi(p, y, th + h) - 2 * x0 + xi(p, y, th - h)) / (h * h);
        double minusL = lap - 0.5 * yg + tt / (V * V) + 0.5 * x0 + x0 / (V * V);
        EXPECT_NEAR(G[i], minusL - xi(pd, y, th), 1e-6);
    }
}

TEST(Modulation, N2Forms) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> N(0.0, 1.0);
    Basis b = build_basis(2, 8, 3);
    Params p = random_params(rng, 2, 0.02);
    EXPECT_LE(sup(N2_field(profile_V(p, b), p, b)), 1e-15);
    for (int rep = 0; rep < 5; ++rep) {
        Coeffs c = b.zero_coeffs();
        for (std::size_t i = 0; i < c.size(); ++i) {
            auto n = b.mode_multi(i / b.nf);
            c[i] = 1e-2 * N(rng) * std::pow(0.4, n[0] + n[1] + fourier_freq(int(i % b.nf)));
        }
        Field v = profile_V(p, b) + synthesize(c, b);
        Field f1 = N2_field(v, p, b, N2Form::expanded), f2 = N2_field(v, p, b, N2Form::factored);
        EXPECT_LE(sup(f1 - f2), 1e-10);
    }
    // theta independent: only the quadratic term
    Field v = make_field(b, [](auto y, double) { return std::sqrt(2.0) + 0.01 * y[0] * y[1]; });
    Params z = Params::cylinder(2);
    Field n2 = N2_field(v, z, b);
    for (std::size_t i = 0; i < v.size(); ++i) {
        double e = v[i] - std::sqrt(2.0);
        EXPECT_NEAR(n2[i], -e * e / (2.0 * v[i]), 1e-11);
    }
}

TEST(Modulation, MuSupport) {
    CutoffSpec s;
    Basis b = build_basis(1, 40, 1);
    const double R = 6.0;
    Field w = make_field(b, [](auto y, double) { return 1.0 + 0.3 * y[0] * y[0]; });
    Field mu = mu_w(w, b, R, 0.1, s);
    int inside = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        double r = std::sqrt(b.radius2(i));
        if (r <= R || r >= (1 + s.eps) * R)
            EXPECT_EQ(mu[i], 0.0);
        else
            inside += mu[i] != 0.0;
    }
    EXPECT_GT(inside, 0);
}

TEST(Modulation, MuOfConstant) {
    CutoffSpec s;
    Basis b = build_basis(2, 30, 1);
    const double R = 5.0, Rdot = 0.2;
    Field mu = mu_w(constant_field(b, 1.0), b, R, Rdot, s);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        double r = std::sqrt(b.radius2(i));
        double c1 = chi_R(r, R, s, 1), c2 = chi_R(r, R, s, 2);
        double expect = 0.5 * r * c1 + dchi_R_dtau(r, R, Rdot, s) - (c2 + (r > 0 ? c1 / r : 0.0));
        EXPECT_NEAR(mu[i], expect, 1e-9 * (1 + std::abs(expect)));
    }
}

// weighted L2 norm squared of mu over the band by radial Gauss-Legendre, d=1, exact w and w'
double mu_tail_sq(double R, const CutoffSpec& s, double c0, double c1) {
    std::vector<double> x, wt;
    neckpinch::detail::gauss_legendre(20, x, wt);
    const int panels = 200;
    const double lo = R, hi = (1 + s.eps) * R, hp = (hi - lo) / panels;
    double sum = 0.0;
    for (int p = 0; p < panels; ++p)
        for (std::size_t i = 0; i < x.size(); ++i) {
            double r = lo + hp * (p + 0.5 * (x[i] + 1));
            for (double sg : {1.0, -1.0}) {
                double y = sg * r, w = c0 + c1 * y, rg = sg * c1;
                double m = mu_local(r, 1, w, rg, R, 0.05, s);
                sum += 0.5 * hp * wt[i] * std::exp(-0.25 * r * r) * m * m;
            }
        }
    return 2.0 * std::numbers::pi * sum;
}

// the Gaussian tail kills mu: squared weighted norm under e^{-R^2/5} times the size of w
TEST(Modulation, MuGaussianTail) {
    CutoffSpec s;
    for (double R : {15.0, 20.0}) {
        double mx = 0.5 + 0.01 * (1 + s.eps) * R;
        EXPECT_LE(mu_tail_sq(R, s, 0.5, 0.01), std::exp(-R * R / 5) * mx * mx) << R;
    }
}

// the unsquared norm decays only like e^{-R^2/8} up to powers of R
TEST(Modulation, MuTailUnsquaredIsSlower) {
    CutoffSpec s;
    const double R = 20.0;
    EXPECT_GT(std::sqrt(mu_tail_sq(R, s, 0.5, 0.01)), std::exp(-R * R / 5));
}

TEST(Modulation, RhsWZeroOnCylinder) {
    Basis b = build_basis(2, 8, 2);
    Field v = constant_field(b, std::sqrt(2.0));
    Decomposition dec = decompose(v, b, Params::cylinder(2));
    Params zero = Params::cylinder(2);
    zero.a = 0.0;
    RhsWParts r = rhs_w(v, dec, zero, b, 5.0, 0.1, CutoffSpec{});
    EXPECT_LE(sup(r.total), 1e-12);
}

TEST(Modulation, ControllingExamples) {
    NormTable nt;
    Params p = Params::cylinder(3);
    Controlling c = controlling_H1_Psi_H2(p, 0.0, nt, 10.0);
    EXPECT_EQ(c.H1, 0.0);
    EXPECT_EQ(c.H2, 0.0);
    EXPECT_EQ(c.Psi, 0.0);
    p.B = -0.03 * Mat3::Identity();
    c = controlling_H1_Psi_H2(p, 0.0, nt, 10.0);
    EXPECT_NEAR(c.H1, 0.03 * 0.03 * 0.03, 1e-18);
    EXPECT_EQ(c.H2, 0.0);
    p.beta[1](0) = 0.01;
    c = controlling_H1_Psi_H2(p, 0.0, nt, 10.0);
    EXPECT_NEAR(c.H2, 0.01 * (0.03 * 0.03 + 0.01 * 0.01), 1e-18);
}

TEST(Modulation, ResidualsVanishOnOracleTrajectories) {
    std::vector<double> taus;
    std::vector<Params> ps;
    for (int k = 0; k < 5; ++k) {
        double t = 40.0 + 0.1 * k;
        taus.push_back(t);
        Params p = Params::cylinder(2);
        p.B(0, 0) = 1.0 / t;
        p.a = 0.5 + 0.5 / t;
        p.alpha[0] = 1e-4 * std::exp(t / 2 - 20.0);
        ps.push_back(p);
    }
    ModulationResiduals m = modulation_residuals(taus, ps, 2, 0.0, 0.0, 10.0, 0.0);
    EXPECT_LE(m.res_B, 1e-9);
    EXPECT_LE(m.res_alpha[0] / ps[2].alpha[0], 1e-6);
    EXPECT_THROW(modulation_residuals({1, 2, 3}, {ps[0], ps[1], ps[2]}, 1, 0, 0, 10, 0), std::invalid_argument);
}

TEST(Modulation, OdeBOracle) {
    EXPECT_NEAR(ode_b_oracle(0.05, 20.0, 500.0), 0.002, 1e-15);
    EXPECT_NEAR(500.0 * ode_b_oracle(0.05, 20.0, 500.0), 1.0, 1e-12);
    EXPECT_EQ(ode_b_oracle(0.37, 20.0, 20.0), 0.37);
    EXPECT_NO_THROW(ode_b_oracle(-0.05, 20.0, 39.0));
    EXPECT_THROW(ode_b_oracle(-0.05, 20.0, 40.5), RegimeExit);
}

TEST(Modulation, ClassifierCase1) {
    std::vector<double> taus;
    std::vector<Mat3> Bs;
    for (double t = 100; t <= 400; t += 5) {
        taus.push_back(t);
        Mat3 B = Mat3::Zero();
        B(0, 0) = B(1, 1) = 1.0 / t + 3.0 / (t * t);
        B(2, 2) = 1.0 / (t * t);
        Bs.push_back(B);
    }
    Classification c = classify_dichotomy(taus, Bs, 3);
    EXPECT_EQ(c.kind, CaseKind::case1);
    EXPECT_EQ(c.l, 2);
}

TEST(Modulation, ClassifierCase2) {
    std::vector<double> taus;
    std::vector<Mat3> Bs;
    for (double t = 100; t <= 400; t += 5) {
        taus.push_back(t);
        Bs.push_back(Mat3::Identity() * (20.0 / (t * t * t)));
    }
    EXPECT_EQ(classify_dichotomy(taus, Bs, 3).kind, CaseKind::case2);
}

TEST(Modulation, ClassifierNegativeBranchExits) {
    std::vector<double> taus;
    std::vector<Mat3> Bs;
    for (double t = 20; t < 39.5; t += 0.25) {
        taus.push_back(t);
        Mat3 B = Mat3::Zero();
        B(0, 0) = ode_b_oracle(-0.05, 20.0, t);
        Bs.push_back(B);
    }
    EXPECT_EQ(classify_dichotomy(taus, Bs, 1).kind, CaseKind::exited);
    EXPECT_EQ(classify_dichotomy(taus, Bs, 1, true).kind, CaseKind::exited);
}

TEST(Modulation, ClassifierInconclusiveBetweenBands) {
    std::vector<double> taus;
    std::vector<Mat3> Bs;
    for (double t = 100; t <= 400; t += 5) {
        taus.push_back(t);
        Mat3 B = Mat3::Zero();
        B(0, 0) = 0.5 / t;
        Bs.push_back(B);
    }
    EXPECT_EQ(classify_dichotomy(taus, Bs, 1).kind, CaseKind::inconclusive);
}
