#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "neckpinch/diagnostics.hpp"

using namespace neckpinch;

namespace {

Coeffs random_coeffs(const Basis& b, std::mt19937_64& rng, bool zero_mean_theta = false) {
    std::normal_distribution<double> N(0.0, 1.0);
    Coeffs c = b.zero_coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) {
        auto n = b.mode_multi(i / b.nf);
        int deg = n[0] + n[1] + n[2];
        if (zero_mean_theta && i % b.nf == 0) continue;
        c[i] = N(rng) * std::pow(0.6, deg);
    }
    return c;
}

}  // namespace

TEST(Diagnostics, GroundModeHasUnitNorm) {
    for (int d = 1; d <= 3; ++d) {
        Basis b = build_basis(d, 6, 1);
        Coeffs c = b.zero_coeffs();
        c[0] = 1.0;
        EXPECT_NEAR(weighted_L2(synthesize(c, b), b), 1.0, 1e-13);
    }
}

TEST(Diagnostics, LinfOfOneAtOrigin) {
    Basis b = build_basis(1, 10, 1);  // odd node count puts a node at 0
    EXPECT_DOUBLE_EQ(weighted_Linf(constant_field(b, 1.0), b, 3, 10.0), 1.0);
}

TEST(Diagnostics, Parseval) {
    std::mt19937_64 rng(1);
    Basis b = build_basis(2, 10, 2);
    Coeffs c = random_coeffs(b, rng);
    double s = 0.0;
    for (double x : c.c) s += x * x;
    EXPECT_NEAR(std::pow(weighted_L2(synthesize(c, b), b), 2), s, 1e-10 * s);
}

TEST(Diagnostics, ThetaPoincare) {
    std::mt19937_64 rng(2);
    Basis b = build_basis(1, 10, 3);
    for (int rep = 0; rep < 20; ++rep) {
        Field f = synthesize(random_coeffs(b, rng, true), b);
        double n1 = weighted_L2(spectral_derivative(f, b, 1, 1), b);
        double n2 = weighted_L2(spectral_derivative(f, b, 1, 2), b);
        EXPECT_LE(n1, n2 * (1 + 1e-12));
    }
}

TEST(Diagnostics, LinfRestrictionMonotone) {
    std::mt19937_64 rng(3);
    Basis b = build_basis(2, 10, 1);
    Field f = synthesize(random_coeffs(b, rng), b);
    double prev = 0.0;
    for (double R = 0.5; R < 12; R += 0.5) {
        double m = weighted_Linf(f, b, 2, R);
        EXPECT_GE(m, prev);
        prev = m;
    }
}

// product-rule jets of chi_R w against central differences of the pointwise product
TEST(Diagnostics, LocalizedJetsMatchFiniteDifferences) {
    std::mt19937_64 rng(4);
    Basis b = build_basis(2, 10, 2);
    Coeffs c = random_coeffs(b, rng);
    Field w = synthesize(c, b);
    CutoffSpec s;
    const double R = 3.0;
    LocalizedJets J = localized_jets(w, b, cutoff_fields(b, R, s));
    auto prod = [&](std::array<double, 3> y, double th) { return chi_R(y, 2, R, s) * evaluate(c, b, y, th); };
    const double h = 1e-4;
    int checked = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        std::array<double, 3> y{b.coord(i, 0), b.coord(i, 1), 0.0};
        double th = b.theta(i);
        double r = std::sqrt(b.radius2(i));
        if (r > 3.5) continue;
        ++checked;
        for (int k = 0; k < 2; ++k) {
            auto yp = y, ym = y;
            yp[k] += h;
            ym[k] -= h;
            double fd = (prod(yp, th) - prod(ym, th)) / (2 * h);
            EXPECT_NEAR(J.g[k][i], fd, 1e-6) << "r=" << r;
            double fd2 = (prod(yp, th) - 2 * prod(y, th) + prod(ym, th)) / (h * h);
            EXPECT_NEAR(J.h[k][k][i], fd2, 2e-3 * (1 + std::abs(fd2))) << "r=" << r;
        }
        double fdt = (prod(y, th + h) - prod(y, th - h)) / (2 * h);
        EXPECT_NEAR(J.t[i], fdt, 1e-6);
    }
    EXPECT_GT(checked, 20);
}

TEST(Diagnostics, NormTableNonnegativeAndZeroForZero) {
    std::mt19937_64 rng(5);
    Basis b = build_basis(2, 8, 2);
    NormTable z = norm_table(b.zero_field(), b, 5.0, CutoffSpec{});
    EXPECT_EQ(z.Psi, 0.0);
    EXPECT_EQ(z.Linf3, 0.0);
    NormTable t = norm_table(synthesize(random_coeffs(b, rng), b), b, 5.0, CutoffSpec{});
    for (double x : {t.wL2, t.wL2_grad, t.wL2_theta, t.wL2_theta2, t.wL2_ytheta, t.wL2_hess, t.Psi, t.Linf3,
                     t.Linf2_grad, t.Linf1_hess})
        EXPECT_GE(x, 0.0);
    EXPECT_GE(t.Psi, t.wL2 + t.wL2_theta + t.wL2_theta2);
}
