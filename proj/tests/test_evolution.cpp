#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "neckpinch/evolution.hpp"
#include "oracles/fd_integrator.hpp"

using namespace neckpinch;

namespace {

Symmetry symmetric() {
    Symmetry s;
    s.even_y = s.theta_free = s.no_sine = true;
    return s;
}

RunConfig small_case1(double tau_end) {
    RunConfig c;
    c.d = 1;
    c.ny = 32;
    c.ntheta = 1;
    c.tau0 = 20;
    c.tau_end = tau_end;
    c.B0(0, 0) = 0.05;
    c.symmetry = symmetric();
    return c;
}

double cylinder_entropy() { return std::sqrt(2 * std::numbers::pi) * std::exp(-0.5); }

}  // namespace

TEST(Evolution, ConfigValidation) {
    RunConfig c;
    EXPECT_NO_THROW(validate(c));
    auto bad = [](auto edit) {
        RunConfig c;
        edit(c);
        EXPECT_THROW(validate(c), ConfigError);
    };
    bad([](RunConfig& c) { c.d = 4; });
    bad([](RunConfig& c) { c.tau_end = c.tau0; });
    bad([](RunConfig& c) { c.dt = 0.5; });
    bad([](RunConfig& c) { c.recenter_interval = 0.3; });
    bad([](RunConfig& c) { c.B0(0, 0) = 0.3; });
    bad([](RunConfig& c) { c.perturbations = {{{0, 1, 0}, 0, 1e-3}}; });
    bad([](RunConfig& c) { c.perturbations = {{{2, 0, 0}, 3, 1e-3}}; });
    bad([](RunConfig& c) { c.taper_outer = c.taper_inner; });
}

TEST(Evolution, CylinderIsAnExactFixedPoint) {
    for (int d = 1; d <= 2; ++d) {
        RunConfig c;
        c.d = d;
        c.ny = 12;
        c.ntheta = 1;
        c.tau_end = 22;
        TimeSeries ts = evolve(c);
        ASSERT_EQ(ts.status, RunStatus::ok) << ts.message;
        for (double x : ts.final_eta.c) EXPECT_EQ(x, 0.0);
        for (auto& r : ts.rows) {
            EXPECT_NEAR(r.F, cylinder_entropy(), 1e-10);  // quadrature stops at |y| = 10
            EXPECT_LE(r.gradF2, 1e-28);
            EXPECT_LE(r.p.B.norm(), 1e-14);
        }
        EXPECT_EQ(ts.classification.kind, CaseKind::case2);
    }
}

TEST(Evolution, LinearModesFollowTheirEigenvalues) {
    // y1 grows like e^{tau/2}, cos(theta) too, cos(2 theta) decays like e^{-tau}
    struct Case {
        Perturbation p;
        double rate;
    };
    for (Case k : {Case{{{1, 0, 0}, 0, 1e-7}, 0.5}, Case{{{0, 0, 0}, 1, 1e-7}, 0.5}, Case{{{0, 0, 0}, 3, 1e-7}, -1.0},
                   Case{{{2, 0, 0}, 0, 1e-7}, 0.0}}) {
        RunConfig c;
        c.ny = 16;
        c.ntheta = 2;
        c.tau_end = 21;
        c.recenter = false;
        c.adapt_dt = false;
        c.perturbations = {k.p};
        Basis b = build_basis(1, c.ny, c.ntheta);
        Stepper st(b, c.symmetry, c.taper_inner, c.taper_outer);
        const std::size_t idx = std::size_t(k.p.n[0]) * b.nf + k.p.mode;
        const double start = st.from_v(initial_v(c, b))[idx];
        TimeSeries ts = evolve(c);
        ASSERT_EQ(ts.status, RunStatus::ok) << ts.message;
        EXPECT_NEAR(ts.final_eta[idx] / start, std::exp(k.rate), 1e-4 * std::exp(k.rate));
    }
}

TEST(Evolution, ExponentialIntegratorConverges) {
    RunConfig c;
    c.ny = 24;
    c.ntheta = 2;
    c.B0(0, 0) = 0.03;
    c.perturbations = {{{4, 0, 0}, 0, 2e-3}, {{1, 0, 0}, 1, 1e-3}, {{2, 0, 0}, 2, 1e-3}};
    Basis b = build_basis(1, c.ny, c.ntheta);
    Stepper st(b, c.symmetry, c.taper_inner, c.taper_outer);
    const Coeffs eta0 = st.from_v(initial_v(c, b));
    auto run = [&](int n) {
        Coeffs e = eta0;
        for (int s = 0; s < n; ++s) st.step(e, 0.5 / n);
        return e;
    };
    const Coeffs ref = run(256);
    auto err = [&](int n) {
        Coeffs e = run(n);
        double m = 0;
        for (std::size_t i = 0; i < e.size(); ++i) m = std::max(m, std::abs(e[i] - ref[i]));
        return m;
    };
    const double e2 = err(2), e4 = err(4), e8 = err(8);
    EXPECT_GE(std::log2(e2 / e4), 1.9);
    EXPECT_GE(std::log2(e4 / e8), 1.9);
}

TEST(Evolution, RightSideMatchesPointwiseFlowInside) {
    RunConfig c;
    c.ny = 32;
    c.ntheta = 2;
    c.B0(0, 0) = 0.02;
    c.perturbations = {{{2, 0, 0}, 1, 1e-3}, {{3, 0, 0}, 2, -1e-3}, {{4, 0, 0}, 0, 1e-3}};
    Basis b = build_basis(1, c.ny, c.ntheta);
    Stepper st(b, c.symmetry, c.taper_inner, c.taper_outer);
    Coeffs eta = st.from_v(initial_v(c, b));
    Field spectral = synthesize(st.rhs(eta), b);
    Field v = st.to_v(eta);
    Jets J = compute_jets(analyze(v, b), b);
    J.v = v;
    // projecting the rational remainder costs ~1e-9 in the weighted norm, which e^{|y|^2/8} inflates further out
    double m = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (b.radius2(i) <= 16.0) m = std::max(m, std::abs(spectral[i] - rescaled_local(J.at(b, i))));
    EXPECT_LE(m, 1e-7);
}

TEST(Evolution, SymmetryClassIsPreserved) {
    RunConfig c = small_case1(21);
    c.ntheta = 2;
    c.perturbations = {{{4, 0, 0}, 0, 1e-3}};
    TimeSeries ts = evolve(c);
    ASSERT_EQ(ts.status, RunStatus::ok) << ts.message;
    Basis b = build_basis(1, c.ny, c.ntheta);
    for (std::size_t i = 0; i < ts.final_eta.size(); ++i)
        if ((i / b.nf) % 2 == 1 || i % b.nf != 0) EXPECT_EQ(ts.final_eta[i], 0.0) << i;
}

TEST(Evolution, DilationIsExactOnPolynomialsAndProfiles) {
    Basis b = build_basis(1, 48, 1);
    Stepper st(b, Symmetry{}, 10, 13);
    const double s = 1.07;
    Field cyl = st.to_v(st.dilate(b.zero_coeffs(), s));
    for (std::size_t i = 0; i < cyl.size(); ++i) EXPECT_NEAR(cyl[i], std::sqrt(2.0) / s, 1e-13);

    Coeffs p = b.zero_coeffs();
    p[2 * b.nf] = 1e-2;
    p[5 * b.nf] = -3e-3;
    Coeffs back = st.dilate(st.dilate(p, s), 1.0 / s);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(back[i], p[i], 1e-13);

    // V_{a,b}(s y) / s = V_{a s^2, b s^2}(y)
    const double a = 0.51, bb = 0.02;
    Field v = b.zero_field(), want = b.zero_field();
    for (std::size_t i = 0; i < v.size(); ++i) {
        double y = b.coord(i, 0);
        v[i] = std::sqrt((2 + bb * y * y) / (2 * a));
        want[i] = std::sqrt((2 + bb * s * s * y * y) / (2 * a * s * s));
    }
    Field got = st.to_v(st.dilate(st.from_v(v), s));
    for (std::size_t i = 0; i < v.size(); ++i)
        if (b.radius2(i) <= 64.0) EXPECT_NEAR(got[i], want[i], 1e-9);
}

TEST(Evolution, NegativeCurvatureDataExitsTheRegime) {
    RunConfig c;
    c.ny = 32;
    c.B0(0, 0) = -0.05;
    TimeSeries ts = evolve(c);
    EXPECT_EQ(ts.status, RunStatus::regime_exit);
    EXPECT_EQ(ts.classification.kind, CaseKind::exited);
}

TEST(Evolution, ShortCaseOneRunIsMonotoneAndBalanced) {
    TimeSeries ts = evolve(small_case1(32));
    ASSERT_EQ(ts.status, RunStatus::ok) << ts.message;
    for (std::size_t i = 1; i < ts.rows.size(); ++i) EXPECT_LT(ts.rows[i].F, ts.rows[i - 1].F) << ts.rows[i].tau;
    auto wins = energy_windows(ts.rows, 5);
    ASSERT_EQ(wins.size(), 5u);
    for (auto& w : wins) EXPECT_LE(w.rel_err, 0.02) << w.tau;
    for (auto& r : ts.rows)
        if (!std::isnan(r.res_B)) EXPECT_LE(r.res_B, 10 * r.H1) << r.tau;
    LyapunovReport L = lyapunov_monitor(ts.rows, 0, ts.rows.size() - 1, 0.1);
    EXPECT_FALSE(L.flagged);
    ASSERT_EQ(L.fits.size(), 4u);
    for (auto& f : L.fits) EXPECT_LE(f.c_fit, L.c_max) << f.name;

    // a remainder blown up at one sample must be caught
    auto rows = ts.rows;
    rows[rows.size() / 2].nt.wL2 *= 1e3;
    EXPECT_TRUE(lyapunov_monitor(rows, 0, rows.size() - 1, 0.1).flagged);
    EXPECT_THROW(lyapunov_monitor(rows, 0, 3, 0.1), std::invalid_argument);
}

TEST(Evolution, CylinderLyapunovConstantsVanish) {
    RunConfig c;
    c.ny = 12;
    c.tau_end = 22;
    TimeSeries ts = evolve(c);
    LyapunovReport L = lyapunov_monitor(ts.rows, 0, ts.rows.size() - 1, 0.1);
    for (auto& f : L.fits) EXPECT_EQ(f.c_fit, 0.0) << f.name;
}

TEST(Evolution, TwoDimensionalCaseOneHasFullRank) {
    RunConfig c;
    c.d = 2;
    c.ny = 16;
    c.ntheta = 1;
    c.tau_end = 40;
    c.B0(0, 0) = c.B0(1, 1) = 0.05;
    c.a0 = 0.5 + 0.05;
    c.symmetry = symmetric();
    TimeSeries ts = evolve(c);
    ASSERT_EQ(ts.status, RunStatus::ok) << ts.message;
    EXPECT_EQ(ts.classification.kind, CaseKind::case1);
    EXPECT_EQ(ts.classification.l, 2);
}

TEST(Evolution, ShrinkingCylinderInPhysicalTime) {
    EXPECT_LE(shrinking_cylinder_error(std::sqrt(2.0)), 1e-8);
    EXPECT_LE(shrinking_cylinder_error(1.3, 1000, 12), 1e-8);
}

TEST(Evolution, FramesAgree) {
    RunConfig c;
    c.ny = 32;
    c.ntheta = 2;
    c.recenter = false;
    EXPECT_LE(evolve_physical_and_compare(c).discrepancy, 1e-12);
    c.B0(0, 0) = 0.02;
    c.perturbations = {{{2, 0, 0}, 0, 2e-3}, {{1, 0, 0}, 1, 1e-3}, {{0, 0, 0}, 2, 1e-3}, {{3, 0, 0}, 0, -1e-3}};
    FrameReport r = evolve_physical_and_compare(c, 1.0, 24);
    EXPECT_GT(r.nodes, 100u);
    EXPECT_LE(r.discrepancy, 1e-4);
    EXPECT_THROW(evolve_physical_and_compare(c, 2.0), std::invalid_argument);
    EXPECT_THROW(evolve_physical_and_compare(c, 1.0, 0, 100, 12.0), std::invalid_argument);
}

TEST(FiniteDifferenceOracle, ExactOnSpatiallyConstantData) {
    // v^2 = 2 + (c^2 - 2) e^tau for y-independent data
    oracle::FdGrid g;
    g.h = 0.05;
    for (double c0 : {std::sqrt(2.0), 1.42}) {
        auto v = oracle::fd_evolve(g, [&](double) { return c0; }, 1.0);
        const double want = std::sqrt(2 + (c0 * c0 - 2) * std::exp(1.0));
        for (double x : v) EXPECT_NEAR(x, want, 1e-10);
    }
}

TEST(FiniteDifferenceOracle, AgreesWithSpectralRun) {
    RunConfig c = small_case1(25);
    c.ny = 64;
    c.B0(0, 0) = 0.02;
    c.recenter = false;
    c.perturbations = {{{4, 0, 0}, 0, 1e-3}};
    TimeSeries ts = evolve(c);
    ASSERT_EQ(ts.status, RunStatus::ok) << ts.message;
    const double a = 0.5 + 0.01, bb = 0.02;
    oracle::FdGrid g;
    auto v = oracle::fd_evolve(
        g, [&](double y) { return std::sqrt((2 + bb * y * y) / (2 * a)) + 1e-3 * oracle::hermite_mode(4, y); }, 5.0,
        0.6);
    Basis b = build_basis(1, c.ny, 1);
    double m = 0;
    for (int j = 0; j < g.n(); ++j) {
        double y = g.y(j);
        if (std::abs(y) > 8) continue;
        m = std::max(m, std::abs(std::sqrt(2.0) + evaluate(ts.final_eta, b, {y, 0, 0}, 0.0) - v[j]));
    }
    EXPECT_LE(m, 1e-5);
}
