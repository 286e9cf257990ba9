#pragma once
// Galerkin matrices of the conjugated linearized operator, coordinate projectors
// and propagator decay certificates.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "basis.hpp"
#include "cutoff.hpp"
#include "modulation.hpp"

namespace neckpinch {

enum class PotentialKind { none, cutoff, profile };

struct PotentialSpec {
    PotentialKind kind = PotentialKind::none;
    double R = 20.0;         // cutoff
    CutoffSpec cutoff{};     // cutoff
    Params profile{};        // profile: a and B of V_{a,B}
};

// the potential couples only equal Fourier modes, so the matrix is stored per mode
struct OperatorMatrix {
    PotentialKind kind = PotentialKind::none;
    int d = 1, ny = 0, nf = 0;
    std::vector<Mat> blocks;  // nf blocks of size ny^d

    std::size_t dim() const { return blocks.empty() ? 0 : blocks.size() * std::size_t(blocks[0].rows()); }
    // dense matrix in Coeffs ordering
    Mat dense() const {
        const std::size_t ym = blocks.empty() ? 0 : blocks[0].rows();
        Mat M = Mat::Zero(dim(), dim());
        for (int m = 0; m < nf; ++m)
            for (std::size_t i = 0; i < ym; ++i)
                for (std::size_t j = 0; j < ym; ++j) M(i * nf + m, j * nf + m) = blocks[m](i, j);
        return M;
    }
    double asymmetry() const {
        double a = 0.0;
        for (auto& B : blocks) a = std::max(a, (B - B.transpose()).cwiseAbs().maxCoeff());
        return a;
    }
};

// tensor-product Hermite values at the y-nodes, nynodes x nymodes
inline Mat tensor_psi(const Basis& b) {
    const std::size_t nn = b.nynodes(), nm = b.nymodes();
    Mat P(nn, nm);
    for (std::size_t i = 0; i < nn; ++i) {
        auto a = b.node_multi(i);
        for (std::size_t j = 0; j < nm; ++j) {
            auto n = b.mode_multi(j);
            double v = 1.0;
            for (int k = 0; k < b.d; ++k) v *= b.psi(a[k], n[k]);
            P(i, j) = v;
        }
    }
    return P;
}

inline std::vector<double> y_weights(const Basis& b) {
    std::vector<double> w(b.nynodes());
    for (std::size_t i = 0; i < w.size(); ++i) {
        auto a = b.node_multi(i);
        double s = 1.0;
        for (int k = 0; k < b.d; ++k) s *= b.weights_y[a[k]];
        w[i] = s;
    }
    return w;
}

inline OperatorMatrix assemble_operator(const Basis& b, const PotentialSpec& pot = {}) {
    OperatorMatrix op;
    op.kind = pot.kind;
    op.d = b.d;
    op.ny = b.ny;
    op.nf = b.nf;
    const std::size_t nm = b.nymodes(), nn = b.nynodes();
    op.blocks.assign(b.nf, Mat::Zero(nm, nm));
    for (int m = 0; m < b.nf; ++m)
        for (std::size_t j = 0; j < nm; ++j) op.blocks[m](j, j) = b.eigvals[j * b.nf + m];
    if (pot.kind == PotentialKind::none) return op;

    std::vector<double> U(nn, 0.0);
    for (std::size_t i = 0; i < nn; ++i) {
        auto a = b.node_multi(i);
        double r2 = 0.0, y[3] = {0, 0, 0};
        for (int k = 0; k < b.d; ++k) {
            y[k] = b.nodes_y[a[k]];
            r2 += y[k] * y[k];
        }
        if (pot.kind == PotentialKind::cutoff) {
            U[i] = cutoff_potential(std::sqrt(r2), pot.R, pot.cutoff);
        } else {
            double Q = 2.0 + detail::quad_form(pot.profile.B, y, b.d);
            if (!(Q > 0.0) || !(pot.profile.a > 0.0))
                throw RegimeExit("assemble_operator: profile radicand not positive at a node");
            U[i] = 0.5 - 2.0 * pot.profile.a / Q;
        }
        if (!std::isfinite(U[i])) throw NumericalFailure("assemble_operator: unbounded potential sample");
    }
    Mat P = tensor_psi(b);
    auto w = y_weights(b);
    Mat WP = P;
    for (std::size_t i = 0; i < nn; ++i) WP.row(i) *= w[i] * U[i];
    Mat G = P.transpose() * WP;
    G = 0.5 * (G + G.transpose());
    for (int m = 0; m < b.nf; ++m) {
        // the profile perturbation acts as U (1 + d_theta^2)
        double f = 1.0;
        if (pot.kind == PotentialKind::profile) {
            int k = fourier_freq(m);
            f = 1.0 - double(k * k);
        }
        op.blocks[m] += f * G;
    }
    return op;
}

struct EigenGroup {
    double value = 0.0;
    int multiplicity = 0;
};

struct SpectrumReport {
    std::vector<double> eigenvalues;  // sorted
    std::vector<EigenGroup> groups;   // clustered within tol
    double next_positive = 0.0;       // smallest eigenvalue above tol
};

inline SpectrumReport spectrum_check(const OperatorMatrix& op, double tol = 1e-10) {
    SpectrumReport r;
    for (auto& B : op.blocks) {
        Eigen::SelfAdjointEigenSolver<Mat> es(B, Eigen::EigenvaluesOnly);
        for (int i = 0; i < es.eigenvalues().size(); ++i) r.eigenvalues.push_back(es.eigenvalues()(i));
    }
    std::sort(r.eigenvalues.begin(), r.eigenvalues.end());
    for (double e : r.eigenvalues) {
        if (!r.groups.empty() && std::abs(e - r.groups.back().value) <= tol)
            ++r.groups.back().multiplicity;
        else
            r.groups.push_back({e, 1});
    }
    r.next_positive = std::numeric_limits<double>::infinity();
    for (double e : r.eigenvalues)
        if (e > tol) {
            r.next_positive = e;
            break;
        }
    return r;
}

// multiplicity of lambda = |n|/2 + m^2/2 - 1 by direct enumeration of the untruncated index set
inline int enumerate_multiplicity(int d, double lambda) {
    int count = 0;
    const int nmax = int(2 * (lambda + 1)) + 1;
    for (int m = 0; 0.5 * m * m - 1.0 <= lambda + 1e-12; ++m) {
        int trig = m == 0 ? 1 : 2;
        std::array<int, 3> n{0, 0, 0};
        int total = 1;
        for (int k = 0; k < d; ++k) total *= nmax + 1;
        for (int idx = 0; idx < total; ++idx) {
            int t = idx, s = 0;
            for (int k = 0; k < d; ++k) {
                n[k] = t % (nmax + 1);
                t /= nmax + 1;
                s += n[k];
            }
            if (std::abs(0.5 * s + 0.5 * m * m - 1.0 - lambda) < 1e-12) count += trig;
        }
    }
    return count;
}

enum class ProjectorKind { P18, P6, P1, Gamma };

inline const char* projector_name(ProjectorKind k) {
    switch (k) {
        case ProjectorKind::P18: return "P18";
        case ProjectorKind::P6: return "P6";
        case ProjectorKind::P1: return "P1";
        default: return "Gamma";
    }
}

// orthogonal projector that zeroes a set of orthonormal basis coefficients
struct Projector {
    ProjectorKind kind = ProjectorKind::P18;
    std::vector<std::size_t> removed;
    std::vector<char> keep;  // per Coeffs index

    Coeffs apply(const Coeffs& c) const {
        Coeffs r = c;
        for (std::size_t i : removed) r.c[i] = 0.0;
        return r;
    }
    Mat matrix() const {
        Mat P = Mat::Zero(keep.size(), keep.size());
        for (std::size_t i = 0; i < keep.size(); ++i) P(i, i) = keep[i] ? 1.0 : 0.0;
        return P;
    }
};

inline Projector make_projector(ProjectorKind kind, const Basis& b) {
    Projector P;
    P.kind = kind;
    P.keep.assign(b.ncoef(), 1);
    for (std::size_t i = 0; i < b.ncoef(); ++i) {
        auto n = b.mode_multi(i / b.nf);
        int mode = int(i % b.nf), m = fourier_freq(mode);
        int deg = n[0] + n[1] + n[2];
        bool rm = false;
        switch (kind) {
            case ProjectorKind::P18: rm = b.eigvals[i] <= 1e-14; break;
            case ProjectorKind::P6: rm = (deg == 0 && m <= 1) || (deg == 1 && m == 0); break;
            case ProjectorKind::P1: rm = deg == 0 && m == 0; break;
            case ProjectorKind::Gamma: rm = m <= 1; break;
        }
        if (rm) {
            P.removed.push_back(i);
            P.keep[i] = 0;
        }
    }
    return P;
}

// e^{-t P op P} on the range of P, per Fourier block
struct Propagator {
    const Basis* basis = nullptr;
    std::vector<std::vector<std::size_t>> kept;  // per block, y-mode indices kept
    std::vector<Mat> vecs;
    std::vector<Vec> vals;

    Propagator(const OperatorMatrix& op, const Projector& P, const Basis& b) : basis(&b) {
        if (op.nf != b.nf || op.blocks.empty() || std::size_t(op.blocks[0].rows()) != b.nymodes() ||
            P.keep.size() != b.ncoef())
            throw std::invalid_argument("semigroup: projector or operator does not match the basis");
        kept.resize(b.nf);
        vecs.resize(b.nf);
        vals.resize(b.nf);
        for (int m = 0; m < b.nf; ++m) {
            for (std::size_t j = 0; j < b.nymodes(); ++j)
                if (P.keep[j * b.nf + m]) kept[m].push_back(j);
            const int k = int(kept[m].size());
            Mat S(k, k);
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) S(i, j) = op.blocks[m](kept[m][i], kept[m][j]);
            Eigen::SelfAdjointEigenSolver<Mat> es(S);
            vecs[m] = es.eigenvectors();
            vals[m] = es.eigenvalues();
        }
    }
    double lowest() const {
        double l = std::numeric_limits<double>::infinity();
        for (auto& v : vals)
            if (v.size()) l = std::min(l, v.minCoeff());
        return l;
    }
    Coeffs apply(const Coeffs& c, double t) const {
        const Basis& b = *basis;
        Coeffs r = b.zero_coeffs();
        for (int m = 0; m < b.nf; ++m) {
            const int k = int(kept[m].size());
            if (!k) continue;
            Vec x(k);
            for (int i = 0; i < k; ++i) x(i) = c.c[kept[m][i] * b.nf + m];
            Vec e = (-t * vals[m].array()).exp();
            Vec y = vecs[m] * (e.asDiagonal() * (vecs[m].transpose() * x));
            for (int i = 0; i < k; ++i) r.c[kept[m][i] * b.nf + m] = y(i);
        }
        return r;
    }
};

struct DecayRow {
    double dtau = 0.0;
    double l2_ratio = 0.0;    // operator norm in the weighted L2 sense
    double linf_ratio = 0.0;  // max probe ratio in the <y>^{-k}-weighted sup norm
};

struct DecayReport {
    std::vector<DecayRow> rows;
    double l2_rate = 0.0;    // -lowest eigenvalue on the range
    double linf_rate = 0.0;  // least squares slope of log ratio vs dtau
    double linf_C = 0.0;     // exp(intercept)
    double linf_C_envelope = 0.0;  // smallest C with ratio <= C e^{rate dtau} at every row
    int probes = 0;
};

inline double weighted_sup(const Field& f, const Basis& b, int k) {
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) m = std::max(m, std::pow(1.0 + b.radius2(i), -0.5 * k) * std::abs(f[i]));
    return m;
}

// probes: each kept basis function plus n_random random resolved fields in the range of P
inline DecayReport semigroup_decay(const OperatorMatrix& op, const Projector& P, const Basis& b,
                                   const std::vector<double>& dtaus, int k, int n_random = 100,
                                   std::uint64_t seed = 12345) {
    for (double t : dtaus)
        if (t < 0.1 || t > 10.0) throw std::invalid_argument("semigroup_decay: dtau outside [0.1, 10]");
    Propagator U(op, P, b);
    DecayReport rep;
    rep.l2_rate = -U.lowest();
    for (double t : dtaus) rep.rows.push_back({t, std::exp(-t * U.lowest()), 0.0});

    // single basis functions stay in their Fourier block; the theta factor cancels in the ratio
    Mat Psi = tensor_psi(b);
    Vec wk(b.nynodes());
    for (std::size_t i = 0; i < b.nynodes(); ++i) {
        auto a = b.node_multi(i);
        double r2 = 0.0;
        for (int q = 0; q < b.d; ++q) r2 += b.nodes_y[a[q]] * b.nodes_y[a[q]];
        wk(i) = std::pow(1.0 + r2, -0.5 * k);
    }
    auto col_sup = [&](const Mat& Y) {
        return Vec((wk.asDiagonal() * Y).cwiseAbs().colwise().maxCoeff().transpose());
    };
    for (int m = 0; m < b.nf; ++m) {
        const int kk = int(U.kept[m].size());
        if (!kk) continue;
        Mat Pk(Psi.rows(), kk);
        for (int j = 0; j < kk; ++j) Pk.col(j) = Psi.col(U.kept[m][j]);
        Vec s0 = col_sup(Pk);
        rep.probes += kk;
        for (std::size_t r = 0; r < dtaus.size(); ++r) {
            Vec e = (-dtaus[r] * U.vals[m].array()).exp();
            Mat Um = U.vecs[m] * e.asDiagonal() * U.vecs[m].transpose();
            Vec s1 = col_sup(Pk * Um);
            for (int j = 0; j < kk; ++j)
                if (s0(j) > 0) rep.rows[r].linf_ratio = std::max(rep.rows[r].linf_ratio, s1(j) / s0(j));
        }
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int r = 0; r < n_random; ++r) {
        Coeffs c = b.zero_coeffs();
        for (std::size_t i = 0; i < b.ncoef(); ++i) {
            if (!P.keep[i]) continue;
            auto n = b.mode_multi(i / b.nf);
            c[i] = N(rng) * std::pow(0.7, n[0] + n[1] + n[2] + fourier_freq(int(i % b.nf)));
        }
        double f0 = weighted_sup(synthesize(c, b), b, k);
        if (f0 == 0.0) continue;
        ++rep.probes;
        for (std::size_t q = 0; q < dtaus.size(); ++q) {
            double f1 = weighted_sup(synthesize(U.apply(c, dtaus[q]), b), b, k);
            rep.rows[q].linf_ratio = std::max(rep.rows[q].linf_ratio, f1 / f0);
        }
    }
    // fit log ratio = log C + rate * dtau
    const std::size_t n = rep.rows.size();
    if (n >= 2) {
        double mx = 0, my = 0;
        for (auto& r : rep.rows) mx += r.dtau, my += std::log(r.linf_ratio);
        mx /= n;
        my /= n;
        double sxy = 0, sxx = 0;
        for (auto& r : rep.rows) sxy += (r.dtau - mx) * (std::log(r.linf_ratio) - my), sxx += (r.dtau - mx) * (r.dtau - mx);
        rep.linf_rate = sxy / sxx;
        rep.linf_C = std::exp(my - rep.linf_rate * mx);
        for (auto& r : rep.rows)
            rep.linf_C_envelope = std::max(rep.linf_C_envelope, r.linf_ratio * std::exp(-rep.linf_rate * r.dtau));
    }
    return rep;
}

}  // namespace neckpinch
