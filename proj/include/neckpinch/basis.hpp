#pragma once
// Hermite-Fourier spectral basis on R^d x S^1 with Gaussian weight e^{-|x|^2/(4 s^2)}.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace neckpinch {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Nodal values, row-major over (y_1, ..., y_d, theta).
struct Field {
    int d = 1, nq = 0, mtheta = 0;
    std::vector<double> v;

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
    std::size_t size() const { return v.size(); }
};

// Coefficients against orthonormal basis functions, row-major over (n_1, ..., n_d, mode).
// mode 0 is the constant, mode 2m-1 is cos(m theta), mode 2m is sin(m theta).
struct Coeffs {
    int d = 1, ny = 0, nf = 0;
    std::vector<double> c;

    double& operator[](std::size_t i) { return c[i]; }
    double operator[](std::size_t i) const { return c[i]; }
    std::size_t size() const { return c.size(); }
};

inline Field& operator+=(Field& a, const Field& b) {
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
    return a;
}
inline Field& operator-=(Field& a, const Field& b) {
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] -= b.v[i];
    return a;
}
inline Field operator+(Field a, const Field& b) { return a += b; }
inline Field operator-(Field a, const Field& b) { return a -= b; }
inline Field operator*(double s, Field a) {
    for (auto& x : a.v) x *= s;
    return a;
}

inline Coeffs& operator+=(Coeffs& a, const Coeffs& b) {
    for (std::size_t i = 0; i < a.c.size(); ++i) a.c[i] += b.c[i];
    return a;
}
inline Coeffs operator+(Coeffs a, const Coeffs& b) { return a += b; }
inline Coeffs operator-(Coeffs a, const Coeffs& b) {
    for (std::size_t i = 0; i < a.c.size(); ++i) a.c[i] -= b.c[i];
    return a;
}
inline Coeffs operator*(double s, Coeffs a) {
    for (auto& x : a.c) x *= s;
    return a;
}

inline int fourier_freq(int mode) { return (mode + 1) / 2; }
// 0 constant, 1 cosine, 2 sine
inline int fourier_kind(int mode) { return mode == 0 ? 0 : (mode % 2 == 1 ? 1 : 2); }

// Gauss-Hermite rule for e^{-x^2}: Golub-Welsch, then Newton polish on the
// orthonormal recurrence and Christoffel weights.
inline void gauss_hermite(int n, std::vector<double>& x, std::vector<double>& w) {
    Mat J = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(0.5 * k);
    Eigen::SelfAdjointEigenSolver<Mat> es(J);
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    const double h0 = std::pow(std::numbers::pi, -0.25);
    for (int i = 0; i < n; ++i) {
        double xi = es.eigenvalues()(i);
        for (int it = 0; it < 3; ++it) {
            double hm = 0.0, h = h0;
            for (int k = 0; k < n; ++k) {
                double hp = xi * std::sqrt(2.0 / (k + 1)) * h - std::sqrt(double(k) / (k + 1)) * hm;
                hm = h;
                h = hp;
            }
            // h = h_n(xi), hm = h_{n-1}(xi); h_n' = sqrt(2n) h_{n-1}
            double dh = std::sqrt(2.0 * n) * hm;
            if (dh == 0.0) break;
            xi -= h / dh;
        }
        double s = 0.0, hm = 0.0, h = h0;
        for (int k = 0; k < n; ++k) {
            s += h * h;
            double hp = xi * std::sqrt(2.0 / (k + 1)) * h - std::sqrt(double(k) / (k + 1)) * hm;
            hm = h;
            h = hp;
        }
        x[i] = xi;
        w[i] = 1.0 / s;
    }
    // exact symmetry
    for (int i = 0; i < n / 2; ++i) {
        double a = 0.5 * (x[n - 1 - i] - x[i]);
        double b = 0.5 * (w[i] + w[n - 1 - i]);
        x[i] = -a;
        x[n - 1 - i] = a;
        w[i] = w[n - 1 - i] = b;
    }
    if (n % 2 == 1) x[n / 2] = 0.0;
}

struct Basis {
    int d = 1, ny = 0, ntheta = 0;
    double scale = 1.0;  // nodes x = scale*y, weight e^{-x^2/(4 scale^2)}
    int nq = 0, mtheta = 0, nf = 0;
    std::vector<double> nodes_y, weights_y;
    std::vector<double> nodes_theta;
    double weight_theta = 0.0;
    Mat psi;        // nq x ny, psi_n(x_i)
    Mat proj;       // ny x nq, w_i psi_n(x_i)
    Mat dmat;       // ny x ny, d/dx in coefficient space
    Mat trig;       // mtheta x nf
    Mat trig_proj;  // nf x mtheta
    std::vector<double> eigvals;  // flattened like Coeffs

    std::size_t npts() const { return ipow(nq, d) * mtheta; }
    std::size_t ncoef() const { return ipow(ny, d) * nf; }
    std::size_t nynodes() const { return ipow(nq, d); }
    std::size_t nymodes() const { return ipow(ny, d); }

    static std::size_t ipow(int b, int e) {
        std::size_t r = 1;
        for (int i = 0; i < e; ++i) r *= std::size_t(b);
        return r;
    }

    Field zero_field() const { return Field{d, nq, mtheta, std::vector<double>(npts(), 0.0)}; }
    Coeffs zero_coeffs() const { return Coeffs{d, ny, nf, std::vector<double>(ncoef(), 0.0)}; }

    // y-multi-index of flat y-node index (without theta)
    std::array<int, 3> node_multi(std::size_t iy) const {
        std::array<int, 3> m{0, 0, 0};
        for (int k = d - 1; k >= 0; --k) {
            m[k] = int(iy % nq);
            iy /= nq;
        }
        return m;
    }
    std::array<int, 3> mode_multi(std::size_t in) const {
        std::array<int, 3> m{0, 0, 0};
        for (int k = d - 1; k >= 0; --k) {
            m[k] = int(in % ny);
            in /= ny;
        }
        return m;
    }
    std::size_t mode_index(const std::array<int, 3>& n, int mode) const {
        std::size_t idx = 0;
        for (int k = 0; k < d; ++k) idx = idx * ny + n[k];
        return idx * nf + mode;
    }
    // coordinate k of flat field index
    double coord(std::size_t i, int k) const {
        return nodes_y[node_multi(i / mtheta)[k]];
    }
    double theta(std::size_t i) const { return nodes_theta[i % mtheta]; }
    double radius2(std::size_t i) const {
        double r2 = 0.0;
        auto m = node_multi(i / mtheta);
        for (int k = 0; k < d; ++k) r2 += nodes_y[m[k]] * nodes_y[m[k]];
        return r2;
    }
    // product quadrature weight for the measure e^{-|x|^2/(4 s^2)} dx dtheta
    double weight(std::size_t i) const {
        auto m = node_multi(i / mtheta);
        double w = weight_theta;
        for (int k = 0; k < d; ++k) w *= weights_y[m[k]];
        return w;
    }

    // psi_n(x) for n < count, normalized in L^2(e^{-x^2/(4 s^2)} dx)
    std::vector<double> psi_at(double x, int count) const {
        std::vector<double> out(count);
        double t = x / (2.0 * scale);
        double h0 = std::pow(std::numbers::pi, -0.25) / std::sqrt(2.0 * scale);
        double hm = 0.0, h = h0;
        for (int k = 0; k < count; ++k) {
            out[k] = h;
            double hp = t * std::sqrt(2.0 / (k + 1)) * h - std::sqrt(double(k) / (k + 1)) * hm;
            hm = h;
            h = hp;
        }
        return out;
    }
    Mat psi_matrix(const std::vector<double>& xs) const {
        Mat P(xs.size(), ny);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            auto r = psi_at(xs[i], ny);
            for (int n = 0; n < ny; ++n) P(i, n) = r[n];
        }
        return P;
    }
    std::vector<double> trig_at(double th) const {
        std::vector<double> out(nf);
        out[0] = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        double s = 1.0 / std::sqrt(std::numbers::pi);
        for (int m = 1; m <= ntheta; ++m) {
            out[2 * m - 1] = s * std::cos(m * th);
            out[2 * m] = s * std::sin(m * th);
        }
        return out;
    }

    // squared L^2_w norm of the unnormalized polynomial H_{n}(x/(2s)) * trig
    double poly_norm2(const std::array<int, 3>& n, int mode) const {
        double r = fourier_kind(mode) == 0 ? 2.0 * std::numbers::pi : std::numbers::pi;
        for (int k = 0; k < d; ++k) {
            double h = 2.0 * scale * std::sqrt(std::numbers::pi);
            for (int j = 1; j <= n[k]; ++j) h *= 2.0 * j;
            r *= h;
        }
        return r;
    }
    // coefficient of the unnormalized polynomial basis function
    double poly_coefficient(const Coeffs& c, const std::array<int, 3>& n, int mode) const {
        return c[mode_index(n, mode)] / std::sqrt(poly_norm2(n, mode));
    }
    double eigval(const std::array<int, 3>& n, int mode) const {
        int m = fourier_freq(mode);
        int s = 0;
        for (int k = 0; k < d; ++k) s += n[k];
        return 0.5 * s + 0.5 * m * m - 1.0;
    }
};

inline Basis build_basis(int d, int ny, int ntheta, double scale = 1.0) {
    if (d < 1 || d > 3) throw std::invalid_argument("build_basis: d must be 1, 2 or 3");
    if (ny < 6) throw std::invalid_argument("build_basis: Ny < 6 cannot hold the low modes");
    if (ntheta < 1) throw std::invalid_argument("build_basis: Ntheta must be >= 1");
    if (ny > 120) throw std::invalid_argument("build_basis: Ny > 120 not supported");
    if (!(scale > 0.0)) throw std::invalid_argument("build_basis: scale must be positive");
    Basis b;
    b.d = d;
    b.ny = ny;
    b.ntheta = ntheta;
    b.scale = scale;
    b.nq = (3 * ny + 1) / 2;
    b.mtheta = 4 * ntheta + 1;
    b.nf = 2 * ntheta + 1;

    std::vector<double> x, w;
    gauss_hermite(b.nq, x, w);
    b.nodes_y.resize(b.nq);
    b.weights_y.resize(b.nq);
    for (int i = 0; i < b.nq; ++i) {
        b.nodes_y[i] = 2.0 * scale * x[i];
        b.weights_y[i] = 2.0 * scale * w[i];
    }
    b.psi = b.psi_matrix(b.nodes_y);
    b.proj = b.psi.transpose();
    for (int i = 0; i < b.nq; ++i) b.proj.col(i) *= b.weights_y[i];

    b.dmat = Mat::Zero(ny, ny);
    for (int n = 1; n < ny; ++n) b.dmat(n - 1, n) = std::sqrt(0.5 * n) / scale;

    b.nodes_theta.resize(b.mtheta);
    b.weight_theta = 2.0 * std::numbers::pi / b.mtheta;
    b.trig.resize(b.mtheta, b.nf);
    for (int j = 0; j < b.mtheta; ++j) {
        b.nodes_theta[j] = 2.0 * std::numbers::pi * j / b.mtheta;
        auto t = b.trig_at(b.nodes_theta[j]);
        for (int m = 0; m < b.nf; ++m) b.trig(j, m) = t[m];
    }
    b.trig_proj = b.weight_theta * b.trig.transpose();

    b.eigvals.resize(b.ncoef());
    for (std::size_t in = 0; in < b.nymodes(); ++in)
        for (int m = 0; m < b.nf; ++m) b.eigvals[in * b.nf + m] = b.eigval(b.mode_multi(in), m);
    return b;
}

namespace detail {

// out = A applied along `axis` of a row-major tensor with extents dims[0..rank)
inline std::vector<double> apply_axis(const Mat& A, const std::vector<double>& in,
                                      const std::vector<int>& dims, int axis) {
    std::size_t pre = 1, post = 1;
    for (int k = 0; k < axis; ++k) pre *= dims[k];
    for (std::size_t k = axis + 1; k < dims.size(); ++k) post *= dims[k];
    const int n = dims[axis];
    const int m = int(A.rows());
    std::vector<double> out(pre * m * post);
    if (post == 1) {
        Eigen::Map<const RowMat> X(in.data(), pre, n);
        Eigen::Map<RowMat> Y(out.data(), pre, m);
        Y.noalias() = X * A.transpose();
    } else {
        for (std::size_t p = 0; p < pre; ++p) {
            Eigen::Map<const RowMat> X(in.data() + p * n * post, n, post);
            Eigen::Map<RowMat> Y(out.data() + p * m * post, m, post);
            Y.noalias() = A * X;
        }
    }
    return out;
}

}  // namespace detail

inline void check_grid(const Field& f, const Basis& b) {
    if (f.d != b.d || f.nq != b.nq || f.mtheta != b.mtheta || f.v.size() != b.npts())
        throw std::invalid_argument("field does not live on this grid");
}
inline void check_coeffs(const Coeffs& c, const Basis& b) {
    if (c.d != b.d || c.ny != b.ny || c.nf != b.nf || c.c.size() != b.ncoef())
        throw std::invalid_argument("coefficients do not match this basis");
}

inline Coeffs analyze(const Field& f, const Basis& b) {
    check_grid(f, b);
    std::vector<int> dims(b.d + 1, b.nq);
    dims[b.d] = b.mtheta;
    auto t = detail::apply_axis(b.trig_proj, f.v, dims, b.d);
    dims[b.d] = b.nf;
    for (int k = 0; k < b.d; ++k) {
        t = detail::apply_axis(b.proj, t, dims, k);
        dims[k] = b.ny;
    }
    return Coeffs{b.d, b.ny, b.nf, std::move(t)};
}

// synthesis with arbitrary per-axis evaluation matrices (rows = points on that axis)
inline std::vector<double> synthesize_with(const Coeffs& c, const Basis& b, const Mat& py,
                                           const Mat& pt) {
    std::vector<int> dims(b.d + 1, b.ny);
    dims[b.d] = b.nf;
    auto t = c.c;
    for (int k = 0; k < b.d; ++k) {
        t = detail::apply_axis(py, t, dims, k);
        dims[k] = int(py.rows());
    }
    return detail::apply_axis(pt, t, dims, b.d);
}

inline Field synthesize(const Coeffs& c, const Basis& b) {
    check_coeffs(c, b);
    return Field{b.d, b.nq, b.mtheta, synthesize_with(c, b, b.psi, b.trig)};
}

inline double inner(const Field& f, const Field& g, const Basis& b) {
    check_grid(f, b);
    check_grid(g, b);
    double s = 0.0;
    for (std::size_t i = 0; i < f.v.size(); ++i) s += b.weight(i) * f.v[i] * g.v[i];
    return s;
}

inline Coeffs apply_L0(const Coeffs& c, const Basis& b) {
    check_coeffs(c, b);
    Coeffs r = c;
    for (std::size_t i = 0; i < r.c.size(); ++i) r.c[i] *= b.eigvals[i];
    return r;
}

// d/dy_axis in coefficient space
inline Coeffs deriv_y(const Coeffs& c, const Basis& b, int axis) {
    std::vector<int> dims(b.d + 1, b.ny);
    dims[b.d] = b.nf;
    return Coeffs{b.d, b.ny, b.nf, detail::apply_axis(b.dmat, c.c, dims, axis)};
}

inline Coeffs deriv_theta(const Coeffs& c, const Basis& b) {
    Coeffs r = b.zero_coeffs();
    for (std::size_t in = 0; in < b.nymodes(); ++in) {
        const double* src = &c.c[in * b.nf];
        double* dst = &r.c[in * b.nf];
        for (int m = 1; m <= b.ntheta; ++m) {
            dst[2 * m - 1] = m * src[2 * m];
            dst[2 * m] = -m * src[2 * m - 1];
        }
    }
    return r;
}

// which: 0..d-1 for y axes, d for theta
inline Field spectral_derivative(const Field& f, const Basis& b, int which, int order) {
    if (order < 1 || order > 2) throw std::invalid_argument("spectral_derivative: order must be 1 or 2");
    if (which < 0 || which > b.d) throw std::invalid_argument("spectral_derivative: bad axis");
    if (which == b.d) {
        // theta only: stay on the y nodes, avoids the y round trip at far nodes
        check_grid(f, b);
        Mat D = Mat::Zero(b.nf, b.nf);
        for (int m = 1; m <= b.ntheta; ++m) {
            D(2 * m - 1, 2 * m) = m;
            D(2 * m, 2 * m - 1) = -m;
        }
        Mat A = b.trig * (order == 1 ? D : Mat(D * D)) * b.trig_proj;
        std::vector<int> dims(b.d + 1, b.nq);
        dims[b.d] = b.mtheta;
        return Field{b.d, b.nq, b.mtheta, detail::apply_axis(A, f.v, dims, b.d)};
    }
    Coeffs c = analyze(f, b);
    for (int o = 0; o < order; ++o) c = deriv_y(c, b, which);
    return synthesize(c, b);
}

// point evaluation of an expansion
inline double evaluate(const Coeffs& c, const Basis& b, const std::array<double, 3>& y, double th) {
    std::array<std::vector<double>, 3> p;
    for (int k = 0; k < b.d; ++k) p[k] = b.psi_at(y[k], b.ny);
    auto t = b.trig_at(th);
    double s = 0.0;
    for (std::size_t in = 0; in < b.nymodes(); ++in) {
        auto n = b.mode_multi(in);
        double py = 1.0;
        for (int k = 0; k < b.d; ++k) py *= p[k][n[k]];
        if (py == 0.0) continue;
        for (int m = 0; m < b.nf; ++m) s += c.c[in * b.nf + m] * py * t[m];
    }
    return s;
}

template <class F>
Field make_field(const Basis& b, F&& fn) {
    Field f = b.zero_field();
    for (std::size_t i = 0; i < f.v.size(); ++i) {
        std::array<double, 3> y{0.0, 0.0, 0.0};
        auto m = b.node_multi(i / b.mtheta);
        for (int k = 0; k < b.d; ++k) y[k] = b.nodes_y[m[k]];
        f.v[i] = fn(y, b.theta(i));
    }
    return f;
}

inline Field constant_field(const Basis& b, double value) {
    Field f = b.zero_field();
    for (auto& x : f.v) x = value;
    return f;
}

}  // namespace neckpinch
