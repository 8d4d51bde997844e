#pragma once

#include <cmath>
#include <complex>
#include <concepts>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spinlat/quadrature.hpp"
#include "spinlat/wigner.hpp"

namespace spinlat {

// Tensor quadrature on S^2 for the normalized measure mu_0 (total mass 1):
// Gauss-Legendre in cos(theta) x uniform in phi. Exact on Y_{l,m} conj(Y_{l',m'})
// whenever l + l' <= exactness_degree.
struct SphereQuadrature {
    int exactness_degree = 0;
    std::vector<double> theta, wtheta;  // wtheta sums to 1
    int n_phi = 1;                      // phi_k = 2 pi k / n_phi, weight 1/n_phi each

    std::size_t size() const { return theta.size() * static_cast<std::size_t>(n_phi); }
    double phi(int k) const { return 2.0 * std::numbers::pi * k / n_phi; }

    std::vector<std::pair<double, double>> nodes() const {
        std::vector<std::pair<double, double>> out;
        out.reserve(size());
        for (std::size_t i = 0; i < theta.size(); ++i)
            for (int k = 0; k < n_phi; ++k) out.emplace_back(theta[i], phi(k));
        return out;
    }
    std::vector<double> weights() const {
        std::vector<double> out;
        out.reserve(size());
        for (std::size_t i = 0; i < theta.size(); ++i)
            for (int k = 0; k < n_phi; ++k) out.push_back(wtheta[i] / n_phi);
        return out;
    }
};

inline SphereQuadrature quad_rule(int degree) {
    if (degree < 0) throw std::domain_error("quad_rule: degree < 0");
    SphereQuadrature q;
    q.exactness_degree = degree;
    const int n_theta = (degree + 2) / 2 > 0 ? (degree + 2) / 2 : 1;
    GaussLegendre gl(n_theta);
    q.theta.resize(n_theta);
    q.wtheta.resize(n_theta);
    for (int i = 0; i < n_theta; ++i) {
        q.theta[i] = std::acos(gl.nodes[i]);
        q.wtheta[i] = 0.5 * gl.weights[i];
    }
    q.n_phi = degree + 1;
    return q;
}

// Band-limited function on S^2 stored by Fourier-Laplace coefficients
// a = sum a(l,m) Y_{l,m}, dense over l <= band_limit.
class SphericalFunction {
  public:
    SphericalFunction() = default;
    explicit SphericalFunction(int band_limit)
        : band_(band_limit), c_((band_limit + 1) * (band_limit + 1), Complex(0, 0)) {}

    static SphericalFunction constant(Complex v) {
        SphericalFunction f(0);
        f.set(0, 0, v);
        return f;
    }
    static SphericalFunction harmonic(int l, int m, Complex coeff = 1.0) {
        SphericalFunction f(l);
        f.set(l, m, coeff);
        return f;
    }

    int band_limit() const { return band_; }
    Complex coeff(int l, int m) const {
        if (l < 0 || l > band_ || std::abs(m) > l) return Complex(0, 0);
        return c_[idx(l, m)];
    }
    void set(int l, int m, Complex v) {
        if (l < 0 || l > band_ || std::abs(m) > l)
            throw std::domain_error("SphericalFunction::set: index out of band");
        c_[idx(l, m)] = v;
    }
    void add(int l, int m, Complex v) {
        if (l > band_) grow(l);
        c_[idx(l, m)] += v;
    }

    // Highest l carrying a coefficient above tol.
    int trimmed_band(double tol = 0.0) const {
        for (int l = band_; l >= 1; --l)
            for (int m = -l; m <= l; ++m)
                if (std::abs(coeff(l, m)) > tol) return l;
        return 0;
    }

    SphericalFunction truncated(int new_band) const {
        SphericalFunction out(new_band);
        for (int l = 0; l <= std::min(band_, new_band); ++l)
            for (int m = -l; m <= l; ++m) out.set(l, m, coeff(l, m));
        return out;
    }

    Complex operator()(double theta, double phi) const { return synthesize(theta, phi); }

    Complex synthesize(double theta, double phi) const {
        const double x = std::cos(theta);
        Complex out(0, 0);
        for (int l = 0; l <= band_; ++l)
            for (int m = -l; m <= l; ++m) {
                const Complex cm = c_[idx(l, m)];
                if (cm == Complex(0, 0)) continue;
                out += cm * norm_legendre(l, m, x) * std::polar(1.0, m * phi);
            }
        return out;
    }

    // a^* in the function sense: conj(coeff(l,m)) -> (-1)^m slot (l,-m).
    SphericalFunction adjoint() const {
        SphericalFunction out(band_);
        for (int l = 0; l <= band_; ++l)
            for (int m = -l; m <= l; ++m) {
                const double sign = (m % 2 == 0) ? 1.0 : -1.0;
                out.set(l, -m, sign * std::conj(coeff(l, m)));
            }
        return out;
    }

    bool is_selfadjoint(double tol = 1e-12) const {
        for (int l = 0; l <= band_; ++l)
            for (int m = -l; m <= l; ++m) {
                const double sign = (m % 2 == 0) ? 1.0 : -1.0;
                if (std::abs(coeff(l, -m) - sign * std::conj(coeff(l, m))) > tol) return false;
            }
        return true;
    }

    SphericalFunction& operator+=(const SphericalFunction& o) {
        if (o.band_ > band_) grow(o.band_);
        for (int l = 0; l <= o.band_; ++l)
            for (int m = -l; m <= l; ++m) c_[idx(l, m)] += o.coeff(l, m);
        return *this;
    }
    SphericalFunction& operator*=(Complex s) {
        for (auto& v : c_) v *= s;
        return *this;
    }
    friend SphericalFunction operator+(SphericalFunction a, const SphericalFunction& b) {
        a += b;
        return a;
    }
    friend SphericalFunction operator*(Complex s, SphericalFunction f) {
        f *= s;
        return f;
    }
    friend SphericalFunction operator-(SphericalFunction a, const SphericalFunction& b) {
        SphericalFunction nb = b;
        nb *= Complex(-1, 0);
        a += nb;
        return a;
    }

  private:
    static int idx_static(int l, int m) { return l * l + l + m; }
    int idx(int l, int m) const { return l * l + l + m; }
    void grow(int new_band) {
        std::vector<Complex> nc((new_band + 1) * (new_band + 1), Complex(0, 0));
        for (int l = 0; l <= band_; ++l)
            for (int m = -l; m <= l; ++m) nc[idx_static(l, m)] = c_[idx(l, m)];
        band_ = new_band;
        c_ = std::move(nc);
    }

    int band_ = 0;
    std::vector<Complex> c_{Complex(0, 0)};
};

// Grid of function values on a SphereQuadrature, theta-major.
using GridValues = std::vector<Complex>;

template <typename Fn>
inline GridValues sample_grid(const SphereQuadrature& q, Fn&& fn) {
    GridValues out(q.size());
    std::size_t n = 0;
    for (std::size_t i = 0; i < q.theta.size(); ++i)
        for (int k = 0; k < q.n_phi; ++k) out[n++] = fn(q.theta[i], q.phi(k));
    return out;
}

inline Complex integrate(const SphereQuadrature& q, const GridValues& vals) {
    Complex s(0, 0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < q.theta.size(); ++i)
        for (int k = 0; k < q.n_phi; ++k) s += vals[n++] * (q.wtheta[i] / q.n_phi);
    return s;
}

struct Analyzed {
    SphericalFunction fn;
    bool exact = true;  // false when the rule cannot resolve the requested band
};

// Fourier-Laplace analysis: a(l,m) = (2l+1) <Y_{l,m}|a>_{L2(mu_0)} by quadrature.
inline Analyzed analyze(const SphereQuadrature& q, const GridValues& vals, int lmax) {
    Analyzed out;
    out.exact = q.exactness_degree >= 2 * lmax;
    out.fn = SphericalFunction(lmax);
    const std::size_t nt = q.theta.size();
    const int np = q.n_phi;
    // phi transform first: A_m(i) = (1/np) sum_k vals(i,k) e^{-im phi_k}
    std::vector<Complex> am(nt * (2 * lmax + 1));
    for (std::size_t i = 0; i < nt; ++i) {
        for (int m = -lmax; m <= lmax; ++m) {
            Complex s(0, 0);
            for (int k = 0; k < np; ++k)
                s += vals[i * np + k] * std::polar(1.0, -m * q.phi(k));
            am[i * (2 * lmax + 1) + (m + lmax)] = s / double(np);
        }
    }
    for (int l = 0; l <= lmax; ++l)
        for (int m = -l; m <= l; ++m) {
            Complex s(0, 0);
            for (std::size_t i = 0; i < nt; ++i)
                s += q.wtheta[i] * norm_legendre(l, m, std::cos(q.theta[i])) *
                     am[i * (2 * lmax + 1) + (m + lmax)];
            out.fn.set(l, m, double(2 * l + 1) * s);
        }
    return out;
}

template <typename Fn>
    requires std::invocable<Fn&, double, double>
inline Analyzed analyze(const SphereQuadrature& q, Fn&& fn, int lmax) {
    return analyze(q, sample_grid(q, std::forward<Fn>(fn)), lmax);
}

inline GridValues synthesize_grid(const SphereQuadrature& q, const SphericalFunction& f) {
    return sample_grid(q, [&](double th, double ph) { return f.synthesize(th, ph); });
}

// Pointwise product via the Clebsch-Gordan expansion of Y_{l1,m1} Y_{l2,m2}.
namespace detail {

inline const std::vector<std::pair<int, double>>& y_product_expansion(int l1, int m1, int l2,
                                                                      int m2) {
    static std::unordered_map<std::uint64_t, std::vector<std::pair<int, double>>> cache;
    static std::mutex mtx;
    const std::uint64_t key = pack6({l1, m1, l2, m2, 0, 1});
    {
        std::lock_guard<std::mutex> lock(mtx);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    std::vector<std::pair<int, double>> exp;
    const int m = m1 + m2;
    for (int L = std::abs(l1 - l2); L <= l1 + l2; ++L) {
        if (std::abs(m) > L) continue;
        const double c = cg_int(l1, 0, l2, 0, L, 0) * cg_int(l1, m1, l2, m2, L, m);
        if (c != 0.0) exp.emplace_back(L, c);
    }
    std::lock_guard<std::mutex> lock(mtx);
    return cache.emplace(key, std::move(exp)).first->second;
}

}  // namespace detail

inline SphericalFunction product(const SphericalFunction& f, const SphericalFunction& g) {
    SphericalFunction out(f.band_limit() + g.band_limit());
    for (int l1 = 0; l1 <= f.band_limit(); ++l1)
        for (int m1 = -l1; m1 <= l1; ++m1) {
            const Complex cf = f.coeff(l1, m1);
            if (cf == Complex(0, 0)) continue;
            for (int l2 = 0; l2 <= g.band_limit(); ++l2)
                for (int m2 = -l2; m2 <= l2; ++m2) {
                    const Complex cg_ = g.coeff(l2, m2);
                    if (cg_ == Complex(0, 0)) continue;
                    for (const auto& [L, w] : detail::y_product_expansion(l1, m1, l2, m2))
                        out.add(L, m1 + m2, cf * cg_ * w);
                }
        }
    return out;
}

// Poisson bracket {f,g} = kappa (d_theta f d_phi g - d_phi f d_theta g)/sin(theta),
// kappa = -2. The normalization is pinned by requiring the scaled-commutator
// defect of quantized Cartesian coordinates to vanish as j grows.
inline constexpr double kPoissonKappa = -2.0;

namespace detail {

struct GradGrid {
    GridValues dtheta, dphi;
};

inline GradGrid gradient_grid(const SphereQuadrature& q, const SphericalFunction& f) {
    GradGrid g;
    g.dtheta.assign(q.size(), Complex(0, 0));
    g.dphi.assign(q.size(), Complex(0, 0));
    std::size_t n = 0;
    for (std::size_t i = 0; i < q.theta.size(); ++i) {
        const double x = std::cos(q.theta[i]);
        for (int k = 0; k < q.n_phi; ++k, ++n) {
            const double ph = q.phi(k);
            Complex dt(0, 0), dp(0, 0);
            for (int l = 0; l <= f.band_limit(); ++l)
                for (int m = -l; m <= l; ++m) {
                    const Complex cm = f.coeff(l, m);
                    if (cm == Complex(0, 0)) continue;
                    const Complex ph_m = std::polar(1.0, m * ph);
                    dt += cm * norm_legendre_dtheta(l, m, x) * ph_m;
                    dp += cm * Complex(0, m) * norm_legendre(l, m, x) * ph_m;
                }
            g.dtheta[n] = dt;
            g.dphi[n] = dp;
        }
    }
    return g;
}

}  // namespace detail

inline SphericalFunction poisson_bracket(const SphericalFunction& f, const SphericalFunction& g) {
    const int bf = f.band_limit(), bg = g.band_limit();
    if (bf == 0 || bg == 0) return SphericalFunction(0);
    const int out_band = bf + bg - 1;
    const SphereQuadrature q = quad_rule(2 * (bf + bg) + 2);
    const auto gf = detail::gradient_grid(q, f);
    const auto gg = detail::gradient_grid(q, g);
    GridValues vals(q.size());
    std::size_t n = 0;
    for (std::size_t i = 0; i < q.theta.size(); ++i) {
        const double s = std::sin(q.theta[i]);  // interior Gauss nodes, never 0
        for (int k = 0; k < q.n_phi; ++k, ++n)
            vals[n] = kPoissonKappa * (gf.dtheta[n] * gg.dphi[n] - gf.dphi[n] * gg.dtheta[n]) / s;
    }
    return analyze(q, vals, out_band).fn;
}

inline SphericalFunction laplace_beltrami(const SphericalFunction& f) {
    SphericalFunction out(f.band_limit());
    for (int l = 0; l <= f.band_limit(); ++l)
        for (int m = -l; m <= l; ++m) out.set(l, m, -double(l) * (l + 1) * f.coeff(l, m));
    return out;
}

// sup over a dense evaluation grid that includes the poles.
inline double sup_norm(const SphericalFunction& f) {
    const int b = std::max(f.band_limit(), 1);
    const int nt = 4 * b + 9, np = 8 * b + 9;
    double best = 0.0;
    for (int i = 0; i < nt; ++i) {
        const double th = std::numbers::pi * i / (nt - 1);
        for (int k = 0; k < np; ++k) {
            const double v = std::abs(f.synthesize(th, 2.0 * std::numbers::pi * k / np));
            if (v > best) best = v;
        }
    }
    return best;
}

// ||(1-Delta)^s f||_inf on the dense grid; s = 0 recovers the sup norm.
inline double spectral_sobolev_norm(const SphericalFunction& f, int s) {
    if (s < 0) throw std::domain_error("spectral_sobolev_norm: s < 0");
    SphericalFunction g(f.band_limit());
    for (int l = 0; l <= f.band_limit(); ++l) {
        const double scale = std::pow(1.0 + double(l) * (l + 1), s);
        for (int m = -l; m <= l; ++m) g.set(l, m, scale * f.coeff(l, m));
    }
    return sup_norm(g);
}

// Left rotation action (R f)(sigma) = f(R^{-1} sigma) on coefficients:
// (R f)^(l,k) = sum_m D^{(l)}_{k,m}(R) f^(l,m).
inline SphericalFunction rotate(const SphericalFunction& f, double alpha, double beta,
                                double gamma) {
    SphericalFunction out(f.band_limit());
    for (int l = 0; l <= f.band_limit(); ++l) {
        const Eigen::MatrixXcd D = wigner_D(HalfInt::from_int(l), alpha, beta, gamma);
        for (int k = -l; k <= l; ++k) {
            Complex s(0, 0);
            for (int m = -l; m <= l; ++m) s += D(l - k, l - m) * f.coeff(l, m);
            out.set(l, k, s);
        }
    }
    return out;
}

}  // namespace spinlat
