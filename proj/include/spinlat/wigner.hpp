#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <mutex>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "spinlat/halfint.hpp"

namespace spinlat {

using Complex = std::complex<double>;

namespace detail {

inline constexpr int kMaxFactorial = 400;

inline const long double* factorial_table() {
    static const auto table = [] {
        static long double t[kMaxFactorial + 1];
        t[0] = 1.0L;
        for (int n = 1; n <= kMaxFactorial; ++n) t[n] = t[n - 1] * n;
        return t;
    }();
    return table;
}

// n! for twice-valued arguments known to be even and nonnegative.
inline long double fact2v(int twice_n) {
    if (twice_n % 2 != 0 || twice_n < 0) throw std::domain_error("fact2v: not a nonnegative integer");
    const int n = twice_n / 2;
    if (n > kMaxFactorial) throw std::domain_error("fact2v: argument too large");
    return factorial_table()[n];
}

inline long double tri_factor(HalfInt a, HalfInt b, HalfInt c) {
    return sqrtl(fact2v(a.twice + b.twice - c.twice) * fact2v(a.twice - b.twice + c.twice) *
                 fact2v(-a.twice + b.twice + c.twice) / fact2v(a.twice + b.twice + c.twice + 2));
}

inline std::uint64_t pack6(std::array<int, 6> v) {
    std::uint64_t key = 0;
    for (int x : v) key = (key << 10) | static_cast<std::uint64_t>(x + 512);
    return key;
}

}  // namespace detail

// Associated Legendre P_{l,m}(x) with Condon-Shortley phase, upward recurrence in l.
inline double assoc_legendre(int l, int m, double x) {
    if (std::abs(x) > 1.0) throw std::domain_error("assoc_legendre: |x| > 1");
    if (l < 0 || std::abs(m) > l) throw std::domain_error("assoc_legendre: |m| > l");
    if (m < 0) {
        const int am = -m;
        const long double r = detail::fact2v(2 * (l - am)) / detail::fact2v(2 * (l + am));
        return static_cast<double>(((am % 2) ? -1.0L : 1.0L) * r *
                                   static_cast<long double>(assoc_legendre(l, am, x)));
    }
    long double pmm = 1.0L;
    if (m > 0) {
        const long double s = sqrtl((1.0L - x) * (1.0L + x));
        for (int k = 1; k <= m; ++k) pmm *= -(2 * k - 1) * s;
    }
    if (l == m) return static_cast<double>(pmm);
    long double pm1 = x * (2 * m + 1) * pmm;
    if (l == m + 1) return static_cast<double>(pm1);
    long double p = 0.0L;
    for (int ll = m + 2; ll <= l; ++ll) {
        p = (x * (2 * ll - 1) * pm1 - (ll + m - 1) * pmm) / (ll - m);
        pmm = pm1;
        pm1 = p;
    }
    return static_cast<double>(p);
}

// Normalized theta factor sqrt((l-m)!/(l+m)!) P_{l,m}(x); the theta part of Y_{l,m}.
inline double norm_legendre(int l, int m, double x) {
    if (std::abs(x) > 1.0) throw std::domain_error("norm_legendre: |x| > 1");
    if (l < 0 || std::abs(m) > l) throw std::domain_error("norm_legendre: |m| > l");
    const int am = std::abs(m);
    long double nmm = 1.0L;
    const long double s2 = (1.0L - x) * (1.0L + x);
    for (int k = 1; k <= am; ++k) nmm *= (2 * k - 1) / static_cast<long double>(2 * k);
    nmm = sqrtl(nmm) * powl(s2, 0.5L * am);
    if (am % 2) nmm = -nmm;
    long double val = nmm;
    if (l > am) {
        long double prev = nmm;
        long double cur = x * sqrtl(static_cast<long double>(2 * am + 1)) * nmm;
        for (int ll = am + 2; ll <= l; ++ll) {
            const long double next =
                (x * (2 * ll - 1) * cur -
                 sqrtl(static_cast<long double>((ll - 1 - am)) * (ll - 1 + am)) * prev) /
                sqrtl(static_cast<long double>((ll - am)) * (ll + am));
            prev = cur;
            cur = next;
        }
        val = cur;
    }
    if (m < 0 && (am % 2)) val = -val;
    return static_cast<double>(val);
}

// d/dtheta of norm_legendre(l, m, cos theta) via the same-degree ladder.
inline double norm_legendre_dtheta(int l, int m, double costheta) {
    double up = 0.0, dn = 0.0;
    if (m + 1 <= l) up = std::sqrt(double(l - m) * (l + m + 1)) * norm_legendre(l, m + 1, costheta);
    if (m - 1 >= -l) dn = std::sqrt(double(l + m) * (l - m + 1)) * norm_legendre(l, m - 1, costheta);
    return 0.5 * (up - dn);
}

// Y_{l,m}(theta,phi) = sqrt((l-m)!/(l+m)!) P_{l,m}(cos theta) e^{i m phi}.
// Normalized so that ||Y_{l,m}||_{L2(mu_l)} = 1 and sup |Y_{l,m}| <= 1.
inline Complex sph_harm(int l, int m, double theta, double phi) {
    if (l < 0 || std::abs(m) > l) throw std::domain_error("sph_harm: |m| > l");
    return norm_legendre(l, m, std::cos(theta)) * std::polar(1.0, m * phi);
}

struct CGKey {
    HalfInt j1, m1, j2, m2, j, m;
};

namespace detail {

inline double clebsch_gordan_eval(CGKey k) {
    const int a = k.j1.twice, al = k.m1.twice, b = k.j2.twice, be = k.m2.twice, c = k.j.twice,
              ga = k.m.twice;
    if (ga != al + be) return 0.0;
    if (std::abs(al) > a || std::abs(be) > b || std::abs(ga) > c) return 0.0;
    if ((a + al) % 2 || (b + be) % 2 || (c + ga) % 2) return 0.0;
    if (!triangle_ok(k.j1, k.j2, k.j)) return 0.0;

    const long double pref =
        tri_factor(k.j1, k.j2, k.j) *
        sqrtl((c + 1) * fact2v(c + ga) * fact2v(c - ga) * fact2v(a + al) * fact2v(a - al) *
              fact2v(b + be) * fact2v(b - be));

    // twice-valued loop bounds; all factorial arguments stay even.
    const int kmin = std::max({0, b - c - al, a - c + be});
    const int kmax = std::min({a + b - c, a - al, b + be});
    long double sum = 0.0L;
    for (int kk = kmin; kk <= kmax; kk += 2) {
        const long double term = 1.0L / (fact2v(kk) * fact2v(a + b - c - kk) * fact2v(a - al - kk) *
                                         fact2v(b + be - kk) * fact2v(c - b + al + kk) *
                                         fact2v(c - a - be + kk));
        sum += ((kk / 2) % 2) ? -term : term;
    }
    return static_cast<double>(pref * sum);
}

inline double six_j_eval(HalfInt a, HalfInt b, HalfInt c, HalfInt d, HalfInt e, HalfInt f) {
    if (!triangle_ok(a, b, c) || !triangle_ok(a, e, f) || !triangle_ok(d, b, f) ||
        !triangle_ok(d, e, c))
        return 0.0;
    const long double pref =
        tri_factor(a, b, c) * tri_factor(a, e, f) * tri_factor(d, b, f) * tri_factor(d, e, c);
    const int s1 = a.twice + b.twice + c.twice, s2 = a.twice + e.twice + f.twice,
              s3 = d.twice + b.twice + f.twice, s4 = d.twice + e.twice + c.twice;
    const int q1 = a.twice + b.twice + d.twice + e.twice,
              q2 = b.twice + c.twice + e.twice + f.twice,
              q3 = c.twice + a.twice + f.twice + d.twice;
    const int tmin = std::max({s1, s2, s3, s4});
    const int tmax = std::min({q1, q2, q3});
    long double sum = 0.0L;
    for (int t = tmin; t <= tmax; t += 2) {
        const long double term =
            fact2v(t + 2) / (fact2v(t - s1) * fact2v(t - s2) * fact2v(t - s3) * fact2v(t - s4) *
                             fact2v(q1 - t) * fact2v(q2 - t) * fact2v(q3 - t));
        sum += ((t / 2) % 2) ? -term : term;
    }
    return static_cast<double>(pref * sum);
}

// Write-once memo tables shared by all contexts.
template <typename Fn>
inline double memo6(std::array<int, 6> key, Fn&& fn) {
    static std::unordered_map<std::uint64_t, double> cache;
    static std::mutex mtx;
    const std::uint64_t packed = pack6(key);
    {
        std::lock_guard<std::mutex> lock(mtx);
        auto it = cache.find(packed);
        if (it != cache.end()) return it->second;
    }
    const double v = fn();
    std::lock_guard<std::mutex> lock(mtx);
    cache.emplace(packed, v);
    return v;
}

}  // namespace detail

// <j1 m1 j2 m2 | j m> via Racah's formula, long-double factorial accumulation.
inline double clebsch_gordan(CGKey k) {
    return detail::memo6({k.j1.twice, k.m1.twice, k.j2.twice, k.m2.twice, k.j.twice, k.m.twice},
                         [&] { return detail::clebsch_gordan_eval(k); });
}

inline double clebsch_gordan(HalfInt j1, HalfInt m1, HalfInt j2, HalfInt m2, HalfInt j, HalfInt m) {
    return clebsch_gordan(CGKey{j1, m1, j2, m2, j, m});
}

// Integer-spin convenience overload (the dominant use: coupling spherical harmonics).
inline double cg_int(int l1, int m1, int l2, int m2, int l, int m) {
    return clebsch_gordan(HalfInt::from_int(l1), HalfInt::from_int(m1), HalfInt::from_int(l2),
                          HalfInt::from_int(m2), HalfInt::from_int(l), HalfInt::from_int(m));
}

// {j1 j2 j3; j4 j5 j6}, zero when any triad violates the triangle rule.
inline double six_j(HalfInt j1, HalfInt j2, HalfInt j3, HalfInt j4, HalfInt j5, HalfInt j6) {
    return detail::memo6({j1.twice, j2.twice, j3.twice, j4.twice, j5.twice, j6.twice},
                         [&] { return detail::six_j_eval(j1, j2, j3, j4, j5, j6); });
}

// d^j_{m,k}(beta), the beta factor of D^{(j)}(e^{-i beta J_y}).
inline double wigner_small_d(HalfInt j, HalfInt m, HalfInt k, double beta) {
    if (abs(m) > j || abs(k) > j) throw std::domain_error("wigner_small_d: |m| > j");
    const int jm = j.twice + m.twice, jmm = j.twice - m.twice;
    const int jk = j.twice + k.twice, jmk = j.twice - k.twice;
    if (jm % 2 || jk % 2) return 0.0;  // mixed parity labels never couple
    const long double pref =
        sqrtl(detail::fact2v(jm) * detail::fact2v(jmm) * detail::fact2v(jk) * detail::fact2v(jmk));
    const long double c = cosl(0.5L * beta), s = sinl(0.5L * beta);
    const int tmin = std::max(0, m.twice - k.twice);
    const int tmax = std::min(jm, jmk);
    long double sum = 0.0L;
    for (int t = tmin; t <= tmax; t += 2) {
        const int pc = (j.twice + j.twice + m.twice - k.twice - 2 * t) / 2;  // cos exponent
        const int ps = (k.twice - m.twice + 2 * t) / 2;                      // sin exponent
        long double term = pref / (detail::fact2v(jm - t) * detail::fact2v(t) *
                                   detail::fact2v(jmk - t) * detail::fact2v(k.twice - m.twice + t));
        term *= powl(c, pc) * powl(s, ps);
        sum += ((t / 2) % 2) ? -term : term;
    }
    return static_cast<double>(sum);
}

// Full rotation matrix D^{(j)}_{m,k}(alpha,beta,gamma) = e^{-im alpha} d^j_{m,k}(beta) e^{-ik gamma},
// rows/columns ordered m = j, j-1, ..., -j.
inline Eigen::MatrixXcd wigner_D(HalfInt j, double alpha, double beta, double gamma) {
    const int dim = j.twice + 1;
    Eigen::MatrixXcd D(dim, dim);
    for (int r = 0; r < dim; ++r) {
        const HalfInt m(j.twice - 2 * r);
        for (int col = 0; col < dim; ++col) {
            const HalfInt k(j.twice - 2 * col);
            D(r, col) = std::polar(1.0, -m.value() * alpha) * wigner_small_d(j, m, k, beta) *
                        std::polar(1.0, -k.value() * gamma);
        }
    }
    return D;
}

}  // namespace spinlat
