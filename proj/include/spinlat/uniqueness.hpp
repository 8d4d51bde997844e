#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "spinlat/equilibrium.hpp"
#include "spinlat/quadrature.hpp"
#include "spinlat/semiclassics.hpp"

namespace spinlat {

// --- threshold constants ------------------------------------------------------

struct KsValue {
    double value = 0.0;
    double certified_error = 0.0;
    long terms = 0;
};

// K_s = sum_l (2l+1)^{5/2} / [1 + l(l+1)]^s, certified by bracketing the tail
// between the integral and integral + first term; diverges for s <= 7/4.
inline KsValue k_s(int s, double tol = 1e-10) {
    if (s <= 1) throw std::domain_error("k_s: series diverges for s <= 7/4");
    auto f = [&](double x) {
        return std::pow(2 * x + 1, 2.5) / std::pow(1.0 + x * (x + 1), s);
    };
    KsValue out;
    double partial = 0.0;
    long l = 0;
    for (;; ++l) {
        const double term = f(l);
        partial += term;
        if (l > 8 && term <= tol) break;
        if (l > 200000000) throw std::runtime_error("k_s: tolerance too small");
    }
    const long L = l + 1;  // tail starts here; f decreasing on [L, inf)
    // integral of f over [L, inf) via u = 2x+1, (u^2+3)^{-s} expanded in 3/u^2
    const double U = 2.0 * L + 1;
    double integral = 0.0;
    double binom = 1.0;  // binom(s+k-1, k)
    double pow3 = 1.0, powU = std::pow(U, 3.5 - 2.0 * s);
    double tail_err = 0.0;
    for (int k = 0;; ++k) {
        const double denom = 2.0 * s + 2.0 * k - 3.5;
        const double term = std::pow(4.0, s) / 2.0 * binom * pow3 * powU / denom;
        integral += (k % 2 ? -term : term);
        const double next_scale = std::abs(term) * 3.0 / (U * U);
        if (next_scale < tol * 1e-4) {
            tail_err = next_scale / (1.0 - 3.0 / (U * U));
            break;
        }
        binom *= double(s + k) / double(k + 1);
        pow3 *= 3.0;
        powU /= U * U;
    }
    const double fL = f(L);
    out.value = partial + integral + 0.5 * fL;
    out.certified_error = 0.5 * fL + tail_err;
    out.terms = L;
    return out;
}

enum class CDeltaMode { Spectral, Paper };

// Spectral mode: the Sobolev-sup surrogate norms satisfy the proofs' inequality
// with constant 1. Paper mode: lower estimate of ||1-Delta||_{C^2 -> C^0} over a
// band-limited test set, derivatives by finite differences on an interior grid.
inline double c_delta(CDeltaMode mode, int lmax = 6) {
    if (mode == CDeltaMode::Spectral) return 1.0;
    double best = 1.0;  // f = const realizes ratio 1
    const double h = 1e-4;
    for (int l = 1; l <= lmax; ++l)
        for (int m = 0; m <= l; ++m) {
            const SphericalFunction f = SphericalFunction::harmonic(l, m);
            const SphericalFunction lf = laplace_beltrami(f);
            double sup_num = 0.0, sup_c2 = 0.0;
            const int nt = 4 * l + 9, np = 8 * l + 9;
            for (int i = 1; i + 1 < nt; ++i)
                for (int k = 0; k < np; ++k) {
                    const double th = std::numbers::pi * i / (nt - 1);
                    const double ph = 2.0 * std::numbers::pi * k / np;
                    const Complex v = f.synthesize(th, ph);
                    sup_num = std::max(sup_num, std::abs(v - lf.synthesize(th, ph)));
                    const double st = std::sin(th);
                    const Complex dth =
                        (f.synthesize(th + h, ph) - f.synthesize(th - h, ph)) / (2 * h);
                    const Complex dph =
                        (f.synthesize(th, ph + h) - f.synthesize(th, ph - h)) / (2 * h) / st;
                    const Complex dtt = (f.synthesize(th + h, ph) - 2.0 * v +
                                         f.synthesize(th - h, ph)) /
                                        (h * h);
                    const Complex dpp = (f.synthesize(th, ph + h) - 2.0 * v +
                                         f.synthesize(th, ph - h)) /
                                        (h * h) / (st * st);
                    double c2 = std::abs(v);
                    for (const Complex& d : {dth, dph, dtt, dpp})
                        c2 = std::max(c2, std::abs(d));
                    sup_c2 = std::max(sup_c2, c2);
                }
            if (sup_c2 > 0) best = std::max(best, sup_num / sup_c2);
        }
    return best;
}

// N_s(phi_X): sup norm of the (1-Delta)^s-scaled observable (per-site spectral scaling).
inline double sobolev_sup_norm(const LatticeObservable& a, int s) {
    LatticeObservable scaled(a.region());
    for (const auto& [idx, v] : a.coeffs()) {
        double scale = 1.0;
        for (const auto& f : idx) scale *= std::pow(1.0 + double(f.l) * (f.l + 1), s);
        scaled.add(idx, scale * v);
    }
    return sup_norm(scaled);
}

// ||phi||_{eps,s} = sum_m (e^eps K_s C^s)^m sup_x sum_{|X|=m+1, X ni x} N_s(phi_X);
// eps = 0 gives ||phi||_{0,s}.
inline double potential_norm(const PotentialFamily& phi, double eps, int s,
                             double c_delta_value = 1.0, double ks_tol = 1e-10) {
    const double kfac = k_s(s, ks_tol).value * std::pow(c_delta_value, s) * std::exp(eps);
    double out = 0.0;
    for (const auto& term : phi.terms) {
        const int m = static_cast<int>(term.shape.size()) - 1;
        out += std::pow(kfac, m) * double(term.shape.size()) * sobolev_sup_norm(term.obs, s);
    }
    return out;
}

// beta_{0,s} = log 2 / (2 C^s K_s ||phi||_{0,s}); +inf for the zero potential.
inline double beta_classical(const PotentialFamily& phi, int s, double c_delta_value = 1.0) {
    const double n0 = potential_norm(phi, 0.0, s, c_delta_value);
    if (n0 == 0.0) return std::numeric_limits<double>::infinity();
    return std::log(2.0) /
           (2.0 * std::pow(c_delta_value, s) * k_s(s).value * n0);
}

// beta_{eps,s} = eps/(1+e^eps) / (2 K_s C^s ||phi||_{eps,s}).
inline double beta_quantum(const PotentialFamily& phi, double eps, int s,
                           double c_delta_value = 1.0) {
    const double ne = potential_norm(phi, eps, s, c_delta_value);
    if (ne == 0.0) return std::numeric_limits<double>::infinity();
    return eps / (1.0 + std::exp(eps)) /
           (2.0 * k_s(s).value * std::pow(c_delta_value, s) * ne);
}

// grid maximization of beta_{eps,s} over eps
inline std::pair<double, double> beta_quantum_optimized(const PotentialFamily& phi, int s,
                                                        double c_delta_value = 1.0) {
    double best_eps = 1.0, best = 0.0;
    for (int i = 1; i <= 60; ++i) {
        const double eps = 0.05 * i;
        const double b = beta_quantum(phi, eps, s, c_delta_value);
        if (b > best) {
            best = b;
            best_eps = eps;
        }
    }
    return {best_eps, best};
}

// C_{X,R_x}(l_X, m_X): Fourier-Laplace coefficient of (I - R_x) phi_X.
inline Complex ks_coefficient_classical(const LatticeObservable& phi_x, const Site& x,
                                        double alpha, double beta_e, double gamma,
                                        const MultiIndex& idx) {
    const LatticeObservable diff = phi_x - rotate_site(phi_x, x, alpha, beta_e, gamma);
    return diff.coeff(idx);
}

// --- truncated Kirkwood-Salzburg operators ------------------------------------

struct Truncation {
    Region base_region;
    int lmax = 6;
    int nmax = 5;
    int haar_degree = 24;
};

namespace detail {

struct OperatorData {
    std::vector<MultiIndex> targets;
    std::map<MultiIndex, int> lookup;          // target -> row
    Eigen::MatrixXcd mat;                      // rows: targets, cols: {empty} + targets
    std::vector<double> dropped;               // per-row dropped coefficient mass
    MomentVector apply(const MomentVector& f) const {
        Eigen::VectorXcd v(targets.size() + 1);
        v(0) = f.empty;
        for (std::size_t i = 0; i < targets.size(); ++i) v(i + 1) = f.at(targets[i]);
        const Eigen::VectorXcd out = mat * v;
        MomentVector g;
        g.empty = Complex(0, 0);
        for (std::size_t i = 0; i < targets.size(); ++i) g.entries[targets[i]] = out(i);
        return g;
    }
    double dropped_mass() const {
        double s = 0.0;
        for (double d : dropped) s = std::max(s, d);
        return s;
    }
};

inline const Site& index_min_site(const MultiIndex& idx) {
    return idx.front().site;  // factors sorted by site
}

}  // namespace detail

// Truncated classical Kirkwood-Salzburg operator L_infty^beta on the moment space
// over the base window: (L f)_Lambda = -sum_n (beta^n/n!) <coeffs of
// (sum_{X ni x}(I-R_x)phi_X)^n Y_{Lambda}, f> Haar-averaged over R; x = min Lambda.
// Region sums run over all translates (finite range); re-expanded indices outside
// the truncation are dropped and their coefficient mass reported.
class KsClassicalOperator {
  public:
    KsClassicalOperator(const PotentialFamily& phi, double beta, const Truncation& t)
        : beta_(beta), trunc_(t) {
        data_.targets = enumerate_indices(t.base_region, t.lmax);
        for (std::size_t i = 0; i < data_.targets.size(); ++i)
            data_.lookup[data_.targets[i]] = static_cast<int>(i);
        data_.mat = Eigen::MatrixXcd::Zero(data_.targets.size(), data_.targets.size() + 1);
        data_.dropped.assign(data_.targets.size(), 0.0);

        // rows grouped by the distinguished site x
        std::map<Site, std::vector<int>> by_x;
        for (std::size_t i = 0; i < data_.targets.size(); ++i)
            by_x[detail::index_min_site(data_.targets[i])].push_back(static_cast<int>(i));

        const HaarSU2 haar(t.haar_degree);
        for (const auto& [x, rows] : by_x) {
            const auto translates = potential_translates_at(phi, x);
            Region hull(t.base_region.d, {x});
            for (const auto& tr : translates) hull = region_union(hull, tr.region());
            // Haar-averaged powers of h_R = sum_X (I - R_x) phi_X; the average
            // commutes with the (linear) re-expansion against f.
            std::vector<LatticeObservable> hbar(t.nmax + 1, LatticeObservable(hull));
            for (const auto& node : haar.nodes) {
                LatticeObservable h_r(hull);
                for (const auto& tr : translates) {
                    const LatticeObservable e = embed(tr, hull);
                    h_r += e - rotate_site(e, x, node.alpha, node.beta, node.gamma);
                }
                LatticeObservable p = h_r;
                for (int n = 1; n <= t.nmax; ++n) {
                    hbar[n] += node.weight * p;
                    if (n < t.nmax) p = product(p, h_r);
                }
            }
            double factorial = 1.0;
            for (int n = 1; n <= t.nmax; ++n) {
                factorial *= n;
                const double scale = std::pow(beta_, n) / factorial;
                for (int row : rows) {
                    const Region prod_region =
                        region_union(hbar[n].region(), Region(t.base_region.d,
                                                              sites_of(data_.targets[row])));
                    LatticeObservable yt(prod_region);
                    yt.add(data_.targets[row], Complex(1, 0));
                    const LatticeObservable prod = product(hbar[n], yt);
                    for (const auto& [idx, v] : prod.coeffs()) scatter(row, idx, -scale * v);
                }
            }
        }
    }

    const std::vector<MultiIndex>& targets() const { return data_.targets; }
    MomentVector apply(const MomentVector& f) const { return data_.apply(f); }
    double dropped_mass() const { return data_.dropped_mass(); }
    const Eigen::MatrixXcd& matrix() const { return data_.mat; }

  private:
    static std::vector<Site> sites_of(const MultiIndex& idx) {
        std::vector<Site> s;
        for (const auto& f : idx) s.push_back(f.site);
        return s;
    }
    void scatter(int row, const MultiIndex& idx, Complex v) {
        if (idx.empty()) {
            data_.mat(row, 0) += v;
            return;
        }
        const auto it = data_.lookup.find(idx);
        if (it == data_.lookup.end())
            data_.dropped[row] += std::abs(v);
        else
            data_.mat(row, it->second + 1) += v;
    }

    double beta_;
    Truncation trunc_;
    detail::OperatorData data_;
};

// Truncated quantum operator L_j^beta: same structure with W_n built by the
// recursion W_q = Q(R_x phi) W_{q-1} - W_{q-1} Q(phi) summed over translates
// inside the base window (matrix support forces the clipping), expanded over the
// tensor HS basis. Requires lmax <= 2j per site.
class KsQuantumOperator {
  public:
    KsQuantumOperator(const SpinContext& ctx, const PotentialFamily& phi, double beta,
                      const Truncation& t)
        : beta_(beta), trunc_(t) {
        const int lmax = std::min(t.lmax, ctx.two_j());
        data_.targets = enumerate_indices(t.base_region, lmax);
        for (std::size_t i = 0; i < data_.targets.size(); ++i)
            data_.lookup[data_.targets[i]] = static_cast<int>(i);
        data_.mat = Eigen::MatrixXcd::Zero(data_.targets.size(), data_.targets.size() + 1);
        data_.dropped.assign(data_.targets.size(), 0.0);

        const Region& win = t.base_region;
        const long dim = tensor_dim(ctx, win);

        // full HS basis of the window and per-element expansion scales
        std::vector<MultiIndex> basis = enumerate_indices(win, ctx.two_j());
        basis.insert(basis.begin(), MultiIndex{});
        std::vector<Matrix> basis_mats;
        std::vector<double> basis_scale;  // prod (2l+1)
        basis_mats.reserve(basis.size());
        for (const auto& idx : basis) {
            basis_mats.push_back(hs_tensor(ctx, win, idx));
            double s = 1.0;
            for (const auto& f : idx) s *= 2 * f.l + 1;
            basis_scale.push_back(s);
        }

        std::map<Site, std::vector<int>> by_x;
        for (std::size_t i = 0; i < data_.targets.size(); ++i)
            by_x[detail::index_min_site(data_.targets[i])].push_back(static_cast<int>(i));

        const HaarSU2 haar(t.haar_degree);
        for (const auto& [x, rows] : by_x) {
            std::vector<LatticeObservable> translates;
            for (const auto& tr : potential_translates(phi, win))
                if (tr.region().contains(x)) translates.push_back(tr);

            std::vector<Matrix> wbar(t.nmax + 1, Matrix::Zero(dim, dim));
            for (const auto& node : haar.nodes) {
                Matrix plus = Matrix::Zero(dim, dim), minus = Matrix::Zero(dim, dim);
                for (const auto& tr : translates) {
                    const LatticeObservable e = embed(tr, win);
                    minus += quantize_region(ctx, e);
                    plus += quantize_region(
                        ctx, rotate_site(e, x, node.alpha, node.beta, node.gamma));
                }
                Matrix w = Matrix::Identity(dim, dim);
                for (int n = 1; n <= t.nmax; ++n) {
                    w = (plus * w - w * minus).eval();
                    wbar[n] += node.weight * w;
                }
            }
            double factorial = 1.0;
            for (int n = 1; n <= t.nmax; ++n) {
                factorial *= n;
                // -(-beta)^n/n! from the imaginary-time expansion
                const double scale = -std::pow(-beta_, n) / factorial;
                for (int row : rows) {
                    const Matrix m = hs_tensor(ctx, win, data_.targets[row]) * wbar[n];
                    for (std::size_t b = 0; b < basis.size(); ++b) {
                        const Complex coeff =
                            basis_scale[b] *
                            ((basis_mats[b].adjoint() * m).trace() / double(dim));
                        scatter(row, basis[b], scale * coeff);
                    }
                }
            }
        }
    }

    const std::vector<MultiIndex>& targets() const { return data_.targets; }
    MomentVector apply(const MomentVector& f) const { return data_.apply(f); }
    double dropped_mass() const { return data_.dropped_mass(); }
    const Eigen::MatrixXcd& matrix() const { return data_.mat; }

    // tensor product of single-site HS basis elements over the window
    static Matrix hs_tensor(const SpinContext& ctx, const Region& win, const MultiIndex& idx) {
        Matrix acc = Matrix::Identity(1, 1);
        auto f = idx.begin();
        for (const auto& x : win.sites) {
            if (f != idx.end() && f->site == x) {
                acc = kron(acc, hs_basis(ctx, f->l, f->m));
                ++f;
            } else {
                acc = kron(acc, Matrix::Identity(ctx.dim(), ctx.dim()));
            }
        }
        return acc;
    }

  private:
    void scatter(int row, const MultiIndex& idx, Complex v) {
        if (std::abs(v) < 1e-16) return;
        if (idx.empty()) {
            data_.mat(row, 0) += v;
            return;
        }
        const auto it = data_.lookup.find(idx);
        if (it == data_.lookup.end())
            data_.dropped[row] += std::abs(v);
        else
            data_.mat(row, it->second + 1) += v;
    }

    double beta_;
    Truncation trunc_;
    detail::OperatorData data_;
};

// --- fixed-point machinery ------------------------------------------------------

struct KSReport {
    double beta = 0.0;
    double theoretical_norm_bound = 0.0;
    double empirical_norm_estimate = 0.0;  // max residual-ratio over the iteration
    int iterations = 0;
    double final_residual = 0.0;
    MomentVector moments;
    double dropped_mass = 0.0;
    bool converged = false;
    bool below_threshold = true;
};

template <typename Op>
inline KSReport ks_fixed_point(const Op& op, double beta, double theoretical_bound,
                               double beta_threshold, double tol = 1e-12, int kmax = 200) {
    KSReport rep;
    rep.beta = beta;
    rep.theoretical_norm_bound = theoretical_bound;
    rep.below_threshold = beta < beta_threshold;
    rep.dropped_mass = op.dropped_mass();

    MomentVector delta;  // omega^0 = delta (the infinite-temperature solution)
    MomentVector omega = delta;
    double prev_residual = -1.0;
    for (int k = 1; k <= kmax; ++k) {
        MomentVector next = op.apply(omega);  // L omega, empty component 0
        next.empty = delta.empty;             // + delta
        const double res = sup_dist(next, omega);
        if (prev_residual > 1e-13 && res > 1e-15)
            rep.empirical_norm_estimate =
                std::max(rep.empirical_norm_estimate, res / prev_residual);
        prev_residual = res;
        omega = std::move(next);
        rep.iterations = k;
        rep.final_residual = res;
        if (res < tol) {
            rep.converged = true;
            break;
        }
    }
    rep.moments = omega;
    return rep;
}

inline KSReport ks_solve_classical(const PotentialFamily& phi, double beta, const Truncation& t,
                                   int s = 2, double tol = 1e-12, int kmax = 200) {
    const double norm0 = potential_norm(phi, 0.0, s);
    const double bound = std::exp(2.0 * k_s(s).value * beta * norm0) - 1.0;
    const KsClassicalOperator op(phi, beta, t);
    return ks_fixed_point(op, beta, bound, beta_classical(phi, s), tol, kmax);
}

inline KSReport ks_solve_quantum(const SpinContext& ctx, const PotentialFamily& phi, double beta,
                                 const Truncation& t, double eps = 1.0, int s = 2,
                                 double tol = 1e-12, int kmax = 200) {
    const double norme = potential_norm(phi, eps, s);
    const double u = 2.0 * beta * k_s(s).value * norme / eps;
    const double bound = u < 1.0 ? std::exp(eps) * u / (1.0 - u)
                                 : std::numeric_limits<double>::infinity();
    const KsQuantumOperator op(ctx, phi, beta, t);
    return ks_fixed_point(op, beta, bound, beta_quantum(phi, eps, s), tol, kmax);
}

// max of ||L f||_sup over seeded random vectors with sup |f| = 1
template <typename Op>
inline double empirical_operator_norm(const Op& op, int samples, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double best = 0.0;
    for (int s = 0; s < samples; ++s) {
        MomentVector f;
        f.empty = Complex(u(rng), u(rng));
        double sup = std::abs(f.empty);
        for (const auto& idx : op.targets()) {
            const Complex v(u(rng), u(rng));
            f.entries[idx] = v;
            sup = std::max(sup, std::abs(v));
        }
        if (sup == 0.0) continue;
        f.empty /= sup;
        for (auto& [k, v] : f.entries) v /= sup;
        best = std::max(best, op.apply(f).sup());
    }
    return best;
}

}  // namespace spinlat
