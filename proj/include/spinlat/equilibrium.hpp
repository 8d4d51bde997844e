#pragma once

#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "spinlat/lattice.hpp"

namespace spinlat {

// Truncated element of the moment space: one complex number per (region,
// l_Lambda, m_Lambda) with every l_x >= 1, plus the empty-region entry.
struct MomentVector {
    Complex empty{1.0, 0.0};
    std::map<MultiIndex, Complex> entries;

    Complex at(const MultiIndex& idx) const {
        if (idx.empty()) return empty;
        const auto it = entries.find(idx);
        return it == entries.end() ? Complex(0, 0) : it->second;
    }
    double sup() const {
        double s = std::abs(empty);
        for (const auto& [k, v] : entries) s = std::max(s, std::abs(v));
        return s;
    }
    friend double sup_dist(const MomentVector& a, const MomentVector& b) {
        double s = std::abs(a.empty - b.empty);
        for (const auto& [k, v] : a.entries) s = std::max(s, std::abs(v - b.at(k)));
        for (const auto& [k, v] : b.entries) s = std::max(s, std::abs(v - a.at(k)));
        return s;
    }
};

// All multi-indices over nonempty subsets of `window` with 1 <= l_x <= lmax.
inline std::vector<MultiIndex> enumerate_indices(const Region& window, int lmax) {
    std::vector<MultiIndex> out;
    const std::size_t n = window.size();
    std::vector<std::vector<SiteFactor>> per_site;
    for (const auto& x : window.sites) {
        std::vector<SiteFactor> opts;
        opts.push_back(SiteFactor{x, 0, 0});  // absent
        for (int l = 1; l <= lmax; ++l)
            for (int m = -l; m <= l; ++m) opts.push_back(SiteFactor{x, l, m});
        per_site.push_back(std::move(opts));
    }
    std::vector<std::size_t> cursor(n, 0);
    while (true) {
        MultiIndex idx;
        for (std::size_t i = 0; i < n; ++i)
            if (per_site[i][cursor[i]].l > 0) idx.push_back(per_site[i][cursor[i]]);
        if (!idx.empty()) out.push_back(std::move(idx));
        int k = static_cast<int>(n) - 1;
        while (k >= 0 && ++cursor[k] == per_site[k].size()) cursor[k--] = 0;
        if (k < 0) break;
    }
    return out;
}

// Finite-volume classical Gibbs state by tensor Gauss quadrature on (S^2)^Lambda.
class ClassicalGibbs {
  public:
    ClassicalGibbs(PotentialFamily phi, Region window, double beta, int degree)
        : phi_(std::move(phi)), window_(std::move(window)), beta_(beta), degree_(degree) {
        if (window_.size() > 3)
            throw std::length_error("ClassicalGibbs: tensor quadrature limited to 3 sites");
        const SphereQuadrature q = quad_rule(degree);
        theta_ = q.theta;
        wtheta_ = q.wtheta;
        n_phi_ = q.n_phi;
        nodes_per_site_ = theta_.size() * static_cast<std::size_t>(n_phi_);
        h_ = hamiltonian_classical(phi_, window_);
        int band = 1;
        for (const auto& x : window_.sites) band = std::max(band, h_.band_at(x));
        ensure_tables(band);

        const std::size_t total = total_configs();
        boltz_.resize(total);
        double z = 0.0;
        std::vector<std::size_t> cfg(window_.size(), 0);
        for (std::size_t flat = 0; flat < total; ++flat) {
            const double hv = eval_real(h_, cfg);
            const double w = weight(cfg) * std::exp(-beta_ * hv);
            boltz_[flat] = w;
            z += w;
            bump(cfg);
        }
        z_ = z;
    }

    const Region& window() const { return window_; }
    double beta() const { return beta_; }
    int degree() const { return degree_; }
    double partition() const { return z_; }
    const LatticeObservable& hamiltonian() const { return h_; }

    Complex expectation(const LatticeObservable& a) const {
        ensure_tables(max_band(a));
        Complex num(0, 0);
        std::vector<std::size_t> cfg(window_.size(), 0);
        for (std::size_t flat = 0; flat < boltz_.size(); ++flat) {
            num += boltz_[flat] * eval(a, cfg);
            bump(cfg);
        }
        return num / z_;
    }

    // expectation with the extra weight e^{beta * g}; g must be real-valued
    Complex expectation_tilted(const LatticeObservable& g, const LatticeObservable& a) const {
        ensure_tables(std::max(max_band(a), max_band(g)));
        Complex num(0, 0);
        std::vector<std::size_t> cfg(window_.size(), 0);
        for (std::size_t flat = 0; flat < boltz_.size(); ++flat) {
            const double gv = eval_real(g, cfg);
            num += boltz_[flat] * std::exp(beta_ * gv) * eval(a, cfg);
            bump(cfg);
        }
        return num / z_;
    }

    // moments of all tensor harmonics with 1 <= l_x <= lmax over subsets of the window
    MomentVector moments(int lmax) const {
        ensure_tables(lmax);
        MomentVector mv;
        const auto idxs = enumerate_indices(window_, lmax);
        std::vector<Complex> acc(idxs.size(), Complex(0, 0));
        std::vector<std::size_t> cfg(window_.size(), 0);
        for (std::size_t flat = 0; flat < boltz_.size(); ++flat) {
            for (std::size_t i = 0; i < idxs.size(); ++i) {
                Complex term(boltz_[flat], 0);
                for (const auto& f : idxs[i]) term *= table_value(f, cfg);
                acc[i] += term;
            }
            bump(cfg);
        }
        for (std::size_t i = 0; i < idxs.size(); ++i) mv.entries[idxs[i]] = acc[i] / z_;
        return mv;
    }

  private:
    std::size_t total_configs() const {
        std::size_t t = 1;
        for (std::size_t i = 0; i < window_.size(); ++i) t *= nodes_per_site_;
        return t;
    }
    double weight(const std::vector<std::size_t>& cfg) const {
        double w = 1.0;
        for (std::size_t i = 0; i < cfg.size(); ++i)
            w *= wtheta_[cfg[i] / n_phi_] / double(n_phi_);
        return w;
    }
    void bump(std::vector<std::size_t>& cfg) const {
        int k = static_cast<int>(cfg.size()) - 1;
        while (k >= 0 && ++cfg[k] == nodes_per_site_) cfg[k--] = 0;
    }
    static int max_band(const LatticeObservable& a) {
        int b = 1;
        for (const auto& x : a.support().sites) b = std::max(b, a.band_at(x));
        return b;
    }
    void ensure_tables(int band) const {
        if (band <= table_band_) return;
        table_.assign((band + 1) * (band + 1), {});
        for (int l = 0; l <= band; ++l)
            for (int m = -l; m <= l; ++m) {
                auto& tab = table_[l * l + l + m];
                tab.resize(nodes_per_site_);
                for (std::size_t it = 0; it < theta_.size(); ++it) {
                    const double nt = norm_legendre(l, m, std::cos(theta_[it]));
                    for (int ip = 0; ip < n_phi_; ++ip)
                        tab[it * n_phi_ + ip] =
                            nt * std::polar(1.0, m * (2.0 * std::numbers::pi * ip / n_phi_));
                }
            }
        table_band_ = band;
    }
    Complex table_value(const SiteFactor& f, const std::vector<std::size_t>& cfg) const {
        return table_[f.l * f.l + f.l + f.m][cfg[window_.index_of(f.site)]];
    }
    Complex eval(const LatticeObservable& a, const std::vector<std::size_t>& cfg) const {
        Complex out(0, 0);
        for (const auto& [idx, v] : a.coeffs()) {
            Complex term = v;
            for (const auto& f : idx) term *= table_value(f, cfg);
            out += term;
        }
        return out;
    }
    double eval_real(const LatticeObservable& a, const std::vector<std::size_t>& cfg) const {
        return eval(a, cfg).real();
    }

    PotentialFamily phi_;
    Region window_;
    double beta_;
    int degree_;
    std::vector<double> theta_, wtheta_;
    int n_phi_ = 1;
    std::size_t nodes_per_site_ = 0;
    LatticeObservable h_;
    std::vector<double> boltz_;
    double z_ = 1.0;
    mutable int table_band_ = 0;
    mutable std::vector<std::vector<Complex>> table_;
};

struct ClassicalMoments {
    MomentVector moments;
    double doubling_delta = 0.0;
    bool converged = true;
};

inline ClassicalMoments gibbs_classical_moments(const PotentialFamily& phi, const Region& window,
                                                double beta, int lmax, int degree,
                                                bool check_doubling = false, double tol = 1e-9) {
    ClassicalMoments out;
    const ClassicalGibbs g(phi, window, beta, degree);
    out.moments = g.moments(lmax);
    if (check_doubling) {
        const ClassicalGibbs g2(phi, window, beta, 2 * degree);
        out.doubling_delta = sup_dist(out.moments, g2.moments(lmax));
        out.converged = out.doubling_delta <= tol;
    }
    return out;
}

// Finite-volume quantum Gibbs state rho = e^{-beta H}/tr(e^{-beta H}).
class QuantumGibbs {
  public:
    QuantumGibbs(const SpinContext& ctx, const PotentialFamily& phi, Region window, double beta)
        : window_(std::move(window)), beta_(beta) {
        h_ = hamiltonian_quantum(ctx, phi, window_);
        init();
    }
    QuantumGibbs(Matrix hamiltonian, double beta) : beta_(beta), h_(std::move(hamiltonian)) {
        init();
    }

    double beta() const { return beta_; }
    const Matrix& hamiltonian() const { return h_; }
    const Matrix& rho() const { return rho_; }
    const Region& window() const { return window_; }

    Complex expectation(const Matrix& a) const { return (rho_ * a).trace(); }

    // tau_{i t}(B) = e^{-t H} B e^{t H} through the cached eigenbasis
    Matrix evolve_imaginary(const Matrix& b, double t) const {
        const Matrix bt = evecs_.adjoint() * b * evecs_;
        Matrix out(bt.rows(), bt.cols());
        for (int r = 0; r < bt.rows(); ++r)
            for (int c = 0; c < bt.cols(); ++c)
                out(r, c) = bt(r, c) * std::exp(-t * (evals_(r) - evals_(c)));
        return evecs_ * out * evecs_.adjoint();
    }

    Matrix derivation(const Matrix& a) const {  // i[H, a]
        return Complex(0, 1) * (h_ * a - a * h_);
    }

  private:
    void init() {
        if (!is_hermitian(h_, 1e-10)) throw std::invalid_argument("QuantumGibbs: H not Hermitian");
        Eigen::SelfAdjointEigenSolver<Matrix> es(h_);
        evals_ = es.eigenvalues();
        evecs_ = es.eigenvectors();
        const double emin = evals_.minCoeff();
        Eigen::VectorXd p(evals_.size());
        double z = 0.0;
        for (int i = 0; i < evals_.size(); ++i) {
            p(i) = std::exp(-beta_ * (evals_(i) - emin));
            z += p(i);
        }
        p /= z;
        rho_ = evecs_ * p.asDiagonal() * evecs_.adjoint();
    }

    Region window_;
    double beta_;
    Matrix h_;
    Eigen::VectorXd evals_;
    Matrix evecs_;
    Matrix rho_;
};

// Standalone imaginary-time conjugation e^{-beta H} B e^{beta H}.
inline Matrix evolve_imaginary(const Matrix& H, const Matrix& B, double beta) {
    return QuantumGibbs(H, 0.0).evolve_imaginary(B, beta);
}

// |omega(A tau_{i beta}(B)) - omega(B A)| for the state rho under the dynamics
// generated by g's Hamiltonian; zero when rho is the matching Gibbs state.
inline double kms_residual_quantum(const QuantumGibbs& g, const Matrix& rho, const Matrix& A,
                                   const Matrix& B) {
    const Complex lhs = (rho * A * g.evolve_imaginary(B, g.beta())).trace();
    const Complex rhs = (rho * B * A).trace();
    return std::abs(lhs - rhs);
}

inline double kms_residual_quantum(const QuantumGibbs& g, const Matrix& A, const Matrix& B) {
    return kms_residual_quantum(g, g.rho(), A, B);
}

// |omega({a,b}) - beta omega(b delta(a))| with delta(a) = {a, h_window}.
inline double kms_residual_classical(const ClassicalGibbs& g, const LatticeObservable& a,
                                     const LatticeObservable& b) {
    const LatticeObservable br = poisson_bracket_region(a, b);
    const LatticeObservable da = poisson_bracket_region(a, g.hamiltonian());
    const Complex lhs = g.expectation(br);
    const Complex rhs = g.beta() * g.expectation(product(b, da));
    return std::abs(lhs - rhs);
}

// Classical auto-correlation gap -i beta omega(a* delta(a)) + i omega({a,a*});
// vanishes on the Gibbs state, nonnegative for any KMS state.
inline double autocorr_gap_classical(const ClassicalGibbs& g, const LatticeObservable& a) {
    const LatticeObservable astar = a.adjoint();
    const LatticeObservable da = poisson_bracket_region(a, g.hamiltonian());
    const Complex t1 = g.expectation(product(astar, da));
    const Complex t2 = g.expectation(poisson_bracket_region(a, astar));
    const Complex gap = Complex(0, -1) * g.beta() * t1 - Complex(0, -1) * t2;
    return gap.real();
}

// Quantum auto-correlation gap -i beta omega(a* delta(a)) - u log(u/v) with
// u = omega(a*a), v = omega(aa*), delta = i[H,.]; the extended conventions are
// u log(u/v) = 0 for u = 0, v > 0 and +inf for u > 0, v = 0 (the gap then
// returns the -inf sentinel: such a state violates the lower bound maximally).
inline double autocorr_gap_quantum(const QuantumGibbs& g, const Matrix& rho, const Matrix& a) {
    const Matrix astar = a.adjoint();
    const Complex lhs_c = Complex(0, -1) * g.beta() * (rho * astar * g.derivation(a)).trace();
    const double u = (rho * astar * a).trace().real();
    const double v = (rho * a * astar).trace().real();
    const double tiny = 1e-300;
    double rhs;
    if (u <= tiny)
        rhs = 0.0;
    else if (v <= tiny)
        return -std::numeric_limits<double>::infinity();
    else
        rhs = u * std::log(u / v);
    return lhs_c.real() - rhs;
}

inline double autocorr_gap_quantum(const QuantumGibbs& g, const Matrix& a) {
    return autocorr_gap_quantum(g, g.rho(), a);
}

// Residual of omega(a) = omega(e^{beta sum_{X ni x}(I - R_x) phi_X} R_x a) for the
// finite-volume Gibbs state; exact up to quadrature by rotation invariance of mu_0.
inline double rotation_identity_residual(const ClassicalGibbs& g, const PotentialFamily& phi,
                                         const Site& x, double alpha, double beta_e, double gamma,
                                         const LatticeObservable& a) {
    if (!g.window().contains(x))
        throw std::invalid_argument("rotation_identity_residual: site outside window");
    LatticeObservable tilt(g.window());
    for (const auto& tr : potential_translates(phi, g.window())) {
        if (!tr.region().contains(x)) continue;
        const LatticeObservable e = embed(tr, g.window());
        tilt += e - rotate_site(e, x, alpha, beta_e, gamma);
    }
    const LatticeObservable ra = rotate_site(a, x, alpha, beta_e, gamma);
    const Complex lhs = g.expectation(a);
    const Complex rhs = g.expectation_tilted(tilt, ra);
    return std::abs(lhs - rhs);
}

// Seeded Metropolis estimate of omega(a) on (S^2)^Lambda; smoke-test tool for
// windows beyond the tensor-quadrature guard, never used in acceptance paths.
inline Complex metropolis_expectation(const PotentialFamily& phi, const Region& window,
                                      double beta, const LatticeObservable& a, int sweeps,
                                      unsigned seed, int burn_in = 200) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(window.size()) - 1);
    auto random_dir = [&] {
        double x = gauss(rng), y = gauss(rng), z = gauss(rng);
        const double r = std::sqrt(x * x + y * y + z * z) + 1e-300;
        return std::pair<double, double>(std::acos(std::clamp(z / r, -1.0, 1.0)),
                                         std::atan2(y, x));
    };
    const LatticeObservable h = hamiltonian_classical(phi, window);
    std::vector<std::pair<double, double>> cfg(window.size());
    for (auto& c : cfg) c = random_dir();
    double energy = h.evaluate(cfg).real();
    Complex acc(0, 0);
    long kept = 0;
    for (int s = 0; s < burn_in + sweeps; ++s) {
        for (std::size_t step = 0; step < window.size(); ++step) {
            const int i = pick(rng);
            const auto old = cfg[i];
            cfg[i] = random_dir();
            const double enew = h.evaluate(cfg).real();
            if (unif(rng) < std::exp(-beta * (enew - energy)))
                energy = enew;
            else
                cfg[i] = old;
        }
        if (s >= burn_in) {
            acc += a.evaluate(cfg);
            ++kept;
        }
    }
    return acc / double(kept);
}

}  // namespace spinlat
