#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "spinlat/berezin.hpp"
#include "spinlat/sphere.hpp"

namespace spinlat {

using Site = std::vector<int>;  // Z^d coordinates

// Finite window, sites kept sorted lexicographically; sites[0] realizes the
// distinguished point x = min(Lambda).
struct Region {
    int d = 1;
    std::vector<Site> sites;

    Region() = default;
    Region(int dim, std::vector<Site> s) : d(dim), sites(std::move(s)) {
        for (const auto& x : sites)
            if (static_cast<int>(x.size()) != d) throw std::invalid_argument("Region: bad site dim");
        std::sort(sites.begin(), sites.end());
        if (std::adjacent_find(sites.begin(), sites.end()) != sites.end())
            throw std::invalid_argument("Region: duplicate sites");
    }

    static Region box(const std::vector<int>& dims) {
        std::vector<Site> s;
        Site cur(dims.size(), 0);
        while (true) {
            s.push_back(cur);
            int k = static_cast<int>(dims.size()) - 1;
            while (k >= 0 && ++cur[k] == dims[k]) cur[k--] = 0;
            if (k < 0) break;
        }
        return Region(static_cast<int>(dims.size()), std::move(s));
    }

    std::size_t size() const { return sites.size(); }
    bool contains(const Site& x) const {
        return std::binary_search(sites.begin(), sites.end(), x);
    }
    bool contains(const Region& o) const {
        return std::all_of(o.sites.begin(), o.sites.end(),
                           [&](const Site& x) { return contains(x); });
    }
    int index_of(const Site& x) const {
        const auto it = std::lower_bound(sites.begin(), sites.end(), x);
        if (it == sites.end() || *it != x) throw std::out_of_range("Region: site not present");
        return static_cast<int>(it - sites.begin());
    }
    const Site& min_site() const {
        if (sites.empty()) throw std::out_of_range("Region: empty");
        return sites.front();
    }
    friend Region region_union(const Region& a, const Region& b) {
        std::vector<Site> s = a.sites;
        for (const auto& x : b.sites)
            if (!a.contains(x)) s.push_back(x);
        return Region(a.d, std::move(s));
    }
    friend bool operator==(const Region& a, const Region& b) {
        return a.d == b.d && a.sites == b.sites;
    }
};

inline Site operator+(const Site& a, const Site& b) {
    Site out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}
inline Site operator-(const Site& a, const Site& b) {
    Site out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

// One Y_{l,m} factor attached to a site; monomials keep l >= 1 (l = 0 is dropped
// into the smaller region, the compatibility convention for quasi-local indices).
struct SiteFactor {
    Site site;
    int l = 0;
    int m = 0;
    friend auto operator<=>(const SiteFactor&, const SiteFactor&) = default;
};
using MultiIndex = std::vector<SiteFactor>;  // sorted by site

// Finitely supported coefficient table over per-site (l_x, m_x); the tensor
// Fourier-Laplace expansion of an observable on a finite region.
class LatticeObservable {
  public:
    LatticeObservable() = default;
    explicit LatticeObservable(Region region) : region_(std::move(region)) {}

    static LatticeObservable constant(Region region, Complex v) {
        LatticeObservable a(std::move(region));
        a.add({}, v);
        return a;
    }
    // single harmonic at one site
    static LatticeObservable harmonic(Region region, const Site& x, int l, int m,
                                      Complex coeff = 1.0) {
        LatticeObservable a(std::move(region));
        a.add({SiteFactor{x, l, m}}, coeff);
        return a;
    }

    const Region& region() const { return region_; }
    const std::map<MultiIndex, Complex>& coeffs() const { return c_; }
    bool empty() const { return c_.empty(); }

    void add(MultiIndex idx, Complex v, double drop_tol = 0.0) {
        if (v == Complex(0, 0)) return;
        MultiIndex norm;
        norm.reserve(idx.size());
        for (auto& f : idx) {
            if (f.l == 0) continue;  // Y_{0,0} = 1
            if (f.l < 0 || std::abs(f.m) > f.l) throw std::invalid_argument("bad factor index");
            if (!region_.contains(f.site)) throw std::invalid_argument("factor site outside region");
            norm.push_back(f);
        }
        std::sort(norm.begin(), norm.end());
        for (std::size_t i = 1; i < norm.size(); ++i)
            if (norm[i].site == norm[i - 1].site)
                throw std::invalid_argument("duplicate site in monomial");
        auto [it, inserted] = c_.emplace(std::move(norm), v);
        if (!inserted) {
            it->second += v;
            if (std::abs(it->second) <= drop_tol) c_.erase(it);
        }
    }

    Complex coeff(const MultiIndex& idx) const {
        const auto it = c_.find(idx);
        return it == c_.end() ? Complex(0, 0) : it->second;
    }

    // sites actually carrying a factor
    Region support() const {
        std::set<Site> s;
        for (const auto& [idx, v] : c_)
            for (const auto& f : idx) s.insert(f.site);
        return Region(region_.d, {s.begin(), s.end()});
    }

    int band_at(const Site& x) const {
        int b = 0;
        for (const auto& [idx, v] : c_)
            for (const auto& f : idx)
                if (f.site == x) b = std::max(b, f.l);
        return b;
    }

    LatticeObservable adjoint() const {
        LatticeObservable out(region_);
        for (const auto& [idx, v] : c_) {
            MultiIndex conj_idx = idx;
            double sign = 1.0;
            for (auto& f : conj_idx) {
                if (f.m % 2) sign = -sign;
                f.m = -f.m;
            }
            out.add(std::move(conj_idx), sign * std::conj(v));
        }
        return out;
    }

    bool is_selfadjoint(double tol = 1e-12) const {
        const LatticeObservable adj = adjoint();
        for (const auto& [idx, v] : c_)
            if (std::abs(v - adj.coeff(idx)) > tol) return false;
        for (const auto& [idx, v] : adj.c_)
            if (std::abs(v - coeff(idx)) > tol) return false;
        return true;
    }

    // value at a spin configuration given as per-region-site (theta, phi)
    Complex evaluate(const std::vector<std::pair<double, double>>& config) const {
        if (config.size() != region_.size())
            throw std::invalid_argument("evaluate: config size mismatch");
        Complex out(0, 0);
        for (const auto& [idx, v] : c_) {
            Complex term = v;
            for (const auto& f : idx) {
                const auto& [th, ph] = config[region_.index_of(f.site)];
                term *= sph_harm(f.l, f.m, th, ph);
            }
            out += term;
        }
        return out;
    }

    LatticeObservable& operator+=(const LatticeObservable& o) {
        for (const auto& [idx, v] : o.c_) add(idx, v);
        return *this;
    }
    LatticeObservable& operator*=(Complex s) {
        if (s == Complex(0, 0)) {
            c_.clear();
            return *this;
        }
        for (auto& [idx, v] : c_) v *= s;
        return *this;
    }
    friend LatticeObservable operator*(Complex s, LatticeObservable a) {
        a *= s;
        return a;
    }
    friend LatticeObservable operator-(LatticeObservable a, const LatticeObservable& b) {
        LatticeObservable nb = b;
        nb *= Complex(-1, 0);
        a += nb;
        return a;
    }

  private:
    Region region_;
    std::map<MultiIndex, Complex> c_;
};

// iota: coefficients unchanged, the observable just lives on the larger window.
inline LatticeObservable embed(const LatticeObservable& a, const Region& bigger) {
    if (!bigger.contains(a.region())) throw std::invalid_argument("embed: region mismatch");
    LatticeObservable out(bigger);
    for (const auto& [idx, v] : a.coeffs()) out.add(idx, v);
    return out;
}

// restriction to the carrying sites (inverse of embed on the coefficient table)
inline LatticeObservable restrict_to_support(const LatticeObservable& a) {
    LatticeObservable out(a.support());
    for (const auto& [idx, v] : a.coeffs()) out.add(idx, v);
    return out;
}

namespace detail {

// bracket of two single-site harmonics by coefficients, memoized
inline const std::vector<std::pair<int, Complex>>& y_bracket_expansion(int l1, int m1, int l2,
                                                                       int m2) {
    static std::unordered_map<std::uint64_t, std::vector<std::pair<int, Complex>>> cache;
    static std::mutex mtx;
    const std::uint64_t key = pack6({l1, m1, l2, m2, 0, 2});
    {
        std::lock_guard<std::mutex> lock(mtx);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    const SphericalFunction br =
        poisson_bracket(SphericalFunction::harmonic(l1, m1), SphericalFunction::harmonic(l2, m2));
    std::vector<std::pair<int, Complex>> exp;
    const int m = m1 + m2;
    for (int L = 0; L <= br.band_limit(); ++L) {
        if (std::abs(m) > L) continue;
        const Complex c = br.coeff(L, m);
        if (std::abs(c) > 1e-13) exp.emplace_back(L, c);
    }
    std::lock_guard<std::mutex> lock(mtx);
    return cache.emplace(key, std::move(exp)).first->second;
}

// distribute one site's expansion over accumulated partial monomials
struct PartialSum {
    std::map<MultiIndex, Complex> terms;
    void init() { terms = {{MultiIndex{}, Complex(1, 0)}}; }
    void attach(const Site& site, const std::vector<std::pair<int, Complex>>& exp, int m_total) {
        std::map<MultiIndex, Complex> next;
        for (const auto& [idx, v] : terms)
            for (const auto& [L, c] : exp) {
                MultiIndex nidx = idx;
                if (L > 0) nidx.push_back(SiteFactor{site, L, m_total});
                auto [it, ok] = next.emplace(std::move(nidx), v * c);
                if (!ok) it->second += v * c;
            }
        terms = std::move(next);
    }
    void attach_factor(const SiteFactor& f) {
        std::map<MultiIndex, Complex> next;
        for (const auto& [idx, v] : terms) {
            MultiIndex nidx = idx;
            nidx.push_back(f);
            next.emplace(std::move(nidx), v);
        }
        terms = std::move(next);
    }
};

}  // namespace detail

// Pointwise product on the union region, per-site Clebsch-Gordan contraction.
inline LatticeObservable product(const LatticeObservable& a, const LatticeObservable& b) {
    const Region reg = region_union(a.region(), b.region());
    LatticeObservable out(reg);
    for (const auto& [ia, va] : a.coeffs())
        for (const auto& [ib, vb] : b.coeffs()) {
            detail::PartialSum acc;
            acc.init();
            auto pa = ia.begin();
            auto pb = ib.begin();
            while (pa != ia.end() || pb != ib.end()) {
                if (pb == ib.end() || (pa != ia.end() && pa->site < pb->site)) {
                    acc.attach_factor(*pa++);
                } else if (pa == ia.end() || pb->site < pa->site) {
                    acc.attach_factor(*pb++);
                } else {
                    std::vector<std::pair<int, Complex>> exp;
                    for (const auto& [L, w] :
                         detail::y_product_expansion(pa->l, pa->m, pb->l, pb->m))
                        exp.emplace_back(L, Complex(w, 0));
                    acc.attach(pa->site, exp, pa->m + pb->m);
                    ++pa;
                    ++pb;
                }
            }
            for (const auto& [idx, v] : acc.terms) out.add(idx, va * vb * v);
        }
    return out;
}

// {a, b} on the union region: Leibniz over shared sites, single-site bracket at
// the active site, pointwise products elsewhere. Disjoint supports give zero.
inline LatticeObservable poisson_bracket_region(const LatticeObservable& a,
                                                const LatticeObservable& b) {
    const Region reg = region_union(a.region(), b.region());
    LatticeObservable out(reg);
    for (const auto& [ia, va] : a.coeffs())
        for (const auto& [ib, vb] : b.coeffs()) {
            // shared sites of this monomial pair
            std::vector<Site> shared;
            for (const auto& fa : ia)
                for (const auto& fb : ib)
                    if (fa.site == fb.site) shared.push_back(fa.site);
            for (const Site& x : shared) {
                detail::PartialSum acc;
                acc.init();
                auto pa = ia.begin();
                auto pb = ib.begin();
                while (pa != ia.end() || pb != ib.end()) {
                    if (pb == ib.end() || (pa != ia.end() && pa->site < pb->site)) {
                        acc.attach_factor(*pa++);
                    } else if (pa == ia.end() || pb->site < pa->site) {
                        acc.attach_factor(*pb++);
                    } else {
                        if (pa->site == x) {
                            acc.attach(x, detail::y_bracket_expansion(pa->l, pa->m, pb->l, pb->m),
                                       pa->m + pb->m);
                        } else {
                            std::vector<std::pair<int, Complex>> exp;
                            for (const auto& [L, w] :
                                 detail::y_product_expansion(pa->l, pa->m, pb->l, pb->m))
                                exp.emplace_back(L, Complex(w, 0));
                            acc.attach(pa->site, exp, pa->m + pb->m);
                        }
                        ++pa;
                        ++pb;
                    }
                }
                for (const auto& [idx, v] : acc.terms) out.add(idx, va * vb * v);
            }
        }
    return out;
}

// Rotation acting at a single site x: the m-index there transforms by D^{(l)}(R).
inline LatticeObservable rotate_site(const LatticeObservable& a, const Site& x, double alpha,
                                     double beta, double gamma) {
    LatticeObservable out(a.region());
    std::map<int, Eigen::MatrixXcd> dmats;
    for (const auto& [idx, v] : a.coeffs()) {
        int pos = -1;
        for (std::size_t i = 0; i < idx.size(); ++i)
            if (idx[i].site == x) pos = static_cast<int>(i);
        if (pos < 0) {
            out.add(idx, v);
            continue;
        }
        const int l = idx[pos].l, m = idx[pos].m;
        auto it = dmats.find(l);
        if (it == dmats.end())
            it = dmats.emplace(l, wigner_D(HalfInt::from_int(l), alpha, beta, gamma)).first;
        const Eigen::MatrixXcd& D = it->second;
        for (int k = -l; k <= l; ++k) {
            const Complex w = D(l - k, l - m);
            if (std::abs(w) < 1e-300) continue;
            MultiIndex nidx = idx;
            nidx[pos].m = k;
            out.add(nidx, v * w);
        }
    }
    return out;
}

// sup norm over a dense tensor evaluation grid (poles included); |support| <= 3.
inline double sup_norm(const LatticeObservable& a) {
    const Region supp = a.support();
    if (supp.size() > 3) throw std::domain_error("sup_norm: support too large for tensor grid");
    if (supp.size() == 0) {
        Complex v = a.coeff({});
        return std::abs(v);
    }
    std::vector<std::vector<std::pair<double, double>>> axes;
    for (const auto& x : supp.sites) {
        const int b = std::max(a.band_at(x), 1);
        const int nt = (supp.size() == 3 ? 2 * b + 7 : 4 * b + 9);
        const int np = (supp.size() == 3 ? 4 * b + 7 : 8 * b + 9);
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i < nt; ++i)
            for (int k = 0; k < np; ++k)
                pts.emplace_back(std::numbers::pi * i / (nt - 1), 2.0 * std::numbers::pi * k / np);
        axes.push_back(std::move(pts));
    }
    // restrict to the support region for evaluation
    LatticeObservable on_supp(supp);
    for (const auto& [idx, v] : a.coeffs()) on_supp.add(idx, v);
    double best = 0.0;
    std::vector<std::size_t> cursor(axes.size(), 0);
    std::vector<std::pair<double, double>> config(axes.size());
    while (true) {
        for (std::size_t i = 0; i < axes.size(); ++i) config[i] = axes[i][cursor[i]];
        best = std::max(best, std::abs(on_supp.evaluate(config)));
        int k = static_cast<int>(axes.size()) - 1;
        while (k >= 0 && ++cursor[k] == axes[k].size()) cursor[k--] = 0;
        if (k < 0) break;
    }
    return best;
}

// --- potentials -------------------------------------------------------------

// Translation class: a shape of relative offsets and the interaction on it.
struct PotentialTerm {
    Region shape;            // offsets, anchored so translates are shape + t
    LatticeObservable obs;   // self-adjoint observable living on shape
};

struct PotentialFamily {
    int d = 1;
    std::vector<PotentialTerm> terms;

    int max_arity() const {
        int m = 0;
        for (const auto& t : terms) m = std::max(m, static_cast<int>(t.shape.size()));
        return m;
    }
    void validate() const {
        for (std::size_t k = 0; k < terms.size(); ++k) {
            if (!(terms[k].obs.region() == terms[k].shape))
                throw std::invalid_argument("potential term " + std::to_string(k) +
                                            ": observable region differs from shape");
            if (!terms[k].obs.is_selfadjoint())
                throw std::invalid_argument("self-adjointness violated at term " +
                                            std::to_string(k));
        }
    }
};

inline LatticeObservable translate(const LatticeObservable& a, const Site& t) {
    std::vector<Site> sites;
    for (const auto& x : a.region().sites) sites.push_back(x + t);
    LatticeObservable out(Region(a.region().d, std::move(sites)));
    for (const auto& [idx, v] : a.coeffs()) {
        MultiIndex nidx = idx;
        for (auto& f : nidx) f.site = f.site + t;
        out.add(nidx, v);
    }
    return out;
}

// All translates of term shapes fully contained in the window (free boundaries).
inline std::vector<LatticeObservable> potential_translates(const PotentialFamily& phi,
                                                           const Region& window) {
    std::vector<LatticeObservable> out;
    if (window.sites.empty()) return out;
    std::vector<int> lo(window.d, 1 << 28), hi(window.d, -(1 << 28));
    for (const auto& x : window.sites)
        for (int i = 0; i < window.d; ++i) {
            lo[i] = std::min(lo[i], x[i]);
            hi[i] = std::max(hi[i], x[i]);
        }
    for (const auto& term : phi.terms) {
        std::vector<int> slo(window.d, 1 << 28), shi(window.d, -(1 << 28));
        for (const auto& x : term.shape.sites)
            for (int i = 0; i < window.d; ++i) {
                slo[i] = std::min(slo[i], x[i]);
                shi[i] = std::max(shi[i], x[i]);
            }
        Site t(window.d);
        std::vector<int> tlo(window.d), thi(window.d);
        for (int i = 0; i < window.d; ++i) {
            tlo[i] = lo[i] - slo[i];
            thi[i] = hi[i] - shi[i];
        }
        std::vector<int> cur = tlo;
        while (true) {
            bool inside = true;
            for (const auto& x : term.shape.sites)
                if (!window.contains(x + cur)) {
                    inside = false;
                    break;
                }
            if (inside) out.push_back(translate(term.obs, cur));
            int k = window.d - 1;
            while (k >= 0 && ++cur[k] > thi[k]) cur[k] = tlo[k], --k;
            if (k < 0) break;
        }
    }
    return out;
}

// Translates whose region contains the given site (the Gamma-sum "X ni x",
// exactly finite for finite-range potentials, no window clipping).
inline std::vector<LatticeObservable> potential_translates_at(const PotentialFamily& phi,
                                                              const Site& x) {
    std::vector<LatticeObservable> out;
    for (const auto& term : phi.terms)
        for (const auto& off : term.shape.sites) out.push_back(translate(term.obs, x - off));
    return out;
}

// h_Lambda = sum of all translates contained in the window.
inline LatticeObservable hamiltonian_classical(const PotentialFamily& phi, const Region& window) {
    LatticeObservable h(window);
    for (const auto& term : potential_translates(phi, window)) h += embed(term, window);
    return h;
}

// --- regional quantization and derivations ----------------------------------

inline constexpr long kDenseDimGuard = 4096;

inline long tensor_dim(const SpinContext& ctx, const Region& reg) {
    long dim = 1;
    for (std::size_t i = 0; i < reg.size(); ++i) {
        dim *= ctx.dim();
        if (dim > kDenseDimGuard) throw std::length_error("tensor dimension guard exceeded");
    }
    return dim;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < a.cols(); ++k)
            out.block(i * b.rows(), k * b.cols(), b.rows(), b.cols()) = a(i, k) * b;
    return out;
}

// Q_j^Lambda: tensor-product extension of the single-site map, row-major in the
// sorted site order of the observable's region.
inline Matrix quantize_region(const SpinContext& ctx, const LatticeObservable& a) {
    const Region& reg = a.region();
    const long dim = tensor_dim(ctx, reg);
    Matrix out = Matrix::Zero(dim, dim);
    for (const auto& [idx, v] : a.coeffs()) {
        Matrix acc = Matrix::Identity(1, 1);
        auto f = idx.begin();
        for (const auto& x : reg.sites) {
            if (f != idx.end() && f->site == x) {
                acc = kron(acc, quantize_harmonic(ctx, f->l, f->m));
                ++f;
            } else {
                acc = kron(acc, Matrix::Identity(ctx.dim(), ctx.dim()));
            }
        }
        out += v * acc;
    }
    return out;
}

// HS expansion coefficients of A over the tensor harmonic basis; inverse of
// quantize_region on the window.
inline LatticeObservable dequantize_region(const SpinContext& ctx, const Matrix& A,
                                           const Region& reg) {
    LatticeObservable out(reg);
    const long dim = tensor_dim(ctx, reg);
    if (A.rows() != dim) throw std::invalid_argument("dequantize_region: dimension mismatch");
    std::vector<MultiIndex> stack{MultiIndex{}};
    // enumerate all per-site (l,m) with l in [0, 2j]; l = 0 contributes identity
    std::vector<std::vector<SiteFactor>> per_site;
    for (const auto& x : reg.sites) {
        std::vector<SiteFactor> opts;
        for (int l = 0; l <= ctx.two_j(); ++l)
            for (int m = -l; m <= l; ++m) opts.push_back(SiteFactor{x, l, m});
        per_site.push_back(std::move(opts));
    }
    std::vector<std::size_t> cursor(reg.size(), 0);
    while (true) {
        MultiIndex idx;
        double scale = 1.0;
        Matrix basis = Matrix::Identity(1, 1);
        for (std::size_t i = 0; i < reg.size(); ++i) {
            const SiteFactor& f = per_site[i][cursor[i]];
            if (f.l > 0) idx.push_back(f);
            scale *= double(2 * f.l + 1) / ctx.c_coeff(f.l);
            basis = kron(basis, quantize_harmonic(ctx, f.l, f.m));
        }
        const Complex inner = (basis.adjoint() * A).trace() / double(dim);
        const Complex coeff = scale * inner;
        if (std::abs(coeff) > 1e-14) out.add(idx, coeff);
        int k = static_cast<int>(reg.size()) - 1;
        while (k >= 0 && ++cursor[k] == per_site[k].size()) cursor[k--] = 0;
        if (k < 0) break;
    }
    return out;
}

// Matrix inclusion iota: A on `from` to `to`, identity elsewhere.
inline Matrix embed_matrix(const SpinContext& ctx, const Matrix& A, const Region& from,
                           const Region& to) {
    if (!to.contains(from)) throw std::invalid_argument("embed_matrix: region mismatch");
    const long dim_to = tensor_dim(ctx, to);
    const int n = ctx.dim();
    std::vector<int> pos;  // position of each `to` site inside `from`, -1 if absent
    for (const auto& x : to.sites) {
        int p = -1;
        for (std::size_t i = 0; i < from.size(); ++i)
            if (from.sites[i] == x) p = static_cast<int>(i);
        pos.push_back(p);
    }
    Matrix out = Matrix::Zero(dim_to, dim_to);
    const std::size_t nt = to.size(), nf = from.size();
    std::vector<int> ridx(nt), cidx(nt);
    for (long r = 0; r < dim_to; ++r) {
        long tmp = r;
        for (std::size_t i = nt; i-- > 0;) {
            ridx[i] = tmp % n;
            tmp /= n;
        }
        for (long c = 0; c < dim_to; ++c) {
            tmp = c;
            for (std::size_t i = nt; i-- > 0;) {
                cidx[i] = tmp % n;
                tmp /= n;
            }
            bool diag = true;
            long ar = 0, ac = 0;
            std::vector<int> fr(nf), fc(nf);
            for (std::size_t i = 0; i < nt; ++i) {
                if (pos[i] < 0) {
                    if (ridx[i] != cidx[i]) {
                        diag = false;
                        break;
                    }
                } else {
                    fr[pos[i]] = ridx[i];
                    fc[pos[i]] = cidx[i];
                }
            }
            if (!diag) continue;
            for (std::size_t i = 0; i < nf; ++i) {
                ar = ar * n + fr[i];
                ac = ac * n + fc[i];
            }
            out(r, c) = A(ar, ac);
        }
    }
    return out;
}

inline Matrix hamiltonian_quantum(const SpinContext& ctx, const PotentialFamily& phi,
                                  const Region& window) {
    return quantize_region(ctx, hamiltonian_classical(phi, window));
}

// Range closure: union of obs support with every translate shape meeting it.
inline Region range_closure(const PotentialFamily& phi, const Region& obs_region) {
    std::set<Site> sites(obs_region.sites.begin(), obs_region.sites.end());
    for (const auto& x : obs_region.sites)
        for (const auto& tr : potential_translates_at(phi, x))
            for (const auto& y : tr.region().sites) sites.insert(y);
    return Region(obs_region.d, {sites.begin(), sites.end()});
}

// delta_infty(a) = sum_{X meets supp(a)} {a, phi_X}; exact for finite range.
inline LatticeObservable derivation_classical(const PotentialFamily& phi, const Region& window,
                                              const LatticeObservable& a) {
    if (!window.contains(a.region()))
        throw std::invalid_argument("derivation_classical: window must contain the observable");
    const Region supp = a.support();
    LatticeObservable out(window);
    for (std::size_t k = 0; k < phi.terms.size(); ++k) {
        std::set<Site> offsets;  // each translate of this class counted once
        for (const auto& x : supp.sites)
            for (const auto& off : phi.terms[k].shape.sites) offsets.insert(x - off);
        for (const auto& t : offsets) {
            const LatticeObservable tr = translate(phi.terms[k].obs, t);
            if (!window.contains(tr.region()))
                throw std::invalid_argument("derivation_classical: window too small for range");
            out += poisson_bracket_region(a, tr);
        }
    }
    return out;
}

// delta_j(A) = i sum_X [Q(phi_X), A] on the window; exactness needs the window
// to contain the range closure of the observable's true support.
inline Matrix derivation_quantum(const SpinContext& ctx, const PotentialFamily& phi,
                                 const Region& window, const Matrix& A) {
    const Matrix H = hamiltonian_quantum(ctx, phi, window);
    return Complex(0, 1) * (H * A - A * H);
}

// --- potential norms ----------------------------------------------------------

enum class NormMode { Quantum, ClassicalC1 };

// sup_x sum_{X ni x, |X| = m+1} ||phi_X|| per arity class m; for translation
// classes each shape contributes |shape| translates through a fixed site.
inline std::vector<double> arity_norms(const PotentialFamily& phi, NormMode mode,
                                       const SpinContext* ctx) {
    std::vector<double> by_arity;
    for (const auto& term : phi.terms) {
        const int m = static_cast<int>(term.shape.size()) - 1;
        if (static_cast<int>(by_arity.size()) <= m) by_arity.resize(m + 1, 0.0);
        double nrm = 0.0;
        if (mode == NormMode::Quantum) {
            nrm = op_norm(quantize_region(*ctx, term.obs));
        } else {
            // C^1-type grid norm: sup |phi| + sum_x |grad_x phi| in the orthonormal frame
            const Region supp = term.obs.region();
            double best = 0.0;
            std::vector<std::vector<std::pair<double, double>>> axes;
            for (const auto& x : supp.sites) {
                const int b = std::max(term.obs.band_at(x), 1);
                std::vector<std::pair<double, double>> pts;
                const int nt = 4 * b + 7, np = 8 * b + 7;
                for (int i = 1; i + 1 < nt; ++i)
                    for (int k = 0; k < np; ++k)
                        pts.emplace_back(std::numbers::pi * i / (nt - 1),
                                         2.0 * std::numbers::pi * k / np);
                axes.push_back(std::move(pts));
            }
            std::vector<std::size_t> cursor(axes.size(), 0);
            std::vector<std::pair<double, double>> config(axes.size());
            const double h = 1e-5;
            while (true) {
                for (std::size_t i = 0; i < axes.size(); ++i) config[i] = axes[i][cursor[i]];
                double val = std::abs(term.obs.evaluate(config));
                for (std::size_t i = 0; i < axes.size(); ++i) {
                    auto cfg = config;
                    cfg[i].first += h;
                    const Complex fp = term.obs.evaluate(cfg);
                    cfg[i].first -= 2 * h;
                    const Complex fm = term.obs.evaluate(cfg);
                    cfg[i].first += h;
                    cfg[i].second += h;
                    const Complex gp = term.obs.evaluate(cfg);
                    cfg[i].second -= 2 * h;
                    const Complex gm = term.obs.evaluate(cfg);
                    const double dth = std::abs(fp - fm) / (2 * h);
                    const double dph =
                        std::abs(gp - gm) / (2 * h) / std::sin(config[i].first);
                    val += std::hypot(dth, dph);
                }
                best = std::max(best, val);
                int k = static_cast<int>(axes.size()) - 1;
                while (k >= 0 && ++cursor[k] == axes[k].size()) cursor[k--] = 0;
                if (k < 0) break;
            }
            nrm = best;
        }
        by_arity[m] += double(term.shape.size()) * nrm;
    }
    return by_arity;
}

// ||Phi||_lambda = sum_m e^{lambda m} sup_x sum_{X ni x, |X|=m+1} ||Phi_X||.
inline double lambda_norm(const PotentialFamily& phi, double lambda, NormMode mode,
                          const SpinContext* ctx = nullptr) {
    if (mode == NormMode::Quantum && !ctx)
        throw std::invalid_argument("lambda_norm: quantum mode needs a context");
    const auto by_arity = arity_norms(phi, mode, ctx);
    double out = 0.0;
    for (std::size_t m = 0; m < by_arity.size(); ++m) out += std::exp(lambda * m) * by_arity[m];
    return out;
}

}  // namespace spinlat
