#pragma once

#include <map>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "spinlat/sphere.hpp"

namespace spinlat {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline bool is_hermitian(const Matrix& a, double tol = 1e-12) {
    return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline double op_norm(const Matrix& a) {
    if (a.rows() <= 64) return a.jacobiSvd().singularValues()(0);
    // largest singular value via the Gram matrix; Jacobi SVD is too slow here
    Eigen::SelfAdjointEigenSolver<Matrix> es(a.adjoint() * a, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

// Single-site spin-j context: dimension, angular momentum matrices in the
// |j,m> basis ordered m = j, j-1, ..., -j, and cached c_{j,l} factors.
class SpinContext {
  public:
    explicit SpinContext(HalfInt j) : j_(j), dim_(j.twice + 1) {
        jplus_ = Matrix::Zero(dim_, dim_);
        for (int col = 1; col < dim_; ++col) {
            const double m = j_.value() - col;
            jplus_(col - 1, col) = std::sqrt((j_.value() - m) * (j_.value() + m + 1));
        }
        jminus_ = jplus_.adjoint();
        j1_ = 0.5 * (jplus_ + jminus_);
        j2_ = (jplus_ - jminus_) / Complex(0, 2);
        j3_ = Matrix::Zero(dim_, dim_);
        for (int r = 0; r < dim_; ++r) j3_(r, r) = j_.value() - r;
    }

    HalfInt j() const { return j_; }
    int dim() const { return dim_; }
    int two_j() const { return j_.twice; }
    const Matrix& J1() const { return j1_; }
    const Matrix& J2() const { return j2_; }
    const Matrix& J3() const { return j3_; }
    const Matrix& Jplus() const { return jplus_; }

    // c_{j,l} = (cg^{j,j}_{l,0;j,j})^2; vanishes for l > 2j.
    double c_coeff(int l) const {
        if (l < 0) throw std::domain_error("c_coeff: l < 0");
        if (l > two_j()) return 0.0;
        if (static_cast<int>(cl_.size()) <= l) {
            for (int ll = static_cast<int>(cl_.size()); ll <= l; ++ll) {
                const double cg = clebsch_gordan(HalfInt::from_int(ll), HalfInt(0), j_, j_, j_, j_);
                cl_.push_back(cg * cg);
            }
        }
        return cl_[l];
    }

  private:
    HalfInt j_;
    int dim_;
    Matrix j1_, j2_, j3_, jplus_, jminus_;
    mutable std::vector<double> cl_;
};

// |j,sigma> = D^{(j)}(e^{-i phi Jz} e^{-i theta Jy}) |j,j>; components
// <j,m|j,sigma> = e^{-im phi} d^j_{m,j}(theta).
inline Vector coherent_state(const SpinContext& ctx, double theta, double phi) {
    Vector v(ctx.dim());
    for (int r = 0; r < ctx.dim(); ++r) {
        const HalfInt m(ctx.two_j() - 2 * r);
        v(r) = std::polar(1.0, -m.value() * phi) * wigner_small_d(ctx.j(), m, ctx.j(), theta);
    }
    return v;
}

// Closed-form Berezin quantization of a single harmonic:
// Q_j(Y_{l,m}) = cg^{j,j}_{l,0;j,j} sum_{m'} cg^{j,m+m'}_{l,m;j,m'} |j,m+m'><j,m'|.
inline Matrix quantize_harmonic(const SpinContext& ctx, int l, int m) {
    Matrix out = Matrix::Zero(ctx.dim(), ctx.dim());
    if (l > ctx.two_j()) return out;
    const HalfInt lh = HalfInt::from_int(l), mh = HalfInt::from_int(m);
    const double front = clebsch_gordan(lh, HalfInt(0), ctx.j(), ctx.j(), ctx.j(), ctx.j());
    for (int col = 0; col < ctx.dim(); ++col) {
        const HalfInt mp(ctx.two_j() - 2 * col);
        const HalfInt mrow = mh + mp;
        if (abs(mrow) > ctx.j()) continue;
        const int row = (ctx.two_j() - mrow.twice) / 2;
        out(row, col) = front * clebsch_gordan(lh, mh, ctx.j(), mp, ctx.j(), mrow);
    }
    return out;
}

inline Matrix quantize(const SpinContext& ctx, const SphericalFunction& f) {
    Matrix out = Matrix::Zero(ctx.dim(), ctx.dim());
    for (int l = 0; l <= std::min(f.band_limit(), ctx.two_j()); ++l)
        for (int m = -l; m <= l; ++m) {
            const Complex c = f.coeff(l, m);
            if (c != Complex(0, 0)) out += c * quantize_harmonic(ctx, l, m);
        }
    return out;
}

// Oracle path: Q_j(a) = int a(sigma) |j,sigma><j,sigma| dmu_j, mu_j = (2j+1) mu_0.
template <typename Fn>
inline Matrix quantize_by_quadrature(const SpinContext& ctx, Fn&& a, const SphereQuadrature& q) {
    Matrix out = Matrix::Zero(ctx.dim(), ctx.dim());
    for (std::size_t i = 0; i < q.theta.size(); ++i) {
        for (int k = 0; k < q.n_phi; ++k) {
            const double th = q.theta[i], ph = q.phi(k);
            const Vector v = coherent_state(ctx, th, ph);
            const Complex w = a(th, ph) * (q.wtheta[i] / q.n_phi) * double(ctx.dim());
            out += w * (v * v.adjoint());
        }
    }
    return out;
}

// Coherent-state diagonal symbol <j,sigma|A|j,sigma>, analyzed to a band-limited function.
inline SphericalFunction check_function(const SpinContext& ctx, const Matrix& A, int lmax) {
    const int band = std::min(lmax, ctx.two_j());
    const SphereQuadrature q = quad_rule(ctx.two_j() + band + 2);
    auto res = analyze(q,
                       [&](double th, double ph) {
                           const Vector v = coherent_state(ctx, th, ph);
                           return Complex(v.adjoint() * A * v);
                       },
                       band);
    return res.fn;
}

// Normalized Hilbert-Schmidt scalar product tr(A* B)/(2j+1).
inline Complex hs_inner(const SpinContext& ctx, const Matrix& A, const Matrix& B) {
    if (A.rows() != ctx.dim() || B.rows() != ctx.dim())
        throw std::invalid_argument("hs_inner: dimension mismatch");
    return (A.adjoint() * B).trace() / double(ctx.dim());
}

// HS-normalized basis element scr Y_{j|l,m} = Q_j(Y_{l,m})/sqrt(c_{j,l}).
inline Matrix hs_basis(const SpinContext& ctx, int l, int m) {
    if (l > ctx.two_j()) throw std::domain_error("hs_basis: l > 2j");
    return quantize_harmonic(ctx, l, m) / std::sqrt(ctx.c_coeff(l));
}

// Inverse of quantize on M_{2j+1}: coefficients (2l+1)/c_{j,l} <Q(Y_{l,m})|A>_HS.
inline SphericalFunction dequantize(const SpinContext& ctx, const Matrix& A) {
    SphericalFunction out(ctx.two_j());
    for (int l = 0; l <= ctx.two_j(); ++l) {
        const double scale = double(2 * l + 1) / ctx.c_coeff(l);
        for (int m = -l; m <= l; ++m)
            out.set(l, m, scale * hs_inner(ctx, quantize_harmonic(ctx, l, m), A));
    }
    return out;
}

// Expansion coefficients c_{j|l,m1,m2} of scrY_{l1,m1} scrY_{l2,m2} over scrY_{l,m1+m2}.
inline std::map<int, Complex> hs_product_coeffs(const SpinContext& ctx, int l1, int m1, int l2,
                                                int m2) {
    if (l1 > ctx.two_j() || l2 > ctx.two_j())
        throw std::domain_error("hs_product_coeffs: l > 2j");
    const Matrix prod = hs_basis(ctx, l1, m1) * hs_basis(ctx, l2, m2);
    std::map<int, Complex> out;
    const int m = m1 + m2;
    for (int l = std::abs(l1 - l2); l <= std::min(l1 + l2, ctx.two_j()); ++l) {
        if (std::abs(m) > l) continue;
        out[l] = hs_inner(ctx, hs_basis(ctx, l, m), prod);
    }
    return out;
}

// Ad_{D^{(j)}(R)}: A -> D A D^*.
inline Matrix rotate_operator(const SpinContext& ctx, double alpha, double beta, double gamma,
                              const Matrix& A) {
    const Matrix D = wigner_D(ctx.j(), alpha, beta, gamma);
    return D * A * D.adjoint();
}

}  // namespace spinlat
