#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "spinlat/berezin.hpp"
#include "spinlat/quadrature.hpp"

using namespace spinlat;
using Catch::Approx;

namespace {

SphericalFunction random_selfadjoint(int band, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SphericalFunction f(band);
    for (int l = 0; l <= band; ++l) {
        f.set(l, 0, Complex(u(rng), 0.0));
        for (int m = 1; m <= l; ++m) {
            const Complex c(u(rng), u(rng));
            f.set(l, m, c);
            f.set(l, -m, ((m % 2) ? -1.0 : 1.0) * std::conj(c));
        }
    }
    return f;
}

}  // namespace

TEST_CASE("spin context: commutation relations") {
    for (int tj : {1, 2, 3, 7}) {
        const SpinContext ctx{HalfInt(tj)};
        const Matrix c12 = ctx.J1() * ctx.J2() - ctx.J2() * ctx.J1() - Complex(0, 1) * ctx.J3();
        const Matrix c23 = ctx.J2() * ctx.J3() - ctx.J3() * ctx.J2() - Complex(0, 1) * ctx.J1();
        const Matrix c31 = ctx.J3() * ctx.J1() - ctx.J1() * ctx.J3() - Complex(0, 1) * ctx.J2();
        REQUIRE(c12.cwiseAbs().maxCoeff() < 1e-13);
        REQUIRE(c23.cwiseAbs().maxCoeff() < 1e-13);
        REQUIRE(c31.cwiseAbs().maxCoeff() < 1e-13);
        REQUIRE(ctx.J3()(0, 0).real() == Approx(ctx.j().value()));
    }
}

TEST_CASE("coherent states") {
    const SpinContext ctx{HalfInt(5)};  // j = 5/2
    const Vector north = coherent_state(ctx, 0.0, 1.3);
    for (int r = 1; r < ctx.dim(); ++r) REQUIRE(std::abs(north(r)) < 1e-14);
    REQUIRE(std::abs(north(0) - std::polar(1.0, -ctx.j().value() * 1.3)) < 1e-14);

    std::mt19937 rng(1);
    std::uniform_real_distribution<double> uth(0.0, 3.14), uph(-3.0, 3.0);
    for (int i = 0; i < 12; ++i) {
        const double th = uth(rng), ph = uph(rng);
        const Vector v = coherent_state(ctx, th, ph);
        REQUIRE(v.norm() == Approx(1.0).epsilon(1e-13));
        const Complex jz = v.adjoint() * ctx.J3() * v;
        REQUIRE(jz.real() == Approx(ctx.j().value() * std::cos(th)).margin(1e-12));
        REQUIRE(std::abs(jz.imag()) < 1e-13);
    }
}

TEST_CASE("quantize: closed form") {
    const SpinContext ctx{HalfInt(4)};  // j = 2
    REQUIRE((quantize(ctx, SphericalFunction::constant(1.0)) - Matrix::Identity(5, 5))
                .cwiseAbs()
                .maxCoeff() < 1e-14);

    // Q_j(Y_{1,0}) = J3/(j+1); the CG column oracle -m'/sqrt(j(j+1)) in the
    // (1 first, j second) coupling order, cf. the 1 x 1/2 tables.
    const double j = 2.0;
    for (int tm = -4; tm <= 4; tm += 2) {
        const double cg = clebsch_gordan(HalfInt::from_int(1), HalfInt(0), ctx.j(), HalfInt(tm),
                                         ctx.j(), HalfInt(tm));
        REQUIRE(cg == Approx(-0.5 * tm / std::sqrt(j * (j + 1))).margin(1e-14));
    }
    const Matrix q10 = quantize(ctx, SphericalFunction::harmonic(1, 0));
    REQUIRE((q10 - ctx.J3() / (j + 1)).cwiseAbs().maxCoeff() < 1e-14);

    // l > 2j quantizes to zero
    const Matrix q5 = quantize(ctx, SphericalFunction::harmonic(5, 2));
    REQUIRE(q5.cwiseAbs().maxCoeff() == 0.0);

    // Hermiticity: Q(f)^* = Q(f^*)
    const SphericalFunction f = random_selfadjoint(3, 21);
    const Matrix qf = quantize(ctx, f);
    REQUIRE((qf - quantize(ctx, f.adjoint()).adjoint()).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE(is_hermitian(qf));

    // norm contraction
    REQUIRE(op_norm(qf) <= sup_norm(f) + 1e-12);
}

TEST_CASE("quantize by quadrature: identity, positivity, cross-oracle") {
    for (int tj = 1; tj <= 12; ++tj) {
        const SpinContext ctx{HalfInt(tj)};
        const SphereQuadrature q = quad_rule(2 * tj + 2);
        const Matrix qi =
            quantize_by_quadrature(ctx, [](double, double) { return Complex(1, 0); }, q);
        REQUIRE((qi - Matrix::Identity(ctx.dim(), ctx.dim())).cwiseAbs().maxCoeff() < 1e-10);
    }

    // positive symbol -> positive semidefinite matrix
    const SpinContext ctx{HalfInt(3)};
    const SphereQuadrature q = quad_rule(16);
    const Matrix pos = quantize_by_quadrature(
        ctx, [](double th, double ph) { return Complex(1.2 + std::sin(th) * std::cos(ph), 0); },
        q);
    Eigen::SelfAdjointEigenSolver<Matrix> es(pos);
    REQUIRE(es.eigenvalues().minCoeff() > -1e-12);

    // closed form vs quadrature on every harmonic
    for (int tj : {2, 3, 5, 8}) {
        const SpinContext c2{HalfInt(tj)};
        const SphereQuadrature qq = quad_rule(2 * tj + 2 * tj + 2);
        for (int l = 0; l <= tj; ++l)
            for (int m = -l; m <= l; ++m) {
                const Matrix a = quantize_harmonic(c2, l, m);
                const Matrix b = quantize_by_quadrature(
                    c2, [&](double th, double ph) { return sph_harm(l, m, th, ph); }, qq);
                REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-10);
            }
    }
}

TEST_CASE("check function eigenrelation and sup-norm convergence") {
    const SpinContext ctx{HalfInt(5)};
    const SphericalFunction cone = check_function(ctx, Matrix::Identity(6, 6), 4);
    REQUIRE(std::abs(cone.coeff(0, 0) - 1.0) < 1e-12);
    REQUIRE(cone.trimmed_band(1e-12) == 0);

    for (int l : {1, 2, 3})
        for (int m = -l; m <= l; ++m) {
            const SphericalFunction chk =
                check_function(ctx, quantize_harmonic(ctx, l, m), ctx.two_j());
            for (int lp = 0; lp <= chk.band_limit(); ++lp)
                for (int mp = -lp; mp <= lp; ++mp) {
                    const Complex expect =
                        (lp == l && mp == m) ? Complex(ctx.c_coeff(l), 0) : Complex(0, 0);
                    REQUIRE(std::abs(chk.coeff(lp, mp) - expect) < 1e-10);
                }
        }

    const SphericalFunction a = random_selfadjoint(2, 4);
    double prev = 1e9;
    for (int tj : {4, 8, 16, 32}) {
        const SpinContext cj{HalfInt(tj)};
        const double gap = sup_norm(check_function(cj, quantize(cj, a), 4) - a);
        REQUIRE(gap < prev);
        prev = gap;
    }
}

TEST_CASE("c coefficients") {
    const SpinContext ctx{HalfInt(6)};  // j = 3
    REQUIRE(ctx.c_coeff(0) == Approx(1.0));
    REQUIRE(ctx.c_coeff(1) == Approx(3.0 / 4.0));
    REQUIRE(ctx.c_coeff(7) == 0.0);
}

TEST_CASE("Hilbert-Schmidt structure") {
    const SpinContext ctx{HalfInt(4)};
    const Matrix id = Matrix::Identity(5, 5);
    REQUIRE(hs_inner(ctx, id, id).real() == Approx(1.0));

    for (int l = 0; l <= 4; ++l)
        for (int m = -l; m <= l; ++m) {
            const Matrix q = quantize_harmonic(ctx, l, m);
            REQUIRE(hs_inner(ctx, q, q).real() ==
                    Approx(ctx.c_coeff(l) / (2 * l + 1)).margin(1e-13));
        }

    // <Q(a)|Q(b)>_HS = <check(a)|b>_{L2(mu_0)}
    const SphericalFunction a = random_selfadjoint(2, 31), b = random_selfadjoint(2, 32);
    const Complex lhs = hs_inner(ctx, quantize(ctx, a), quantize(ctx, b));
    const SphericalFunction acheck = check_function(ctx, quantize(ctx, a), 4);
    const SphereQuadrature q = quad_rule(12);
    const Complex rhs = integrate(q, sample_grid(q, [&](double th, double ph) {
                                      return std::conj(acheck.synthesize(th, ph)) *
                                             b.synthesize(th, ph);
                                  }));
    REQUIRE(std::abs(lhs - rhs) < 1e-10);

    // Gram matrix of the hs_basis is diagonal with entries 1/(2l+1); basis spans
    for (int tj : {2, 5}) {
        const SpinContext cj{HalfInt(tj)};
        std::vector<Matrix> basis;
        for (int l = 0; l <= tj; ++l)
            for (int m = -l; m <= l; ++m) basis.push_back(hs_basis(cj, l, m));
        const int n = static_cast<int>(basis.size());
        REQUIRE(n == (tj + 1) * (tj + 1));  // spans M_{2j+1}
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) {
                const Complex g = hs_inner(cj, basis[i], basis[k]);
                if (i == k)
                    REQUIRE(g.real() > 0);
                else
                    REQUIRE(std::abs(g) < 1e-12);
            }
    }
}

TEST_CASE("hs basis norms") {
    const SpinContext ctx{HalfInt(12)};  // j = 6
    REQUIRE((hs_basis(ctx, 0, 0) - Matrix::Identity(13, 13)).cwiseAbs().maxCoeff() < 1e-13);
    for (int l = 1; l <= 12; ++l)
        for (int m = -l; m <= l; ++m) {
            const Matrix y = hs_basis(ctx, l, m);
            REQUIRE(std::sqrt(hs_inner(ctx, y, y).real()) ==
                    Approx(1.0 / std::sqrt(2.0 * l + 1)).margin(1e-12));
            REQUIRE(op_norm(y) <= 1.0 + 1e-12);
        }
    REQUIRE_THROWS_AS(hs_basis(ctx, 13, 0), std::domain_error);
}

TEST_CASE("dequantize inverts quantize") {
    const SpinContext ctx{HalfInt(4)};  // j = 2
    const SphericalFunction cone = dequantize(ctx, Matrix::Identity(5, 5));
    REQUIRE(std::abs(cone.coeff(0, 0) - 1.0) < 1e-12);
    REQUIRE(cone.trimmed_band(1e-12) == 0);

    const SphericalFunction dj3 = dequantize(ctx, ctx.J3());
    REQUIRE(dj3.coeff(1, 0).real() == Approx(3.0));  // (j+1) Y_{1,0}
    REQUIRE(dj3.trimmed_band(1e-12) == 1);

    std::mt19937 rng(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix A(5, 5);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) A(r, c) = Complex(u(rng), u(rng));
    A = (A + Matrix(A.adjoint())).eval();
    const Matrix back = quantize(ctx, dequantize(ctx, A));
    REQUIRE((back - A).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("hs product expansion") {
    const SpinContext ctx{HalfInt(5)};  // j = 5/2

    auto coeffs0 = hs_product_coeffs(ctx, 3, 1, 0, 0);
    REQUIRE(coeffs0.size() == 1);
    REQUIRE(std::abs(coeffs0[3] * 7.0 - Complex(1, 0)) < 1e-12);

    std::mt19937 rng(15);
    std::uniform_int_distribution<int> ul(0, 5);
    for (int trial = 0; trial < 12; ++trial) {
        const int l1 = ul(rng), l2 = ul(rng);
        std::uniform_int_distribution<int> um1(-l1, l1), um2(-l2, l2);
        const int m1 = um1(rng), m2 = um2(rng);
        const auto cmap = hs_product_coeffs(ctx, l1, m1, l2, m2);
        Matrix rebuilt = Matrix::Zero(6, 6);
        for (const auto& [l, c] : cmap) {
            REQUIRE(std::abs(c) * (2 * l + 1) <= 1.0 + 1e-11);
            rebuilt += double(2 * l + 1) * c * hs_basis(ctx, l, m1 + m2);
            // magnitude identity via CG and 6j
            const double mag =
                std::sqrt(double(2 * l + 1) * ctx.dim()) *
                std::abs(cg_int(l1, m1, l2, m2, l, m1 + m2) *
                         six_j(ctx.j(), ctx.j(), HalfInt::from_int(l2), HalfInt::from_int(l),
                               HalfInt::from_int(l1), ctx.j()));
            REQUIRE(std::abs(c) * (2 * l + 1) == Approx(mag).margin(1e-11));
        }
        const Matrix direct = hs_basis(ctx, l1, m1) * hs_basis(ctx, l2, m2);
        REQUIRE((rebuilt - direct).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("operator rotation") {
    const SpinContext ctx{HalfInt(3)};
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix A(4, 4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) A(r, c) = Complex(u(rng), u(rng));

    REQUIRE((rotate_operator(ctx, 0, 0, 0, A) - A).cwiseAbs().maxCoeff() < 1e-14);

    // intertwining: D Q(f) D^* = Q(f after rotation)
    const SphericalFunction f = random_selfadjoint(3, 2);
    const double al = 0.7, be = 1.1, ga = -0.4;
    const Matrix lhs = rotate_operator(ctx, al, be, ga, quantize(ctx, f));
    const Matrix rhs = quantize(ctx, rotate(f, al, be, ga));
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);

    // Haar average of the adjoint action annihilates l >= 1 sectors
    const HaarSU2 haar(8);
    for (int l : {1, 2, 3}) {
        Matrix avg = Matrix::Zero(4, 4);
        const Matrix y = hs_basis(ctx, l, std::min(l, 1));
        for (const auto& node : haar.nodes)
            avg += node.weight * rotate_operator(ctx, node.alpha, node.beta, node.gamma, y);
        REQUIRE(avg.cwiseAbs().maxCoeff() < 1e-12);
    }
}
