#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "spinlat/equilibrium.hpp"

using namespace spinlat;
using Catch::Approx;

namespace {

Region chain(int n) {
    std::vector<Site> s;
    for (int i = 0; i < n; ++i) s.push_back({i});
    return Region(1, std::move(s));
}

PotentialFamily field_potential(double h) {
    PotentialFamily phi;
    phi.d = 1;
    Region site0(1, {{0}});
    phi.terms.push_back({site0, LatticeObservable::harmonic(site0, {0}, 1, 0, h)});
    phi.validate();
    return phi;
}

PotentialFamily demo_potential(double field, double coupling) {
    PotentialFamily phi = field_potential(field);
    Region bond(1, {{0}, {1}});
    LatticeObservable b(bond);
    b.add({SiteFactor{{0}, 1, 0}, SiteFactor{{1}, 1, 0}}, coupling);
    b.add({SiteFactor{{0}, 1, 1}, SiteFactor{{1}, 1, -1}}, -coupling);
    b.add({SiteFactor{{0}, 1, -1}, SiteFactor{{1}, 1, 1}}, -coupling);
    phi.terms.push_back({bond, b});
    phi.validate();
    return phi;
}

// adaptive Simpson on [-1,1], the 1-d oracle for single-site z-field moments
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int depth = 24) {
    const double c = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fc = f(c);
    std::function<double(double, double, double, double, double, double, int)> rec =
        [&](double lo, double hi, double flo, double fhi, double fmid, double whole,
            int d) -> double {
        const double m1 = 0.5 * (lo + 0.5 * (lo + hi)), m2 = 0.5 * (hi + 0.5 * (lo + hi));
        const double mid = 0.5 * (lo + hi);
        const double f1 = f(m1), f2 = f(m2);
        const double left = (mid - lo) / 6.0 * (flo + 4 * f1 + fmid);
        const double right = (hi - mid) / 6.0 * (fmid + 4 * f2 + fhi);
        if (d <= 0 || std::abs(left + right - whole) < 15 * tol) return left + right;
        return rec(lo, mid, flo, fmid, f1, left, d - 1) +
               rec(mid, hi, fmid, fhi, f2, right, d - 1);
    };
    const double whole = (b - a) / 6.0 * (fa + 4 * fc + fb);
    return rec(a, b, fa, fb, fc, whole, depth);
}

LatticeObservable single(const Region& reg, const Site& x, int l, int m, Complex c = 1.0) {
    return LatticeObservable::harmonic(reg, x, l, m, c);
}

}  // namespace

TEST_CASE("classical Gibbs moments: infinite temperature and field oracle") {
    const Region one = chain(1);
    const PotentialFamily phi = field_potential(0.8);

    const auto free = gibbs_classical_moments(phi, one, 0.0, 3, 16);
    REQUIRE(free.moments.empty == Complex(1.0, 0.0));
    for (const auto& [idx, v] : free.moments.entries) REQUIRE(std::abs(v) < 1e-14);

    // omega(Y_{1,0}) against the 1-d adaptive quadrature oracle
    const double beta = 1.7, h = 0.8;
    const ClassicalGibbs g(phi, one, beta, 48);
    const Complex m10 = g.expectation(single(one, {0}, 1, 0));
    const double num =
        adaptive_simpson([&](double x) { return x * std::exp(-beta * h * x); }, -1, 1, 1e-13);
    const double den =
        adaptive_simpson([&](double x) { return std::exp(-beta * h * x); }, -1, 1, 1e-13);
    REQUIRE(m10.real() == Approx(num / den).margin(1e-11));
    REQUIRE(std::abs(m10.imag()) < 1e-14);
    // Langevin closed form -[coth(z) - 1/z]
    const double z = beta * h;
    REQUIRE(m10.real() == Approx(-(1.0 / std::tanh(z) - 1.0 / z)).margin(1e-11));

    // Hermitian symmetry of the moment table
    const auto mv = g.moments(3);
    for (const auto& [idx, v] : mv.entries) {
        MultiIndex conj_idx = idx;
        double sign = 1.0;
        for (auto& f : conj_idx) {
            if (f.m % 2) sign = -sign;
            f.m = -f.m;
        }
        std::sort(conj_idx.begin(), conj_idx.end());
        REQUIRE(std::abs(mv.at(conj_idx) - sign * std::conj(v)) < 1e-12);
    }

    // doubling flag on a deliberately coarse rule
    const auto coarse = gibbs_classical_moments(phi, one, 3.0, 4, 4, true, 1e-12);
    REQUIRE(!coarse.converged);
    const auto fine = gibbs_classical_moments(phi, one, 1.0, 3, 32, true, 1e-10);
    REQUIRE(fine.converged);
}

TEST_CASE("quantum Gibbs state basics") {
    const SpinContext ctx{HalfInt(3)};
    const PotentialFamily phi = demo_potential(0.4, 0.25);
    const QuantumGibbs g0(ctx, phi, chain(2), 0.0);
    REQUIRE((g0.rho() - Matrix::Identity(16, 16) / 16.0).cwiseAbs().maxCoeff() < 1e-14);

    const QuantumGibbs g(ctx, phi, chain(2), 1.3);
    REQUIRE(std::abs(g.rho().trace() - Complex(1, 0)) < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(g.rho());
    REQUIRE(es.eigenvalues().minCoeff() > -1e-13);

    // single site j = 1/2, H = h J3: <J3> = -(1/2) tanh(beta h / 2)
    const SpinContext half{HalfInt(1)};
    const double h = 0.9, beta = 2.1;
    const QuantumGibbs gh(Matrix(h * half.J3()), beta);
    REQUIRE(gh.expectation(half.J3()).real() ==
            Approx(-0.5 * std::tanh(beta * h / 2)).margin(1e-13));
}

TEST_CASE("imaginary time evolution") {
    const SpinContext ctx{HalfInt(2)};
    const PotentialFamily phi = field_potential(0.6);
    const Matrix H = hamiltonian_quantum(ctx, phi, chain(1));

    REQUIRE((evolve_imaginary(H, H, 0.7) - H).cwiseAbs().maxCoeff() < 1e-12);

    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    Matrix B(3, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) B(r, c) = Complex(u(rng), u(rng));

    REQUIRE((evolve_imaginary(H, B, 0.0) - B).cwiseAbs().maxCoeff() < 1e-13);

    const Matrix two_step = evolve_imaginary(H, evolve_imaginary(H, B, 0.4), 0.9);
    const Matrix one_step = evolve_imaginary(H, B, 1.3);
    REQUIRE((two_step - one_step).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("quantum KMS residual") {
    const SpinContext ctx{HalfInt(2)};
    const PotentialFamily phi = demo_potential(0.5, 0.3);
    const Region win = chain(2);
    const QuantumGibbs g(ctx, phi, win, 1.4);

    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1, 1);
    auto rand_mat = [&](int n) {
        Matrix A(n, n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) A(r, c) = Complex(u(rng), u(rng));
        return A;
    };
    const Matrix A = rand_mat(9), B = rand_mat(9);
    REQUIRE(kms_residual_quantum(g, Matrix::Identity(9, 9), B) < 1e-12);
    REQUIRE(kms_residual_quantum(g, A, B) < 1e-9 * op_norm(A) * op_norm(B));

    // a non-Gibbs state violates the condition
    Vector psi = Vector::Zero(9);
    psi(0) = 1.0;
    const Matrix pure = psi * psi.adjoint();
    REQUIRE(kms_residual_quantum(g, pure, A, B) > 1e-3);
}

TEST_CASE("classical KMS residual under quadrature refinement") {
    const Region one = chain(1);
    const PotentialFamily phi = field_potential(1.5);
    const double beta = 2.0;
    const LatticeObservable a = single(one, {0}, 1, 1);
    const LatticeObservable b = single(one, {0}, 1, -1);

    // constants are exact zeros of both sides
    const ClassicalGibbs g16(phi, one, beta, 16);
    REQUIRE(kms_residual_classical(g16, LatticeObservable::constant(one, 2.0), b) < 1e-15);

    double prev = -1.0;
    std::vector<double> residuals;
    for (int degree : {4, 8, 16, 32, 64}) {
        const ClassicalGibbs g(phi, one, beta, degree);
        residuals.push_back(kms_residual_classical(g, a, b));
    }
    for (std::size_t i = 0; i + 1 < residuals.size(); ++i)
        if (residuals[i] > 1e-12) REQUIRE(residuals[i + 1] < residuals[i] / 10.0);
    REQUIRE(residuals.back() < 1e-8);
    REQUIRE(residuals.front() > 1e-9);  // the study starts away from the floor

    // beta = 0: Poisson-trace invariance, omega({a,b}) = 0
    const ClassicalGibbs gfree(phi, one, 0.0, 16);
    const Complex tr = gfree.expectation(poisson_bracket_region(a, b));
    REQUIRE(std::abs(tr) < 1e-13);
}

TEST_CASE("auto-correlation lower bounds") {
    const Region two = chain(2);
    const PotentialFamily phi = demo_potential(0.5, 0.3);
    const ClassicalGibbs g(phi, two, 1.1, 24);

    // self-adjoint a: the bracket side vanishes and the gap is the delta-term
    LatticeObservable sa(two);
    sa.add({SiteFactor{{0}, 1, 0}}, 0.7);
    sa.add({SiteFactor{{0}, 1, 1}, SiteFactor{{1}, 1, -1}}, Complex(0.2, 0.1));
    sa += sa.adjoint();
    sa *= 0.5;
    const Complex br = g.expectation(poisson_bracket_region(sa, sa.adjoint()));
    REQUIRE(std::abs(br) < 1e-12);

    // Gibbs states sit at the equality case
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 6; ++trial) {
        LatticeObservable a(two);
        a.add({SiteFactor{{0}, 1, u(rng) > 0 ? 1 : 0}}, Complex(u(rng), u(rng)));
        a.add({SiteFactor{{1}, 2, 1}}, Complex(u(rng), u(rng)));
        a.add({SiteFactor{{0}, 1, -1}, SiteFactor{{1}, 1, 0}}, Complex(u(rng), u(rng)));
        REQUIRE(std::abs(autocorr_gap_classical(g, a)) < 1e-8);
    }

    // quantum gap is nonnegative on Gibbs states
    const SpinContext ctx{HalfInt(2)};
    const QuantumGibbs qg(ctx, phi, two, 0.9);
    auto rand_mat = [&](int n) {
        Matrix A(n, n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) A(r, c) = Complex(u(rng), u(rng));
        return A;
    };
    for (int trial = 0; trial < 20; ++trial)
        REQUIRE(autocorr_gap_quantum(qg, rand_mat(9)) > -1e-9);

    // normal observable commuting with H: both sides vanish
    REQUIRE(std::abs(autocorr_gap_quantum(qg, qg.hamiltonian())) < 1e-10);

    // rank-deficient state probe hits the u log(u/v) = +inf convention
    Vector psi = Vector::Zero(9);
    psi(8) = 1.0;
    Matrix a18 = Matrix::Zero(9, 9);
    a18(0, 8) = 1.0;  // a psi != 0, a* psi = 0
    const double sentinel = autocorr_gap_quantum(qg, Matrix(psi * psi.adjoint()), a18);
    REQUIRE(std::isinf(sentinel));
    REQUIRE(sentinel < 0);
}

TEST_CASE("rotation identity for classical Gibbs states") {
    const Region two = chain(2);
    const PotentialFamily phi = demo_potential(0.5, 0.3);
    const ClassicalGibbs g(phi, two, 0.8, 32);

    LatticeObservable a(two);
    a.add({SiteFactor{{0}, 1, 1}}, Complex(0.4, -0.2));
    a.add({SiteFactor{{0}, 2, 0}, SiteFactor{{1}, 1, 1}}, Complex(0.1, 0.3));

    REQUIRE(rotation_identity_residual(g, phi, {0}, 0, 0, 0, a) < 1e-15);

    // z-rotations leave the demo potential invariant: residual stays at quadrature level
    REQUIRE(rotation_identity_residual(g, phi, {0}, 0.9, 0, 0, a) < 1e-12);

    // generic rotations at both sites
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> ue(-3.0, 3.0);
    for (int trial = 0; trial < 5; ++trial) {
        const double al = ue(rng), be = std::abs(ue(rng)) / 3.0 + 0.1, ga = ue(rng);
        REQUIRE(rotation_identity_residual(g, phi, {trial % 2}, al, be, ga, a) < 1e-7);
    }

    // beta = 0 reduces to rotation invariance of mu_0
    const ClassicalGibbs gfree(phi, two, 0.0, 24);
    REQUIRE(rotation_identity_residual(gfree, phi, {1}, 1.0, 0.7, -0.4, a) < 1e-13);
}

TEST_CASE("thermodynamic identity d/dbeta log Z = -omega(h)") {
    const Region two = chain(2);
    const PotentialFamily phi = demo_potential(0.6, 0.2);
    const double beta = 0.9, db = 1e-4;
    const ClassicalGibbs g(phi, two, beta, 24);
    const ClassicalGibbs gp(phi, two, beta + db, 24);
    const ClassicalGibbs gm(phi, two, beta - db, 24);
    const double fd = (std::log(gp.partition()) - std::log(gm.partition())) / (2 * db);
    REQUIRE(fd == Approx(-g.expectation(g.hamiltonian()).real()).margin(1e-6));
}

TEST_CASE("metropolis smoke test on a window beyond the quadrature guard") {
    const Region five = chain(5);
    const PotentialFamily phi = field_potential(1.0);
    const double beta = 1.2;
    const LatticeObservable a = single(five, {2}, 1, 0);
    const Complex est = metropolis_expectation(phi, five, beta, a, 4000, 1234);
    const double z = beta * 1.0;
    const double exact = -(1.0 / std::tanh(z) - 1.0 / z);
    REQUIRE(std::abs(est.real() - exact) < 0.05);
}
