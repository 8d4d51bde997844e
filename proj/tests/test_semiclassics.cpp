#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "spinlat/semiclassics.hpp"

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

LatticeObservable random_selfadjoint_site(const Region& reg, const Site& x, int band,
                                          unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    LatticeObservable a(reg);
    for (int l = 1; l <= band; ++l) {
        a.add({SiteFactor{x, l, 0}}, Complex(u(rng), 0));
        for (int m = 1; m <= l; ++m) {
            const Complex c(u(rng), u(rng));
            a.add({SiteFactor{x, l, m}}, c);
            a.add({SiteFactor{x, l, -m}}, ((m % 2) ? -1.0 : 1.0) * std::conj(c));
        }
    }
    return a;
}

}  // namespace

TEST_CASE("DGR defect: exact zero, Cartesian closed form, decay") {
    const Region one = chain(1);
    const LatticeObservable x1 = cartesian_coord(one, {0}, 1);
    const LatticeObservable x2 = cartesian_coord(one, {0}, 2);

    const SpinContext ctx{HalfInt(4)};
    REQUIRE(dgr_defect(ctx, x1, x1) < 1e-13);

    // closed form j/(j+1)^2, the calibration pin for the bracket normalization
    for (int tj = 1; tj <= 20; ++tj) {
        const SpinContext c{HalfInt(tj)};
        const double j = 0.5 * tj;
        REQUIRE(dgr_defect(c, x1, x2) == Approx(j / ((j + 1) * (j + 1))).margin(1e-12));
    }

    // random band-2 pairs decay monotonically; the doubling ratio reaches the
    // asymptotic 1/j value (<= 0.6) once j clears the l = 2 onset
    const LatticeObservable f = random_selfadjoint_site(one, {0}, 2, 5);
    const LatticeObservable g = random_selfadjoint_site(one, {0}, 2, 6);
    double prev = 1e9;
    for (int tj : {4, 8, 16, 24, 32, 48}) {
        const double d = dgr_defect(SpinContext{HalfInt(tj)}, f, g);
        REQUIRE(d < prev);
        prev = d;
    }
    {
        const double at_j = dgr_defect(SpinContext{HalfInt(24)}, f, g);
        const double at_2j = dgr_defect(SpinContext{HalfInt(48)}, f, g);
        REQUIRE(at_2j <= 0.6 * at_j);
    }
}

TEST_CASE("norm continuity gap") {
    const Region one = chain(1);
    const SpinContext ctx{HalfInt(6)};
    REQUIRE(norm_continuity_gap(ctx, LatticeObservable::constant(one, 1.0)) < 1e-13);

    const LatticeObservable y10 = LatticeObservable::harmonic(one, {0}, 1, 0);
    for (int tj : {2, 4, 8}) {
        const double j = 0.5 * tj;
        REQUIRE(norm_continuity_gap(SpinContext{HalfInt(tj)}, y10) ==
                Approx(1.0 / (j + 1)).margin(1e-10));
    }

    const LatticeObservable f = random_selfadjoint_site(one, {0}, 2, 9);
    double prev = 1e9;
    for (int tj : {4, 8, 16}) {
        const double gap = norm_continuity_gap(SpinContext{HalfInt(tj)}, f);
        REQUIRE(gap < prev);
        prev = gap;
    }
}

TEST_CASE("derivation limit defect") {
    const Region one = chain(1);
    const SpinContext ctx{HalfInt(3)};

    const PotentialFamily none{1, {}};
    const LatticeObservable a = LatticeObservable::harmonic(one, {0}, 1, 1);
    REQUIRE(derivation_limit_defect(ctx, none, a) < 1e-14);

    // single-site potential: reduces to the DGR defect of (a, phi)
    const PotentialFamily phi1 = field_potential(1.0);
    const double lhs = derivation_limit_defect(ctx, phi1, a);
    const double rhs = dgr_defect(ctx, a, phi1.terms[0].obs);
    REQUIRE(lhs == Approx(rhs).margin(1e-12));

    // two-site coupling: strictly decreasing over integer j, stable under window growth
    const PotentialFamily phi2 = demo_potential(0.3, 0.4);
    double prev = 1e9;
    for (int tj : {2, 4, 6, 8, 10}) {
        const double d = derivation_limit_defect(SpinContext{HalfInt(tj)}, phi2, a);
        REQUIRE(d < prev);
        prev = d;
    }
    const Region big = chain(4);
    LatticeObservable a1(big);
    a1.add({SiteFactor{{1}, 1, 1}}, 1.0);
    const Region closure = range_closure(phi2, a1.support());
    const double on_closure = derivation_limit_defect(SpinContext{HalfInt(2)}, phi2, a1);
    const double on_big = derivation_limit_defect(SpinContext{HalfInt(2)}, phi2, a1, &big);
    REQUIRE(big.contains(closure));
    REQUIRE(on_big == Approx(on_closure).margin(1e-12));
}

TEST_CASE("Gibbs semiclassical gap") {
    const Region one = chain(1);
    const PotentialFamily phi = field_potential(0.5);
    const LatticeObservable a = LatticeObservable::harmonic(one, {0}, 1, 0);

    // beta = 0: both sides vanish for Y_{1,0} by symmetry
    REQUIRE(gibbs_limit_gap(SpinContext{HalfInt(2)}, phi, one, 0.0, a, 24) < 1e-14);
    // normalization: constants match exactly
    REQUIRE(gibbs_limit_gap(SpinContext{HalfInt(3)}, phi, one, 1.0,
                            LatticeObservable::constant(one, 1.0), 24) < 1e-14);

    double prev = 1e9;
    for (int tj : {2, 4, 6, 8, 10, 12}) {
        const double gap = gibbs_limit_gap(SpinContext{HalfInt(tj)}, phi, one, 1.0, a, 32);
        REQUIRE(gap < prev);
        prev = gap;
    }
}

TEST_CASE("power-law scans") {
    const Region one = chain(1);
    const LatticeObservable x1 = cartesian_coord(one, {0}, 1);
    const LatticeObservable x2 = cartesian_coord(one, {0}, 2);

    std::vector<HalfInt> js;
    for (int tj = 4; tj <= 24; tj += 2) js.push_back(HalfInt(tj));

    const ScanResult dgr = scan(js, [&](HalfInt j) {
        return dgr_defect(SpinContext{j}, x1, x2);
    });
    REQUIRE(dgr.fitted);
    REQUIRE(dgr.exponent == Approx(-1.0).margin(0.3));

    const LatticeObservable y10 = LatticeObservable::harmonic(one, {0}, 1, 0);
    const ScanResult ncg = scan(js, [&](HalfInt j) {
        return norm_continuity_gap(SpinContext{j}, y10);
    });
    REQUIRE(ncg.exponent == Approx(-1.0).margin(0.15));

    const ScanResult zero = scan(js, [&](HalfInt) { return 0.0; });
    REQUIRE(zero.identically_zero);
    REQUIRE(!zero.fitted);
}
