#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "spinlat/equilibrium.hpp"

namespace spinlat {

// || Q_j({a,b}) - i(2j+1) [Q_j(a), Q_j(b)] ||, the scaled-commutator defect whose
// decay in j is the content of the deformation condition.
inline double dgr_defect(const SpinContext& ctx, const LatticeObservable& a,
                         const LatticeObservable& b) {
    const Region reg = region_union(a.region(), b.region());
    const Matrix qa = quantize_region(ctx, embed(a, reg));
    const Matrix qb = quantize_region(ctx, embed(b, reg));
    const Matrix qbr = quantize_region(ctx, embed(poisson_bracket_region(a, b), reg));
    const Matrix defect = qbr - Complex(0, ctx.dim()) * (qa * qb - qb * qa);
    return op_norm(defect);
}

// | ||Q_j(a)||_op - ||a||_inf |, the Rieffel-type norm continuity gap.
inline double norm_continuity_gap(const SpinContext& ctx, const LatticeObservable& a) {
    return std::abs(op_norm(quantize_region(ctx, a)) - sup_norm(a));
}

// || i(2j+1)[Q_j(a), H_W] - Q_j(delta_infty(a)) || on the range-closure window W.
// With the bracket normalization used here this is exactly the defect combination
// whose termwise decay is the scaled-commutator condition applied to (a, phi_X);
// the sum is finite by locality and unchanged under window growth.
inline double derivation_limit_defect(const SpinContext& ctx, const PotentialFamily& phi,
                                      const LatticeObservable& a,
                                      const Region* window_override = nullptr) {
    const Region window =
        window_override ? *window_override : range_closure(phi, a.support());
    if (!window.contains(range_closure(phi, a.support())))
        throw std::invalid_argument("derivation_limit_defect: window below range closure");
    const LatticeObservable ae = embed(restrict_to_support(a), window);
    const Matrix qa = quantize_region(ctx, ae);
    const Matrix h = hamiltonian_quantum(ctx, phi, window);
    const Matrix scaled = Complex(0, ctx.dim()) * (qa * h - h * qa);
    const Matrix qda = quantize_region(ctx, derivation_classical(phi, window, ae));
    return op_norm(scaled - qda);
}

// | omega_j^{beta,Lambda}(Q_j(a)) - omega_infty^{beta,Lambda}(a) |.
inline double gibbs_limit_gap(const SpinContext& ctx, const PotentialFamily& phi,
                              const Region& window, double beta, const LatticeObservable& a,
                              int degree) {
    const QuantumGibbs qg(ctx, phi, window, beta);
    const ClassicalGibbs cg(phi, window, beta, degree);
    const Complex quantum = qg.expectation(quantize_region(ctx, embed(a, window)));
    const Complex classical = cg.expectation(a);
    return std::abs(quantum - classical);
}

// Log-log power-law fit of a defect/gap sequence against 2j+1.
struct ScanResult {
    std::vector<std::pair<double, double>> rows;  // (j, value)
    double exponent = 0.0;
    double intercept = 0.0;
    double max_log_residual = 0.0;
    bool identically_zero = false;
    bool fitted = false;
};

template <typename Fn>
inline ScanResult scan(const std::vector<HalfInt>& js, Fn&& value_of) {
    ScanResult out;
    for (const HalfInt j : js) out.rows.emplace_back(j.value(), value_of(j));
    bool all_zero = true;
    for (const auto& [j, v] : out.rows)
        if (std::abs(v) > 1e-14) all_zero = false;
    if (all_zero) {
        out.identically_zero = true;
        return out;
    }
    if (out.rows.size() < 3) return out;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& [j, v] : out.rows) {
        if (v <= 0) continue;
        const double x = std::log(2 * j + 1), y = std::log(v);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 3) return out;
    out.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    out.intercept = (sy - out.exponent * sx) / n;
    for (const auto& [j, v] : out.rows) {
        if (v <= 0) continue;
        const double pred = out.intercept + out.exponent * std::log(2 * j + 1);
        out.max_log_residual = std::max(out.max_log_residual, std::abs(std::log(v) - pred));
    }
    out.fitted = true;
    return out;
}

// Cartesian coordinate functions as single-site observables.
inline LatticeObservable cartesian_coord(const Region& reg, const Site& x, int axis) {
    LatticeObservable out(reg);
    const double r = 1.0 / std::sqrt(2.0);
    switch (axis) {
        case 1:
            out.add({SiteFactor{x, 1, -1}}, r);
            out.add({SiteFactor{x, 1, 1}}, -r);
            break;
        case 2:
            out.add({SiteFactor{x, 1, 1}}, Complex(0, r));
            out.add({SiteFactor{x, 1, -1}}, Complex(0, r));
            break;
        case 3:
            out.add({SiteFactor{x, 1, 0}}, 1.0);
            break;
        default:
            throw std::invalid_argument("cartesian_coord: axis in {1,2,3}");
    }
    return out;
}

}  // namespace spinlat
