#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace spinlat {

// Gauss-Legendre nodes/weights on [-1,1], Newton iteration on the Legendre recurrence.
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;  // sum to 2

    explicit GaussLegendre(int n) {
        if (n < 1) throw std::domain_error("GaussLegendre: n < 1");
        nodes.resize(n);
        weights.resize(n);
        for (int i = 0; i < n; ++i) {
            double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-15) break;
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
    }
};

// Product rule for the normalized Haar measure on SU(2) in Euler angles
// (alpha, beta, gamma): uniform x Gauss-Legendre(cos beta) x uniform.
// Exact on products of integer-spin D-matrix entries with total spin <= degree.
struct HaarSU2 {
    struct Node {
        double alpha, beta, gamma, weight;
    };
    std::vector<Node> nodes;
    int degree = 0;

    explicit HaarSU2(int deg) : degree(deg) {
        const int na = deg + 1, ng = deg + 1, nb = deg / 2 + 1;
        GaussLegendre gl(nb);
        const double two_pi = 2.0 * std::numbers::pi;
        nodes.reserve(static_cast<std::size_t>(na) * nb * ng);
        for (int ia = 0; ia < na; ++ia)
            for (int ib = 0; ib < nb; ++ib)
                for (int ig = 0; ig < ng; ++ig)
                    nodes.push_back({two_pi * ia / na, std::acos(gl.nodes[ib]),
                                     two_pi * ig / ng, gl.weights[ib] / (2.0 * na * ng)});
    }
};

}  // namespace spinlat
