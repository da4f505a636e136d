#pragma once
// Elementary-symmetric curvature quantities of the Schouten endomorphism:
// the sigma_k fields of a metric, their node-wise ratios (quotient
// curvature), total integrals against either the metric's own volume or the
// fixed round background volume, and the closed-form constant table that
// every round sphere realizes.
//
// Conventions: S = Ric - R/(2(n-1)) g, and sigma_k is the k-th elementary
// symmetric polynomial of the eigenvalues of the endomorphism g^{-1} S,
// evaluated through power sums and Newton's identities (never through
// eigenvalues of the lowered tensor alone).

#include <cstddef>
#include <vector>

#include "cvlab/geom.hpp"
#include "cvlab/grid.hpp"

namespace cvlab {

// Closed forms at the round metric of curvature scale lambda: the Schouten
// endomorphism is ((n-2)*lambda/2) * Id, so sigma_k = ((n-2)*lambda/2)^k *
// binom(n, k).
struct EinsteinConstants {
    int n = 0;
    double lambda = 0.0;
    std::vector<double> sigma;  // k = 0..n

    // ratio sigma_k / sigma_l of the round closed forms
    double quotient(int k, int l) const;
};

// Throws std::invalid_argument unless n >= 3 and lambda > 0.
EinsteinConstants einstein_constants(int n, double lambda);

// sigma_k of g^{-1} S at every node; k = 0 returns the constant 1 field.
// Throws std::domain_error unless 0 <= k <= n.
ScalarField sigma_k_field(const Chart& chart, const CurvaturePack& pack, int k);

// Node-wise sigma_k / sigma_l, 0 <= l < k <= n. A denominator below 1e-8
// times its round closed form anywhere on the grid raises std::domain_error
// naming the first offending node. The comparison is signed: negative
// denominators are rejected too, since every quotient here is only
// meaningful while the elementary symmetric functions stay positive.
ScalarField quotient_field(const Chart& chart, const CurvaturePack& pack, int k, int l);

// integral of sigma_p/sigma_q against the metric's own volume density dv_g.
// p == q short-circuits to the volume of g (identical code path).
double total_quotient(const Chart& chart, const CurvaturePack& pack, int p, int q);

// integral of sigma_k/sigma_l against the round background volume dv_bg
double total_quotient_fixed_bg(const Chart& chart, const CurvaturePack& pack, int k, int l);

// Residual of the algebraic identity sigma_2 = (1/2)[(tr_g S)^2 - |S|_g^2],
// with the right side evaluated by explicit index contractions against
// g^{-1}: returns the sup-norm of the difference from sigma_k_field(k = 2).
double sigma2_identity_residual(const Chart& chart, const CurvaturePack& pack);

// Both total-quotient integrals and the volume in a single sweep that
// assembles curvature node by node without materializing a pack. Matches
// the pack-based route to reduction roundoff; intended for large grids.
struct QuotientIntegrals {
    double own_volume_total = 0.0;  // int sigma_p/sigma_q dv_g
    double bg_volume_total = 0.0;   // int sigma_k/sigma_l dv_bg
    double volume = 0.0;            // int dv_g
};
QuotientIntegrals sigma_quotient_integrals(const Chart& chart, const MetricField& g,
                                           int p, int q, int k, int l);

}  // namespace cvlab
