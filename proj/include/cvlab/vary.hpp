#pragma once
// Variational engine: finite-difference derivatives of functionals and
// curvature fields along straight metric paths g_t = round + t*h, the
// analytic first-variation formulas they certify, and integral identities
// relating second variations of the Schouten field to Laplacian data of
// the direction's trace and trace-free parts.
//
// Everything is evaluated at the round background. Finite differences act
// as the independent oracle throughout: no analytic formula is ever used
// to produce the number it is checked against. In particular the second
// variation of the Schouten field comes from t-differentiation of the
// assembled field, not from a closed-form second linearization.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cvlab/geom.hpp"
#include "cvlab/grid.hpp"

namespace cvlab {

// Straight-line metric path g_t = round + t*h with the stencil policy used
// to differentiate along it. Direction amplitude is the caller's business;
// validate_amplitude() rejects paths whose outermost stencil point leaves
// the positive-definite cone.
struct PerturbationPath {
    const Chart* chart = nullptr;
    Sym2Field h;
    double t_step = 5e-3;
    int stencil = 5;         // 3- or 5-point central stencils
    bool richardson = true;  // combine the t and t/2 stencils

    PerturbationPath(const Chart& ch, Sym2Field direction);

    MetricField metric_at(double t) const;

    // Throws std::domain_error when the metric at the outermost stencil
    // parameter (2*t_step for 5-point stencils, t_step for 3-point) is not
    // positive definite.
    void validate_amplitude() const;
};

// Derivative value plus a stencil-disagreement error estimate. With
// Richardson the estimate is |D(t) - D(t/2)|; without it, the spread
// between the chosen stencil and an independent cross-check (the 3-point
// value for 5-point stencils, the half-step value for 3-point stencils).
struct FdResult {
    double value = 0.0;
    double error_estimate = 0.0;
};

// Central finite-difference derivative of t -> F(g_t) at t = 0.
// order is 1 or 2 (asserted). Calls validate_amplitude() first.
FdResult fd_functional_derivative(const PerturbationPath& path,
                                  const std::function<double(const MetricField&)>& f,
                                  int order);

// Node-wise t-derivatives of a field along the path. The optional
// self_error receives the sup-norm stencil disagreement over all nodes.
ScalarField fd_scalar_variation(const PerturbationPath& path,
                                const std::function<ScalarField(const MetricField&)>& map,
                                int order, double* self_error = nullptr);
Sym2Field fd_sym2_variation(const PerturbationPath& path,
                            const std::function<Sym2Field(const MetricField&)>& map,
                            int order, double* self_error = nullptr);

// First and second t-derivatives of the Schouten field, the first
// derivative of scalar curvature, and the trace split of the direction,
// all from one shared set of stencil evaluations.
struct VariationPack {
    Sym2Field s_prime;              // d/dt of the Schouten field at t = 0
    Sym2Field s_second;             // d2/dt2 of the Schouten field
    ScalarField r_prime;            // d/dt of scalar curvature
    ScalarField trace;              // round-metric trace of h
    Sym2Field h_ring;               // trace-free part of h
    double mean_trace = 0.0;        // volume average of the trace
    double self_s_prime = 0.0;      // per-quantity stencil disagreement,
    double self_s_second = 0.0;     // sup norm over all nodes
    double self_r_prime = 0.0;
    double fd_self_error = 0.0;     // max of the three
};
VariationPack variation_pack(const PerturbationPath& path);

// Analytic first variation of scalar curvature at the round background:
//   -lap(tr h) + double divergence(h) - (n-1)*lambda*tr h.
ScalarField r_prime_analytic(const Chart& chart, const Sym2Field& h);

// Volume average of the round-metric trace of h.
double mean_trace(const Chart& chart, const Sym2Field& h);

// Outcome of one analytic-vs-finite-difference comparison. deviation is
// the sup of |lhs - rhs| over the interior collar (or |lhs - rhs| itself
// for integrated comparisons); scale is the normalization described at
// each check; fd_self_error is in the same units as deviation.
struct DeviationReport {
    std::string name;
    double deviation = 0.0;
    double scale = 0.0;
    double rel_deviation = 0.0;
    double fd_self_error = 0.0;
    double lhs_sample = 0.0;
    double rhs_sample = 0.0;
};

// Node-wise finite-difference first variation of scalar curvature against
// r_prime_analytic on the collar. scale = max(sup|analytic|, n(n-1)*lambda
// times the sup of |h|'s components), so directions with vanishing
// response are judged against the size a generic response would have.
DeviationReport r_prime_check(const PerturbationPath& path);

// Integral identity for the first variation of scalar curvature: the
// volume integral of the finite-difference R' equals -(n-1)*lambda times
// the integral of tr h. scale = max(|rhs|, (n-1)*lambda*integral of |tr h|).
DeviationReport r_prime_integral_check(const PerturbationPath& path);

// Node-wise first variation of sigma_k against its closed form
//   k/(n(n-1)lambda) * sigma_k(round) * R'_analytic
// on the collar. scale = max(sup|analytic|, k*sigma_k(round)*n*sup|h|).
DeviationReport sigma_k_prime_check(const PerturbationPath& path, int k);

// Same comparison for the quotient sigma_k/sigma_l, closed form
//   (k-l)/(n(n-1)lambda) * (sigma_k/sigma_l)(round) * R'_analytic.
// Requires 1 <= l < k <= n.
DeviationReport quotient_prime_check(const PerturbationPath& path, int k, int l);

// Second variation of the quotient field sigma_k/sigma_l: node-wise
// order-2 finite difference against the closed combination of S', S'', R'
// (themselves finite differences) and h, with all contractions taken at
// the round metric. Requires 1 <= l < k <= n.
DeviationReport quotient_second_variation_check(const PerturbationPath& path, int k, int l);

// One integral identity: both sides, the normalization scale (largest of
// |rhs|, the largest |rhs summand|, and a floor from the direction's
// trace/trace-free content), and the relative deviation.
struct IdentityResult {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double scale = 0.0;
    double rel_deviation = 0.0;
    double fd_self_error = 0.0;  // stencil disagreement of the lhs integral
};

// The four integral identities for variations of the Schouten field:
//   1. integral of tr S''
//   2. integral of |S'|^2
//   3. integral of h^{ij} S'_ij
//   4. integral of (R')^2
// Left sides are finite differences along the path; right sides combine
// integrals of h_ring against its elliptic image (rough Laplacian plus
// curvature action) and Laplacian data of the trace.
struct IntegrationIdentityReport {
    std::vector<IdentityResult> items;  // size 4, order as above
    double fd_self_error = 0.0;
};
IntegrationIdentityReport integration_identity_check(const PerturbationPath& path);

// ---------------------------------------------------------------------------
// direction library

enum class DirectionKind {
    kScaling,         // h = round metric
    kTraceLinear,     // h = u * round, u a first-eigenspace harmonic
    kTraceQuadratic,  // h = u * round, u a quadratic harmonic
    kTraceRandom,     // h = u * round, u seeded band-limited noise
};

struct Direction {
    std::string name;
    DirectionKind kind = DirectionKind::kScaling;
    Sym2Field h;
};

// h = u * round for a scalar profile u (ratio components u * identity).
Sym2Field conformal_direction(const Chart& chart, const ScalarField& u);

// Standard direction menu: scaling, two first-eigenspace conformal
// directions, two quadratic-harmonic conformal directions, and
// random_count seeded band-limited conformal directions rescaled to sup
// amplitude 0.05. Deterministic for a fixed seed.
std::vector<Direction> direction_library(const Chart& chart, std::uint64_t seed,
                                         int random_count);

}  // namespace cvlab
