#pragma once
// Differential operators on the chart.
//
// Two families live here. The general-metric operators (laplace_scalar,
// grad_norm_sq, divergence_sym2, double_divergence, einstein_operator,
// tt_diagnostics, harmonic_generator, tt_project) accept a general metric
// where meaningful. The background family (bg_*) is specialized to the round
// metric: its connection coefficients enter as exact closed-form prefactor
// data rather than stencil output, which makes these variants substantially
// sharper and is why the variational checks are built on them.
//
// One-form and tensor components are ratio-frame throughout (see geom.hpp).

#include <cstdint>
#include <cstddef>
#include <vector>

#include "cvlab/geom.hpp"
#include "cvlab/grid.hpp"
#include "cvlab/rng.hpp"

namespace cvlab {

struct OneFormField {
    int n = 0;
    std::size_t nodes = 0;
    std::vector<double> comps;  // nodes * n

    OneFormField() = default;
    OneFormField(int dim, std::size_t count)
        : n(dim), nodes(count), comps(count * static_cast<std::size_t>(dim), 0.0) {}

    double* at(std::size_t p) { return comps.data() + p * static_cast<std::size_t>(n); }
    const double* at(std::size_t p) const {
        return comps.data() + p * static_cast<std::size_t>(n);
    }
};

// ---------------------------------------------------------------------------
// background (round metric) operators, exact connection coefficients

// Laplace-Beltrami at the round metric, expanded divergence form with exact
// first-order coefficients.
ScalarField bg_laplace(const Chart& chart, const ScalarField& u);

// |grad u|^2 at the round metric
ScalarField bg_grad_norm_sq(const Chart& chart, const ScalarField& u);

// gradient one-form in frame components, v_i = (d_i u) / c_i
OneFormField bg_grad(const Chart& chart, const ScalarField& u);

// covariant derivative of a one-form (frame components); result T[a][i] is
// returned as a Sym2Field-sized layout (n*n per node, row-major a*n+i)
std::vector<double> bg_covd_oneform(const Chart& chart, const OneFormField& v);

// Hessian of a scalar (symmetrized covariant derivative of its gradient)
Sym2Field bg_hessian(const Chart& chart, const ScalarField& u);

// divergence of a one-form, div v = g^{ab} (covd v)_{ab}
ScalarField bg_div_oneform(const Chart& chart, const OneFormField& v);

// Lie derivative of the round metric along the vector field dual to X
Sym2Field bg_lie_metric(const Chart& chart, const OneFormField& x);

// divergence of a symmetric 2-tensor at the round metric
OneFormField bg_divergence_sym2(const Chart& chart, const Sym2Field& h);

// double divergence at the round metric, divergence form
ScalarField bg_double_divergence(const Chart& chart, const Sym2Field& h);

// rough (connection) Laplacian of a symmetric 2-tensor at the round metric
Sym2Field bg_rough_laplacian_sym2(const Chart& chart, const Sym2Field& h);

// Node-local algebra at the round metric (identity ratio components, so
// index raising is free): trace, trace-free part, and full contraction.
ScalarField bg_trace_sym2(const Chart& chart, const Sym2Field& h);
Sym2Field bg_tracefree_sym2(const Chart& chart, const Sym2Field& h);
ScalarField bg_dot_sym2(const Chart& chart, const Sym2Field& a, const Sym2Field& b);

// ---------------------------------------------------------------------------
// general-metric operators

// Laplace-Beltrami of u at g, nested divergence form: stencils applied to
// sqrt(det g) g^{ij} d_j u and divided by sqrt(det g).
ScalarField laplace_scalar(const Chart& chart, const MetricField& g, const ScalarField& u);

// pointwise g^{ij} d_i u d_j u
ScalarField grad_norm_sq(const Chart& chart, const MetricField& g, const ScalarField& u);

// (delta_g h)_i = contraction of the covariant derivative of h at g, with
// Christoffel symbols assembled from g's stencil derivatives
OneFormField divergence_sym2(const Chart& chart, const MetricField& g, const Sym2Field& h);

// delta^2_g h = g-trace of the second covariant divergence
ScalarField double_divergence(const Chart& chart, const MetricField& g, const Sym2Field& h);

// Einstein operator at the round background: rough Laplacian plus twice the
// Riemann action, curvature taken from a kFull pack of the round metric.
Sym2Field einstein_operator(const Chart& chart, const CurvaturePack& round_pack,
                            const Sym2Field& h);

struct TTDiagnostics {
    double trace_sup = 0.0;  // sup |tr h|
    double div_sup = 0.0;    // sup frame norm of the divergence
};

// trace and divergence sup-norms of h at the round background
TTDiagnostics tt_diagnostics(const Chart& chart, const Sym2Field& h);

// Spherical-harmonic library: degree 1 returns the ambient coordinate
// x_index; degree 2 returns x_index^2 - r^2/(n+1). index runs 1..n+1.
// Both are mean-zero eigenfunctions (eigenvalues n*lambda and 2(n+1)*lambda).
ScalarField harmonic_generator(const Chart& chart, int degree, int index);

// Frame components of the round-metric gradient of the ambient coordinate
// x_m, m in [0, dim]. Evaluated from the closed-form angular derivatives, so
// the field is exact to roundoff; no stencils are involved. Used to build
// exact conformal-Killing data (rotations x_a*grad x_b - x_b*grad x_a and
// gradient fields grad x_m).
OneFormField ambient_gradient(const Chart& chart, int m);

// Seeded band-limited random scalar: a mix of degree-1 and degree-2 ambient
// harmonics (including cross terms x_i x_j) with unit-ish amplitude. Fields
// whose degree-2 content is negligible are redrawn so the generator never
// emits a pure first-eigenspace direction.
ScalarField random_band_limited(const Chart& chart, std::uint64_t seed);

struct TTProjectResult {
    Sym2Field projected;
    double residual = 0.0;  // final gauge-equation residual (frame L2)
    int iterations = 0;
    bool converged = false;
};

// Best-effort transverse-traceless projection: removes the trace part, then
// solves the self-adjoint gauge equation for a one-form by diagonally
// preconditioned conjugate gradients and subtracts the Lie-derivative part.
TTProjectResult tt_project(const Chart& chart, const Sym2Field& h, double tol, int max_iter);

// ---------------------------------------------------------------------------
// small field helpers

ScalarField field_constant(const Chart& chart, double value);
void axpy(double a, const ScalarField& x, ScalarField& y);     // y += a*x
double sup_abs(const std::vector<double>& f);
double sup_abs_masked(const std::vector<double>& f, const std::vector<std::uint8_t>& mask);

}  // namespace cvlab
