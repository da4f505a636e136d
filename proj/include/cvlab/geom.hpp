#pragma once
// Field containers and the curvature assembly.
//
// Tensor fields are stored in the orthonormal ratio frame: a symmetric
// 2-tensor T is kept as the packed components T_ij / (c_i c_j), where
// c_i = r * prod_{j<i} sin(theta_j) are the chart prefactors. The round
// metric is the identity matrix in this frame at every node, the frame is
// regular across the whole chart (no node touches a pole), and traces and
// pairings against the round metric reduce to plain componentwise sums.

#include <cstddef>
#include <vector>

#include "cvlab/grid.hpp"
#include "cvlab/smallmat.hpp"

namespace cvlab {

using ScalarField = std::vector<double>;

// Symmetric 2-tensor field, node-major packed upper triangle (see smallmat).
struct Sym2Field {
    int n = 0;
    std::size_t nodes = 0;
    std::vector<double> comps;  // nodes * sym_size(n)

    Sym2Field() = default;
    Sym2Field(int dim, std::size_t count)
        : n(dim), nodes(count),
          comps(count * static_cast<std::size_t>(sym_size(dim)), 0.0) {}

    int comp_count() const { return sym_size(n); }
    double* at(std::size_t p) {
        return comps.data() + p * static_cast<std::size_t>(sym_size(n));
    }
    const double* at(std::size_t p) const {
        return comps.data() + p * static_cast<std::size_t>(sym_size(n));
    }
};

// A metric field is a symmetric 2-tensor field expected to stay positive
// definite; validate_metric enforces that expectation.
using MetricField = Sym2Field;

// Round sphere of curvature scale lambda: identity ratio components.
MetricField build_round_sphere(const Chart& chart);

// g = (1 + t*u) * round metric (conformal multiple, u a scalar field)
MetricField build_conformal_metric(const Chart& chart, const ScalarField& u, double t);

// g = round + t*h for a ratio-frame direction h
MetricField build_perturbed_metric(const Chart& chart, const Sym2Field& h, double t);

// Smallest metric eigenvalue over all nodes (ratio frame). A metric is
// usable when this is strictly positive.
double min_metric_eigenvalue(const Chart& chart, const MetricField& g);

// Throws std::domain_error if g is not positive definite everywhere.
void validate_metric(const Chart& chart, const MetricField& g);

enum class PackDetail {
    kScalar,  // metric, inverse, Schouten, scalar curvature, volume density
    kFull,    // adds the packed Riemann tensor
};

// Pointwise curvature data of a metric, ratio-frame components throughout.
// The Riemann tensor (kFull) is packed over antisymmetric index pairs:
// independent components R_{(ij)(kl)} with i<j, k<l, pair(ij) <= pair(kl),
// stored as the upper triangle of a pair-indexed symmetric matrix.
struct CurvaturePack {
    int n = 0;
    std::size_t nodes = 0;
    PackDetail detail = PackDetail::kScalar;

    std::vector<double> g;         // sym comps
    std::vector<double> ginv;      // sym comps
    std::vector<double> schouten;  // sym comps (Ric - R/(2(n-1)) g)
    std::vector<double> scalar;    // scalar curvature
    std::vector<double> sqrt_det;  // sqrt(det g), the metric's own volume density
    std::vector<double> riemann;   // kFull: nodes * pair_sym_size(n)

    static int pair_count(int n) { return n * (n - 1) / 2; }
    static int pair_sym_size(int n) {
        int m = pair_count(n);
        return m * (m + 1) / 2;
    }
};

// Assembles curvature fields of g by fourth-order stencils on the ratio
// components with exact prefactor derivatives.
CurvaturePack curvature_pack(const Chart& chart, const MetricField& g,
                             PackDetail detail = PackDetail::kScalar);

// Reads one full Riemann component R_{ijkl} (ratio frame) out of a kFull pack.
double riemann_component(const CurvaturePack& pack, std::size_t p, int i, int j, int k, int l);

// Trace tr_round(h) = sum of diagonal ratio components.
ScalarField round_trace(const Chart& chart, const Sym2Field& h);

// Pointwise round-frame pairing <a, b> = sum_ij a_ij b_ij.
ScalarField round_pairing(const Chart& chart, const Sym2Field& a, const Sym2Field& b);

}  // namespace cvlab
