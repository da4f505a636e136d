#include "cvlab/geom.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cvlab/parallel.hpp"
#include "node_kernel.hpp"

namespace cvlab {

MetricField build_round_sphere(const Chart& chart) {
    MetricField g(chart.dim(), chart.size());
    const int n = chart.dim();
    parallel_for_chunks(chart.size(), [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t p = b; p < e; ++p) {
            double* w = g.at(p);
            for (int i = 0; i < n; ++i) w[sym_index(n, i, i)] = 1.0;
        }
    });
    return g;
}

MetricField build_conformal_metric(const Chart& chart, const ScalarField& u, double t) {
    if (u.size() != chart.size())
        throw std::invalid_argument("conformal factor field has wrong node count");
    MetricField g(chart.dim(), chart.size());
    const int n = chart.dim();
    parallel_for_chunks(chart.size(), [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t p = b; p < e; ++p) {
            const double f = 1.0 + t * u[p];
            double* w = g.at(p);
            for (int i = 0; i < n; ++i) w[sym_index(n, i, i)] = f;
        }
    });
    return g;
}

MetricField build_perturbed_metric(const Chart& chart, const Sym2Field& h, double t) {
    if (h.nodes != chart.size() || h.n != chart.dim())
        throw std::invalid_argument("perturbation direction does not match the chart");
    MetricField g(chart.dim(), chart.size());
    const int n = chart.dim();
    const int m = sym_size(n);
    parallel_for_chunks(chart.size(), [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t p = b; p < e; ++p) {
            const double* hv = h.at(p);
            double* w = g.at(p);
            for (int c = 0; c < m; ++c) w[c] = t * hv[c];
            for (int i = 0; i < n; ++i) w[sym_index(n, i, i)] += 1.0;
        }
    });
    return g;
}

double min_metric_eigenvalue(const Chart& chart, const MetricField& g) {
    assert(g.nodes == chart.size() && g.n == chart.dim());
    const int n = chart.dim();
    const std::size_t total = chart.size();
    const std::size_t nchunks = (total + kChunk - 1) / kChunk;
    std::vector<double> mins(nchunks, std::numeric_limits<double>::infinity());
    parallel_for_chunks(total, [&](std::size_t b, std::size_t e, std::size_t c) {
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t p = b; p < e; ++p)
            lo = std::min(lo, min_eigenvalue_sym(g.at(p), n));
        mins[c] = lo;
    });
    double lo = std::numeric_limits<double>::infinity();
    for (double v : mins) lo = std::min(lo, v);
    return lo;
}

void validate_metric(const Chart& chart, const MetricField& g) {
    const double lo = min_metric_eigenvalue(chart, g);
    if (!(lo > 0.0))
        throw std::domain_error("metric field is not positive definite (min eigenvalue " +
                                std::to_string(lo) + ")");
}

CurvaturePack curvature_pack(const Chart& chart, const MetricField& g, PackDetail detail) {
    if (g.nodes != chart.size() || g.n != chart.dim())
        throw std::invalid_argument("metric field does not match the chart");
    const int n = chart.dim();
    const int m = sym_size(n);
    const std::size_t total = chart.size();

    CurvaturePack pack;
    pack.n = n;
    pack.nodes = total;
    pack.detail = detail;
    pack.g = g.comps;
    pack.ginv.resize(total * static_cast<std::size_t>(m));
    pack.schouten.resize(total * static_cast<std::size_t>(m));
    pack.scalar.resize(total);
    pack.sqrt_det.resize(total);
    const int psym = CurvaturePack::pair_sym_size(n);
    if (detail == PackDetail::kFull)
        pack.riemann.resize(total * static_cast<std::size_t>(psym));

    const std::vector<double>& jac = chart.jacobian();
    std::vector<std::uint8_t> bad((total + kChunk - 1) / kChunk, 0);
    parallel_for_chunks(total, [&](std::size_t b, std::size_t e, std::size_t chunk) {
        int rows[8];
        detail::NodeCurvature nc;
        for (std::size_t p = b; p < e; ++p) {
            chart.coords(p, rows);
            detail::curvature_at_node(chart, g.comps.data(), p, rows, nc);
            if (!nc.invertible || !(nc.det_w > 0.0)) {
                bad[chunk] = 1;
                return;
            }
            full_to_sym(nc.winv, n, pack.ginv.data() + p * static_cast<std::size_t>(m));
            full_to_sym(nc.schouten, n, pack.schouten.data() + p * static_cast<std::size_t>(m));
            pack.scalar[p] = nc.scalar;
            pack.sqrt_det[p] = jac[p] * std::sqrt(nc.det_w);
            if (detail == PackDetail::kFull) {
                double* out = pack.riemann.data() + p * static_cast<std::size_t>(psym);
                const int pc = CurvaturePack::pair_count(n);
                for (int i = 0; i < n; ++i)
                    for (int j = i + 1; j < n; ++j)
                        for (int k = 0; k < n; ++k)
                            for (int l = k + 1; l < n; ++l) {
                                const int pi = detail::pair_index(n, i, j);
                                const int pj = detail::pair_index(n, k, l);
                                if (pi > pj) continue;
                                out[sym_index(pc, pi, pj)] = nc.riem[i][j][k][l];
                            }
            }
        }
    });
    for (std::uint8_t flag : bad)
        if (flag)
            throw std::domain_error("metric degenerated inside curvature assembly");
    return pack;
}

double riemann_component(const CurvaturePack& pack, std::size_t p, int i, int j, int k, int l) {
    assert(pack.detail == PackDetail::kFull);
    const int n = pack.n;
    assert(i >= 0 && i < n && j >= 0 && j < n && k >= 0 && k < n && l >= 0 && l < n);
    if (i == j || k == l) return 0.0;
    double sign = 1.0;
    if (i > j) {
        std::swap(i, j);
        sign = -sign;
    }
    if (k > l) {
        std::swap(k, l);
        sign = -sign;
    }
    int pi = detail::pair_index(n, i, j);
    int pj = detail::pair_index(n, k, l);
    if (pi > pj) std::swap(pi, pj);
    const int pc = CurvaturePack::pair_count(n);
    const double* row =
        pack.riemann.data() + p * static_cast<std::size_t>(CurvaturePack::pair_sym_size(n));
    return sign * row[sym_index(pc, pi, pj)];
}

ScalarField round_trace(const Chart& chart, const Sym2Field& h) {
    assert(h.nodes == chart.size());
    const int n = chart.dim();
    ScalarField out(chart.size());
    parallel_for_chunks(chart.size(), [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t p = b; p < e; ++p) {
            const double* v = h.at(p);
            double tr = 0.0;
            for (int i = 0; i < n; ++i) tr += v[sym_index(n, i, i)];
            out[p] = tr;
        }
    });
    return out;
}

ScalarField round_pairing(const Chart& chart, const Sym2Field& a, const Sym2Field& b) {
    assert(a.nodes == chart.size() && b.nodes == chart.size());
    const int n = chart.dim();
    ScalarField out(chart.size());
    parallel_for_chunks(chart.size(), [&](std::size_t b0, std::size_t e, std::size_t) {
        for (std::size_t p = b0; p < e; ++p) {
            const double* av = a.at(p);
            const double* bv = b.at(p);
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const int ij = sym_index(n, i, j);
                    acc += av[ij] * bv[ij];
                }
            out[p] = acc;
        }
    });
    return out;
}

}  // namespace cvlab
