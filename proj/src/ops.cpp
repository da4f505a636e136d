#include "cvlab/ops.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "cvlab/parallel.hpp"
#include "cvlab/smallmat.hpp"

namespace cvlab {
namespace {

constexpr int kMaxComp = kMaxDim * (kMaxDim + 1) / 2;

// Per-node frame data: multi-index, prefactors c_i, and the logarithmic
// derivatives A[a][i] = d_a log c_i (= cot(theta_a) for polar a < i).
struct NodeFrame {
    int idx[kMaxDim];
    double c[kMaxDim];
    double a[kMaxDim][kMaxDim];
};

void load_frame(const Chart& ch, std::size_t p, NodeFrame& f) {
    const int n = ch.dim();
    ch.coords(p, f.idx);
    double run = ch.radius();
    for (int i = 0; i < n; ++i) {
        f.c[i] = run;
        const AxisGrid& ax = ch.axis(i);
        if (!ax.periodic) run *= ax.sin_theta[f.idx[i]];
    }
    for (int aax = 0; aax < n; ++aax) {
        const AxisGrid& ax = ch.axis(aax);
        const double cot = ax.periodic ? 0.0 : ax.cot[f.idx[aax]];
        for (int i = 0; i < n; ++i) f.a[aax][i] = (aax < i) ? cot : 0.0;
    }
}

// First derivative of an interleaved ncomp-component field along every axis.
// out[axis*ncomp + m] = d_axis field_m at node p.
void d1_node(const Chart& ch, const double* data, int ncomp, std::size_t p, const int idx[],
             double* out) {
    const int n = ch.dim();
    std::fill(out, out + static_cast<std::size_t>(n) * ncomp, 0.0);
    for (int aax = 0; aax < n; ++aax) {
        const AxisGrid& ax = ch.axis(aax);
        const int row = idx[aax];
        const std::ptrdiff_t stride = static_cast<std::ptrdiff_t>(ch.stride(aax));
        double* slot = out + static_cast<std::size_t>(aax) * ncomp;
        for (int t = 0; t < AxisGrid::kTaps; ++t) {
            const double w = ax.d1w[row][t];
            if (w == 0.0) continue;
            const std::ptrdiff_t q =
                static_cast<std::ptrdiff_t>(p) + (ax.cols[row][t] - row) * stride;
            const double* src = data + static_cast<std::size_t>(q) * ncomp;
            for (int m = 0; m < ncomp; ++m) slot[m] += w * src[m];
        }
    }
}

void d2_node_scalar(const Chart& ch, const double* data, std::size_t p, const int idx[],
                    double* out) {
    const int n = ch.dim();
    for (int aax = 0; aax < n; ++aax) {
        const AxisGrid& ax = ch.axis(aax);
        const int row = idx[aax];
        const std::ptrdiff_t stride = static_cast<std::ptrdiff_t>(ch.stride(aax));
        double acc = 0.0;
        for (int t = 0; t < AxisGrid::kTaps; ++t) {
            const double w = ax.d2w[row][t];
            if (w == 0.0) continue;
            const std::ptrdiff_t q =
                static_cast<std::ptrdiff_t>(p) + (ax.cols[row][t] - row) * stride;
            acc += w * data[q];
        }
        out[aax] = acc;
    }
}

// Frame connection at one node: inverse metric (full row-major) and frame
// Christoffel data gamma[m][i*n+k].
struct ConnData {
    double ginv[kMaxDim * kMaxDim];
    double gamma[kMaxDim][kMaxDim * kMaxDim];
};

// Round background: identity inverse metric, closed-form Christoffels
//   gamma^m_ik = A_ik d_mk / c_i + A_ki d_mi / c_k - A_mi d_ik / c_m.
void background_connection(int n, const NodeFrame& f, ConnData& cd) {
    std::fill(cd.ginv, cd.ginv + n * n, 0.0);
    for (int i = 0; i < n; ++i) cd.ginv[i * n + i] = 1.0;
    for (int m = 0; m < n; ++m)
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) {
                double v = 0.0;
                if (m == k) v += f.a[i][k] / f.c[i];
                if (m == i) v += f.a[k][i] / f.c[k];
                if (i == k) v -= f.a[m][i] / f.c[m];
                cd.gamma[m][i * n + k] = v;
            }
}

// General metric: stencil first derivatives of the ratio components feed the
// frame Christoffels gamma = (1/2) Ginv B with
//   B_aik = Dh_i[ak] + Dh_k[ai] - Dh_a[ik],
//   Dh_a[ij] = (d_a w_ij + (A_ai + A_aj) w_ij) / c_a.
bool general_connection(const Chart& ch, const MetricField& g, std::size_t p,
                        const NodeFrame& f, ConnData& cd) {
    const int n = ch.dim();
    const int sym = sym_size(n);
    double dw[kMaxDim * kMaxComp];
    d1_node(ch, g.comps.data(), sym, p, f.idx, dw);

    const double* w = g.at(p);
    double wfull[kMaxDim * kMaxDim];
    sym_to_full(w, n, wfull);
    if (!invert(wfull, n, cd.ginv)) return false;

    double dh[kMaxDim][kMaxDim][kMaxDim];
    for (int aax = 0; aax < n; ++aax)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                const double wij = w[sym_index(n, i, j)];
                const double dwij = dw[aax * sym + sym_index(n, i, j)];
                const double v = (dwij + (f.a[aax][i] + f.a[aax][j]) * wij) / f.c[aax];
                dh[aax][i][j] = v;
                dh[aax][j][i] = v;
            }

    for (int m = 0; m < n; ++m)
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) {
                double acc = 0.0;
                for (int aax = 0; aax < n; ++aax) {
                    const double b = dh[i][aax][k] + dh[k][aax][i] - dh[aax][i][k];
                    acc += cd.ginv[m * n + aax] * b;
                }
                cd.gamma[m][i * n + k] = 0.5 * acc;
            }
    return true;
}

// Frame covariant derivative of a symmetric 2-tensor at one node:
//   T[b][ij] = (d_b h_ij + (A_bi + A_bj) h_ij) / c_b
//              - gamma^c_bi h_cj - gamma^c_bj h_ic.
void covd_sym2_node(int n, const NodeFrame& f, const ConnData& cd, const double* hsym,
                    const double* dh, double t[][kMaxDim * kMaxDim]) {
    const int sym = sym_size(n);
    double hfull[kMaxDim * kMaxDim];
    sym_to_full(hsym, n, hfull);
    for (int b = 0; b < n; ++b)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                double v = (dh[b * sym + sym_index(n, i, j)] +
                            (f.a[b][i] + f.a[b][j]) * hfull[i * n + j]) /
                           f.c[b];
                for (int c = 0; c < n; ++c)
                    v -= cd.gamma[c][b * n + i] * hfull[c * n + j] +
                         cd.gamma[c][b * n + j] * hfull[i * n + c];
                t[b][i * n + j] = v;
                t[b][j * n + i] = v;
            }
}

// Frame covariant derivative of a one-form at one node:
//   T[a][i] = (d_a v_i + A_ai v_i) / c_a - gamma^c_ai v_c.
void covd_oneform_node(int n, const NodeFrame& f, const ConnData& cd, const double* v,
                       const double* dv, double t[][kMaxDim]) {
    for (int aax = 0; aax < n; ++aax)
        for (int i = 0; i < n; ++i) {
            double acc = (dv[aax * n + i] + f.a[aax][i] * v[i]) / f.c[aax];
            for (int c = 0; c < n; ++c) acc -= cd.gamma[c][aax * n + i] * v[c];
            t[aax][i] = acc;
        }
}

// Transpose of the per-axis first-derivative stencil matrix: for column q,
// the list of rows r whose stencil touches q, with the same weights. Used to
// apply the exact adjoint of a stencil derivative under a diagonal weight.
struct AxisTranspose {
    static constexpr int kSlots = 12;
    std::vector<std::array<int, kSlots>> rows;
    std::vector<std::array<double, kSlots>> w;
    std::vector<int> cnt;
};

AxisTranspose transpose_d1(const AxisGrid& ax) {
    AxisTranspose t;
    const int N = ax.count;
    t.rows.assign(static_cast<std::size_t>(N), {});
    t.w.assign(static_cast<std::size_t>(N), {});
    t.cnt.assign(static_cast<std::size_t>(N), 0);
    for (int r = 0; r < N; ++r)
        for (int k = 0; k < AxisGrid::kTaps; ++k) {
            const double wv = ax.d1w[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
            if (wv == 0.0) continue;
            const int q = ax.cols[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
            int& c = t.cnt[static_cast<std::size_t>(q)];
            assert(c < AxisTranspose::kSlots);
            t.rows[static_cast<std::size_t>(q)][static_cast<std::size_t>(c)] = r;
            t.w[static_cast<std::size_t>(q)][static_cast<std::size_t>(c)] = wv;
            ++c;
        }
    return t;
}

void check_sym2(const Chart& ch, const Sym2Field& h, const char* who) {
    if (h.n != ch.dim() || h.nodes != ch.size())
        throw std::invalid_argument(std::string(who) + ": field does not match the chart");
}

void check_scalar(const Chart& ch, const ScalarField& u, const char* who) {
    if (u.size() != ch.size())
        throw std::invalid_argument(std::string(who) + ": field does not match the chart");
}

}  // namespace

// ---------------------------------------------------------------------------
// background operators

ScalarField bg_laplace(const Chart& chart, const ScalarField& u) {
    check_scalar(chart, u, "bg_laplace");
    const int n = chart.dim();
    ScalarField out(chart.size(), 0.0);
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        NodeFrame f;
        double d1[kMaxDim], d2[kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            d1_node(chart, u.data(), 1, p, f.idx, d1);
            d2_node_scalar(chart, u.data(), p, f.idx, d2);
            double acc = 0.0;
            for (int aax = 0; aax < n; ++aax) {
                const double inv_cc = 1.0 / (f.c[aax] * f.c[aax]);
                const AxisGrid& ax = chart.axis(aax);
                const double cot = ax.periodic ? 0.0 : ax.cot[f.idx[aax]];
                const double beta = (n - 1 - aax) * cot * inv_cc;
                acc += inv_cc * d2[aax] + beta * d1[aax];
            }
            out[p] = acc;
        }
    });
    return out;
}

ScalarField bg_grad_norm_sq(const Chart& chart, const ScalarField& u) {
    check_scalar(chart, u, "bg_grad_norm_sq");
    const int n = chart.dim();
    ScalarField out(chart.size(), 0.0);
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        NodeFrame f;
        double d1[kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            d1_node(chart, u.data(), 1, p, f.idx, d1);
            double acc = 0.0;
            for (int aax = 0; aax < n; ++aax) {
                const double v = d1[aax] / f.c[aax];
                acc += v * v;
            }
            out[p] = acc;
        }
    });
    return out;
}

OneFormField bg_grad(const Chart& chart, const ScalarField& u) {
    check_scalar(chart, u, "bg_grad");
    const int n = chart.dim();
    OneFormField out(n, chart.size());
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        NodeFrame f;
        double d1[kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            d1_node(chart, u.data(), 1, p, f.idx, d1);
            double* slot = out.at(p);
            for (int aax = 0; aax < n; ++aax) slot[aax] = d1[aax] / f.c[aax];
        }
    });
    return out;
}

std::vector<double> bg_covd_oneform(const Chart& chart, const OneFormField& v) {
    const int n = chart.dim();
    if (v.n != n || v.nodes != chart.size())
        throw std::invalid_argument("bg_covd_oneform: field does not match the chart");
    std::vector<double> out(chart.size() * static_cast<std::size_t>(n) * n, 0.0);
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        NodeFrame f;
        ConnData cd;
        double dv[kMaxDim * kMaxDim];
        double t[kMaxDim][kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            background_connection(n, f, cd);
            d1_node(chart, v.comps.data(), n, p, f.idx, dv);
            covd_oneform_node(n, f, cd, v.at(p), dv, t);
            double* slot = out.data() + p * static_cast<std::size_t>(n) * n;
            for (int aax = 0; aax < n; ++aax)
                for (int i = 0; i < n; ++i) slot[aax * n + i] = t[aax][i];
        }
    });
    return out;
}

Sym2Field bg_hessian(const Chart& chart, const ScalarField& u) {
    check_scalar(chart, u, "bg_hessian");
    const int n = chart.dim();
    OneFormField v = bg_grad(chart, u);
    std::vector<double> t = bg_covd_oneform(chart, v);
    Sym2Field out(n, chart.size());
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t p = lo; p < hi; ++p) {
            const double* slot = t.data() + p * static_cast<std::size_t>(n) * n;
            double* h = out.at(p);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j)
                    h[sym_index(n, i, j)] = 0.5 * (slot[i * n + j] + slot[j * n + i]);
        }
    });
    return out;
}

ScalarField bg_div_oneform(const Chart& chart, const OneFormField& v) {
    const int n = chart.dim();
    if (v.n != n || v.nodes != chart.size())
        throw std::invalid_argument("bg_div_oneform: field does not match the chart");
    ScalarField out(chart.size(), 0.0);
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        NodeFrame f;
        ConnData cd;
        double dv[kMaxDim * kMaxDim];
        double t[kMaxDim][kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            background_connection(n, f, cd);
            d1_node(chart, v.comps.data(), n, p, f.idx, dv);
            covd_oneform_node(n, f, cd, v.at(p), dv, t);
            double acc = 0.0;
            for (int aax = 0; aax < n; ++aax) acc += t[aax][aax];
            out[p] = acc;
        }
    });
    return out;
}

Sym2Field bg_lie_metric(const Chart& chart, const OneFormField& x) {
    const int n = chart.dim();
    std::vector<double> t = bg_covd_oneform(chart, x);
    Sym2Field out(n, chart.size());
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t p = lo; p < hi; ++p) {
            const double* slot = t.data() + p * static_cast<std::size_t>(n) * n;
            double* h = out.at(p);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j)
                    h[sym_index(n, i, j)] = slot[i * n + j] + slot[j * n + i];
        }
    });
    return out;
}

OneFormField bg_divergence_sym2(const Chart& chart, const Sym2Field& h) {
    check_sym2(chart, h, "bg_divergence_sym2");
    const int n = chart.dim();
    const int sym = sym_size(n);
    OneFormField out(n, chart.size());
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        NodeFrame f;
        ConnData cd;
        double dh[kMaxDim * kMaxComp];
        double t[kMaxDim][kMaxDim * kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            background_connection(n, f, cd);
            d1_node(chart, h.comps.data(), sym, p, f.idx, dh);
            covd_sym2_node(n, f, cd, h.at(p), dh, t);
            double* slot = out.at(p);
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int b = 0; b < n; ++b) acc += t[b][b * n + i];
                slot[i] = acc;
            }
        }
    });
    return out;
}

ScalarField bg_double_divergence(const Chart& chart, const Sym2Field& h) {
    check_sym2(chart, h, "bg_double_divergence");
    return bg_div_oneform(chart, bg_divergence_sym2(chart, h));
}

Sym2Field bg_rough_laplacian_sym2(const Chart& chart, const Sym2Field& h) {
    check_sym2(chart, h, "bg_rough_laplacian_sym2");
    const int n = chart.dim();
    const int sym = sym_size(n);
    const std::size_t nodes = chart.size();

    // First covariant derivative as a stored field, components [b][sym(ij)].
    const int tcomp = n * sym;
    std::vector<double> tfield(nodes * static_cast<std::size_t>(tcomp), 0.0);
    parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t) {
        NodeFrame f;
        ConnData cd;
        double dh[kMaxDim * kMaxComp];
        double t[kMaxDim][kMaxDim * kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            background_connection(n, f, cd);
            d1_node(chart, h.comps.data(), sym, p, f.idx, dh);
            covd_sym2_node(n, f, cd, h.at(p), dh, t);
            double* slot = tfield.data() + p * static_cast<std::size_t>(tcomp);
            for (int b = 0; b < n; ++b)
                for (int i = 0; i < n; ++i)
                    for (int j = i; j < n; ++j)
                        slot[b * sym + sym_index(n, i, j)] = t[b][i * n + j];
        }
    });

    // Second pass: U[a][b][ij] contracted over a == b (background frame).
    Sym2Field out(n, nodes);
    parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t) {
        NodeFrame f;
        ConnData cd;
        std::vector<double> dt(static_cast<std::size_t>(kMaxDim) * tcomp);
        double tloc[kMaxDim][kMaxDim * kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            background_connection(n, f, cd);
            d1_node(chart, tfield.data(), tcomp, p, f.idx, dt.data());
            const double* slot = tfield.data() + p * static_cast<std::size_t>(tcomp);
            for (int b = 0; b < n; ++b)
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        tloc[b][i * n + j] =
                            slot[b * sym + sym_index(n, i, j)];
            double* res = out.at(p);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) {
                    double acc = 0.0;
                    for (int aax = 0; aax < n; ++aax) {
                        double u = (dt[static_cast<std::size_t>(aax) * tcomp + aax * sym +
                                       sym_index(n, i, j)] +
                                    (f.a[aax][aax] + f.a[aax][i] + f.a[aax][j]) *
                                        tloc[aax][i * n + j]) /
                                   f.c[aax];
                        for (int c = 0; c < n; ++c)
                            u -= cd.gamma[c][aax * n + aax] * tloc[c][i * n + j] +
                                 cd.gamma[c][aax * n + i] * tloc[aax][c * n + j] +
                                 cd.gamma[c][aax * n + j] * tloc[aax][i * n + c];
                        acc += u;
                    }
                    res[sym_index(n, i, j)] = acc;
                }
        }
    });
    return out;
}

ScalarField bg_trace_sym2(const Chart& chart, const Sym2Field& h) {
    check_sym2(chart, h, "bg_trace_sym2");
    const int n = chart.dim();
    ScalarField out(chart.size(), 0.0);
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t p = lo; p < hi; ++p) {
            const double* hp = h.at(p);
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += hp[sym_index(n, i, i)];
            out[p] = acc;
        }
    });
    return out;
}

Sym2Field bg_tracefree_sym2(const Chart& chart, const Sym2Field& h) {
    check_sym2(chart, h, "bg_tracefree_sym2");
    const int n = chart.dim();
    Sym2Field out = h;
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t p = lo; p < hi; ++p) {
            double* hp = out.at(p);
            double tr = 0.0;
            for (int i = 0; i < n; ++i) tr += hp[sym_index(n, i, i)];
            const double shift = tr / n;
            for (int i = 0; i < n; ++i) hp[sym_index(n, i, i)] -= shift;
        }
    });
    return out;
}

ScalarField bg_dot_sym2(const Chart& chart, const Sym2Field& a, const Sym2Field& b) {
    check_sym2(chart, a, "bg_dot_sym2");
    check_sym2(chart, b, "bg_dot_sym2");
    const int n = chart.dim();
    ScalarField out(chart.size(), 0.0);
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t p = lo; p < hi; ++p) {
            const double* ap = a.at(p);
            const double* bp = b.at(p);
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) {
                    const double m = (i == j) ? 1.0 : 2.0;
                    acc += m * ap[sym_index(n, i, j)] * bp[sym_index(n, i, j)];
                }
            out[p] = acc;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// general-metric operators

ScalarField laplace_scalar(const Chart& chart, const MetricField& g, const ScalarField& u) {
    check_sym2(chart, g, "laplace_scalar");
    check_scalar(chart, u, "laplace_scalar");
    const int n = chart.dim();
    const std::size_t nodes = chart.size();
    const std::vector<double>& jac = chart.jacobian();

    // flux field F^a = sqrt(det g) g^{ab} d_b u, interleaved per node
    std::vector<double> flux(nodes * static_cast<std::size_t>(n), 0.0);
    std::vector<double> dens(nodes, 0.0);
    std::vector<std::uint8_t> bad(thread_count(), 0);
    parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t chunk) {
        NodeFrame f;
        double d1[kMaxDim];
        double wfull[kMaxDim * kMaxDim];
        double ginv[kMaxDim * kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            d1_node(chart, u.data(), 1, p, f.idx, d1);
            sym_to_full(g.at(p), n, wfull);
            const double det = determinant(wfull, n);
            if (!(det > 0.0) || !invert(wfull, n, ginv)) {
                bad[chunk % bad.size()] = 1;
                continue;
            }
            const double sq = jac[p] * std::sqrt(det);
            dens[p] = sq;
            double* slot = flux.data() + p * static_cast<std::size_t>(n);
            for (int aax = 0; aax < n; ++aax) {
                double acc = 0.0;
                for (int b = 0; b < n; ++b)
                    acc += ginv[aax * n + b] / (f.c[aax] * f.c[b]) * d1[b];
                slot[aax] = sq * acc;
            }
        }
    });
    for (std::uint8_t b : bad)
        if (b) throw std::domain_error("laplace_scalar: metric is not positive definite");

    ScalarField out(nodes, 0.0);
    parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t) {
        int idx[kMaxDim];
        double df[kMaxDim * kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            chart.coords(p, idx);
            d1_node(chart, flux.data(), n, p, idx, df);
            double acc = 0.0;
            for (int aax = 0; aax < n; ++aax) acc += df[aax * n + aax];
            out[p] = acc / dens[p];
        }
    });
    return out;
}

ScalarField grad_norm_sq(const Chart& chart, const MetricField& g, const ScalarField& u) {
    check_sym2(chart, g, "grad_norm_sq");
    check_scalar(chart, u, "grad_norm_sq");
    const int n = chart.dim();
    ScalarField out(chart.size(), 0.0);
    std::vector<std::uint8_t> bad(thread_count(), 0);
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t chunk) {
        NodeFrame f;
        double d1[kMaxDim];
        double wfull[kMaxDim * kMaxDim];
        double ginv[kMaxDim * kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            d1_node(chart, u.data(), 1, p, f.idx, d1);
            sym_to_full(g.at(p), n, wfull);
            if (!invert(wfull, n, ginv)) {
                bad[chunk % bad.size()] = 1;
                continue;
            }
            double acc = 0.0;
            for (int aax = 0; aax < n; ++aax)
                for (int b = 0; b < n; ++b)
                    acc += ginv[aax * n + b] * (d1[aax] / f.c[aax]) * (d1[b] / f.c[b]);
            out[p] = acc;
        }
    });
    for (std::uint8_t b : bad)
        if (b) throw std::domain_error("grad_norm_sq: metric is singular");
    return out;
}

OneFormField divergence_sym2(const Chart& chart, const MetricField& g, const Sym2Field& h) {
    check_sym2(chart, g, "divergence_sym2");
    check_sym2(chart, h, "divergence_sym2");
    const int n = chart.dim();
    const int sym = sym_size(n);
    OneFormField out(n, chart.size());
    std::vector<std::uint8_t> bad(thread_count(), 0);
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t chunk) {
        NodeFrame f;
        ConnData cd;
        double dh[kMaxDim * kMaxComp];
        double t[kMaxDim][kMaxDim * kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            if (!general_connection(chart, g, p, f, cd)) {
                bad[chunk % bad.size()] = 1;
                continue;
            }
            d1_node(chart, h.comps.data(), sym, p, f.idx, dh);
            covd_sym2_node(n, f, cd, h.at(p), dh, t);
            double* slot = out.at(p);
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int b = 0; b < n; ++b)
                    for (int j = 0; j < n; ++j)
                        acc += cd.ginv[b * n + j] * t[b][j * n + i];
                slot[i] = acc;
            }
        }
    });
    for (std::uint8_t b : bad)
        if (b) throw std::domain_error("divergence_sym2: metric is singular");
    return out;
}

ScalarField double_divergence(const Chart& chart, const MetricField& g, const Sym2Field& h) {
    check_sym2(chart, g, "double_divergence");
    check_sym2(chart, h, "double_divergence");
    const int n = chart.dim();
    OneFormField v = divergence_sym2(chart, g, h);
    ScalarField out(chart.size(), 0.0);
    std::vector<std::uint8_t> bad(thread_count(), 0);
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t chunk) {
        NodeFrame f;
        ConnData cd;
        double dv[kMaxDim * kMaxDim];
        double t[kMaxDim][kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            if (!general_connection(chart, g, p, f, cd)) {
                bad[chunk % bad.size()] = 1;
                continue;
            }
            d1_node(chart, v.comps.data(), n, p, f.idx, dv);
            covd_oneform_node(n, f, cd, v.at(p), dv, t);
            double acc = 0.0;
            for (int aax = 0; aax < n; ++aax)
                for (int b = 0; b < n; ++b) acc += cd.ginv[aax * n + b] * t[aax][b];
            out[p] = acc;
        }
    });
    for (std::uint8_t b : bad)
        if (b) throw std::domain_error("double_divergence: metric is singular");
    return out;
}

Sym2Field einstein_operator(const Chart& chart, const CurvaturePack& round_pack,
                            const Sym2Field& h) {
    check_sym2(chart, h, "einstein_operator");
    if (round_pack.detail != PackDetail::kFull)
        throw std::invalid_argument("einstein_operator: pack must carry the full curvature");
    if (round_pack.nodes != chart.size())
        throw std::invalid_argument("einstein_operator: pack does not match the chart");
    const int n = chart.dim();
    Sym2Field rough = bg_rough_laplacian_sym2(chart, h);
    Sym2Field out(n, chart.size());
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        double hfull[kMaxDim * kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            sym_to_full(h.at(p), n, hfull);
            const double* rl = rough.at(p);
            double* res = out.at(p);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) {
                    double act = 0.0;
                    for (int k = 0; k < n; ++k)
                        for (int l = 0; l < n; ++l)
                            act += riemann_component(round_pack, p, i, k, j, l) *
                                   hfull[k * n + l];
                    res[sym_index(n, i, j)] = rl[sym_index(n, i, j)] + 2.0 * act;
                }
        }
    });
    return out;
}

TTDiagnostics tt_diagnostics(const Chart& chart, const Sym2Field& h) {
    check_sym2(chart, h, "tt_diagnostics");
    const int n = chart.dim();
    OneFormField div = bg_divergence_sym2(chart, h);
    TTDiagnostics out;
    std::vector<double> trs(chart.size()), dvs(chart.size());
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t p = lo; p < hi; ++p) {
            const double* hp = h.at(p);
            double tr = 0.0;
            for (int i = 0; i < n; ++i) tr += hp[sym_index(n, i, i)];
            trs[p] = tr;
            const double* d = div.at(p);
            double nr = 0.0;
            for (int i = 0; i < n; ++i) nr += d[i] * d[i];
            dvs[p] = std::sqrt(nr);
        }
    });
    out.trace_sup = sup_abs(trs);
    out.div_sup = sup_abs(dvs);
    return out;
}

ScalarField harmonic_generator(const Chart& chart, int degree, int index) {
    const int n = chart.dim();
    if (degree != 1 && degree != 2)
        throw std::invalid_argument("harmonic_generator: degree must be 1 or 2");
    if (index < 1 || index > n + 1)
        throw std::invalid_argument("harmonic_generator: index must lie in 1..dim+1");
    ScalarField x = chart.ambient(index - 1);
    if (degree == 1) return x;
    const double r2 = chart.radius() * chart.radius();
    const double shift = r2 / static_cast<double>(n + 1);
    ScalarField out(chart.size());
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t p = lo; p < hi; ++p) out[p] = x[p] * x[p] - shift;
    });
    return out;
}

OneFormField ambient_gradient(const Chart& chart, int m) {
    const int n = chart.dim();
    if (m < 0 || m > n)
        throw std::invalid_argument("ambient_gradient: coordinate index out of range");
    const std::size_t nodes = chart.size();
    // x_m = r * cos(theta_k) * prod_{i<k} sin(theta_i) with k = n - m; for
    // m = 0 there is no cosine factor (k = n). Dividing the angular derivative
    // by the frame prefactor c_j = r * prod_{i<j} sin(theta_i) telescopes the
    // sines, leaving the bounded closed forms below.
    const int k = (m == 0) ? n : n - m;
    OneFormField out(n, nodes);
    parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t) {
        int idx[kMaxDim];
        double sn[kMaxDim], cs[kMaxDim];
        for (std::size_t p = lo; p < hi; ++p) {
            chart.coords(p, idx);
            for (int a = 0; a < n; ++a) {
                const AxisGrid& ax = chart.axis(a);
                const double th = ax.theta[static_cast<std::size_t>(idx[a])];
                sn[a] = ax.periodic ? std::sin(th) : ax.sin_theta[static_cast<std::size_t>(idx[a])];
                cs[a] = std::cos(th);
            }
            double* g = out.at(p);
            for (int j = 0; j < n; ++j) {
                if (j > k) {
                    g[j] = 0.0;
                } else if (j == k) {
                    g[j] = -sn[k];
                } else {
                    double v = cs[j];
                    for (int i = j + 1; i < k; ++i) v *= sn[i];
                    if (k < n) v *= cs[k];
                    g[j] = v;
                }
            }
        }
    });
    return out;
}

ScalarField random_band_limited(const Chart& chart, std::uint64_t seed) {
    const int n = chart.dim();
    SplitMix64 rng(seed);
    double lin[kMaxDim + 1];
    double quad[kMaxDim + 1][kMaxDim + 1];
    // Redraw until the traceless quadratic part carries real weight, so the
    // field always has second-eigenspace content.
    for (int attempt = 0; attempt < 64; ++attempt) {
        double qnorm = 0.0, lnorm = 0.0;
        for (int i = 0; i <= n; ++i) {
            lin[i] = rng.next_range(-1.0, 1.0);
            lnorm += lin[i] * lin[i];
        }
        double diag_mean = 0.0;
        for (int i = 0; i <= n; ++i) {
            for (int j = i; j <= n; ++j) {
                quad[i][j] = rng.next_range(-1.0, 1.0);
                quad[j][i] = quad[i][j];
            }
            diag_mean += quad[i][i];
        }
        diag_mean /= static_cast<double>(n + 1);
        for (int i = 0; i <= n; ++i) quad[i][i] -= diag_mean;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; j <= n; ++j) qnorm += quad[i][j] * quad[i][j];
        if (qnorm >= 0.05 * (qnorm + lnorm)) break;
    }

    std::vector<ScalarField> amb;
    amb.reserve(n + 1);
    for (int m = 0; m <= n; ++m) amb.push_back(chart.ambient(m));

    ScalarField out(chart.size(), 0.0);
    parallel_for_chunks(chart.size(), [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t p = lo; p < hi; ++p) {
            double v = 0.0;
            for (int i = 0; i <= n; ++i) {
                v += lin[i] * amb[i][p];
                for (int j = 0; j <= n; ++j) v += quad[i][j] * amb[i][p] * amb[j][p];
            }
            out[p] = v;
        }
    });
    const double sup = sup_abs(out);
    assert(sup > 0.0);
    for (double& v : out) v /= sup;
    return out;
}

TTProjectResult tt_project(const Chart& chart, const Sym2Field& h, double tol, int max_iter) {
    check_sym2(chart, h, "tt_project");
    if (!(tol > 0.0) || max_iter < 1)
        throw std::invalid_argument("tt_project: tol must be positive and max_iter >= 1");
    const int n = chart.dim();
    const std::size_t nodes = chart.size();

    // remove the trace part
    Sym2Field hd(n, nodes);
    parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t) {
        for (std::size_t p = lo; p < hi; ++p) {
            const double* src = h.at(p);
            double* dst = hd.at(p);
            double tr = 0.0;
            for (int i = 0; i < n; ++i) tr += src[sym_index(n, i, i)];
            tr /= static_cast<double>(n);
            for (int k = 0; k < sym_size(n); ++k) dst[k] = src[k];
            for (int i = 0; i < n; ++i) dst[sym_index(n, i, i)] -= tr;
        }
    });

    // Conformal Killing operator: the trace-compensated Lie derivative. Using
    // it (rather than the plain Lie derivative) keeps the projected output
    // exactly traceless.
    auto apply_ck = [&](const OneFormField& x) {
        std::vector<double> t = bg_covd_oneform(chart, x);
        Sym2Field ck(n, nodes);
        parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t) {
            for (std::size_t p = lo; p < hi; ++p) {
                const double* slot = t.data() + p * static_cast<std::size_t>(n) * n;
                double div = 0.0;
                for (int aax = 0; aax < n; ++aax) div += slot[aax * n + aax];
                div *= 2.0 / static_cast<double>(n);
                double* hp = ck.at(p);
                for (int i = 0; i < n; ++i)
                    for (int j = i; j < n; ++j)
                        hp[sym_index(n, i, j)] = slot[i * n + j] + slot[j * n + i] -
                                                 (i == j ? div : 0.0);
            }
        });
        return ck;
    };

    const std::vector<double>& qw = chart.quad_weight();
    const std::vector<double>& jac = chart.jacobian();

    // Adjoint of the discrete CK operator with respect to the quadrature
    // inner products (component weight W = qw * jac). Writing the gauge
    // operator as CK^T CK makes it symmetric positive semidefinite by
    // construction. Composing divergence stencils instead looks symmetric on
    // smooth fields but carries O(1) asymmetry on rough pole-row modes,
    // which stalls conjugate gradients.
    std::vector<AxisTranspose> atr;
    atr.reserve(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) atr.push_back(transpose_d1(chart.axis(a)));
    // T = 2 (S - tr S / n * id) collects both symmetrization and trace terms
    // of CK^T; the stencil part scatters W * T_{am} / c_a through transposed
    // derivative rows, the connection terms stay pointwise.
    auto apply_ckt = [&](const Sym2Field& s) {
        std::vector<double> fscaled(nodes * static_cast<std::size_t>(n) * n);
        parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t) {
            NodeFrame f;
            for (std::size_t p = lo; p < hi; ++p) {
                load_frame(chart, p, f);
                const double* sp = s.at(p);
                double tr = 0.0;
                for (int i = 0; i < n; ++i) tr += sp[sym_index(n, i, i)];
                const double wp = qw[p] * jac[p];
                double* slot = fscaled.data() + p * static_cast<std::size_t>(n) * n;
                for (int aax = 0; aax < n; ++aax)
                    for (int m = 0; m < n; ++m) {
                        double tam =
                            2.0 * sp[sym_index(n, std::min(aax, m), std::max(aax, m))];
                        if (aax == m) tam -= 2.0 * tr / static_cast<double>(n);
                        slot[aax * n + m] = wp * tam / f.c[aax];
                    }
            }
        });
        OneFormField out(n, nodes);
        parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t) {
            NodeFrame f;
            ConnData cd;
            for (std::size_t q = lo; q < hi; ++q) {
                load_frame(chart, q, f);
                background_connection(n, f, cd);
                double acc[kMaxDim] = {};
                for (int aax = 0; aax < n; ++aax) {
                    const AxisTranspose& at = atr[static_cast<std::size_t>(aax)];
                    const std::size_t str = chart.stride(aax);
                    const int row = f.idx[aax];
                    const std::size_t base = q - static_cast<std::size_t>(row) * str;
                    const int cnt = at.cnt[static_cast<std::size_t>(row)];
                    for (int t = 0; t < cnt; ++t) {
                        const std::size_t ps =
                            base + static_cast<std::size_t>(
                                       at.rows[static_cast<std::size_t>(row)]
                                              [static_cast<std::size_t>(t)]) *
                                       str;
                        const double wv =
                            at.w[static_cast<std::size_t>(row)][static_cast<std::size_t>(t)];
                        const double* fs =
                            fscaled.data() + ps * static_cast<std::size_t>(n) * n + aax * n;
                        for (int m = 0; m < n; ++m) acc[m] += wv * fs[m];
                    }
                }
                const double* sp = s.at(q);
                double tr = 0.0;
                for (int i = 0; i < n; ++i) tr += sp[sym_index(n, i, i)];
                double tq[kMaxDim][kMaxDim];
                for (int aax = 0; aax < n; ++aax)
                    for (int m = 0; m < n; ++m) {
                        double tam =
                            2.0 * sp[sym_index(n, std::min(aax, m), std::max(aax, m))];
                        if (aax == m) tam -= 2.0 * tr / static_cast<double>(n);
                        tq[aax][m] = tam;
                    }
                const double wq = qw[q] * jac[q];
                double* op = out.at(q);
                for (int m = 0; m < n; ++m) {
                    double alg = 0.0;
                    for (int aax = 0; aax < n; ++aax) {
                        alg += f.a[aax][m] / f.c[aax] * tq[aax][m];
                        for (int i = 0; i < n; ++i)
                            alg -= cd.gamma[m][aax * n + i] * tq[aax][i];
                    }
                    op[m] = acc[m] / wq + alg;
                }
            }
        });
        return out;
    };

    // gauge operator: A x = CK^T(CK(x))
    auto apply_gauge = [&](const OneFormField& x) { return apply_ckt(apply_ck(x)); };
    auto dot = [&](const OneFormField& a, const OneFormField& b) {
        return parallel_reduce(nodes, [&](std::size_t lo, std::size_t hi) {
            KahanSum s;
            for (std::size_t p = lo; p < hi; ++p) {
                const double* ap = a.at(p);
                const double* bp = b.at(p);
                double acc = 0.0;
                for (int i = 0; i < n; ++i) acc += ap[i] * bp[i];
                s.add(acc * qw[p] * jac[p]);
            }
            return s.result();
        });
    };

    // diagonal preconditioner: per-node elliptic scale of the gauge operator
    std::vector<double> precond(nodes, 1.0);
    parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t) {
        NodeFrame f;
        for (std::size_t p = lo; p < hi; ++p) {
            load_frame(chart, p, f);
            double scale = 2.0 * (n - 1) * chart.lambda();
            for (int aax = 0; aax < n; ++aax) {
                const double hax = chart.axis(aax).spacing;
                scale += 3.75 / (hax * hax * f.c[aax] * f.c[aax]);
            }
            precond[p] = 1.0 / scale;
        }
    });
    auto apply_precond = [&](const OneFormField& r) {
        OneFormField z(n, nodes);
        parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t) {
            for (std::size_t p = lo; p < hi; ++p) {
                const double* rp = r.at(p);
                double* zp = z.at(p);
                for (int i = 0; i < n; ++i) zp[i] = precond[p] * rp[i];
            }
        });
        return z;
    };

    // The gauge operator annihilates conformal Killing one-forms (rotations
    // and ambient-gradient fields). Discretization perturbs those zero modes
    // into tiny eigenvalues of either sign, which makes plain CG stagnate and
    // then drift. Deflating the known kernel restores a definite operator:
    // solve P A P x = P rhs with P the orthogonal projector off the kernel,
    // and give the kernel modes a positive placeholder eigenvalue sigma so
    // the deflated operator stays positive on the whole space.
    std::vector<OneFormField> kernel;
    {
        std::vector<ScalarField> amb;
        std::vector<OneFormField> grad;
        for (int m = 0; m <= n; ++m) {
            amb.push_back(chart.ambient(m));
            grad.push_back(ambient_gradient(chart, m));
        }
        for (int m = 0; m <= n; ++m) kernel.push_back(grad[static_cast<std::size_t>(m)]);
        for (int a = 0; a <= n; ++a)
            for (int b = a + 1; b <= n; ++b) {
                OneFormField rot(n, nodes);
                const ScalarField& xa = amb[static_cast<std::size_t>(a)];
                const ScalarField& xb = amb[static_cast<std::size_t>(b)];
                const OneFormField& ga = grad[static_cast<std::size_t>(a)];
                const OneFormField& gb = grad[static_cast<std::size_t>(b)];
                parallel_for_chunks(nodes, [&](std::size_t lo, std::size_t hi, std::size_t) {
                    for (std::size_t p = lo; p < hi; ++p) {
                        double* rp = rot.at(p);
                        const double* gap = ga.at(p);
                        const double* gbp = gb.at(p);
                        for (int i = 0; i < n; ++i) rp[i] = xa[p] * gbp[i] - xb[p] * gap[i];
                    }
                });
                kernel.push_back(std::move(rot));
            }
        // modified Gram-Schmidt in the quadrature inner product, two passes
        for (std::size_t ki = 0; ki < kernel.size(); ++ki) {
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t kj = 0; kj < ki; ++kj) {
                    const double c = dot(kernel[ki], kernel[kj]);
                    for (std::size_t q = 0; q < kernel[ki].comps.size(); ++q)
                        kernel[ki].comps[q] -= c * kernel[kj].comps[q];
                }
            const double nrm = std::sqrt(std::max(dot(kernel[ki], kernel[ki]), 0.0));
            assert(nrm > 0.0);
            for (double& v : kernel[ki].comps) v /= nrm;
        }
    }
    auto project_off_kernel = [&](OneFormField& v) {
        for (const OneFormField& kf : kernel) {
            const double c = dot(v, kf);
            for (std::size_t q = 0; q < v.comps.size(); ++q) v.comps[q] -= c * kf.comps[q];
        }
    };
    const double sigma = 2.0 * (n - 1) * chart.lambda();
    auto apply_deflated = [&](const OneFormField& xin) {
        OneFormField y = xin;
        project_off_kernel(y);
        OneFormField z = apply_gauge(y);
        project_off_kernel(z);
        for (std::size_t q = 0; q < z.comps.size(); ++q)
            z.comps[q] += sigma * (xin.comps[q] - y.comps[q]);
        return z;
    };

    OneFormField rhs = apply_ckt(hd);
    project_off_kernel(rhs);

    const double rhs_norm = std::sqrt(std::max(dot(rhs, rhs), 0.0));
    TTProjectResult result;
    OneFormField x(n, nodes);
    if (rhs_norm == 0.0) {
        result.projected = hd;
        result.converged = true;
        return result;
    }

    OneFormField r = rhs;  // residual of A x = rhs with x = 0
    OneFormField z = apply_precond(r);
    OneFormField d = z;
    double rz = dot(r, z);
    double res_norm = std::sqrt(std::max(dot(r, r), 0.0));
    int it = 0;
    while (it < max_iter && res_norm > tol * rhs_norm) {
        OneFormField ad = apply_deflated(d);
        const double dad = dot(d, ad);
        if (!(dad > 0.0)) break;  // lost positivity, stop and report honestly
        const double alpha = rz / dad;
        for (std::size_t k = 0; k < x.comps.size(); ++k) {
            x.comps[k] += alpha * d.comps[k];
            r.comps[k] -= alpha * ad.comps[k];
        }
        z = apply_precond(r);
        const double rz_next = dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t k = 0; k < d.comps.size(); ++k)
            d.comps[k] = z.comps[k] + beta * d.comps[k];
        res_norm = std::sqrt(std::max(dot(r, r), 0.0));
        ++it;
    }

    Sym2Field gauge = apply_ck(x);
    result.projected = Sym2Field(n, nodes);
    for (std::size_t k = 0; k < hd.comps.size(); ++k)
        result.projected.comps[k] = hd.comps[k] - gauge.comps[k];
    result.residual = res_norm / rhs_norm;
    result.iterations = it;
    result.converged = res_norm <= tol * rhs_norm;
    if (!result.converged)
        throw std::runtime_error("tt_project: gauge solve stalled at relative residual " +
                                 std::to_string(result.residual) + " after " +
                                 std::to_string(it) + " iterations");
    return result;
}

// ---------------------------------------------------------------------------
// helpers

ScalarField field_constant(const Chart& chart, double value) {
    return ScalarField(chart.size(), value);
}

void axpy(double a, const ScalarField& x, ScalarField& y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

double sup_abs(const std::vector<double>& f) {
    double m = 0.0;
    for (double v : f) m = std::max(m, std::abs(v));
    return m;
}

double sup_abs_masked(const std::vector<double>& f, const std::vector<std::uint8_t>& mask) {
    assert(f.size() == mask.size());
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (mask[i]) m = std::max(m, std::abs(f[i]));
    return m;
}

}  // namespace cvlab
