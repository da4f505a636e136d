#pragma once
// Internal per-node curvature assembly, shared by pack construction and the
// streaming functional reductions. Works on ratio-frame components with the
// prefactor derivatives applied exactly:
//
//   g_ij = c_i c_j w_ij,   dlog(c_i)/dtheta_a = cot(theta_a) [a < i].
//
// With D_a w read off the stencils and A[a][i] the exact log-derivatives, the
// first and second coordinate derivatives of g factor as c_i c_j times
// polynomial expressions in w, Dw, DDw, A and A'. Dividing the derivative
// slots by their own prefactors keeps every intermediate in the orthonormal
// frame, where the round metric is the identity.

#include <algorithm>
#include <cassert>
#include <cstddef>

#include "cvlab/grid.hpp"
#include "cvlab/smallmat.hpp"

namespace cvlab {
namespace detail {

inline constexpr int kSymMax = kMaxDim * (kMaxDim + 1) / 2;

// index of the ordered pair (i, j), i < j, among all ordered pairs
constexpr int pair_index(int n, int i, int j) {
    return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

struct NodeCurvature {
    double w[kMaxDim * kMaxDim];         // metric, full row-major, ratio frame
    double winv[kMaxDim * kMaxDim];      // inverse
    double schouten[kMaxDim * kMaxDim];  // Ric - R/(2(n-1)) g
    double ricci[kMaxDim * kMaxDim];
    double riem[kMaxDim][kMaxDim][kMaxDim][kMaxDim];
    double scalar = 0.0;
    double det_w = 0.0;  // det of the ratio components; det g = det_w * (prod c_i)^2
    bool invertible = false;
};

// Assembles curvature data of the metric field at node p. `wdata` holds the
// packed ratio components node-major, `rows` the decoded per-axis rows of p.
inline void curvature_at_node(const Chart& ch, const double* wdata, std::size_t p,
                              const int* rows, NodeCurvature& out) {
    const int n = ch.dim();
    const int m = sym_size(n);

    // gather setup: neighbor offsets and stencil weights per axis
    std::ptrdiff_t off[kMaxDim][AxisGrid::kTaps];
    const double* w1[kMaxDim];
    const double* w2[kMaxDim];
    for (int a = 0; a < n; ++a) {
        const AxisGrid& ax = ch.axis(a);
        const int row = rows[a];
        const auto& cols = ax.cols[static_cast<std::size_t>(row)];
        const auto str = static_cast<std::ptrdiff_t>(ch.stride(a));
        for (int t = 0; t < AxisGrid::kTaps; ++t)
            off[a][t] = static_cast<std::ptrdiff_t>(cols[static_cast<std::size_t>(t)] - row) * str;
        w1[a] = ax.d1w[static_cast<std::size_t>(row)].data();
        w2[a] = ax.d2w[static_cast<std::size_t>(row)].data();
    }
    const auto node_comp = [&](std::ptrdiff_t shift) {
        return wdata + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(p) + shift) *
                           static_cast<std::size_t>(m);
    };

    const double* w0 = node_comp(0);

    // stencil derivatives of the packed components
    double dw[kMaxDim][kSymMax];
    double ddw[kMaxDim][kMaxDim][kSymMax];  // derivative axes a <= b
    for (int a = 0; a < n; ++a) {
        double acc1[kSymMax] = {0.0};
        double acc2[kSymMax] = {0.0};
        for (int t = 0; t < AxisGrid::kTaps; ++t) {
            const double* nb = node_comp(off[a][t]);
            const double f1 = w1[a][t];
            const double f2 = w2[a][t];
            for (int c = 0; c < m; ++c) {
                acc1[c] += f1 * nb[c];
                acc2[c] += f2 * nb[c];
            }
        }
        std::copy(acc1, acc1 + m, dw[a]);
        std::copy(acc2, acc2 + m, ddw[a][a]);
    }
    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            double acc[kSymMax] = {0.0};
            for (int t = 0; t < AxisGrid::kTaps; ++t) {
                const double fa = w1[a][t];
                if (fa == 0.0) continue;
                for (int s = 0; s < AxisGrid::kTaps; ++s) {
                    const double f = fa * w1[b][s];
                    if (f == 0.0) continue;
                    const double* nb = node_comp(off[a][t] + off[b][s]);
                    for (int c = 0; c < m; ++c) acc[c] += f * nb[c];
                }
            }
            std::copy(acc, acc + m, ddw[a][b]);
        }
    }

    // exact prefactor data at this node
    double c[kMaxDim];
    c[0] = ch.radius();
    for (int i = 1; i < n; ++i)
        c[i] = c[i - 1] * ch.axis(i - 1).sin_theta[static_cast<std::size_t>(rows[i - 1])];
    double A[kMaxDim][kMaxDim] = {};
    double dA[kMaxDim][kMaxDim] = {};
    for (int a = 0; a < n - 1; ++a) {
        const double ct = ch.axis(a).cot[static_cast<std::size_t>(rows[a])];
        const double cs = ch.axis(a).csc2[static_cast<std::size_t>(rows[a])];
        for (int i = a + 1; i < n; ++i) {
            A[a][i] = ct;
            dA[a][i] = -cs;
        }
    }

    // frame first derivatives: Dh[a][ij] = (dw + (A_ai + A_aj) w) / c_a
    double Dh[kMaxDim][kSymMax];
    for (int a = 0; a < n; ++a) {
        const double inv_ca = 1.0 / c[a];
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                const int ij = sym_index(n, i, j);
                Dh[a][ij] = (dw[a][ij] + (A[a][i] + A[a][j]) * w0[ij]) * inv_ca;
            }
    }
    // frame second derivatives F[a][b][ij] (symmetric in a, b)
    double F[kMaxDim][kMaxDim][kSymMax];
    for (int a = 0; a < n; ++a) {
        for (int b = a; b < n; ++b) {
            const double inv_cab = 1.0 / (c[a] * c[b]);
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) {
                    const int ij = sym_index(n, i, j);
                    const double sa = A[a][i] + A[a][j];
                    const double sb = A[b][i] + A[b][j];
                    double e = ddw[a][b][ij] + sa * dw[b][ij] + sb * dw[a][ij] + sa * sb * w0[ij];
                    if (a == b) e += (dA[a][i] + dA[a][j]) * w0[ij];
                    F[a][b][ij] = e * inv_cab;
                    F[b][a][ij] = F[a][b][ij];
                }
        }
    }

    // metric, inverse, determinant
    sym_to_full(w0, n, out.w);
    out.det_w = determinant(out.w, n);
    out.invertible = invert(out.w, n, out.winv);
    if (!out.invertible) return;

    // Bh[a][ik] = Dh_i[ak] + Dh_k[ai] - Dh_a[ik]  (frame Christoffel source)
    double Bh[kMaxDim][kMaxDim][kMaxDim];
    for (int a = 0; a < n; ++a)
        for (int i = 0; i < n; ++i)
            for (int k = i; k < n; ++k) {
                const double v = Dh[i][sym_index(n, a, k)] + Dh[k][sym_index(n, a, i)] -
                                 Dh[a][sym_index(n, i, k)];
                Bh[a][i][k] = v;
                Bh[a][k][i] = v;
            }
    // Ch[a][ik] = winv[a][b] Bh[b][ik]
    double Ch[kMaxDim][kMaxDim][kMaxDim];
    for (int a = 0; a < n; ++a)
        for (int i = 0; i < n; ++i)
            for (int k = i; k < n; ++k) {
                double acc = 0.0;
                for (int b = 0; b < n; ++b) acc += out.winv[a * n + b] * Bh[b][i][k];
                Ch[a][i][k] = acc;
                Ch[a][k][i] = acc;
            }

    const auto quad = [&](int i, int k, int j, int l) {
        double acc = 0.0;
        for (int a = 0; a < n; ++a) acc += Bh[a][i][k] * Ch[a][j][l];
        return acc;
    };

    // Riemann tensor from its independent pair components; sign convention
    // R_ijij > 0 on the round sphere (sectional curvature positive). The fill
    // must cover the whole kMaxDim-strided array: the contraction below reads
    // the never-written antisymmetric-diagonal slots as zeros.
    std::fill(&out.riem[0][0][0][0],
              &out.riem[0][0][0][0] + kMaxDim * kMaxDim * kMaxDim * kMaxDim, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = k + 1; l < n; ++l) {
                    if (pair_index(n, i, j) > pair_index(n, k, l)) continue;
                    const double v =
                        0.5 * (F[j][k][sym_index(n, i, l)] + F[i][l][sym_index(n, j, k)] -
                               F[j][l][sym_index(n, i, k)] - F[i][k][sym_index(n, j, l)]) +
                        0.25 * (quad(j, k, i, l) - quad(j, l, i, k));
                    out.riem[i][j][k][l] = v;
                    out.riem[j][i][k][l] = -v;
                    out.riem[i][j][l][k] = -v;
                    out.riem[j][i][l][k] = v;
                    out.riem[k][l][i][j] = v;
                    out.riem[l][k][i][j] = -v;
                    out.riem[k][l][j][i] = -v;
                    out.riem[l][k][j][i] = v;
                }

    // Ricci, scalar, Schouten; Ric_jl = winv^{ik} R_{ijkl}
    for (int j = 0; j < n; ++j)
        for (int l = j; l < n; ++l) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < n; ++k) acc += out.winv[i * n + k] * out.riem[i][j][k][l];
            out.ricci[j * n + l] = acc;
            out.ricci[l * n + j] = acc;
        }
    double rs = 0.0;
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) rs += out.winv[j * n + k] * out.ricci[j * n + k];
    out.scalar = rs;
    const int nn = n * n;
    const double sc = rs / (2.0 * (n - 1));
    for (int i = 0; i < nn; ++i) out.schouten[i] = out.ricci[i] - sc * out.w[i];
}

}  // namespace detail
}  // namespace cvlab
