#include "cvlab/smallmat.hpp"

#include <cassert>
#include <cmath>

namespace cvlab {

void sym_to_full(const double* packed, int n, double* full) {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            full[i * n + j] = packed[sym_index(n, i, j)];
}

void full_to_sym(const double* full, int n, double* packed) {
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
            packed[sym_index(n, i, j)] = 0.5 * (full[i * n + j] + full[j * n + i]);
}

bool invert(const double* a, int n, double* out, double tiny) {
    assert(n >= 1 && n <= kMaxDim);
    double m[kMaxDim * 2 * kMaxDim];
    // augmented [a | I]
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) m[i * 2 * n + j] = a[i * n + j];
        for (int j = 0; j < n; ++j) m[i * 2 * n + n + j] = (i == j) ? 1.0 : 0.0;
    }
    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::fabs(m[col * 2 * n + col]);
        for (int r = col + 1; r < n; ++r) {
            const double v = std::fabs(m[r * 2 * n + col]);
            if (v > best) { best = v; piv = r; }
        }
        if (best < tiny) return false;
        if (piv != col)
            for (int j = 0; j < 2 * n; ++j) std::swap(m[piv * 2 * n + j], m[col * 2 * n + j]);
        const double inv_p = 1.0 / m[col * 2 * n + col];
        for (int j = 0; j < 2 * n; ++j) m[col * 2 * n + j] *= inv_p;
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = m[r * 2 * n + col];
            if (f == 0.0) continue;
            for (int j = 0; j < 2 * n; ++j) m[r * 2 * n + j] -= f * m[col * 2 * n + j];
        }
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out[i * n + j] = m[i * 2 * n + n + j];
    return true;
}

double determinant(const double* a, int n) {
    assert(n >= 1 && n <= kMaxDim);
    double m[kMaxDim * kMaxDim];
    for (int i = 0; i < n * n; ++i) m[i] = a[i];
    double det = 1.0;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::fabs(m[col * n + col]);
        for (int r = col + 1; r < n; ++r) {
            const double v = std::fabs(m[r * n + col]);
            if (v > best) { best = v; piv = r; }
        }
        if (best == 0.0) return 0.0;
        if (piv != col) {
            det = -det;
            for (int j = 0; j < n; ++j) std::swap(m[piv * n + j], m[col * n + j]);
        }
        det *= m[col * n + col];
        const double inv_p = 1.0 / m[col * n + col];
        for (int r = col + 1; r < n; ++r) {
            const double f = m[r * n + col] * inv_p;
            if (f == 0.0) continue;
            for (int j = col; j < n; ++j) m[r * n + j] -= f * m[col * n + j];
        }
    }
    return det;
}

void jacobi_eigenvalues(const double* packed, int n, double* eigs_out, double tol) {
    assert(n >= 1 && n <= kMaxDim);
    double a[kMaxDim * kMaxDim];
    sym_to_full(packed, n, a);

    double norm = 0.0;
    for (int i = 0; i < n * n; ++i) norm += a[i] * a[i];
    norm = std::sqrt(norm);
    const double stop = (norm > 0.0 ? norm : 1.0) * tol;

    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += 2.0 * a[i * n + j] * a[i * n + j];
        if (std::sqrt(off) <= stop) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p], aqq = a[q * n + q];
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    for (int i = 0; i < n; ++i) eigs_out[i] = a[i * n + i];
    // insertion sort ascending
    for (int i = 1; i < n; ++i) {
        const double v = eigs_out[i];
        int j = i - 1;
        while (j >= 0 && eigs_out[j] > v) { eigs_out[j + 1] = eigs_out[j]; --j; }
        eigs_out[j + 1] = v;
    }
}

double min_eigenvalue_sym(const double* packed, int n) {
    double e[kMaxDim];
    jacobi_eigenvalues(packed, n, e);
    return e[0];
}

}  // namespace cvlab
