#pragma once
// Dense linear algebra for per-node matrices of dimension <= 5:
// symmetric packed storage, inversion, determinant, and cyclic Jacobi
// eigenvalues. Everything is allocation-free and safe to call from
// worker threads.

#include <array>
#include <cstddef>

namespace cvlab {

inline constexpr int kMaxDim = 5;

// packed upper-triangle index for a symmetric n x n matrix, i <= j
constexpr int sym_index(int n, int i, int j) {
    return (i <= j) ? i * n - i * (i - 1) / 2 + (j - i)
                    : j * n - j * (j - 1) / 2 + (i - j);
}

constexpr int sym_size(int n) { return n * (n + 1) / 2; }

// unpack packed symmetric storage into a full row-major n x n matrix
void sym_to_full(const double* packed, int n, double* full);

// pack the symmetric part of a full matrix
void full_to_sym(const double* full, int n, double* packed);

// invert a full row-major n x n matrix in place of `out` (input untouched).
// Returns false when a pivot falls below tiny (matrix numerically singular).
bool invert(const double* a, int n, double* out, double tiny = 1e-300);

double determinant(const double* a, int n);

// Eigenvalues of a packed symmetric matrix by cyclic Jacobi rotations,
// iterated until the off-diagonal Frobenius norm is below tol relative to
// the matrix norm. Values are written in ascending order.
void jacobi_eigenvalues(const double* packed, int n, double* eigs_out,
                        double tol = 1e-13);

// convenience: smallest eigenvalue (positive-definiteness probe)
double min_eigenvalue_sym(const double* packed, int n);

}  // namespace cvlab
