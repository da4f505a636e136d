#pragma once
// Exact combinatorics: binomial coefficients, elementary symmetric
// polynomials (three independent evaluators), generalized Kronecker deltas
// with their contraction rule, and the exact-integer index inequality scan.

#include <array>
#include <cstdint>
#include <vector>

namespace cvlab {

// Exact binomial coefficient. Throws std::domain_error unless 0 <= k <= n.
// 128-bit intermediates keep the stepwise products exact for n up to 120.
long long binomial(int n, int k);

// k-th elementary symmetric polynomial of the eigenvalue list.
// k = 0 returns 1; k > size is a domain error.
double sigma_from_eigs(const std::vector<double>& eigs, int k);

// Same quantity from power sums p_m = tr(S^m), m = 1..k, via the Newton
// recursion e_k = (1/k) * sum_{m=1..k} (-1)^(m-1) e_{k-m} p_m.
// power_sums[0] holds p_1. k exceeding the supplied sums is a domain error.
double sigma_from_power_sums(const std::vector<double>& power_sums, int k);

// Generalized Kronecker delta on index lists of equal length:
// +1 / -1 for an even / odd permutation of distinct entries, 0 otherwise.
// Length mismatch is a domain error.
int gen_delta(const std::vector<int>& upper, const std::vector<int>& lower);

struct DeltaContractionReport {
    int n = 0, k = 0, p = 0;
    long long coefficient = 0;          // p! * (n-k+p)! / (n-k)!
    unsigned long long assignments = 0; // free-index combinations checked
    long long max_deviation = 0;        // exact integer, must be 0
    bool pass = false;
};

// Brute-force verification of the delta contraction rule: summing the
// product of a p-index delta and a k-index delta over the p contracted
// pairs must equal coefficient * (k-p)-index delta for every assignment of
// the free indices. Exact integer arithmetic throughout.
// Bounds n <= 6, k <= 4, 1 <= p <= k-1 (else resource/domain error).
DeltaContractionReport delta_contraction_check(int n, int k, int p);

// sigma_k of an n x n endomorphism via the delta-contraction definition
// (1/k!) * delta^{i...}_{j...} * S^{j_1}_{i_1} ... S^{j_k}_{i_k}.
// Brute force; n <= 6 only. Cross-check oracle for the Newton evaluator.
double sigma_via_delta(const std::vector<double>& endo, int n, int k);

struct IndexInequalityReport {
    int n_max = 0;
    long long min_value = 0;
    unsigned long long tuples = 0;
    unsigned long long violations = 0;
    // up to 16 tuples (n,k,l,p,q) attaining the minimum
    std::vector<std::array<int, 5>> argmin;
    bool pass = false;
};

// Exhaustive exact-integer scan of beta*(k+l) + 2*(p^2-q^2) - n with
// beta = n - 2*(p-q), over 3 <= n <= n_max, 1 <= l < k <= n, 1 <= q <= p <= n.
// Asserts no negative value occurs and records the minimum with argmins.
IndexInequalityReport index_inequality_scan(int n_max);

struct IndexTuple {
    int n = 3, k = 2, l = 1, p = 2, q = 1;
    int alpha() const { return 2 * (k - l); }
    int beta() const { return n - 2 * (p - q); }
    bool valid() const {
        return n >= 3 && l >= 1 && l < k && k <= n && q >= 1 && q <= p && p <= n;
    }
};

enum class IndexCase { Case1, Case2, Inadmissible };

// Classify an index tuple: Case1 when 2(p-q) < n, Case2 when
// 2(p-q) >= n + 2(k-l), otherwise Inadmissible. A vanishing beta is always
// Inadmissible. Invalid tuples are a domain error.
IndexCase admissible_indices(const IndexTuple& t);

const char* index_case_name(IndexCase c);

}  // namespace cvlab
