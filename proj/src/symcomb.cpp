#include "cvlab/symcomb.hpp"

#include <cassert>
#include <stdexcept>

namespace cvlab {

long long binomial(int n, int k) {
    if (k < 0 || n < 0 || k > n) throw std::domain_error("binomial: need 0 <= k <= n");
    if (k > n - k) k = n - k;
    __int128 c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * (n - k + i) / i;  // exact: product of i consecutive integers is divisible by i!
    }
    if (c > __int128(0x7fffffffffffffffLL))
        throw std::domain_error("binomial: result exceeds 64-bit range");
    return static_cast<long long>(c);
}

double sigma_from_eigs(const std::vector<double>& eigs, int k) {
    const int n = static_cast<int>(eigs.size());
    if (k < 0 || k > n) throw std::domain_error("sigma_from_eigs: need 0 <= k <= n");
    if (k == 0) return 1.0;
    // polynomial-expansion recurrence: fold eigenvalues one at a time
    std::vector<double> e(static_cast<size_t>(k) + 1, 0.0);
    e[0] = 1.0;
    for (int i = 0; i < n; ++i) {
        const double x = eigs[static_cast<size_t>(i)];
        for (int j = std::min(i + 1, k); j >= 1; --j) e[j] += x * e[j - 1];
    }
    return e[static_cast<size_t>(k)];
}

double sigma_from_power_sums(const std::vector<double>& power_sums, int k) {
    if (k < 0) throw std::domain_error("sigma_from_power_sums: negative k");
    if (k == 0) return 1.0;
    if (static_cast<int>(power_sums.size()) < k)
        throw std::domain_error("sigma_from_power_sums: not enough power sums");
    std::vector<double> e(static_cast<size_t>(k) + 1, 0.0);
    e[0] = 1.0;
    for (int j = 1; j <= k; ++j) {
        double acc = 0.0;
        double sign = 1.0;
        for (int m = 1; m <= j; ++m) {
            acc += sign * e[static_cast<size_t>(j - m)] * power_sums[static_cast<size_t>(m - 1)];
            sign = -sign;
        }
        e[static_cast<size_t>(j)] = acc / j;
    }
    return e[static_cast<size_t>(k)];
}

int gen_delta(const std::vector<int>& upper, const std::vector<int>& lower) {
    if (upper.size() != lower.size())
        throw std::domain_error("gen_delta: index lists must have equal length");
    const int m = static_cast<int>(upper.size());
    // repeated entries on either side kill the delta
    for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b) {
            if (upper[a] == upper[b]) return 0;
            if (lower[a] == lower[b]) return 0;
        }
    // build the permutation sending position a (upper) to its match in lower
    int perm[16];
    assert(m <= 16);
    for (int a = 0; a < m; ++a) {
        int found = -1;
        for (int b = 0; b < m; ++b)
            if (lower[b] == upper[a]) { found = b; break; }
        if (found < 0) return 0;
        perm[a] = found;
    }
    int sign = 1;
    for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b)
            if (perm[a] > perm[b]) sign = -sign;
    return sign;
}

namespace {

long long factorial_ll(int m) {
    long long f = 1;
    for (int i = 2; i <= m; ++i) f *= i;
    return f;
}

// odometer-style enumeration of index tuples in [0, n)^len
bool advance(std::vector<int>& idx, int n) {
    for (size_t a = 0; a < idx.size(); ++a) {
        if (++idx[a] < n) return true;
        idx[a] = 0;
    }
    return false;
}

}  // namespace

DeltaContractionReport delta_contraction_check(int n, int k, int p) {
    if (!(1 <= p && p <= k - 1)) throw std::domain_error("delta_contraction_check: need 1 <= p <= k-1");
    if (n > 6 || k > 4) throw std::range_error("delta_contraction_check: brute-force bounds are n <= 6, k <= 4");
    if (k > n) throw std::domain_error("delta_contraction_check: need k <= n");

    DeltaContractionReport rep;
    rep.n = n; rep.k = k; rep.p = p;
    rep.coefficient = factorial_ll(p) * (factorial_ll(n - k + p) / factorial_ll(n - k));

    const int nfree = k - p;
    std::vector<int> su(static_cast<size_t>(p), 0), sl(static_cast<size_t>(p), 0);
    std::vector<int> left_u(static_cast<size_t>(p)), left_l(static_cast<size_t>(p));
    std::vector<int> big_u(static_cast<size_t>(k)), big_l(static_cast<size_t>(k));
    std::vector<int> free_u(static_cast<size_t>(nfree), 0), free_l(static_cast<size_t>(nfree), 0);

    long long maxdev = 0;
    unsigned long long count = 0;
    bool more_free = true;
    while (more_free) {
        // contracted sum over the p paired indices (each pair summed over 0..n-1)
        long long lhs = 0;
        std::fill(su.begin(), su.end(), 0);
        std::fill(sl.begin(), sl.end(), 0);
        bool more = true;
        while (more) {
            // first factor: p-index delta with upper su, lower sl
            for (int a = 0; a < p; ++a) { left_u[a] = su[a]; left_l[a] = sl[a]; }
            const int d1 = gen_delta(left_u, left_l);
            if (d1 != 0) {
                // second factor: k-index delta, upper (sl, free_u), lower (su, free_l)
                for (int a = 0; a < p; ++a) { big_u[a] = sl[a]; big_l[a] = su[a]; }
                for (int a = 0; a < nfree; ++a) {
                    big_u[static_cast<size_t>(p + a)] = free_u[static_cast<size_t>(a)];
                    big_l[static_cast<size_t>(p + a)] = free_l[static_cast<size_t>(a)];
                }
                lhs += static_cast<long long>(d1) * gen_delta(big_u, big_l);
            }
            // two-stage odometer: a wrap of su carries into sl
            more = advance(su, n) || advance(sl, n);
        }
        const long long rhs = rep.coefficient * gen_delta(free_u, free_l);
        const long long dev = lhs > rhs ? lhs - rhs : rhs - lhs;
        if (dev > maxdev) maxdev = dev;
        ++count;
        more_free = advance(free_u, n) || advance(free_l, n);
    }

    rep.assignments = count;
    rep.max_deviation = maxdev;
    rep.pass = (maxdev == 0);
    return rep;
}

double sigma_via_delta(const std::vector<double>& endo, int n, int k) {
    if (n > 6) throw std::range_error("sigma_via_delta: brute-force bound n <= 6");
    if (k < 0 || k > n) throw std::domain_error("sigma_via_delta: need 0 <= k <= n");
    if (static_cast<int>(endo.size()) != n * n)
        throw std::domain_error("sigma_via_delta: endomorphism must be n x n");
    if (k == 0) return 1.0;

    std::vector<int> iu(static_cast<size_t>(k), 0), jl(static_cast<size_t>(k), 0);
    double acc = 0.0;
    bool more = true;
    while (more) {
        const int d = gen_delta(iu, jl);
        if (d != 0) {
            double prod = 1.0;
            for (int a = 0; a < k; ++a)
                prod *= endo[static_cast<size_t>(jl[a] * n + iu[a])];  // S^{j_a}_{i_a}
            acc += d * prod;
        }
        more = advance(iu, n) || advance(jl, n);
    }
    return acc / static_cast<double>(factorial_ll(k));
}

IndexInequalityReport index_inequality_scan(int n_max) {
    if (n_max < 3) throw std::domain_error("index_inequality_scan: need n_max >= 3");
    IndexInequalityReport rep;
    rep.n_max = n_max;
    long long best = 0x7fffffffffffffffLL;
    for (int n = 3; n <= n_max; ++n)
        for (int k = 2; k <= n; ++k)
            for (int l = 1; l < k; ++l)
                for (int p = 1; p <= n; ++p)
                    for (int q = 1; q <= p; ++q) {
                        const long long beta = n - 2LL * (p - q);
                        const long long v = beta * (k + l) + 2LL * (static_cast<long long>(p) * p - static_cast<long long>(q) * q) - n;
                        ++rep.tuples;
                        if (v < 0) ++rep.violations;
                        if (v < best) {
                            best = v;
                            rep.argmin.clear();
                        }
                        if (v == best && rep.argmin.size() < 16)
                            rep.argmin.push_back({n, k, l, p, q});
                    }
    rep.min_value = best;
    rep.pass = (rep.violations == 0);
    return rep;
}

IndexCase admissible_indices(const IndexTuple& t) {
    if (!t.valid()) throw std::domain_error("admissible_indices: tuple violates index invariants");
    if (t.beta() == 0) return IndexCase::Inadmissible;
    if (2 * (t.p - t.q) < t.n) return IndexCase::Case1;
    if (2 * (t.p - t.q) >= t.n + 2 * (t.k - t.l)) return IndexCase::Case2;
    return IndexCase::Inadmissible;
}

const char* index_case_name(IndexCase c) {
    switch (c) {
        case IndexCase::Case1: return "Case1";
        case IndexCase::Case2: return "Case2";
        default: return "Inadmissible";
    }
}

}  // namespace cvlab
