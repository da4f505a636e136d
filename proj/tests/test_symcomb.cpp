#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cvlab/rng.hpp"
#include "cvlab/smallmat.hpp"
#include "cvlab/symcomb.hpp"

using namespace cvlab;

TEST_CASE("binomial values and domain") {
    CHECK(binomial(0, 0) == 1);
    CHECK(binomial(5, 2) == 10);
    CHECK(binomial(3, 1) == 3);
    CHECK(binomial(3, 2) == 3);
    CHECK(binomial(3, 3) == 1);
    CHECK(binomial(60, 30) == 118264581564861424LL);
    CHECK_THROWS_AS(binomial(3, 4), std::domain_error);
    CHECK_THROWS_AS(binomial(3, -1), std::domain_error);
    // Pascal identity over a block
    for (int n = 1; n <= 40; ++n)
        for (int k = 1; k <= n; ++k)
            REQUIRE(binomial(n, k) == binomial(n - 1, k - 1) +
                                          (k <= n - 1 ? binomial(n - 1, k) : 0));
}

TEST_CASE("elementary symmetric polynomials agree across evaluators") {
    // half-identity eigenvalues: the quadruple (1, 1.5, 0.75, 0.125)
    std::vector<double> eigs{0.5, 0.5, 0.5};
    CHECK(sigma_from_eigs(eigs, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(sigma_from_eigs(eigs, 1) == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(sigma_from_eigs(eigs, 2) == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(sigma_from_eigs(eigs, 3) == doctest::Approx(0.125).epsilon(1e-14));
    CHECK_THROWS_AS(sigma_from_eigs(eigs, 4), std::domain_error);

    SplitMix64 rng(20240811);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 3 + static_cast<int>(rng.next_u64() % 3);  // 3..5
        // random symmetric matrix with mild entries
        std::vector<double> packed(sym_size(n));
        for (double& v : packed) v = rng.next_range(-1.0, 1.0);
        std::vector<double> full(n * n);
        sym_to_full(packed.data(), n, full.data());

        std::vector<double> eig(n);
        jacobi_eigenvalues(packed.data(), n, eig.data());

        // power sums from matrix powers
        std::vector<double> mp(full), sums;
        for (int m = 1; m <= n; ++m) {
            double tr = 0.0;
            for (int i = 0; i < n; ++i) tr += mp[i * n + i];
            sums.push_back(tr);
            if (m < n) {
                std::vector<double> next(n * n, 0.0);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        for (int k = 0; k < n; ++k)
                            next[i * n + j] += mp[i * n + k] * full[k * n + j];
                mp.swap(next);
            }
        }

        for (int k = 1; k <= n; ++k) {
            const double a = sigma_from_eigs(eig, k);
            const double b = sigma_from_power_sums(sums, k);
            const double c = sigma_via_delta(full, n, k);
            CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(a)));
            CHECK(std::abs(a - c) <= 1e-10 * std::max(1.0, std::abs(a)));
        }
    }
}

TEST_CASE("generalized Kronecker delta") {
    CHECK(gen_delta({1, 2}, {1, 2}) == 1);
    CHECK(gen_delta({1, 2}, {2, 1}) == -1);
    CHECK(gen_delta({1, 2}, {1, 3}) == 0);
    CHECK(gen_delta({1, 1}, {1, 1}) == 0);  // repeated index kills it
    CHECK(gen_delta({2, 3, 1}, {1, 2, 3}) == 1);   // cyclic, even
    CHECK(gen_delta({2, 1, 3}, {1, 2, 3}) == -1);  // single swap, odd
    CHECK_THROWS_AS(gen_delta({1, 2}, {1, 2, 3}), std::domain_error);
}

TEST_CASE("delta contraction rule is exact") {
    DeltaContractionReport r = delta_contraction_check(3, 3, 2);
    CHECK(r.pass);
    CHECK(r.max_deviation == 0);
    CHECK(r.coefficient == 4);  // p! (n-k+p)! / (n-k)! = 2! * 2! / 0!

    r = delta_contraction_check(4, 3, 1);
    CHECK(r.pass);
    CHECK(r.max_deviation == 0);
    CHECK(r.coefficient == 2);  // 1! * 2! / 1!

    r = delta_contraction_check(5, 4, 2);
    CHECK(r.pass);
    CHECK(r.max_deviation == 0);
    CHECK(r.coefficient == 12);  // 2! * 3! / 1!

    CHECK_THROWS(delta_contraction_check(7, 3, 2));  // n out of supported range
    CHECK_THROWS(delta_contraction_check(3, 3, 3));  // p must stay below k
}

TEST_CASE("index inequality scan") {
    IndexInequalityReport r = index_inequality_scan(20);
    CHECK(r.pass);
    CHECK(r.violations == 0);
    CHECK(r.min_value == 6);
    CHECK(!r.argmin.empty());
    // every recorded argmin really attains the minimum
    for (const auto& t : r.argmin) {
        const int n = t[0], k = t[1], l = t[2], p = t[3], q = t[4];
        const long long beta = n - 2 * (p - q);
        const long long v = beta * (k + l) + 2 * (p * p - q * q) - n;
        CHECK(v == r.min_value);
    }
}

TEST_CASE("index tuple classification") {
    CHECK(admissible_indices({3, 2, 1, 2, 1}) == IndexCase::Case1);  // 2(p-q)=2 < 3
    CHECK(admissible_indices({8, 2, 1, 6, 1}) == IndexCase::Case2);  // 10 >= 8+2
    CHECK(admissible_indices({4, 2, 1, 3, 1}) == IndexCase::Inadmissible);  // beta = 0
    CHECK(admissible_indices({5, 2, 1, 4, 1}) == IndexCase::Inadmissible);  // between cases
    IndexTuple bad;
    bad.n = 3;
    bad.k = 2;
    bad.l = 2;  // l must stay below k
    CHECK_THROWS_AS(admissible_indices(bad), std::domain_error);
}
