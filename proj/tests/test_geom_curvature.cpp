#include "doctest.h"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "cvlab/geom.hpp"
#include "cvlab/grid.hpp"
#include "cvlab/smallmat.hpp"

using namespace cvlab;

namespace {
constexpr double kPi = std::numbers::pi;

// e^{2f} * round metric for the isometry-pullback conformal factor
MetricField conformal_exp_metric(const Chart& ch, const std::vector<double>& f) {
    MetricField g = build_round_sphere(ch);
    const int n = ch.dim();
    for (std::size_t p = 0; p < ch.size(); ++p) {
        const double w = std::exp(2.0 * f[p]);
        double* gp = g.at(p);
        for (int i = 0; i < n; ++i) gp[sym_index(n, i, i)] = w;
        // off-diagonals stay 0
    }
    return g;
}

// boost pullback factor along one ambient axis; the resulting metric is
// isometric to the round sphere, so every curvature quantity is known
std::vector<double> boost_log_factor(const Chart& ch, int axis, double s) {
    std::vector<double> x = ch.ambient(axis);
    std::vector<double> f(ch.size());
    for (std::size_t p = 0; p < ch.size(); ++p)
        f[p] = -std::log(std::cosh(s) - std::sinh(s) * x[p]);
    return f;
}

double masked_sup(const std::vector<double>& v, const std::vector<std::uint8_t>& m) {
    double sup = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (m[i]) sup = std::max(sup, std::abs(v[i]));
    return sup;
}
}  // namespace

TEST_CASE("round metric: constructors and validation") {
    Chart ch(3, 12, 1.0);
    MetricField g = build_round_sphere(ch);
    CHECK(min_metric_eigenvalue(ch, g) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_NOTHROW(validate_metric(ch, g));

    // a perturbation large enough to lose positivity must be rejected
    Sym2Field h(ch.dim(), ch.size());
    for (std::size_t p = 0; p < ch.size(); ++p) h.at(p)[sym_index(3, 0, 0)] = 1.0;
    MetricField bad = build_perturbed_metric(ch, h, -1.5);
    CHECK_THROWS_AS(validate_metric(ch, bad), std::domain_error);
    CHECK_THROWS_AS(curvature_pack(ch, bad), std::domain_error);
}

TEST_CASE("round curvature is reproduced to roundoff") {
    for (auto [n, N, lam] : {std::tuple<int, int, double>{3, 12, 1.0},
                             std::tuple<int, int, double>{4, 10, 0.5},
                             std::tuple<int, int, double>{5, 8, 2.0}}) {
        Chart ch(n, N, lam);
        MetricField g = build_round_sphere(ch);
        CurvaturePack pack = curvature_pack(ch, g);
        const double r_want = n * (n - 1) * lam;
        const double s_want = (n - 2) * lam / 2.0;
        for (std::size_t p = 0; p < ch.size(); p += 3) {
            REQUIRE(std::abs(pack.scalar[p] - r_want) < 1e-8);
            const double* sp = pack.schouten.data() + p * static_cast<std::size_t>(sym_size(n));
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) {
                    const double want = (i == j) ? s_want : 0.0;
                    REQUIRE(std::abs(sp[sym_index(n, i, j)] - want) < 1e-8);
                }
        }
    }
}

TEST_CASE("round Riemann components in the frame") {
    Chart ch(3, 12, 2.0);
    const double lam = 2.0;
    MetricField g = build_round_sphere(ch);
    CurvaturePack pack = curvature_pack(ch, g, PackDetail::kFull);
    const int n = ch.dim();
    for (std::size_t p = 0; p < ch.size(); p += 5) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                // R_ijij = lambda (g_ii g_jj - g_ij^2) = lambda in the frame
                REQUIRE(std::abs(riemann_component(pack, p, i, j, i, j) - lam) < 1e-7);
                REQUIRE(std::abs(riemann_component(pack, p, i, j, j, i) + lam) < 1e-7);
            }
        REQUIRE(std::abs(riemann_component(pack, p, 0, 1, 2, 0)) < 1e-8);
    }
}

TEST_CASE("schouten trace consistency is definitional") {
    Chart ch(3, 16, 1.0);
    std::vector<double> f = boost_log_factor(ch, 0, 0.25);
    MetricField g = conformal_exp_metric(ch, f);
    CurvaturePack pack = curvature_pack(ch, g);
    const int n = ch.dim();
    double worst = 0.0;
    for (std::size_t p = 0; p < ch.size(); ++p) {
        double ginv_full[kMaxDim * kMaxDim], s_full[kMaxDim * kMaxDim];
        sym_to_full(pack.ginv.data() + p * static_cast<std::size_t>(sym_size(n)), n, ginv_full);
        sym_to_full(pack.schouten.data() + p * static_cast<std::size_t>(sym_size(n)), n, s_full);
        double tr = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) tr += ginv_full[i * n + j] * s_full[j * n + i];
        const double want = (n - 2) / (2.0 * (n - 1.0)) * pack.scalar[p];
        worst = std::max(worst, std::abs(tr - want));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("pullback metric: scalar curvature converges at fourth order on the collar") {
    // the metric is isometric to the round sphere; R should approach
    // n(n-1)*lambda = 6 with observed order >= 3.5 on the pole collar
    const double s = 0.25;
    double err16 = 0.0, err32 = 0.0;
    for (int N : {16, 32}) {
        Chart ch(3, N, 1.0);
        std::vector<double> f = boost_log_factor(ch, 0, s);
        CurvaturePack pack = curvature_pack(ch, conformal_exp_metric(ch, f));
        std::vector<double> dev(ch.size());
        for (std::size_t p = 0; p < ch.size(); ++p) dev[p] = pack.scalar[p] - 6.0;
        const double e = masked_sup(dev, ch.collar_mask(0.2));
        (N == 16 ? err16 : err32) = e;
    }
    const double order = std::log(err16 / err32) / std::log(2.0);
    CHECK(order >= 3.5);
    CHECK(err32 < 1e-3);
}

TEST_CASE("first Bianchi identity on a non-round metric") {
    Chart ch(3, 32, 1.0);
    std::vector<double> f = boost_log_factor(ch, 0, 0.25);
    CurvaturePack pack = curvature_pack(ch, conformal_exp_metric(ch, f), PackDetail::kFull);
    auto mask = ch.collar_mask(0.2);
    const int n = ch.dim();
    double sup_r = 0.0, sup_b = 0.0;
    for (std::size_t p = 0; p < ch.size(); ++p) {
        if (!mask[p]) continue;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        const double r = riemann_component(pack, p, i, j, k, l);
                        sup_r = std::max(sup_r, std::abs(r));
                        const double b = r + riemann_component(pack, p, j, k, i, l) +
                                         riemann_component(pack, p, k, i, j, l);
                        sup_b = std::max(sup_b, std::abs(b));
                    }
    }
    REQUIRE(sup_r > 0.0);
    CHECK(sup_b / sup_r < 1e-6);
}

TEST_CASE("frame trace and pairing helpers") {
    Chart ch(3, 8, 1.0);
    MetricField g = build_round_sphere(ch);
    ScalarField tr = round_trace(ch, g);
    for (std::size_t p = 0; p < ch.size(); p += 11)
        REQUIRE(tr[p] == doctest::Approx(3.0).epsilon(1e-15));
    ScalarField pair = round_pairing(ch, g, g);
    for (std::size_t p = 0; p < ch.size(); p += 11)
        REQUIRE(pair[p] == doctest::Approx(3.0).epsilon(1e-15));

    // conformal metric: trace is 3(1+t*u), pairing with itself 3(1+t*u)^2
    std::vector<double> u = ch.ambient(3);
    MetricField gc = build_conformal_metric(ch, u, 0.1);
    ScalarField trc = round_trace(ch, gc);
    for (std::size_t p = 0; p < ch.size(); p += 7)
        REQUIRE(trc[p] == doctest::Approx(3.0 * (1.0 + 0.1 * u[p])).epsilon(1e-13));
}
