#include "cvlab/sigma.hpp"

#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "cvlab/parallel.hpp"
#include "cvlab/smallmat.hpp"
#include "cvlab/symcomb.hpp"
#include "node_kernel.hpp"

namespace cvlab {

namespace {

// Newton's identities on stack storage; ps holds tr(E^m) for m = 1..k.
// Same recursion as sigma_from_power_sums, restated allocation-free for the
// per-node hot path.
inline double newton_sigma(const double* ps, int k) {
    double e[kMaxDim + 1];
    e[0] = 1.0;
    for (int j = 1; j <= k; ++j) {
        double acc = 0.0;
        double sign = 1.0;
        for (int m = 1; m <= j; ++m) {
            acc += sign * e[j - m] * ps[m - 1];
            sign = -sign;
        }
        e[j] = acc / j;
    }
    return e[k];
}

// power sums tr(E^m), m = 1..kmax, of the endomorphism E = ginv * s
inline void endo_power_sums(const double* ginv, const double* s, int n, int kmax,
                            double* ps) {
    double e[kMaxDim * kMaxDim];
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int a = 0; a < n; ++a) acc += ginv[i * n + a] * s[a * n + j];
            e[i * n + j] = acc;
        }

    double cur[kMaxDim * kMaxDim];
    double next[kMaxDim * kMaxDim];
    for (int i = 0; i < n * n; ++i) cur[i] = e[i];
    for (int m = 1; m <= kmax; ++m) {
        double tr = 0.0;
        for (int i = 0; i < n; ++i) tr += cur[i * n + i];
        ps[m - 1] = tr;
        if (m == kmax) break;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int a = 0; a < n; ++a) acc += cur[i * n + a] * e[a * n + j];
                next[i * n + j] = acc;
            }
        for (int i = 0; i < n * n; ++i) cur[i] = next[i];
    }
}

void require_pack_shape(const Chart& chart, const CurvaturePack& pack) {
    assert(pack.n == chart.dim());
    assert(pack.nodes == chart.size());
    (void)chart;
    (void)pack;
}

void require_k_range(int k, int n) {
    if (k < 0 || k > n)
        throw std::domain_error("sigma index must lie in 0.." + std::to_string(n) + ", got " +
                                std::to_string(k));
}

// Chunk-deterministic search for the first node failing a predicate: each
// chunk records its own minimum, the caller takes the smallest.
constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

[[noreturn]] void throw_degenerate(const Chart& chart, int l, double value, double threshold,
                                   std::size_t node) {
    int rows[kMaxDim];
    chart.coords(node, rows);
    std::string where;
    for (int a = 0; a < chart.dim(); ++a) {
        if (a) where += ", ";
        where += std::to_string(chart.axis(a).theta[static_cast<std::size_t>(rows[a])]);
    }
    throw std::domain_error("quotient denominator sigma_" + std::to_string(l) +
                            " degenerate: " + std::to_string(value) + " below positive floor " +
                            std::to_string(threshold) + " at node " + std::to_string(node) +
                            " (theta = " + where + ")");
}

}  // namespace

double EinsteinConstants::quotient(int k, int l) const {
    assert(k >= 0 && k <= n && l >= 0 && l <= n);
    return sigma[static_cast<std::size_t>(k)] / sigma[static_cast<std::size_t>(l)];
}

EinsteinConstants einstein_constants(int n, double lambda) {
    if (n < 3) throw std::invalid_argument("einstein_constants: need n >= 3");
    if (!(lambda > 0.0)) throw std::invalid_argument("einstein_constants: need lambda > 0");
    EinsteinConstants out;
    out.n = n;
    out.lambda = lambda;
    out.sigma.resize(static_cast<std::size_t>(n) + 1);
    const double eig = 0.5 * (n - 2) * lambda;
    for (int k = 0; k <= n; ++k)
        out.sigma[static_cast<std::size_t>(k)] =
            std::pow(eig, k) * static_cast<double>(binomial(n, k));
    return out;
}

ScalarField sigma_k_field(const Chart& chart, const CurvaturePack& pack, int k) {
    require_pack_shape(chart, pack);
    const int n = chart.dim();
    require_k_range(k, n);
    ScalarField out(chart.size(), 1.0);
    if (k == 0) return out;

    const int m = sym_size(n);
    parallel_for_chunks(chart.size(), [&](std::size_t b, std::size_t e, std::size_t) {
        double gfull[kMaxDim * kMaxDim];
        double sfull[kMaxDim * kMaxDim];
        double ps[kMaxDim];
        for (std::size_t p = b; p < e; ++p) {
            sym_to_full(pack.ginv.data() + p * static_cast<std::size_t>(m), n, gfull);
            sym_to_full(pack.schouten.data() + p * static_cast<std::size_t>(m), n, sfull);
            endo_power_sums(gfull, sfull, n, k, ps);
            out[p] = newton_sigma(ps, k);
        }
    });
    return out;
}

ScalarField quotient_field(const Chart& chart, const CurvaturePack& pack, int k, int l) {
    require_pack_shape(chart, pack);
    const int n = chart.dim();
    require_k_range(k, n);
    require_k_range(l, n);
    if (l >= k)
        throw std::invalid_argument("quotient_field: need l < k, got k = " + std::to_string(k) +
                                    ", l = " + std::to_string(l));

    const EinsteinConstants ec = einstein_constants(n, chart.lambda());
    const double threshold = 1e-8 * std::abs(ec.sigma[static_cast<std::size_t>(l)]);

    const int m = sym_size(n);
    const std::size_t total = chart.size();
    const std::size_t nchunks = (total + kChunk - 1) / kChunk;
    std::vector<std::size_t> first_bad(nchunks, kNoNode);

    ScalarField out(total, 0.0);
    parallel_for_chunks(total, [&](std::size_t b, std::size_t e, std::size_t chunk) {
        double gfull[kMaxDim * kMaxDim];
        double sfull[kMaxDim * kMaxDim];
        double ps[kMaxDim];
        for (std::size_t p = b; p < e; ++p) {
            sym_to_full(pack.ginv.data() + p * static_cast<std::size_t>(m), n, gfull);
            sym_to_full(pack.schouten.data() + p * static_cast<std::size_t>(m), n, sfull);
            endo_power_sums(gfull, sfull, n, k, ps);
            const double den = newton_sigma(ps, l);  // l < k, sums already available
            if (den < threshold) {
                if (first_bad[chunk] == kNoNode) first_bad[chunk] = p;
                continue;
            }
            out[p] = newton_sigma(ps, k) / den;
        }
    });

    std::size_t bad = kNoNode;
    for (std::size_t c = 0; c < nchunks; ++c) bad = std::min(bad, first_bad[c]);
    if (bad != kNoNode) {
        double gfull[kMaxDim * kMaxDim];
        double sfull[kMaxDim * kMaxDim];
        double ps[kMaxDim];
        sym_to_full(pack.ginv.data() + bad * static_cast<std::size_t>(m), n, gfull);
        sym_to_full(pack.schouten.data() + bad * static_cast<std::size_t>(m), n, sfull);
        endo_power_sums(gfull, sfull, n, k, ps);
        throw_degenerate(chart, l, newton_sigma(ps, l), threshold, bad);
    }
    return out;
}

double total_quotient(const Chart& chart, const CurvaturePack& pack, int p, int q) {
    require_pack_shape(chart, pack);
    require_k_range(p, chart.dim());
    require_k_range(q, chart.dim());
    if (p == q) {
        std::vector<double> ones(chart.size(), 1.0);
        return chart.integrate(ones, pack.sqrt_det);
    }
    ScalarField f = quotient_field(chart, pack, p, q);
    return chart.integrate(f, pack.sqrt_det);
}

double total_quotient_fixed_bg(const Chart& chart, const CurvaturePack& pack, int k, int l) {
    require_pack_shape(chart, pack);
    require_k_range(k, chart.dim());
    require_k_range(l, chart.dim());
    if (k == l) {
        std::vector<double> ones(chart.size(), 1.0);
        return chart.integrate(ones);
    }
    ScalarField f = quotient_field(chart, pack, k, l);
    return chart.integrate(f);
}

double sigma2_identity_residual(const Chart& chart, const CurvaturePack& pack) {
    require_pack_shape(chart, pack);
    const int n = chart.dim();
    require_k_range(2, n);
    ScalarField s2 = sigma_k_field(chart, pack, 2);

    const int m = sym_size(n);
    const std::size_t total = chart.size();
    const std::size_t nchunks = (total + kChunk - 1) / kChunk;
    std::vector<double> chunk_sup(nchunks, 0.0);

    parallel_for_chunks(total, [&](std::size_t b, std::size_t e, std::size_t chunk) {
        double gfull[kMaxDim * kMaxDim];
        double sfull[kMaxDim * kMaxDim];
        double worst = 0.0;
        for (std::size_t p = b; p < e; ++p) {
            sym_to_full(pack.ginv.data() + p * static_cast<std::size_t>(m), n, gfull);
            sym_to_full(pack.schouten.data() + p * static_cast<std::size_t>(m), n, sfull);
            // explicit contractions: tr = g^{ij} S_ij, |S|^2 = g^{ia} g^{jb} S_ab S_ij
            double tr = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) tr += gfull[i * n + j] * sfull[i * n + j];
            double norm2 = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int a = 0; a < n; ++a)
                        for (int bb = 0; bb < n; ++bb)
                            norm2 += gfull[i * n + a] * gfull[j * n + bb] * sfull[a * n + bb] *
                                     sfull[i * n + j];
            worst = std::max(worst, std::abs(s2[p] - 0.5 * (tr * tr - norm2)));
        }
        chunk_sup[chunk] = worst;
    });

    double sup = 0.0;
    for (double v : chunk_sup) sup = std::max(sup, v);
    return sup;
}

QuotientIntegrals sigma_quotient_integrals(const Chart& chart, const MetricField& g, int p,
                                           int q, int k, int l) {
    assert(g.n == chart.dim());
    assert(g.nodes == chart.size());
    const int n = chart.dim();
    require_k_range(p, n);
    require_k_range(q, n);
    require_k_range(k, n);
    require_k_range(l, n);
    if (q > p)
        throw std::invalid_argument("sigma_quotient_integrals: need q <= p");
    if (l > k)
        throw std::invalid_argument("sigma_quotient_integrals: need l <= k");

    const EinsteinConstants ec = einstein_constants(n, chart.lambda());
    const double thr_q = 1e-8 * std::abs(ec.sigma[static_cast<std::size_t>(q)]);
    const double thr_l = 1e-8 * std::abs(ec.sigma[static_cast<std::size_t>(l)]);
    const int kmax = std::max(std::max(p, q), std::max(k, l));

    const std::size_t total = chart.size();
    const std::size_t nchunks = (total + kChunk - 1) / kChunk;
    std::vector<KahanSum> acc_own(nchunks), acc_bg(nchunks), acc_vol(nchunks);
    std::vector<std::size_t> first_bad(nchunks, kNoNode);
    std::vector<int> bad_den(nchunks, 0);  // which denominator tripped, for the message

    const std::vector<double>& qw = chart.quad_weight();
    const std::vector<double>& jac = chart.jacobian();

    parallel_for_chunks(total, [&](std::size_t b, std::size_t e, std::size_t chunk) {
        detail::NodeCurvature nc;
        int rows[kMaxDim];
        double ps[kMaxDim];
        for (std::size_t node = b; node < e; ++node) {
            chart.coords(node, rows);
            detail::curvature_at_node(chart, g.comps.data(), node, rows, nc);
            if (!nc.invertible || !(nc.det_w > 0.0)) {
                if (first_bad[chunk] == kNoNode) {
                    first_bad[chunk] = node;
                    bad_den[chunk] = -1;
                }
                continue;
            }
            if (kmax > 0) endo_power_sums(nc.winv, nc.schouten, n, kmax, ps);

            double ratio_pq = 1.0;
            if (p != q) {
                const double den = newton_sigma(ps, q);
                if (den < thr_q) {
                    if (first_bad[chunk] == kNoNode) {
                        first_bad[chunk] = node;
                        bad_den[chunk] = q;
                    }
                    continue;
                }
                ratio_pq = newton_sigma(ps, p) / den;
            }
            double ratio_kl = 1.0;
            if (k != l) {
                const double den = newton_sigma(ps, l);
                if (den < thr_l) {
                    if (first_bad[chunk] == kNoNode) {
                        first_bad[chunk] = node;
                        bad_den[chunk] = l;
                    }
                    continue;
                }
                ratio_kl = newton_sigma(ps, k) / den;
            }

            const double wq = qw[node];
            const double own_density = jac[node] * std::sqrt(nc.det_w);
            acc_own[chunk].add(ratio_pq * own_density * wq);
            acc_bg[chunk].add(ratio_kl * jac[node] * wq);
            acc_vol[chunk].add(own_density * wq);
        }
    });

    std::size_t bad = kNoNode;
    int which = 0;
    for (std::size_t c = 0; c < nchunks; ++c)
        if (first_bad[c] < bad) {
            bad = first_bad[c];
            which = bad_den[c];
        }
    if (bad != kNoNode) {
        if (which < 0)
            throw std::domain_error("metric not invertible at node " + std::to_string(bad));
        detail::NodeCurvature nc;
        int rows[kMaxDim];
        double ps[kMaxDim];
        chart.coords(bad, rows);
        detail::curvature_at_node(chart, g.comps.data(), bad, rows, nc);
        endo_power_sums(nc.winv, nc.schouten, n, kmax, ps);
        throw_degenerate(chart, which, newton_sigma(ps, which),
                         1e-8 * std::abs(ec.sigma[static_cast<std::size_t>(which)]), bad);
    }

    QuotientIntegrals out;
    KahanSum own, bg, vol;
    for (std::size_t c = 0; c < nchunks; ++c) {
        own.add(acc_own[c].result());
        bg.add(acc_bg[c].result());
        vol.add(acc_vol[c].result());
    }
    out.own_volume_total = own.result();
    out.bg_volume_total = bg.result();
    out.volume = vol.result();
    return out;
}

}  // namespace cvlab
