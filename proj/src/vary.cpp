#include "cvlab/vary.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "cvlab/ops.hpp"
#include "cvlab/sigma.hpp"
#include "cvlab/smallmat.hpp"

namespace cvlab {
namespace {

// One central-difference rule: D = sum_i w[i] * F(ts[i]).
struct Combo {
    std::vector<double> ts;
    std::vector<double> w;
};

Combo stencil_combo(double t, int points, int order) {
    assert(points == 3 || points == 5);
    assert(order == 1 || order == 2);
    assert(t > 0.0);
    Combo c;
    if (points == 5 && order == 1) {
        c.ts = {-2 * t, -t, t, 2 * t};
        c.w = {1 / (12 * t), -8 / (12 * t), 8 / (12 * t), -1 / (12 * t)};
    } else if (points == 5 && order == 2) {
        const double s = 12 * t * t;
        c.ts = {-2 * t, -t, 0.0, t, 2 * t};
        c.w = {-1 / s, 16 / s, -30 / s, 16 / s, -1 / s};
    } else if (points == 3 && order == 1) {
        c.ts = {-t, t};
        c.w = {-1 / (2 * t), 1 / (2 * t)};
    } else {
        c.ts = {-t, 0.0, t};
        c.w = {1 / (t * t), -2 / (t * t), 1 / (t * t)};
    }
    return c;
}

// The main rule, the companion rule used for Richardson combination or for
// the error estimate, and the extrapolation factor 2^(error order).
struct RulePair {
    Combo main;
    Combo side;
    double factor = 16.0;
    bool richardson = true;
};

RulePair rules_for(const PerturbationPath& path, int order) {
    RulePair rp;
    rp.main = stencil_combo(path.t_step, path.stencil, order);
    rp.richardson = path.richardson;
    rp.factor = path.stencil == 5 ? 16.0 : 4.0;
    if (path.richardson)
        rp.side = stencil_combo(path.t_step / 2, path.stencil, order);
    else if (path.stencil == 5)
        rp.side = stencil_combo(path.t_step, 3, order);
    else
        rp.side = stencil_combo(path.t_step / 2, 3, order);
    return rp;
}

void push_ts(const Combo& c, std::vector<double>& ts) {
    ts.insert(ts.end(), c.ts.begin(), c.ts.end());
}

std::vector<double> unique_sorted(std::vector<double> ts) {
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    return ts;
}

// Curvature packs of g_t at every sampled parameter. The parameters are
// exact binary multiples of t_step, so exact lookup is safe.
struct PathPacks {
    std::vector<double> ts;
    std::vector<CurvaturePack> packs;

    const CurvaturePack& at(double t) const {
        for (std::size_t i = 0; i < ts.size(); ++i)
            if (ts[i] == t) return packs[i];
        assert(!"parameter was not sampled");
        return packs.front();
    }
};

PathPacks sample_packs(const PerturbationPath& path, std::vector<double> ts) {
    PathPacks pp;
    pp.ts = std::move(ts);
    pp.packs.reserve(pp.ts.size());
    for (double t : pp.ts) pp.packs.push_back(curvature_pack(*path.chart, path.metric_at(t)));
    return pp;
}

// D = sum w_i * field(t_i) over raw per-node vectors of equal length.
template <class Extract>
std::vector<double> combine(const Combo& c, const PathPacks& pp, Extract ex) {
    const std::vector<double>& first = ex(pp.at(c.ts.front()));
    std::vector<double> out(first.size(), 0.0);
    for (std::size_t i = 0; i < c.ts.size(); ++i) {
        const std::vector<double>& f = ex(pp.at(c.ts[i]));
        assert(f.size() == out.size());
        const double w = c.w[i];
        for (std::size_t p = 0; p < out.size(); ++p) out[p] += w * f[p];
    }
    return out;
}

// Richardson-combine (or keep the main rule) in place; returns the sup-norm
// disagreement between the two rules.
double finish(const RulePair& rp, std::vector<double>& main_v, const std::vector<double>& side_v) {
    assert(main_v.size() == side_v.size());
    double sup = 0.0;
    for (std::size_t p = 0; p < main_v.size(); ++p)
        sup = std::max(sup, std::abs(side_v[p] - main_v[p]));
    if (rp.richardson) {
        const double c = rp.factor;
        for (std::size_t p = 0; p < main_v.size(); ++p)
            main_v[p] = (c * side_v[p] - main_v[p]) / (c - 1.0);
    }
    return sup;
}

double integrate_product(const Chart& ch, const std::vector<double>& a,
                         const std::vector<double>& b) {
    ScalarField prod(ch.size(), 0.0);
    for (std::size_t p = 0; p < ch.size(); ++p) prod[p] = a[p] * b[p];
    return ch.integrate(prod);
}

Sym2Field wrap_sym2(const Chart& ch, std::vector<double> comps) {
    Sym2Field f(ch.dim(), ch.size());
    assert(comps.size() == f.comps.size());
    f.comps = std::move(comps);
    return f;
}

void require_quotient_pair(int n, int k, int l, const char* who) {
    if (l >= k) throw std::invalid_argument(std::string(who) + ": requires l < k");
    if (l < 1 || k > n) throw std::domain_error(std::string(who) + ": requires 1 <= l < k <= n");
}

// Collar sup of |lhs - rhs| with the argmax samples recorded.
void collar_deviation(const Chart& ch, const std::vector<double>& lhs,
                      const std::vector<double>& rhs, DeviationReport& rep) {
    const std::vector<std::uint8_t> mask = ch.collar_mask();
    double dev = 0.0;
    std::size_t arg = 0;
    for (std::size_t p = 0; p < ch.size(); ++p) {
        if (!mask[p]) continue;
        const double d = std::abs(lhs[p] - rhs[p]);
        if (d > dev) {
            dev = d;
            arg = p;
        }
    }
    rep.deviation = dev;
    rep.lhs_sample = lhs[arg];
    rep.rhs_sample = rhs[arg];
}

}  // namespace

// ---------------------------------------------------------------------------
// paths and generic finite differences

PerturbationPath::PerturbationPath(const Chart& ch, Sym2Field direction)
    : chart(&ch), h(std::move(direction)) {
    if (h.n != ch.dim() || h.nodes != ch.size())
        throw std::invalid_argument("PerturbationPath: direction does not match the chart");
}

MetricField PerturbationPath::metric_at(double t) const {
    assert(chart);
    return build_perturbed_metric(*chart, h, t);
}

void PerturbationPath::validate_amplitude() const {
    assert(chart);
    assert(stencil == 3 || stencil == 5);
    assert(t_step > 0.0);
    const double reach = (stencil == 5 ? 2.0 : 1.0) * t_step;
    for (double s : {reach, -reach}) {
        const double eig = min_metric_eigenvalue(*chart, metric_at(s));
        if (!(eig > 0.0))
            throw std::domain_error("PerturbationPath: metric at t = " + std::to_string(s) +
                                    " is not positive definite (min eigenvalue " +
                                    std::to_string(eig) + "); reduce the amplitude or t_step");
    }
}

FdResult fd_functional_derivative(const PerturbationPath& path,
                                  const std::function<double(const MetricField&)>& f,
                                  int order) {
    assert(order == 1 || order == 2);
    assert(f);
    path.validate_amplitude();
    const RulePair rp = rules_for(path, order);
    std::vector<double> ts;
    push_ts(rp.main, ts);
    push_ts(rp.side, ts);
    ts = unique_sorted(std::move(ts));

    std::vector<double> vals(ts.size(), 0.0);
    for (std::size_t i = 0; i < ts.size(); ++i) vals[i] = f(path.metric_at(ts[i]));
    auto apply = [&](const Combo& c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < c.ts.size(); ++i) {
            const auto it = std::lower_bound(ts.begin(), ts.end(), c.ts[i]);
            assert(it != ts.end() && *it == c.ts[i]);
            acc += c.w[i] * vals[static_cast<std::size_t>(it - ts.begin())];
        }
        return acc;
    };

    const double d_main = apply(rp.main);
    const double d_side = apply(rp.side);
    FdResult r;
    r.value = rp.richardson ? (rp.factor * d_side - d_main) / (rp.factor - 1.0) : d_main;
    r.error_estimate = std::abs(d_side - d_main);
    return r;
}

namespace {

// Shared body for the two field-variation entry points.
std::vector<double> fd_raw_variation(const PerturbationPath& path,
                                     const std::function<std::vector<double>(const MetricField&)>& map,
                                     int order, double* self_error) {
    assert(order == 1 || order == 2);
    assert(map);
    path.validate_amplitude();
    const RulePair rp = rules_for(path, order);
    std::vector<double> ts;
    push_ts(rp.main, ts);
    push_ts(rp.side, ts);
    ts = unique_sorted(std::move(ts));

    std::vector<std::vector<double>> fields(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        fields[i] = map(path.metric_at(ts[i]));
        if (fields[i].size() != fields[0].size())
            throw std::invalid_argument("fd field variation: map output size changed along the path");
    }
    auto apply = [&](const Combo& c) {
        std::vector<double> out(fields[0].size(), 0.0);
        for (std::size_t i = 0; i < c.ts.size(); ++i) {
            const auto it = std::lower_bound(ts.begin(), ts.end(), c.ts[i]);
            assert(it != ts.end() && *it == c.ts[i]);
            const std::vector<double>& f = fields[static_cast<std::size_t>(it - ts.begin())];
            for (std::size_t p = 0; p < out.size(); ++p) out[p] += c.w[i] * f[p];
        }
        return out;
    };

    std::vector<double> d_main = apply(rp.main);
    const std::vector<double> d_side = apply(rp.side);
    const double self = finish(rp, d_main, d_side);
    if (self_error) *self_error = self;
    return d_main;
}

}  // namespace

ScalarField fd_scalar_variation(const PerturbationPath& path,
                                const std::function<ScalarField(const MetricField&)>& map,
                                int order, double* self_error) {
    return fd_raw_variation(
        path, [&](const MetricField& g) { return map(g); }, order, self_error);
}

Sym2Field fd_sym2_variation(const PerturbationPath& path,
                            const std::function<Sym2Field(const MetricField&)>& map,
                            int order, double* self_error) {
    std::vector<double> comps = fd_raw_variation(
        path, [&](const MetricField& g) { return map(g).comps; }, order, self_error);
    return wrap_sym2(*path.chart, std::move(comps));
}

// ---------------------------------------------------------------------------
// variation pack and analytic formulas

VariationPack variation_pack(const PerturbationPath& path) {
    path.validate_amplitude();
    const Chart& ch = *path.chart;
    const RulePair r1 = rules_for(path, 1);
    const RulePair r2 = rules_for(path, 2);
    std::vector<double> ts;
    push_ts(r1.main, ts);
    push_ts(r1.side, ts);
    push_ts(r2.main, ts);
    push_ts(r2.side, ts);
    const PathPacks pp = sample_packs(path, unique_sorted(std::move(ts)));

    auto ex_schouten = [](const CurvaturePack& p) -> const std::vector<double>& {
        return p.schouten;
    };
    auto ex_scalar = [](const CurvaturePack& p) -> const std::vector<double>& {
        return p.scalar;
    };

    VariationPack vp;
    std::vector<double> sp = combine(r1.main, pp, ex_schouten);
    vp.self_s_prime = finish(r1, sp, combine(r1.side, pp, ex_schouten));
    vp.s_prime = wrap_sym2(ch, std::move(sp));

    std::vector<double> ss = combine(r2.main, pp, ex_schouten);
    vp.self_s_second = finish(r2, ss, combine(r2.side, pp, ex_schouten));
    vp.s_second = wrap_sym2(ch, std::move(ss));

    std::vector<double> rp = combine(r1.main, pp, ex_scalar);
    vp.self_r_prime = finish(r1, rp, combine(r1.side, pp, ex_scalar));
    vp.r_prime = std::move(rp);

    vp.trace = bg_trace_sym2(ch, path.h);
    vp.h_ring = bg_tracefree_sym2(ch, path.h);
    vp.mean_trace = ch.integrate(vp.trace) / ch.integrate(field_constant(ch, 1.0));
    vp.fd_self_error = std::max({vp.self_s_prime, vp.self_s_second, vp.self_r_prime});
    return vp;
}

ScalarField r_prime_analytic(const Chart& chart, const Sym2Field& h) {
    if (h.n != chart.dim() || h.nodes != chart.size())
        throw std::invalid_argument("r_prime_analytic: direction does not match the chart");
    const ScalarField tau = bg_trace_sym2(chart, h);
    const ScalarField lap = bg_laplace(chart, tau);
    const ScalarField dd = bg_double_divergence(chart, h);
    const double c = (chart.dim() - 1) * chart.lambda();
    ScalarField out(chart.size(), 0.0);
    for (std::size_t p = 0; p < chart.size(); ++p) out[p] = -lap[p] + dd[p] - c * tau[p];
    return out;
}

double mean_trace(const Chart& chart, const Sym2Field& h) {
    const ScalarField tau = bg_trace_sym2(chart, h);
    return chart.integrate(tau) / chart.integrate(field_constant(chart, 1.0));
}

// ---------------------------------------------------------------------------
// first-variation checks

DeviationReport r_prime_check(const PerturbationPath& path) {
    path.validate_amplitude();
    const Chart& ch = *path.chart;
    const int n = ch.dim();
    const double lambda = ch.lambda();

    const RulePair rp = rules_for(path, 1);
    std::vector<double> ts;
    push_ts(rp.main, ts);
    push_ts(rp.side, ts);
    const PathPacks pp = sample_packs(path, unique_sorted(std::move(ts)));
    auto ex_scalar = [](const CurvaturePack& p) -> const std::vector<double>& {
        return p.scalar;
    };
    std::vector<double> fd = combine(rp.main, pp, ex_scalar);
    const double self = finish(rp, fd, combine(rp.side, pp, ex_scalar));

    const ScalarField an = r_prime_analytic(ch, path.h);
    DeviationReport rep;
    rep.name = "scalar-first-variation";
    collar_deviation(ch, fd, an, rep);
    rep.fd_self_error = self;
    rep.scale = std::max(sup_abs_masked(an, ch.collar_mask()),
                         n * (n - 1) * lambda * sup_abs(path.h.comps));
    rep.rel_deviation = rep.deviation / rep.scale;
    return rep;
}

DeviationReport r_prime_integral_check(const PerturbationPath& path) {
    path.validate_amplitude();
    const Chart& ch = *path.chart;
    const double c = (ch.dim() - 1) * ch.lambda();

    const RulePair rp = rules_for(path, 1);
    std::vector<double> ts;
    push_ts(rp.main, ts);
    push_ts(rp.side, ts);
    const PathPacks pp = sample_packs(path, unique_sorted(std::move(ts)));
    auto ex_scalar = [](const CurvaturePack& p) -> const std::vector<double>& {
        return p.scalar;
    };
    std::vector<double> fd_main = combine(rp.main, pp, ex_scalar);
    const std::vector<double> fd_side = combine(rp.side, pp, ex_scalar);
    const double int_side = ch.integrate(fd_side);
    finish(rp, fd_main, fd_side);
    const double lhs = ch.integrate(fd_main);

    const ScalarField tau = bg_trace_sym2(ch, path.h);
    const double rhs = -c * ch.integrate(tau);
    ScalarField abs_tau = tau;
    for (double& v : abs_tau) v = std::abs(v);
    const double floor = c * ch.integrate(abs_tau);

    DeviationReport rep;
    rep.name = "scalar-first-variation-integral";
    rep.deviation = std::abs(lhs - rhs);
    rep.lhs_sample = lhs;
    rep.rhs_sample = rhs;
    rep.scale = std::max(std::abs(rhs), floor);
    rep.rel_deviation = rep.deviation / rep.scale;
    rep.fd_self_error = std::abs(int_side - lhs);
    return rep;
}

namespace {

// Shared body: node-wise first variation of a curvature quantity against
// coeff * r_prime_analytic on the collar.
DeviationReport proportional_first_variation(const PerturbationPath& path,
                                             const std::function<ScalarField(const Chart&, const CurvaturePack&)>& field,
                                             double coeff, const std::string& name) {
    path.validate_amplitude();
    const Chart& ch = *path.chart;
    const int n = ch.dim();
    const double lambda = ch.lambda();

    const RulePair rp = rules_for(path, 1);
    std::vector<double> ts;
    push_ts(rp.main, ts);
    push_ts(rp.side, ts);
    const PathPacks pp = sample_packs(path, unique_sorted(std::move(ts)));

    std::vector<ScalarField> sampled(pp.ts.size());
    for (std::size_t i = 0; i < pp.ts.size(); ++i) sampled[i] = field(ch, pp.packs[i]);
    auto apply = [&](const Combo& c) {
        std::vector<double> out(ch.size(), 0.0);
        for (std::size_t i = 0; i < c.ts.size(); ++i) {
            const auto it = std::lower_bound(pp.ts.begin(), pp.ts.end(), c.ts[i]);
            assert(it != pp.ts.end() && *it == c.ts[i]);
            const ScalarField& f = sampled[static_cast<std::size_t>(it - pp.ts.begin())];
            for (std::size_t p = 0; p < out.size(); ++p) out[p] += c.w[i] * f[p];
        }
        return out;
    };
    std::vector<double> fd = apply(rp.main);
    const double self = finish(rp, fd, apply(rp.side));

    const ScalarField rpa = r_prime_analytic(ch, path.h);
    ScalarField an(ch.size(), 0.0);
    for (std::size_t p = 0; p < ch.size(); ++p) an[p] = coeff * rpa[p];

    DeviationReport rep;
    rep.name = name;
    collar_deviation(ch, fd, an, rep);
    rep.fd_self_error = self;
    rep.scale = std::abs(coeff) * std::max(sup_abs_masked(rpa, ch.collar_mask()),
                                           n * (n - 1) * lambda * sup_abs(path.h.comps));
    rep.rel_deviation = rep.deviation / rep.scale;
    return rep;
}

}  // namespace

DeviationReport sigma_k_prime_check(const PerturbationPath& path, int k) {
    const Chart& ch = *path.chart;
    const int n = ch.dim();
    if (k < 1 || k > n)
        throw std::domain_error("sigma_k_prime_check: requires 1 <= k <= n");
    const double lambda = ch.lambda();
    const EinsteinConstants ec = einstein_constants(n, lambda);
    const double coeff = k * ec.sigma[static_cast<std::size_t>(k)] / (n * (n - 1) * lambda);
    return proportional_first_variation(
        path,
        [k](const Chart& c, const CurvaturePack& p) { return sigma_k_field(c, p, k); },
        coeff, "sigma-" + std::to_string(k) + "-first-variation");
}

DeviationReport quotient_prime_check(const PerturbationPath& path, int k, int l) {
    const Chart& ch = *path.chart;
    const int n = ch.dim();
    require_quotient_pair(n, k, l, "quotient_prime_check");
    const double lambda = ch.lambda();
    const EinsteinConstants ec = einstein_constants(n, lambda);
    const double coeff = (k - l) * ec.quotient(k, l) / (n * (n - 1) * lambda);
    return proportional_first_variation(
        path,
        [k, l](const Chart& c, const CurvaturePack& p) { return quotient_field(c, p, k, l); },
        coeff,
        "quotient-" + std::to_string(k) + "-" + std::to_string(l) + "-first-variation");
}

// ---------------------------------------------------------------------------
// second-variation check

DeviationReport quotient_second_variation_check(const PerturbationPath& path, int k, int l) {
    path.validate_amplitude();
    const Chart& ch = *path.chart;
    const int n = ch.dim();
    require_quotient_pair(n, k, l, "quotient_second_variation_check");
    const double lambda = ch.lambda();
    const EinsteinConstants ec = einstein_constants(n, lambda);
    const double akl = ec.quotient(k, l);

    const RulePair r1 = rules_for(path, 1);
    const RulePair r2 = rules_for(path, 2);
    std::vector<double> ts;
    push_ts(r1.main, ts);
    push_ts(r1.side, ts);
    push_ts(r2.main, ts);
    push_ts(r2.side, ts);
    const PathPacks pp = sample_packs(path, unique_sorted(std::move(ts)));

    // quotient fields once per parameter
    std::vector<ScalarField> quot(pp.ts.size());
    for (std::size_t i = 0; i < pp.ts.size(); ++i)
        quot[i] = quotient_field(ch, pp.packs[i], k, l);
    auto apply_quot = [&](const Combo& c) {
        std::vector<double> out(ch.size(), 0.0);
        for (std::size_t i = 0; i < c.ts.size(); ++i) {
            const auto it = std::lower_bound(pp.ts.begin(), pp.ts.end(), c.ts[i]);
            assert(it != pp.ts.end() && *it == c.ts[i]);
            const ScalarField& f = quot[static_cast<std::size_t>(it - pp.ts.begin())];
            for (std::size_t p = 0; p < out.size(); ++p) out[p] += c.w[i] * f[p];
        }
        return out;
    };
    std::vector<double> lhs = apply_quot(r2.main);
    const double self_lhs = finish(r2, lhs, apply_quot(r2.side));

    auto ex_schouten = [](const CurvaturePack& p) -> const std::vector<double>& {
        return p.schouten;
    };
    auto ex_scalar = [](const CurvaturePack& p) -> const std::vector<double>& {
        return p.scalar;
    };

    // bracket coefficients at the round background
    const double pref = 2.0 * akl * (k - l) / (n * (n - 2) * lambda);
    const double b2 = -2.0 * (k + l - 1) / ((n - 1) * (n - 2) * lambda);
    const double b3 = -2.0 * (n - k - l) / (n - 1.0);
    const double b4 =
        (n - 2) * (n * (k - l) - (n - 2 * l)) / (2.0 * n * (n - 1) * (n - 1) * (n - 1) * lambda);
    const double b5 = (n - 2) * (2 * n - k - l - 1) / (2.0 * (n - 1)) * lambda;

    auto bracket_field = [&](const RulePair& o1, const RulePair& o2, bool side) {
        const Combo& c1 = side ? o1.side : o1.main;
        const Combo& c2 = side ? o2.side : o2.main;
        const Sym2Field sp = wrap_sym2(ch, combine(c1, pp, ex_schouten));
        const Sym2Field ss = wrap_sym2(ch, combine(c2, pp, ex_schouten));
        const std::vector<double> rp = combine(c1, pp, ex_scalar);
        const ScalarField tr_ss = bg_trace_sym2(ch, ss);
        const ScalarField sp_sq = bg_dot_sym2(ch, sp, sp);
        const ScalarField h_sp = bg_dot_sym2(ch, path.h, sp);
        const ScalarField h_sq = bg_dot_sym2(ch, path.h, path.h);
        std::vector<double> out(ch.size(), 0.0);
        for (std::size_t p = 0; p < ch.size(); ++p)
            out[p] = pref * (tr_ss[p] + b2 * sp_sq[p] + b3 * h_sp[p] + b4 * rp[p] * rp[p] +
                             b5 * h_sq[p]);
        return out;
    };
    std::vector<double> rhs_main = bracket_field(r1, r2, false);
    const std::vector<double> rhs_side = bracket_field(r1, r2, true);
    const double self_rhs = finish(r2, rhs_main, rhs_side);

    DeviationReport rep;
    rep.name = "quotient-" + std::to_string(k) + "-" + std::to_string(l) + "-second-variation";
    collar_deviation(ch, lhs, rhs_main, rep);
    rep.fd_self_error = std::max(self_lhs, self_rhs);
    const double supc = sup_abs(path.h.comps);
    const double floor = 0.01 * (k - l) * (k - l + 1) * akl * (n * supc) * (n * supc);
    rep.scale = std::max(sup_abs_masked(rhs_main, ch.collar_mask()), floor);
    rep.rel_deviation = rep.deviation / rep.scale;
    return rep;
}

// ---------------------------------------------------------------------------
// integral identities

IntegrationIdentityReport integration_identity_check(const PerturbationPath& path) {
    path.validate_amplitude();
    const Chart& ch = *path.chart;
    const int n = ch.dim();
    const double lam = ch.lambda();

    const RulePair r1 = rules_for(path, 1);
    const RulePair r2 = rules_for(path, 2);
    std::vector<double> ts;
    push_ts(r1.main, ts);
    push_ts(r1.side, ts);
    push_ts(r2.main, ts);
    push_ts(r2.side, ts);
    const PathPacks pp = sample_packs(path, unique_sorted(std::move(ts)));

    auto ex_schouten = [](const CurvaturePack& p) -> const std::vector<double>& {
        return p.schouten;
    };
    auto ex_scalar = [](const CurvaturePack& p) -> const std::vector<double>& {
        return p.scalar;
    };

    // left sides at both rules, for per-identity stencil disagreement
    auto lhs_at = [&](bool side) {
        const Combo& c1 = side ? r1.side : r1.main;
        const Combo& c2 = side ? r2.side : r2.main;
        const Sym2Field sp = wrap_sym2(ch, combine(c1, pp, ex_schouten));
        const Sym2Field ss = wrap_sym2(ch, combine(c2, pp, ex_schouten));
        const std::vector<double> rp = combine(c1, pp, ex_scalar);
        std::array<double, 4> out{};
        out[0] = ch.integrate(bg_trace_sym2(ch, ss));
        out[1] = ch.integrate(bg_dot_sym2(ch, sp, sp));
        out[2] = ch.integrate(bg_dot_sym2(ch, path.h, sp));
        out[3] = integrate_product(ch, rp, rp);
        return out;
    };
    std::array<double, 4> lhs_main = lhs_at(false);
    const std::array<double, 4> lhs_side = lhs_at(true);
    std::array<double, 4> lhs{};
    std::array<double, 4> self{};
    for (int i = 0; i < 4; ++i) {
        self[i] = std::abs(lhs_side[i] - lhs_main[i]);
        lhs[i] = r1.richardson
                     ? (r1.factor * lhs_side[i] - lhs_main[i]) / (r1.factor - 1.0)
                     : lhs_main[i];
    }

    // right-side ingredients
    const ScalarField tau = bg_trace_sym2(ch, path.h);
    const Sym2Field hr = bg_tracefree_sym2(ch, path.h);
    const CurvaturePack round_full =
        curvature_pack(ch, build_round_sphere(ch), PackDetail::kFull);
    const Sym2Field eh = einstein_operator(ch, round_full, hr);
    const double ie = ch.integrate(bg_dot_sym2(ch, hr, eh));   // h_ring . image
    const double ib = ch.integrate(bg_dot_sym2(ch, hr, hr));   // |h_ring|^2
    const double iq = ch.integrate(bg_dot_sym2(ch, eh, eh));   // |image|^2
    const double ig = ch.integrate(bg_grad_norm_sq(ch, tau));  // |grad trace|^2
    const ScalarField lap_tau = bg_laplace(ch, tau);
    const double id = integrate_product(ch, lap_tau, lap_tau);
    const double it = integrate_product(ch, tau, tau);

    const double nn = n;
    struct Terms {
        const char* name;
        std::vector<double> parts;
        double floor_pow;  // 1: linear in the background scale, 2: quadratic
    };
    std::array<Terms, 4> terms = {
        Terms{"trace-second-variation",
              {-(3 * nn - 2) / (4 * (nn - 1)) * ie, (nn - 2) / 2 * lam * ib,
               -(nn - 2) * (nn - 2) / (4 * nn * nn) * ig},
              1.0},
        Terms{"first-variation-norm",
              {0.25 * iq, -(nn - 2) / 2 * lam * ie,
               (nn - 2) * (nn - 2) / 4 * lam * lam * ib,
               (nn - 2) * (nn - 2) / (4 * nn * nn) * id,
               -(nn - 1) * (nn - 2) * (nn - 2) / (4 * nn * nn) * lam * ig},
              2.0},
        Terms{"direction-contraction",
              {-0.5 * ie, (nn - 2) / 2 * lam * ib, (nn - 2) / (2 * nn * nn) * ig},
              1.0},
        Terms{"scalar-first-variation-square",
              {(nn - 1) * (nn - 1) / (nn * nn) * id,
               -2 * (nn - 1) * (nn - 1) / nn * lam * ig,
               (nn - 1) * (nn - 1) * lam * lam * it},
              2.0},
    };

    IntegrationIdentityReport rep;
    rep.items.resize(4);
    for (int i = 0; i < 4; ++i) {
        IdentityResult& item = rep.items[static_cast<std::size_t>(i)];
        item.name = terms[static_cast<std::size_t>(i)].name;
        item.lhs = lhs[static_cast<std::size_t>(i)];
        double rhs = 0.0;
        double largest = 0.0;
        for (double part : terms[static_cast<std::size_t>(i)].parts) {
            rhs += part;
            largest = std::max(largest, std::abs(part));
        }
        item.rhs = rhs;
        const double lam_pow =
            terms[static_cast<std::size_t>(i)].floor_pow == 1.0 ? lam : lam * lam;
        const double floor = 0.01 * lam_pow * (it + ib);
        item.scale = std::max({std::abs(rhs), largest, floor});
        item.rel_deviation = std::abs(item.lhs - rhs) / item.scale;
        item.fd_self_error = self[static_cast<std::size_t>(i)];
        rep.fd_self_error = std::max(rep.fd_self_error, self[static_cast<std::size_t>(i)]);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// direction library

Sym2Field conformal_direction(const Chart& chart, const ScalarField& u) {
    if (u.size() != chart.size())
        throw std::invalid_argument("conformal_direction: profile does not match the chart");
    const int n = chart.dim();
    Sym2Field h(n, chart.size());
    for (std::size_t p = 0; p < chart.size(); ++p) {
        double* hp = h.at(p);
        for (int i = 0; i < n; ++i) hp[sym_index(n, i, i)] = u[p];
    }
    return h;
}

std::vector<Direction> direction_library(const Chart& chart, std::uint64_t seed,
                                         int random_count) {
    assert(random_count >= 0);
    const int n = chart.dim();
    std::vector<Direction> out;

    Direction d;
    d.name = "scaling";
    d.kind = DirectionKind::kScaling;
    d.h = build_round_sphere(chart);
    out.push_back(std::move(d));

    for (int index : {n + 1, 1}) {
        Direction e;
        e.name = "trace-linear-x" + std::to_string(index);
        e.kind = DirectionKind::kTraceLinear;
        e.h = conformal_direction(chart, harmonic_generator(chart, 1, index));
        out.push_back(std::move(e));
    }
    for (int index : {n + 1, 1}) {
        Direction e;
        e.name = "trace-quad-x" + std::to_string(index);
        e.kind = DirectionKind::kTraceQuadratic;
        e.h = conformal_direction(chart, harmonic_generator(chart, 2, index));
        out.push_back(std::move(e));
    }
    for (int i = 0; i < random_count; ++i) {
        ScalarField u = random_band_limited(chart, seed + static_cast<std::uint64_t>(i));
        const double sup = sup_abs(u);
        assert(sup > 0.0);
        for (double& v : u) v *= 0.05 / sup;
        Direction e;
        e.name = "random-" + std::to_string(i);
        e.kind = DirectionKind::kTraceRandom;
        e.h = conformal_direction(chart, u);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace cvlab
