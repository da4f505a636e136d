#include "cvlab/grid.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cvlab/parallel.hpp"

namespace cvlab {
namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Stencil weights w with sum_i w_i f(x_i) ~ f^(m)(0): Vandermonde solve on
// rows x^r / r!. Small dense system, partial pivoting.
void fd_weights(const double* x, int k, int m, double* w) {
    assert(k <= 8 && m >= 1 && m < k);
    double a[8][9];
    double fact = 1.0;
    for (int r = 0; r < k; ++r) {
        if (r > 0) fact *= r;
        for (int i = 0; i < k; ++i)
            a[r][i] = std::pow(x[i], r) / fact;
        a[r][k] = (r == m) ? 1.0 : 0.0;
    }
    for (int col = 0; col < k; ++col) {
        int piv = col;
        for (int r = col + 1; r < k; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (piv != col)
            for (int c = col; c <= k; ++c) std::swap(a[col][c], a[piv][c]);
        assert(std::abs(a[col][col]) > 1e-14);
        for (int r = 0; r < k; ++r) {
            if (r == col) continue;
            double f = a[r][col] / a[col][col];
            if (f == 0.0) continue;
            for (int c = col; c <= k; ++c) a[r][c] -= f * a[col][c];
        }
    }
    for (int i = 0; i < k; ++i) w[i] = a[i][k] / a[i][i];
}

AxisGrid make_polar_axis(int N, int sin_power) {
    AxisGrid ax;
    ax.count = N;
    ax.spacing = kPi / N;
    ax.periodic = false;
    ax.theta.resize(static_cast<std::size_t>(N));
    ax.sin_theta.resize(static_cast<std::size_t>(N));
    ax.cot.resize(static_cast<std::size_t>(N));
    ax.csc2.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        double th = (i + 0.5) * ax.spacing;
        ax.theta[static_cast<std::size_t>(i)] = th;
        double s = std::sin(th);
        ax.sin_theta[static_cast<std::size_t>(i)] = s;
        ax.cot[static_cast<std::size_t>(i)] = std::cos(th) / s;
        ax.csc2[static_cast<std::size_t>(i)] = 1.0 / (s * s);
    }
    ax.weight.assign(static_cast<std::size_t>(N), ax.spacing);
    if (sin_power % 2 == 1) {
        // Odd sine power in the volume density: use weights that integrate
        // sin((2r+1)theta) exactly and kill even harmonics.
        for (int i = 0; i < N; ++i) {
            double w = 0.0;
            for (int r = 0; r < N / 2; ++r)
                w += std::sin((2 * r + 1) * ax.theta[static_cast<std::size_t>(i)]) / (2 * r + 1);
            ax.weight[static_cast<std::size_t>(i)] = 4.0 * w / N;
        }
    }
    // Differentiation rows: central five-point in the interior, shifted
    // stencils (width 5 for d1, 6 for d2) in the two cells nearest each end.
    ax.cols.resize(static_cast<std::size_t>(N));
    ax.d1w.resize(static_cast<std::size_t>(N));
    ax.d2w.resize(static_cast<std::size_t>(N));
    double x[AxisGrid::kTaps];
    double w[AxisGrid::kTaps];
    for (int i = 0; i < N; ++i) {
        auto& cols = ax.cols[static_cast<std::size_t>(i)];
        auto& d1 = ax.d1w[static_cast<std::size_t>(i)];
        auto& d2 = ax.d2w[static_cast<std::size_t>(i)];
        d1.fill(0.0);
        d2.fill(0.0);
        const bool interior = (i >= 2 && i <= N - 3);
        // the row's column window is the wider (d2) one; d1's window is a
        // sub-range of it, so its weights are placed by column alignment
        auto window = [&](int width) {
            if (interior) return i - 2;
            int lo = i - width / 2;
            if (lo < 0) lo = 0;
            if (lo > N - width) lo = N - width;
            return lo;
        };
        const int width2 = interior ? 5 : 6;
        const int lo2 = window(width2);
        cols.fill(i);  // pad unused slots harmlessly
        for (int t = 0; t < width2; ++t) cols[static_cast<std::size_t>(t)] = lo2 + t;
        for (int t = 0; t < width2; ++t) x[t] = (lo2 + t - i) * ax.spacing;
        fd_weights(x, width2, 2, w);
        for (int t = 0; t < width2; ++t) d2[static_cast<std::size_t>(t)] = w[t];
        const int width1 = 5;
        const int lo1 = window(width1);
        assert(lo1 >= lo2 && lo1 + width1 <= lo2 + width2);
        for (int t = 0; t < width1; ++t) x[t] = (lo1 + t - i) * ax.spacing;
        fd_weights(x, width1, 1, w);
        for (int t = 0; t < width1; ++t) d1[static_cast<std::size_t>(lo1 - lo2 + t)] = w[t];
    }
    return ax;
}

AxisGrid make_periodic_axis(int N) {
    AxisGrid ax;
    ax.count = N;
    ax.spacing = 2.0 * kPi / N;
    ax.periodic = true;
    ax.theta.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i)
        ax.theta[static_cast<std::size_t>(i)] = (i + 0.5) * ax.spacing;
    ax.weight.assign(static_cast<std::size_t>(N), ax.spacing);
    ax.cols.resize(static_cast<std::size_t>(N));
    ax.d1w.resize(static_cast<std::size_t>(N));
    ax.d2w.resize(static_cast<std::size_t>(N));
    double x[5];
    double w1[5];
    double w2[5];
    for (int t = 0; t < 5; ++t) x[t] = (t - 2) * ax.spacing;
    fd_weights(x, 5, 1, w1);
    fd_weights(x, 5, 2, w2);
    for (int i = 0; i < N; ++i) {
        auto& cols = ax.cols[static_cast<std::size_t>(i)];
        cols.fill(i);
        ax.d1w[static_cast<std::size_t>(i)].fill(0.0);
        ax.d2w[static_cast<std::size_t>(i)].fill(0.0);
        for (int t = 0; t < 5; ++t) {
            cols[static_cast<std::size_t>(t)] = (i + t - 2 + N) % N;
            ax.d1w[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] = w1[t];
            ax.d2w[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] = w2[t];
        }
    }
    return ax;
}

}  // namespace

Chart::Chart(int n, int N, double lambda) : n_(n), N_(N), lambda_(lambda) {
    if (n < 3 || n > 5)
        throw std::invalid_argument("chart dimension must be 3, 4, or 5, got " + std::to_string(n));
    if (N < 8 || N % 2 != 0)
        throw std::invalid_argument("grid resolution must be even and at least 8, got " +
                                    std::to_string(N));
    if (!(lambda > 0.0))
        throw std::invalid_argument("lambda must be positive");
    r_ = 1.0 / std::sqrt(lambda);

    size_ = 1;
    for (int a = 0; a < n_; ++a) size_ *= static_cast<std::size_t>(N_);

    axes_.reserve(static_cast<std::size_t>(n_));
    for (int a = 0; a < n_; ++a) {
        if (a < n_ - 1)
            axes_.push_back(make_polar_axis(N_, n_ - 1 - a));
        else
            axes_.push_back(make_periodic_axis(N_));
    }
    strides_.assign(static_cast<std::size_t>(n_), 1);
    for (int a = n_ - 2; a >= 0; --a)
        strides_[static_cast<std::size_t>(a)] =
            strides_[static_cast<std::size_t>(a + 1)] * static_cast<std::size_t>(N_);

    jacobian_.resize(size_);
    qweight_.resize(size_);
    parallel_for_chunks(size_, [&](std::size_t b, std::size_t e, std::size_t) {
        int rows[8];
        for (std::size_t p = b; p < e; ++p) {
            coords(p, rows);
            // c_i = r * prod_{j<i} sin(theta_j); jacobian = prod_i c_i
            double jac = 1.0;
            double c = r_;
            double qw = 1.0;
            for (int a = 0; a < n_; ++a) {
                jac *= c;
                if (a < n_ - 1)
                    c *= std::sin(axes_[static_cast<std::size_t>(a)]
                                      .theta[static_cast<std::size_t>(rows[a])]);
                qw *= axes_[static_cast<std::size_t>(a)]
                          .weight[static_cast<std::size_t>(rows[a])];
            }
            jacobian_[p] = jac;
            qweight_[p] = qw;
        }
    });
}

double Chart::integrate(const std::vector<double>& f) const {
    assert(f.size() == size_);
    return parallel_reduce(size_, [&](std::size_t b, std::size_t e) {
        KahanSum s;
        for (std::size_t p = b; p < e; ++p) s.add(f[p] * jacobian_[p] * qweight_[p]);
        return s.result();
    });
}

double Chart::integrate(const std::vector<double>& f, const std::vector<double>& density) const {
    assert(f.size() == size_ && density.size() == size_);
    return parallel_reduce(size_, [&](std::size_t b, std::size_t e) {
        KahanSum s;
        for (std::size_t p = b; p < e; ++p) s.add(f[p] * density[p] * qweight_[p]);
        return s.result();
    });
}

std::vector<double> Chart::ambient(int m) const {
    if (m < 0 || m > n_)
        throw std::invalid_argument("ambient coordinate index out of range");
    std::vector<double> out(size_);
    parallel_for_chunks(size_, [&](std::size_t b, std::size_t e, std::size_t) {
        int rows[8];
        for (std::size_t p = b; p < e; ++p) {
            coords(p, rows);
            double s = r_;
            double val = 0.0;
            bool found = false;
            for (int i = 0; i < n_; ++i) {
                double th = axes_[static_cast<std::size_t>(i)]
                                .theta[static_cast<std::size_t>(rows[i])];
                if (n_ - i == m) {
                    val = s * std::cos(th);
                    found = true;
                    break;
                }
                s *= std::sin(th);
            }
            out[p] = found ? val : s;  // m == 0 keeps the full sine product
        }
    });
    return out;
}

std::vector<std::uint8_t> Chart::collar_mask(double margin) const {
    std::vector<std::uint8_t> mask(size_, 1);
    parallel_for_chunks(size_, [&](std::size_t b, std::size_t e, std::size_t) {
        int rows[8];
        for (std::size_t p = b; p < e; ++p) {
            coords(p, rows);
            for (int a = 0; a < n_ - 1; ++a) {
                double th = axes_[static_cast<std::size_t>(a)]
                                .theta[static_cast<std::size_t>(rows[a])];
                if (th < margin || th > kPi - margin) {
                    mask[p] = 0;
                    break;
                }
            }
        }
    });
    return mask;
}

void Chart::apply_d(int axis, int order, const std::vector<double>& f,
                    std::vector<double>& out) const {
    assert(axis >= 0 && axis < n_);
    assert(order == 1 || order == 2);
    assert(f.size() == size_ && out.size() == size_);
    assert(&f != &out);
    const AxisGrid& ax = axes_[static_cast<std::size_t>(axis)];
    const std::size_t str = strides_[static_cast<std::size_t>(axis)];
    const auto& wt = (order == 1) ? ax.d1w : ax.d2w;
    parallel_for_chunks(size_, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t p = b; p < e; ++p) {
            int row = static_cast<int>((p / str) % static_cast<std::size_t>(N_));
            const auto& cols = ax.cols[static_cast<std::size_t>(row)];
            const auto& w = wt[static_cast<std::size_t>(row)];
            double acc = 0.0;
            for (int t = 0; t < AxisGrid::kTaps; ++t) {
                std::ptrdiff_t off = static_cast<std::ptrdiff_t>(cols[static_cast<std::size_t>(t)] - row) *
                                     static_cast<std::ptrdiff_t>(str);
                acc += w[static_cast<std::size_t>(t)] * f[static_cast<std::size_t>(
                                                            static_cast<std::ptrdiff_t>(p) + off)];
            }
            out[p] = acc;
        }
    });
}

std::vector<double> Chart::d(const std::vector<double>& f, int axis, int order) const {
    std::vector<double> out(size_);
    apply_d(axis, order, f, out);
    return out;
}

}  // namespace cvlab
