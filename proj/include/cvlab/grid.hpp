#pragma once
// Discrete chart on the round n-sphere of radius 1/sqrt(lambda), n in {3,4,5}.
//
// One hyperspherical block: angles theta_1..theta_{n-1} are polar on (0, pi),
// the last angle is periodic on (0, 2*pi). Nodes sit at half-cell offsets on
// every axis, so no node touches a coordinate pole. Differentiation uses
// fourth-order stencils (central in the interior, shifted one-sided in the two
// cells nearest each polar boundary, wrapped on the periodic axis).
//
// Quadrature is the product rule that integrates the separated trigonometric
// basis sharply: uniform weights on the periodic axis and on polar axes whose
// Jacobian sine power is even, and designed odd-sine weights (exact on odd
// sine harmonics, annihilating even ones) where the sine power is odd.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace cvlab {

struct AxisGrid {
    static constexpr int kTaps = 6;  // tap slots per stencil row (unused slots have weight 0)

    int count = 0;        // nodes along this axis
    double spacing = 0.0; // cell width
    bool periodic = false;

    std::vector<double> theta;      // node coordinates
    std::vector<double> weight;     // 1-d quadrature weights
    std::vector<double> sin_theta;  // sin(theta), polar axes only
    std::vector<double> cot;        // cot(theta), polar axes only
    std::vector<double> csc2;       // 1/sin^2(theta), polar axes only

    // Per-row stencils with absolute column indices.
    std::vector<std::array<int, kTaps>> cols;
    std::vector<std::array<double, kTaps>> d1w;
    std::vector<std::array<double, kTaps>> d2w;
};

class Chart {
  public:
    // Throws std::invalid_argument for unsupported n, odd or too-small N,
    // or non-positive lambda.
    Chart(int n, int N, double lambda);

    int dim() const { return n_; }
    int res() const { return N_; }
    double lambda() const { return lambda_; }
    double radius() const { return r_; }
    std::size_t size() const { return size_; }

    const AxisGrid& axis(int a) const { return axes_[static_cast<std::size_t>(a)]; }
    std::size_t stride(int a) const { return strides_[static_cast<std::size_t>(a)]; }

    // Decodes flat node index into per-axis rows (out must hold dim() ints).
    void coords(std::size_t p, int* out) const {
        for (int a = n_ - 1; a >= 0; --a) {
            out[a] = static_cast<int>(p % static_cast<std::size_t>(N_));
            p /= static_cast<std::size_t>(N_);
        }
    }

    // sqrt(det) of the round metric at each node (product of prefactors c_i).
    const std::vector<double>& jacobian() const { return jacobian_; }
    // product of 1-d quadrature weights at each node
    const std::vector<double>& quad_weight() const { return qweight_; }

    // integral of f against the round volume density
    double integrate(const std::vector<double>& f) const;
    // integral of f against an explicit density (e.g. sqrt(det g) of another metric)
    double integrate(const std::vector<double>& f, const std::vector<double>& density) const;

    // Ambient coordinate functions x_m, m in [0, n], restricted to the sphere
    // of radius 1/sqrt(lambda). x_n = r*cos(theta_1); x_0 carries the full
    // product of sines.
    std::vector<double> ambient(int m) const;

    // 1 on nodes whose polar angles all lie in [margin, pi - margin]
    std::vector<std::uint8_t> collar_mask(double margin = 0.2) const;

    // Stencil derivative along one axis. order is 1 or 2.
    void apply_d(int axis, int order, const std::vector<double>& f,
                 std::vector<double>& out) const;
    std::vector<double> d(const std::vector<double>& f, int axis, int order = 1) const;

  private:
    int n_;
    int N_;
    double lambda_;
    double r_;
    std::size_t size_;
    std::vector<AxisGrid> axes_;
    std::vector<std::size_t> strides_;
    std::vector<double> jacobian_;
    std::vector<double> qweight_;
};

}  // namespace cvlab
