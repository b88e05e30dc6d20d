// Shared numerical kernels: small dense solves, RK4 stepping, radix-2 FFT,
// uniform-grid cubic interpolation, smoothstep cutoffs, least-squares fits.
#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pulses {

struct error : std::runtime_error {
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a scenario assumption monitor fails (CLI exit code 2).
struct assumption_error : error {
    using error::error;
};

// Thrown when an iterative solve fails to converge (CLI exit code 3).
struct nonconvergence_error : error {
    using error::error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw error(what);
}

// ---------------------------------------------------------------------------
// Small dense linear algebra (dimensions stay tiny: n+1 <= 4, fit degree <= 9)
// ---------------------------------------------------------------------------

// Solves A x = b in place by Gaussian elimination with partial pivoting.
// A is row-major m x m.
void solve_dense(std::vector<double>& a, std::vector<double>& b, int m);

// Least-squares fit of data (u_i, y_i) by a polynomial of degree `deg`.
// Returns coefficients c[0..deg] with y ~ sum_j c[j] u^j.
std::vector<double> polyfit(std::span<const double> u, std::span<const double> y, int deg);

// Linear regression slope of y against x (used for log-log rate fits).
double fit_slope(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// ODE stepping
// ---------------------------------------------------------------------------

using OdeField = std::function<void(double s, std::span<const double> state, std::span<double> deriv)>;

// One classical RK4 step of size h; state is updated in place.
void rk4_step(const OdeField& f, double s, double h, std::span<double> state, std::span<double> work);

// ---------------------------------------------------------------------------
// FFT (radix-2, complex, in-place); sizes are powers of two by construction
// ---------------------------------------------------------------------------

using cplx = std::complex<double>;

bool is_pow2(std::size_t n);

// sign = -1: forward transform X_k = sum_j x_j exp(-2 pi i j k / n)
// sign = +1: inverse transform without the 1/n factor.
void fft(std::span<cplx> data, int sign);

// ---------------------------------------------------------------------------
// Interpolation on uniform grids
// ---------------------------------------------------------------------------

// Four-point Lagrange weights for nodes {0,1,2,3} at coordinate v in [0,3];
// exact on cubic polynomials.
inline std::array<double, 4> lagrange4_weights(double v) {
    const double a = v - 1.0, b = v - 2.0, c = v - 3.0;
    return {-a * b * c / 6.0, v * b * c / 2.0, -v * a * c / 2.0, v * a * b / 6.0};
}

inline std::array<double, 4> lagrange4_weights_deriv(double v) {
    const double a = v - 1.0, b = v - 2.0, c = v - 3.0;
    return {-(a * b + a * c + b * c) / 6.0, (v * b + v * c + b * c) / 2.0,
            -(v * a + v * c + a * c) / 2.0, (v * a + v * b + a * b) / 6.0};
}

// Stencil start for a 4-point stencil around cell i on a grid of n nodes.
inline int lagrange4_start(int i, int n) {
    int js = i - 1;
    if (js < 0) js = 0;
    if (js > n - 4) js = n - 4;
    return js;
}

// Cubic interpolation of tabulated values on a uniform grid x0 + i*h,
// one-sided (clamped stencil) at the ends.
double interp_cubic(std::span<const double> values, double x0, double h, double x);
double interp_cubic_deriv(std::span<const double> values, double x0, double h, double x);

// ---------------------------------------------------------------------------
// Cutoffs
// ---------------------------------------------------------------------------

// Quintic smoothstep: 0 for u <= 0, 1 for u >= 1, C^2 transition in between.
inline double smoothstep(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

// Low-frequency spectral cutoff: 0 on |k| <= omega, 1 on |k| >= 2*omega.
inline double band_cutoff(double k, double omega) {
    return smoothstep((std::abs(k) - omega) / omega);
}

// Spatial truncation cutoff: 0 at distance <= c1*mu, 1 at distance >= c2*mu.
inline double distance_cutoff(double dist, double mu, double c1 = 1.0, double c2 = 2.0) {
    return smoothstep((dist - c1 * mu) / ((c2 - c1) * mu));
}

// ---------------------------------------------------------------------------
// Quadrature helpers
// ---------------------------------------------------------------------------

// Composite Simpson over 2*m uniform intervals of width h (values.size() == 2m+1).
double simpson(std::span<const double> values, double h);

// Trapezoid rule over a uniform grid.
double trapezoid(std::span<const double> values, double h);

// ---------------------------------------------------------------------------
// Misc
// ---------------------------------------------------------------------------

// Central finite-difference step scaled to the coordinate magnitude.
inline double fd_step(double coord, double base = 1e-5) {
    return base * (1.0 + std::abs(coord));
}

int thread_count();  // honors PULSES_THREADS, defaults to hardware concurrency

// Deterministic static-chunk parallel map over [0, count). With one thread this
// is a plain loop; reductions over per-chunk partials stay bit-reproducible.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& body);

}  // namespace pulses
