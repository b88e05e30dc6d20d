#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pulses/numerics.hpp"

using namespace pulses;

TEST_CASE("fft matches a naive DFT") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t n = 64;
    std::vector<cplx> x(n), ref(n);
    for (auto& c : x) c = {u(rng), u(rng)};
    for (std::size_t k = 0; k < n; ++k) {
        cplx acc{0.0, 0.0};
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(j * k) / n;
            acc += x[j] * cplx{std::cos(ang), std::sin(ang)};
        }
        ref[k] = acc;
    }
    std::vector<cplx> y = x;
    fft(y, -1);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(y[k] - ref[k]) < 1e-10);
    fft(y, +1);
    for (std::size_t k = 0; k < n; ++k)
        CHECK(std::abs(y[k] / static_cast<double>(n) - x[k]) < 1e-12);
}

TEST_CASE("cubic interpolation reproduces cubics exactly in the interior") {
    auto f = [](double x) { return 2.0 + x - 0.5 * x * x + 0.25 * x * x * x; };
    std::vector<double> v(21);
    for (int i = 0; i < 21; ++i) v[i] = f(0.1 * i);
    for (double x : {0.31, 0.77, 1.13, 1.62}) {
        CHECK(interp_cubic(v, 0.0, 0.1, x) == doctest::Approx(f(x)).epsilon(1e-12));
        const double df = 1.0 - x + 0.75 * x * x;
        CHECK(interp_cubic_deriv(v, 0.0, 0.1, x) == doctest::Approx(df).epsilon(1e-10));
    }
}

TEST_CASE("polyfit recovers polynomial coefficients") {
    std::vector<double> u(25), y(25);
    for (int i = 0; i < 25; ++i) {
        u[i] = -1.0 + 2.0 * i / 24.0;
        y[i] = 0.5 - 1.5 * u[i] + 2.0 * std::pow(u[i], 3);
    }
    const auto c = polyfit(u, y, 4);
    CHECK(c[0] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(c[1] == doctest::Approx(-1.5).epsilon(1e-10));
    CHECK(std::abs(c[2]) < 1e-10);
    CHECK(c[3] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(std::abs(c[4]) < 1e-10);
}

TEST_CASE("rk4 integrates the harmonic oscillator to fourth order") {
    OdeField f = [](double, std::span<const double> y, std::span<double> d) {
        d[0] = y[1];
        d[1] = -y[0];
    };
    auto run = [&](int steps) {
        std::vector<double> y{1.0, 0.0}, work(10);
        const double h = 2.0 * std::numbers::pi / steps;
        for (int i = 0; i < steps; ++i) rk4_step(f, i * h, h, y, work);
        return std::abs(y[0] - 1.0) + std::abs(y[1]);
    };
    const double e1 = run(64), e2 = run(128);
    CHECK(e1 / e2 > 12.0);  // ~16 for a fourth-order method
}

TEST_CASE("smoothstep cutoffs have the declared plateaus") {
    CHECK(band_cutoff(0.05, 0.1) == 0.0);
    CHECK(band_cutoff(0.1, 0.1) == 0.0);
    CHECK(band_cutoff(0.2, 0.1) == 1.0);
    CHECK(band_cutoff(-0.3, 0.1) == 1.0);
    CHECK(distance_cutoff(0.05, 0.1) == 0.0);
    CHECK(distance_cutoff(0.25, 0.1) == 1.0);
    CHECK(distance_cutoff(0.15, 0.1) > 0.0);
    CHECK(distance_cutoff(0.15, 0.1) < 1.0);
}

TEST_CASE("simpson and trapezoid quadrature") {
    std::vector<double> v(201);
    for (int i = 0; i <= 200; ++i) v[i] = std::sin(std::numbers::pi * i / 200.0);
    CHECK(simpson(v, std::numbers::pi / 200.0) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(trapezoid(v, std::numbers::pi / 200.0) == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("fit_slope recovers a power law") {
    std::vector<double> lx, ly;
    for (double e : {1e-1, 1e-2, 1e-3}) {
        lx.push_back(std::log(e));
        ly.push_back(std::log(3.0 * std::pow(e, 1.5)));
    }
    CHECK(fit_slope(lx, ly) == doctest::Approx(1.5).epsilon(1e-12));
}
