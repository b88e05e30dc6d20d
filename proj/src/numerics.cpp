#include "pulses/numerics.hpp"

#include <algorithm>
#include <cstdlib>
#include <numbers>
#include <thread>

namespace pulses {

void solve_dense(std::vector<double>& a, std::vector<double>& b, int m) {
    for (int col = 0; col < m; ++col) {
        int piv = col;
        for (int r = col + 1; r < m; ++r)
            if (std::abs(a[r * m + col]) > std::abs(a[piv * m + col])) piv = r;
        if (std::abs(a[piv * m + col]) < 1e-300) throw error("solve_dense: singular matrix");
        if (piv != col) {
            for (int c = 0; c < m; ++c) std::swap(a[piv * m + c], a[col * m + c]);
            std::swap(b[piv], b[col]);
        }
        const double inv = 1.0 / a[col * m + col];
        for (int r = col + 1; r < m; ++r) {
            const double f = a[r * m + col] * inv;
            if (f == 0.0) continue;
            for (int c = col; c < m; ++c) a[r * m + c] -= f * a[col * m + c];
            b[r] -= f * b[col];
        }
    }
    for (int r = m - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < m; ++c) s -= a[r * m + c] * b[c];
        b[r] = s / a[r * m + r];
    }
}

std::vector<double> polyfit(std::span<const double> u, std::span<const double> y, int deg) {
    require(u.size() == y.size() && static_cast<int>(u.size()) > deg, "polyfit: bad sizes");
    const int m = deg + 1;
    std::vector<double> ata(static_cast<std::size_t>(m) * m, 0.0), atb(m, 0.0);
    std::vector<double> pw(m);
    for (std::size_t i = 0; i < u.size(); ++i) {
        pw[0] = 1.0;
        for (int j = 1; j < m; ++j) pw[j] = pw[j - 1] * u[i];
        for (int r = 0; r < m; ++r) {
            atb[r] += pw[r] * y[i];
            for (int c = 0; c < m; ++c) ata[r * m + c] += pw[r] * pw[c];
        }
    }
    solve_dense(ata, atb, m);
    return atb;
}

double fit_slope(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size() && x.size() >= 2, "fit_slope: bad sizes");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double num = 0, den = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    require(den > 0, "fit_slope: degenerate abscissae");
    return num / den;
}

void rk4_step(const OdeField& f, double s, double h, std::span<double> state, std::span<double> work) {
    const std::size_t n = state.size();
    require(work.size() >= 5 * n, "rk4_step: work buffer too small");
    auto k1 = work.subspan(0, n), k2 = work.subspan(n, n), k3 = work.subspan(2 * n, n),
         k4 = work.subspan(3 * n, n), tmp = work.subspan(4 * n, n);
    f(s, state, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = state[i] + 0.5 * h * k1[i];
    f(s + 0.5 * h, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = state[i] + 0.5 * h * k2[i];
    f(s + 0.5 * h, tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = state[i] + h * k3[i];
    f(s + h, tmp, k4);
    for (std::size_t i = 0; i < n; ++i)
        state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft(std::span<cplx> data, int sign) {
    const std::size_t n = data.size();
    require(is_pow2(n), "fft: size must be a power of two");
    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const cplx a = data[i + j];
                const cplx b = data[i + j + len / 2] * w;
                data[i + j] = a + b;
                data[i + j + len / 2] = a - b;
                w *= wlen;
            }
        }
    }
}

namespace {
double interp_cubic_impl(std::span<const double> v, double x0, double h, double x, bool deriv) {
    const int n = static_cast<int>(v.size());
    require(n >= 2 && h > 0, "interp_cubic: bad grid");
    const double u = (x - x0) / h;
    if (n < 4) {  // fall back to linear
        int i = std::clamp(static_cast<int>(std::floor(u)), 0, n - 2);
        const double f = u - i;
        return deriv ? (v[i + 1] - v[i]) / h : (1.0 - f) * v[i] + f * v[i + 1];
    }
    int i = std::clamp(static_cast<int>(std::floor(u)), 0, n - 2);
    const int js = lagrange4_start(i, n);
    const double loc = u - js;
    const auto w = deriv ? lagrange4_weights_deriv(loc) : lagrange4_weights(loc);
    double r = 0.0;
    for (int a = 0; a < 4; ++a) r += w[a] * v[js + a];
    return deriv ? r / h : r;
}
}  // namespace

double interp_cubic(std::span<const double> values, double x0, double h, double x) {
    return interp_cubic_impl(values, x0, h, x, false);
}

double interp_cubic_deriv(std::span<const double> values, double x0, double h, double x) {
    return interp_cubic_impl(values, x0, h, x, true);
}

double simpson(std::span<const double> v, double h) {
    const std::size_t n = v.size();
    require(n >= 3 && n % 2 == 1, "simpson: need odd number of samples");
    double s = v[0] + v[n - 1];
    for (std::size_t i = 1; i < n - 1; ++i) s += v[i] * (i % 2 == 1 ? 4.0 : 2.0);
    return s * h / 3.0;
}

double trapezoid(std::span<const double> v, double h) {
    if (v.size() < 2) return 0.0;
    double s = 0.5 * (v.front() + v.back());
    for (std::size_t i = 1; i + 1 < v.size(); ++i) s += v[i];
    return s * h;
}

int thread_count() {
    if (const char* env = std::getenv("PULSES_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& body) {
    const int nt = std::min<std::int64_t>(thread_count(), count);
    if (nt <= 1) {
        for (std::int64_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    const std::int64_t chunk = (count + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        const std::int64_t lo = t * chunk, hi = std::min<std::int64_t>(count, lo + chunk);
        pool.emplace_back([&body, lo, hi] {
            for (std::int64_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace pulses
