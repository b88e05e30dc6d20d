#include "pulses/flattening.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "pulses/ray_tracing.hpp"

namespace pulses {

bool Box::contains(std::span<const double> x, double pad) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (x[i] < lo[i] - pad || x[i] > hi[i] + pad) return false;
    return true;
}

double ObstacleBoundary::curvature_rate(std::span<const double> x_tan) const {
    const int m = n - 1;
    const auto g = grad(x_tan);
    const auto h = hess(x_tan);
    double quad = 0.0, g2 = 0.0;
    for (int i = 0; i < m; ++i) {
        g2 += g[i] * g[i];
        for (int j = 0; j < m; ++j) quad += g[i] * h[i * m + j] * g[j];
    }
    return 2.0 * quad / (1.0 + g2);
}

void ObstacleBoundary::validate(const Box& region, unsigned seed, int samples) const {
    std::mt19937_64 rng(seed);
    const int m = n - 1;
    std::vector<double> xt(m);
    for (int s = 0; s < samples; ++s) {
        for (int i = 0; i < m; ++i) {
            std::uniform_real_distribution<double> u(region.lo[i + 1], region.hi[i + 1]);
            xt[i] = u(rng);
        }
        const auto h = hess(xt);
        if (m == 1) {
            require(h[0] >= -1e-12, "ObstacleBoundary: Hessian not PSD at a sample");
            require(h[0] <= hessian_bound + 1e-12,
                    "ObstacleBoundary: Hessian exceeds the declared bound");
        } else {
            // PSD and bound via Rayleigh quotients on random directions
            std::normal_distribution<double> gauss;
            for (int trial = 0; trial < 16; ++trial) {
                std::vector<double> v(m);
                double vn = 0.0;
                for (auto& c : v) { c = gauss(rng); vn += c * c; }
                double q = 0.0;
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < m; ++j) q += v[i] * h[i * m + j] * v[j];
                q /= vn;
                require(q >= -1e-12, "ObstacleBoundary: Hessian not PSD at a sample");
                require(q <= hessian_bound + 1e-12,
                        "ObstacleBoundary: Hessian exceeds the declared bound");
            }
        }
    }
}

ObstacleBoundary ObstacleBoundary::flat(int n) {
    ObstacleBoundary b;
    b.n = n;
    b.id = "flat";
    b.hessian_bound = 0.0;
    const int m = n - 1;
    b.height = [](std::span<const double>) { return 0.0; };
    b.grad = [m](std::span<const double>) { return std::vector<double>(m, 0.0); };
    b.hess = [m](std::span<const double>) {
        return std::vector<double>(static_cast<std::size_t>(m) * m, 0.0);
    };
    return b;
}

ObstacleBoundary ObstacleBoundary::parabola() {
    ObstacleBoundary b;
    b.n = 2;
    b.id = "parabola";
    b.hessian_bound = 2.0;
    b.height = [](std::span<const double> x) { return x[0] * x[0]; };
    b.grad = [](std::span<const double> x) { return std::vector<double>{2.0 * x[0]}; };
    b.hess = [](std::span<const double>) { return std::vector<double>{2.0}; };
    return b;
}

ObstacleBoundary ObstacleBoundary::quartic() {
    ObstacleBoundary b;
    b.n = 2;
    b.id = "quartic";
    b.hessian_bound = 12.0;  // on |x2| <= 1
    b.height = [](std::span<const double> x) { return std::pow(x[0], 4); };
    b.grad = [](std::span<const double> x) {
        return std::vector<double>{4.0 * std::pow(x[0], 3)};
    };
    b.hess = [](std::span<const double> x) {
        return std::vector<double>{12.0 * x[0] * x[0]};
    };
    return b;
}

ObstacleBoundary ObstacleBoundary::ellipse_vertex() {
    ObstacleBoundary b;
    b.n = 2;
    b.id = "ellipse";
    b.hessian_bound = 5.0;  // valid on |x2| <= 0.83
    b.height = [](std::span<const double> x) { return 1.0 - std::sqrt(1.0 - x[0] * x[0]); };
    b.grad = [](std::span<const double> x) {
        return std::vector<double>{x[0] / std::sqrt(1.0 - x[0] * x[0])};
    };
    b.hess = [](std::span<const double> x) {
        return std::vector<double>{std::pow(1.0 - x[0] * x[0], -1.5)};
    };
    return b;
}

ObstacleBoundary ObstacleBoundary::make(const std::string& id, int n) {
    if (id == "flat") return flat(n);
    if (id == "parabola") return parabola();
    if (id == "quartic") return quartic();
    if (id == "ellipse") return ellipse_vertex();
    throw error("ObstacleBoundary: unknown id '" + id + "'");
}

FlatteningMap::FlatteningMap(ObstacleBoundary boundary, Box region, Provenance prov, double step)
    : boundary_(std::move(boundary)), region_(std::move(region)), prov_(prov), step_(step) {}

// ----- closed form for the model parabola (F = x2^2) -----------------------

namespace {

// solves z * exp(2*(x1 + z^2)) = x2 (strictly monotone in z)
double parabola_label(double x1, double x2) {
    if (x2 == 0.0) return 0.0;
    auto h = [&](double z) { return z * std::exp(2.0 * (x1 + z * z)) - x2; };
    double lo = 0.0, hi = x2 > 0 ? 1.0 : -1.0;
    while (h(hi) * x2 < 0.0) hi *= 2.0;  // expand until bracketed
    if (x2 < 0) std::swap(lo, hi);
    for (int k = 0; k < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++k) {
        const double mid = 0.5 * (lo + hi);
        if (h(mid) <= 0.0) lo = mid;
        else hi = mid;
    }
    double z = 0.5 * (lo + hi);
    for (int k = 0; k < 4; ++k) {  // Newton polish
        const double e = std::exp(2.0 * (x1 + z * z));
        z -= (z * e - x2) / (e * (1.0 + 4.0 * z * z));
    }
    return z;
}

// solves r - z^2 + z^2 exp(4 r) = y1 (strictly increasing in r)
double parabola_depth(double y1, double z) {
    double r = y1 / (1.0 + 4.0 * z * z);
    for (int k = 0; k < 100; ++k) {
        const double e = std::exp(4.0 * r);
        const double f = r - z * z + z * z * e - y1;
        const double df = 1.0 + 4.0 * z * z * e;
        const double dr = f / df;
        r -= dr;
        if (std::abs(dr) < 1e-15 * (1.0 + std::abs(r))) break;
    }
    return r;
}

}  // namespace

FlatteningJet FlatteningMap::jet_closed_form(std::span<const double> x) const {
    const double z = parabola_label(x[0], x[1]);
    const double s = x[0] + z * z;
    const double d = 1.0 + 4.0 * z * z;
    FlatteningJet out;
    out.g = {z};
    out.g_x1 = {-2.0 * z / d};
    out.g_tan = {std::exp(-2.0 * s) / d};
    return out;
}

std::vector<double> FlatteningMap::from_flat_closed_form(std::span<const double> y) const {
    const double z = y[1];
    const double r = parabola_depth(y[0], z);
    return {r - z * z, z * std::exp(2.0 * r)};
}

// ----- ODE backend for general convex boundaries ----------------------------

FlatteningJet FlatteningMap::jet_ode(std::span<const double> x) const {
    const int m = boundary_.n - 1;
    // state: (X', M) with dX'/dr = -grad F(X'), dM/dr = -Hess F(X') M
    std::vector<double> st(m + m * m);
    std::copy(x.begin() + 1, x.end(), st.begin());
    for (int i = 0; i < m; ++i) st[m + i * m + i] = 1.0;

    OdeField field = [&](double, std::span<const double> y, std::span<double> d) {
        std::span<const double> xt(y.data(), m);
        const auto g = boundary_.grad(xt);
        const auto h = boundary_.hess(xt);
        for (int i = 0; i < m; ++i) d[i] = -g[i];
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                double acc = 0.0;
                for (int k = 0; k < m; ++k) acc += h[i * m + k] * y[m + k * m + j];
                d[m + i * m + j] = -acc;
            }
    };
    std::vector<double> work(5 * st.size());
    auto clearance = [&](double r, std::span<const double> y) {
        std::span<const double> xt(y.data(), m);
        return x[0] - r + boundary_.height(xt);
    };

    double r = 0.0;
    // the clearance decreases along increasing r; points slightly inside the
    // obstacle (negative clearance, from finite-difference stencils) are
    // reached by marching backward
    const double dir = clearance(0.0, st) >= 0.0 ? 1.0 : -1.0;
    while (dir * clearance(r, st) > 0.0) {
        std::vector<double> prev = st;
        const double rp = r;
        rk4_step(field, r, dir * step_, st, work);
        r += dir * step_;
        if (dir * clearance(r, st) > 0.0 && dir > 0.0) {
            std::vector<double> xfull(boundary_.n);
            xfull[0] = x[0] - r;
            std::copy(st.begin(), st.begin() + m, xfull.begin() + 1);
            if (!region_.contains(xfull, 1e-6))
                throw error(
                    "solve_flattening: characteristic left the region (region too small)");
        }
        if (dir * clearance(r, st) <= 0.0) {
            // bisect from the last same-side state
            double a = rp, b = r;
            std::vector<double> sta = prev;
            while (std::abs(b - a) > 1e-14 * (1.0 + std::abs(b))) {
                const double mid = 0.5 * (a + b);
                std::vector<double> stm = sta;
                rk4_step(field, a, mid - a, stm, work);
                if (dir * clearance(mid, stm) > 0.0) {
                    a = mid;
                    sta = stm;
                } else {
                    b = mid;
                }
            }
            st = sta;
            r = a;
            break;
        }
    }

    std::span<const double> foot(st.data(), m);
    const auto gF = boundary_.grad(foot);
    double w = 1.0;
    for (int i = 0; i < m; ++i) w += gF[i] * gF[i];
    FlatteningJet out;
    out.g.assign(st.begin(), st.begin() + m);
    out.g_x1.resize(m);
    for (int i = 0; i < m; ++i) out.g_x1[i] = -gF[i] / w;
    // dG/dx' = (I - gF gF^T / w) M
    out.g_tan.assign(static_cast<std::size_t>(m) * m, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double acc = st[m + i * m + j];
            double corr = 0.0;
            for (int k = 0; k < m; ++k) corr += gF[k] * st[m + k * m + j];
            acc -= gF[i] * corr / w;
            out.g_tan[i * m + j] = acc;
        }
    return out;
}

std::vector<double> FlatteningMap::from_flat_ode(std::span<const double> y) const {
    const int m = boundary_.n - 1;
    std::vector<double> xt(y.begin() + 1, y.end());
    const double f0 = boundary_.height(xt);
    // forward characteristic from the boundary foot (-F(y'), y')
    OdeField field = [&](double, std::span<const double> yy, std::span<double> d) {
        const auto g = boundary_.grad(yy);
        std::copy(g.begin(), g.end(), d.begin());
    };
    std::vector<double> work(5 * m);
    auto height_coord = [&](double r, std::span<const double> yy) {
        return r - f0 + boundary_.height(yy);  // y1 along the curve
    };
    double r = 0.0;
    const double target = y[0];
    // negative targets continue the characteristic inside the obstacle; this
    // keeps finite-difference stencils near y1 = 0 well defined
    const double dir = target >= 0.0 ? 1.0 : -1.0;
    std::vector<double> st = xt;
    while (dir * (target - height_coord(r, st)) > 0.0) {
        std::vector<double> prev = st;
        const double rp = r;
        rk4_step(field, r, dir * step_, st, work);
        r += dir * step_;
        if (std::abs(r) > 1e3) throw error("from_flat: runaway characteristic");
        if (dir * (height_coord(r, st) - target) >= 0.0) {
            double a = rp, b = r;
            std::vector<double> sta = prev;
            while (std::abs(b - a) > 1e-14 * (1.0 + std::abs(b))) {
                const double mid = 0.5 * (a + b);
                std::vector<double> stm = sta;
                rk4_step(field, a, mid - a, stm, work);
                if (dir * (height_coord(mid, stm) - target) < 0.0) {
                    a = mid;
                    sta = stm;
                } else {
                    b = mid;
                }
            }
            st = sta;
            r = a;
            break;
        }
    }
    std::vector<double> x(boundary_.n);
    x[0] = -f0 + r;
    std::copy(st.begin(), st.end(), x.begin() + 1);
    return x;
}

// ----- common wrappers -------------------------------------------------------

FlatteningJet FlatteningMap::jet(std::span<const double> x) const {
    return prov_ == Provenance::closed_form ? jet_closed_form(x) : jet_ode(x);
}

std::vector<double> FlatteningMap::to_flat(std::span<const double> x) const {
    const int m = boundary_.n - 1;
    std::span<const double> xt(x.data() + 1, m);
    const auto j = jet(x);
    std::vector<double> y(boundary_.n);
    y[0] = x[0] + boundary_.height(xt);
    std::copy(j.g.begin(), j.g.end(), y.begin() + 1);
    return y;
}

std::vector<double> FlatteningMap::from_flat(std::span<const double> y) const {
    return prov_ == Provenance::closed_form ? from_flat_closed_form(y) : from_flat_ode(y);
}

std::vector<double> FlatteningMap::forward_jacobian(std::span<const double> x) const {
    const int n = boundary_.n, m = n - 1;
    std::span<const double> xt(x.data() + 1, m);
    const auto gF = boundary_.grad(xt);
    const auto j = jet(x);
    std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
    out[0] = 1.0;
    for (int k = 0; k < m; ++k) out[1 + k] = gF[k];
    for (int i = 0; i < m; ++i) {
        out[(1 + i) * n + 0] = j.g_x1[i];
        for (int k = 0; k < m; ++k) out[(1 + i) * n + 1 + k] = j.g_tan[i * m + k];
    }
    return out;
}

std::vector<double> FlatteningMap::inverse_jacobian(std::span<const double> y) const {
    const int n = boundary_.n;
    const auto x = from_flat(y);
    std::vector<double> a = forward_jacobian(x);
    std::vector<double> inv(static_cast<std::size_t>(n) * n, 0.0);
    // solve A X = I column by column
    for (int c = 0; c < n; ++c) {
        std::vector<double> acsol(a);
        std::vector<double> e(n, 0.0);
        e[c] = 1.0;
        solve_dense(acsol, e, n);
        for (int r = 0; r < n; ++r) inv[r * n + c] = e[r];
    }
    return inv;
}

double FlatteningMap::pde_residual(std::span<const double> x) const {
    const int m = boundary_.n - 1;
    std::span<const double> xt(x.data() + 1, m);
    const auto gF = boundary_.grad(xt);
    const auto j = jet(x);
    double worst = 0.0;
    for (int i = 0; i < m; ++i) {
        double r = j.g_x1[i];
        for (int k = 0; k < m; ++k) r += j.g_tan[i * m + k] * gF[k];
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

FlatteningMap solve_flattening(const ObstacleBoundary& boundary, const Box& region,
                               double step) {
    const auto prov = boundary.id == "parabola" ? FlatteningMap::Provenance::closed_form
                                                : FlatteningMap::Provenance::ode_integrated;
    FlatteningMap map(boundary, region, prov, step);
    // boundary trace condition G(-F(x'), x') = x' on a few samples
    const int m = boundary.n - 1;
    std::vector<double> x(boundary.n);
    for (int k = 0; k <= 8; ++k) {
        for (int i = 0; i < m; ++i)
            x[1 + i] = region.lo[1 + i] + (region.hi[1 + i] - region.lo[1 + i]) * k / 8.0;
        std::span<const double> xt(x.data() + 1, m);
        x[0] = -boundary.height(xt);
        const auto j = map.jet(x);
        for (int i = 0; i < m; ++i)
            require(std::abs(j.g[i] - x[1 + i]) < 1e-8,
                    "solve_flattening: boundary trace condition violated");
    }
    return map;
}

SymbolModel flattened_symbol(std::shared_ptr<const FlatteningMap> map) {
    const int n = map->dim();
    const auto& boundary = map->boundary();

    // certify that the mixed normal-tangential terms vanish
    {
        const auto& reg = map->region();
        const int m = n - 1;
        std::vector<double> x(n);
        for (int k = 0; k <= 6; ++k) {
            for (int i = 0; i < n; ++i)
                x[i] = reg.lo[i] + (reg.hi[i] - reg.lo[i]) * (0.1 + 0.8 * k / 6.0);
            std::span<const double> xt(x.data() + 1, m);
            if (x[0] <= -boundary.height(xt)) continue;
            const double res = map->pde_residual(x);
            require(res < 1e-9, "flattened_symbol: residual mixed terms above tolerance");
        }
    }

    SymbolModel::FormField form = [map](double, std::span<const double> y) {
        const int n = map->dim(), m = n - 1;
        const auto x = map->from_flat(y);
        std::span<const double> xt(x.data() + 1, m);
        const auto gF = map->boundary().grad(xt);
        const auto j = map->jet(x);
        double w = 1.0;
        for (int i = 0; i < m; ++i) w += gF[i] * gF[i];
        QuadraticForm f;
        f.a.assign(static_cast<std::size_t>(n) * n, 0.0);
        f.a[0] = -1.0 / w;
        // eta'_a eta'_b coefficient of |<G_x1, eta'>|^2 + |(dG/dx')^T eta'|^2
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
                double acc = j.g_x1[a] * j.g_x1[b];
                for (int i = 0; i < m; ++i) acc += j.g_tan[i * m + a] * j.g_tan[i * m + b];
                f.a[(1 + a) * n + (1 + b)] = acc / w;
            }
        return f;
    };

    SymbolModel model("wave_" + boundary.id + "_flattened", n, form);
    model.set_const_radius(4.0);

    if (map->provenance() == FlatteningMap::Provenance::closed_form && n == 2) {
        // analytic coefficient derivatives for the model parabola
        model.set_form_deriv([map](int dir, double, std::span<const double> y) {
            QuadraticForm df;
            df.a.assign(4, 0.0);
            if (dir == 0) return df;  // time independent
            const double z = y[1];
            const auto x = map->from_flat(y);
            const double r = x[0] + z * z;  // depth parameter: x1 = r - z^2
            const double e4 = std::exp(4.0 * r);
            const double w = 1.0 + 4.0 * z * z * e4;
            const double zz = 1.0 + 4.0 * z * z;
            const double c = std::exp(-4.0 * r) / (zz * zz);
            const double dr_dy1 = 1.0 / w;
            const double dr_dy2 = -2.0 * z * (e4 - 1.0) / w;
            double dw, dc;
            if (dir == 1) {
                dw = 16.0 * z * z * e4 * dr_dy1;
                dc = -4.0 * c * dr_dy1;
            } else {
                dw = 8.0 * z * e4 + 16.0 * z * z * e4 * dr_dy2;
                dc = c * (-4.0 * dr_dy2 - 16.0 * z / zz);
            }
            df.a[0] = dw / (w * w);  // d(-1/w)
            df.a[3] = dc;
            return df;
        });
    }
    return model;
}

NormalCovectorReport verify_eta1_positivity(const FlatteningMap& map,
                                            std::span<const Bicharacteristic> rays,
                                            double eta1_floor_rel) {
    NormalCovectorReport rep;
    rep.analytic_rate_bound = 2.0 * map.boundary().hessian_bound;
    rep.min_eta1 = std::numeric_limits<double>::infinity();
    bool ok = true;
    const int n = map.dim();
    for (const auto& ray : rays) {
        require(ray.size() >= 2, "verify_eta1_positivity: empty ray");
        const double eta1_0 = ray.state(0)[n + 2];
        require(eta1_0 > 0.0, "verify_eta1_positivity: ray must start with eta1 > 0");
        const double floor = eta1_floor_rel * eta1_0;
        for (std::size_t i = 0; i < ray.size(); ++i) {
            const auto st = ray.state(i);
            const double eta1 = st[n + 2];
            rep.min_eta1 = std::min(rep.min_eta1, eta1);
            if (eta1 <= floor) ok = false;
            std::span<const double> y(st.data() + 1, n);
            const auto x = map.from_flat(y);
            std::span<const double> xt(x.data() + 1, n - 1);
            rep.empirical_rate_max =
                std::max(rep.empirical_rate_max, map.boundary().curvature_rate(xt));
        }
    }
    rep.certified = ok;
    return rep;
}

}  // namespace pulses
