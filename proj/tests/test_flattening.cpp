#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "pulses/flattening.hpp"
#include "pulses/ray_tracing.hpp"

using namespace pulses;

namespace {

Box region2d(double x1lo, double x1hi, double x2lo, double x2hi) {
    Box b;
    b.lo = {x1lo, x2lo};
    b.hi = {x1hi, x2hi};
    return b;
}

// oracle-side closed forms for the parabola straightening
struct ParabolaOracle {
    double z, s;
    explicit ParabolaOracle(double zz, double ss) : z(zz), s(ss) {}
    double x1() const { return s - z * z; }
    double x2() const { return z * std::exp(2.0 * s); }
    double g_x1() const { return -2.0 * z / (1.0 + 4.0 * z * z); }
    double g_x2() const { return std::exp(-2.0 * s) / (1.0 + 4.0 * z * z); }
};

}  // namespace

TEST_CASE("parabola straightening matches the characteristic solution") {
    const auto boundary = ObstacleBoundary::parabola();
    const Box region = region2d(-0.5, 1.5, -1.0, 1.0);
    const auto map = solve_flattening(boundary, region);
    CHECK(map.provenance() == FlatteningMap::Provenance::closed_form);

    FlatteningMap ode(boundary, region, FlatteningMap::Provenance::ode_integrated, 1e-3);

    for (double z : {-0.6, -0.3, -0.05, 0.0, 0.2, 0.5}) {
        for (double s : {0.0, 0.1, 0.4, 0.8}) {
            const ParabolaOracle o(z, s);
            const std::vector<double> x{o.x1(), o.x2()};
            if (!region.contains(x)) continue;
            const auto jc = map.jet(x);
            CHECK(jc.g[0] == doctest::Approx(z).epsilon(1e-10));
            CHECK(jc.g_x1[0] == doctest::Approx(o.g_x1()).epsilon(1e-10));
            CHECK(jc.g_tan[0] == doctest::Approx(o.g_x2()).epsilon(1e-10));
            const auto jo = ode.jet(x);
            CHECK(jo.g[0] == doctest::Approx(z).epsilon(1e-8));
            CHECK(jo.g_x1[0] == doctest::Approx(o.g_x1()).epsilon(1e-7));
            CHECK(jo.g_tan[0] == doctest::Approx(o.g_x2()).epsilon(1e-7));
        }
    }
}

TEST_CASE("flat boundary straightening is the identity") {
    const auto boundary = ObstacleBoundary::flat(2);
    const Box region = region2d(0.0, 1.0, -1.0, 1.0);
    const auto map = solve_flattening(boundary, region);
    const std::vector<double> x{0.4, -0.3};
    const auto j = map.jet(x);
    CHECK(j.g[0] == doctest::Approx(-0.3).epsilon(1e-14));
    CHECK(std::abs(j.g_x1[0]) < 1e-14);
    CHECK(j.g_tan[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("ellipse straightening satisfies the defining transport equation") {
    const auto boundary = ObstacleBoundary::ellipse_vertex();
    const Box region = region2d(-0.3, 0.8, -0.55, 0.55);
    boundary.validate(region);
    const auto map = solve_flattening(boundary, region, 1e-3);
    for (double x2 : {-0.4, -0.15, 0.1, 0.45}) {
        for (double x1 : {0.05, 0.3, 0.6}) {
            const std::vector<double> x{x1, x2};
            CHECK(map.pde_residual(x) < 1e-7);
        }
    }
}

TEST_CASE("region too small raises a structured error") {
    const auto boundary = ObstacleBoundary::parabola();
    // floor of the region sits above the obstacle boundary, so the backward
    // characteristic exits before reaching its foot
    const Box tight = region2d(0.5, 1.0, -0.5, 0.5);
    FlatteningMap map(boundary, tight, FlatteningMap::Provenance::ode_integrated, 1e-3);
    const std::vector<double> x{0.9, 0.04};
    CHECK_THROWS_AS((void)map.jet(x), error);
}

TEST_CASE("flattened symbol of the flat boundary is the free wave operator") {
    auto map = std::make_shared<FlatteningMap>(ObstacleBoundary::flat(2),
                                               region2d(0.0, 1.0, -1.0, 1.0),
                                               FlatteningMap::Provenance::ode_integrated, 1e-2);
    const auto m = flattened_symbol(map);
    const auto free = make_model("wave_free", 2);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        PhaseSpacePoint p;
        p.t = u(rng);
        p.x = {0.2 + 0.5 * std::abs(u(rng)), u(rng)};
        p.tau = u(rng);
        p.xi = {u(rng), u(rng)};
        CHECK(m.principal(p) == doctest::Approx(free.principal(p)).epsilon(1e-12));
    }
}

TEST_CASE("parabola flattened symbol") {
    auto map = std::make_shared<FlatteningMap>(ObstacleBoundary::parabola(),
                                               region2d(-0.5, 1.5, -1.0, 1.0),
                                               FlatteningMap::Provenance::closed_form, 1e-3);
    const auto m = flattened_symbol(map);

    SUBCASE("normal coefficient of the unscaled operator is 1 at the vertex") {
        const std::vector<double> y{0.0, 0.0};
        const auto f = m.form(0.0, y);
        CHECK(-1.0 / f.a[0] == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("value 1 for the pure normal covector") {
        // x2 = 0.5 in the original frame, tau = 0, eta = (1, 0)
        const std::vector<double> x{0.3, 0.5};
        const auto y = map->to_flat(x);
        PhaseSpacePoint p;
        p.t = 0.0;
        p.x = y;
        p.tau = 0.0;
        p.xi = {1.0, 0.0};
        CHECK(m.principal(p) == doctest::Approx(1.0).epsilon(1e-10));
    }

    SUBCASE("agrees with the chain-rule pushforward of the wave symbol") {
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (int trial = 0; trial < 25; ++trial) {
            const std::vector<double> x{0.1 + std::abs(u(rng)), u(rng)};
            const auto y = map->to_flat(x);
            const double tau = u(rng);
            const std::vector<double> eta{u(rng), u(rng)};
            // xi = (dy/dx)^T eta
            const auto jac = map->forward_jacobian(x);
            std::vector<double> xi(2, 0.0);
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c) xi[c] += jac[r * 2 + c] * eta[r];
            const double a = 1.0 + 4.0 * x[1] * x[1];
            const double oracle = (-tau * tau + xi[0] * xi[0] + xi[1] * xi[1]) / a;
            PhaseSpacePoint p;
            p.t = 0.0;
            p.x = y;
            p.tau = tau;
            p.xi = eta;
            CHECK(m.principal(p) == doctest::Approx(oracle).epsilon(1e-8));
        }
    }

    SUBCASE("analytic coefficient derivatives match finite differences") {
        SymbolModel fd_model("fd", 2,
                             [m](double t, std::span<const double> y) { return m.form(t, y); });
        std::mt19937_64 rng(6);
        std::uniform_real_distribution<double> u(-0.4, 0.4);
        for (int trial = 0; trial < 10; ++trial) {
            PhaseSpacePoint p;
            p.t = 0.0;
            p.x = {0.1 + std::abs(u(rng)), u(rng)};
            p.tau = -1.1;
            p.xi = {0.3, 0.8};
            const auto ha = m.hamiltonian(p);
            const auto hf = fd_model.hamiltonian(p);
            for (int i = 0; i < 6; ++i)
                CHECK(ha[i] == doctest::Approx(hf[i]).epsilon(2e-6));
        }
    }

    SUBCASE("normal derivative of the covector at grazing is positive") {
        // eta1' = 4 G_{x2}^2 eta2^2 / (1 + 4 x2^2) for the unscaled operator
        const double z = 0.3;
        const ParabolaOracle o(z, 0.25);
        const std::vector<double> x{o.x1(), o.x2()};
        const auto y = map->to_flat(x);
        const double aw = 1.0 + 4.0 * x[1] * x[1];
        const double c = o.g_x2() * o.g_x2();  // q's eta2^2 coefficient
        PhaseSpacePoint p;
        p.t = 0.0;
        p.x = y;
        p.xi = {0.0, 1.0};
        p.tau = -std::sqrt(c * aw);  // characteristic root at eta1 = 0
        CHECK(m.principal(p) == doctest::Approx(0.0).epsilon(1e-12));
        const auto h = m.hamiltonian(p);
        const double paper_value = 4.0 * o.g_x2() * o.g_x2() / aw;
        CHECK(h[4] * aw == doctest::Approx(paper_value).epsilon(1e-8));
        CHECK(h[4] > 0.0);
    }
}

TEST_CASE("inverse flattening round trip") {
    auto map = std::make_shared<FlatteningMap>(ObstacleBoundary::parabola(),
                                               region2d(-0.5, 1.5, -1.0, 1.0),
                                               FlatteningMap::Provenance::closed_form, 1e-3);
    FlatteningMap ode(ObstacleBoundary::quartic(), region2d(-0.5, 1.5, -1.0, 1.0),
                      FlatteningMap::Provenance::ode_integrated, 1e-3);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    for (int trial = 0; trial < 15; ++trial) {
        const std::vector<double> x{0.05 + std::abs(u(rng)), u(rng)};
        for (const FlatteningMap* mp : {static_cast<const FlatteningMap*>(map.get()),
                                        static_cast<const FlatteningMap*>(&ode)}) {
            const auto y = mp->to_flat(x);
            const auto xb = mp->from_flat(y);
            CHECK(xb[0] == doctest::Approx(x[0]).epsilon(1e-9));
            CHECK(xb[1] == doctest::Approx(x[1]).epsilon(1e-9));
        }
    }
}

TEST_CASE("eta1 stays positive along reflected rays (model obstacle)") {
    auto map = std::make_shared<FlatteningMap>(ObstacleBoundary::parabola(),
                                               region2d(-0.5, 2.0, -1.2, 1.2),
                                               FlatteningMap::Provenance::closed_form, 1e-3);
    const auto model = flattened_symbol(map);

    // incoming plane pulse phi = -t + x2 pulled back; reflected seed covectors
    auto incoming_grad = [&](double /*t*/, std::span<const double> y) {
        const auto inv = map->inverse_jacobian(y);  // dx/dy
        // grad_y <e2, x> = (dx2/dy1, dx2/dy2)
        return std::vector<double>{-1.0, inv[1 * 2 + 0], inv[1 * 2 + 1]};
    };

    std::vector<Bicharacteristic> fan;
    const double s_end = 0.5;
    for (int k = 0; k < 50; ++k) {
        const double z = -0.40 + 0.38 * k / 49.0;  // z in [-0.40, -0.02]
        PhaseSpacePoint seed;
        seed.t = 0.0;
        seed.x = {0.0, z};
        const auto g = incoming_grad(seed.t, seed.x);
        seed.tau = g[0];
        seed.xi = {-g[1], g[2]};  // flipped normal covector
        CHECK(seed.xi[0] > 0.0);
        CHECK(std::abs(model.principal(seed)) < 1e-10);
        RayOptions opts;
        opts.base_step = s_end / 400.0;
        fan.push_back(integrate_bicharacteristic(model, seed, 0.0, s_end, opts));
    }
    const auto rep = verify_eta1_positivity(*map, fan);
    CHECK(rep.certified);
    CHECK(rep.min_eta1 > 0.0);
    CHECK(rep.empirical_rate_max >= 0.0);
    CHECK(rep.empirical_rate_max <= 4.0 + 1e-9);
    CHECK(rep.analytic_rate_bound == doctest::Approx(4.0));

    // Riccati comparison: eta1(s) >= eta1(0) / (1 + 2C eta1(0) s) - 1e-6
    for (const auto& ray : fan) {
        const double e0 = ray.state(0)[4];
        for (std::size_t i = 0; i < ray.size(); ++i) {
            const double bound = e0 / (1.0 + 4.0 * e0 * ray.s_at(i)) - 1e-6;
            CHECK(ray.state(i)[4] >= bound);
        }
    }
}

TEST_CASE("eta1 constant along rays off a flat wall") {
    const auto model = make_model("wave_free", 2);
    PhaseSpacePoint seed;
    seed.t = 0.0;
    seed.x = {0.0, 0.0};
    seed.tau = -1.0;
    seed.xi = {0.6, 0.8};
    RayOptions opts;
    opts.base_step = 1e-3;
    const auto ray = integrate_bicharacteristic(model, seed, 0.0, 0.5, opts);
    for (std::size_t i = 0; i < ray.size(); ++i)
        CHECK(ray.state(i)[4] == doctest::Approx(0.6).epsilon(1e-12));
}
