#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "pulses/flattening.hpp"
#include "pulses/ray_tracing.hpp"

using namespace pulses;

namespace {

std::shared_ptr<const FlatteningMap> parabola_map() {
    Box region;
    region.lo = {-0.6, -1.2};
    region.hi = {2.0, 1.2};
    return std::make_shared<FlatteningMap>(ObstacleBoundary::parabola(), region,
                                           FlatteningMap::Provenance::closed_form, 1e-3);
}

std::shared_ptr<const FlatteningMap> quartic_map() {
    Box region;
    region.lo = {-0.6, -1.2};
    region.hi = {2.0, 1.2};
    return std::make_shared<FlatteningMap>(ObstacleBoundary::quartic(), region,
                                           FlatteningMap::Provenance::ode_integrated, 2e-3);
}

}  // namespace

TEST_CASE("free-space ray is a straight line with constant covector") {
    const auto m = make_model("wave_free", 2);
    PhaseSpacePoint start;
    start.t = 0.0;
    start.x = {1.0, 0.0};
    start.tau = -1.0;
    start.xi = {0.0, 1.0};
    RayOptions opts;
    opts.base_step = 1e-3;
    const auto ray = integrate_bicharacteristic(m, start, 0.0, 0.5, opts);
    for (std::size_t i = 0; i < ray.size(); ++i) {
        const double s = ray.s_at(i);
        const auto st = ray.state(i);
        CHECK(st[0] == doctest::Approx(2.0 * s).epsilon(1e-12));      // t
        CHECK(st[1] == doctest::Approx(1.0).epsilon(1e-12));          // x1
        CHECK(st[2] == doctest::Approx(2.0 * s).epsilon(1e-12));      // x2
        CHECK(st[3] == doctest::Approx(-1.0).epsilon(1e-12));         // tau
        CHECK(st[4] == doctest::Approx(0.0));
        CHECK(st[5] == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(ray.conservation_drift(m) < 1e-12);
}

TEST_CASE("vertex tangency of the model obstacle is diffractive") {
    const auto model = flattened_symbol(parabola_map());
    PhaseSpacePoint rho;
    rho.t = 0.0;
    rho.x = {0.0, 0.0};
    rho.xi = {0.0, 1.0};
    rho.tau = -1.0;  // q at the vertex is the free form: tau^2 = eta2^2
    CHECK(std::abs(model.principal(rho)) < 1e-12);

    RayOptions opts;
    opts.base_step = 1e-4;
    const auto ray = integrate_bicharacteristic(model, rho, -0.04, 0.04, opts);
    bool tangency = false;
    for (const auto& e : ray.events())
        if (e.kind == RayEvent::Kind::tangency && std::abs(e.s) < 1e-10) tangency = true;
    CHECK(tangency);
    // x1(s) > 0 for s != 0 and grows quadratically (oracle: fit on the samples)
    for (std::size_t i = 0; i < ray.size(); ++i)
        if (std::abs(ray.s_at(i)) > 1e-4) CHECK(ray.state(i)[1] > 0.0);
    CHECK(ray.conservation_drift(model) < 1e-8);

    const auto cls = grazing_order(model, rho, 8, 0.04);
    CHECK(cls.order == 2);
    CHECK(cls.diffractive);
    // oracle: x1(s) ~ (H^2 x1 / 2) s^2 with H^2 x1 = 8 eta2^2 at the vertex
    CHECK(cls.leading_coeff == doctest::Approx(8.0).epsilon(1e-3));
    const auto half = grazing_order(model, rho, 8, 0.02);
    CHECK(half.order == 2);
    CHECK(half.diffractive);
}

TEST_CASE("quartic boundary vertex tangency has order 4") {
    const auto model = flattened_symbol(quartic_map());
    PhaseSpacePoint rho;
    rho.t = 0.0;
    rho.x = {0.0, 0.0};
    rho.xi = {0.0, 1.0};
    rho.tau = -1.0;
    CHECK(std::abs(model.principal(rho)) < 1e-10);
    const auto cls = grazing_order(model, rho, 8, 0.08);
    CHECK(cls.order == 4);
    CHECK(cls.diffractive);
    const auto half = grazing_order(model, rho, 8, 0.04);
    CHECK(half.order == 4);
}

TEST_CASE("ray along a flat wall never separates: order at least max") {
    const auto m = make_model("wave_free", 2);
    PhaseSpacePoint rho;
    rho.t = 0.0;
    rho.x = {0.0, 0.0};
    rho.tau = -1.0;
    rho.xi = {0.0, 1.0};
    const auto cls = grazing_order(m, rho, 8, 0.05);
    CHECK(cls.at_least_max);
    const auto half = grazing_order(m, rho, 8, 0.025);
    CHECK(half.at_least_max);
}

TEST_CASE("grazing set of the plane pulse on the model obstacle") {
    const auto map = parabola_map();
    const auto model = flattened_symbol(map);
    JetField phase = [map](double t, std::span<const double> y, double& v,
                           std::span<double> grad) {
        const auto x = map->from_flat(y);
        const auto inv = map->inverse_jacobian(y);
        v = -t + x[1];
        grad[0] = -1.0;
        grad[1] = inv[1 * 2 + 0];
        grad[2] = inv[1 * 2 + 1];
    };
    BoundaryWindow win;
    win.t_lo = -0.2;
    win.t_hi = 0.2;
    win.xtan_lo = -0.5;
    win.xtan_hi = 0.5;
    const auto gs = locate_grazing_set(model, phase, win);
    // the grazing locus is the vertex line x' = 0 for all t
    for (double xr : gs.xtan_samples) CHECK(std::abs(xr) < 1e-9);
    CHECK(gs.transversality_margin > 1e-6);
    CHECK(gs.a02_verified);
    for (const auto& c : gs.classifications) {
        CHECK(c.order == 2);
        CHECK(c.diffractive);
    }
    // the first-order choice Xi = d_{x1} phi has the same zero set
    std::vector<double> x{0.0, 0.0}, grad(3);
    double v;
    for (double t : {-0.1, 0.0, 0.1}) {
        x[1] = gs.xi_value(t, 0.0);  // roots of the fitted Xi: x' = poly(t)
        CHECK(std::abs(x[1]) < 1e-9);
        phase(t, std::vector<double>{0.0, 0.0}, v, grad);
        CHECK(std::abs(grad[1]) < 1e-9);  // d_{x1} phi vanishes on the locus
    }
}

TEST_CASE("transversal scenario has an empty grazing set") {
    const auto m = make_model("wave_free", 2);
    JetField phase = [](double t, std::span<const double> x, double& v, std::span<double> g) {
        // oblique plane phase: d_{x1} phi = -0.77 everywhere
        v = -t - 0.77 * x[0] + 0.638 * x[1];
        g[0] = -1.0;
        g[1] = -0.77;
        g[2] = 0.638;
    };
    BoundaryWindow win;
    CHECK_THROWS_AS((void)locate_grazing_set(m, phase, win), error);
}

TEST_CASE("trajectory guard raises when leaving the coefficient region") {
    auto m = make_model("wave_free", 2);
    m.set_const_radius(0.05);
    PhaseSpacePoint start;
    start.t = 0.0;
    start.x = {1.0, 0.0};
    start.tau = -1.0;
    start.xi = {0.0, 1.0};
    CHECK_THROWS_AS((void)integrate_bicharacteristic(m, start, 0.0, 5.0), error);
}
