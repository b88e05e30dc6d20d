// Flattening of the exterior of a convex obstacle {x1 < -F(x')} to the half
// space {y1 > 0}, the induced operator in the new coordinates, and the
// positivity check for the normal covector along reflected rays.
#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pulses/symbol_model.hpp"

namespace pulses {

struct Box {
    std::vector<double> lo, hi;
    bool contains(std::span<const double> x, double pad = 0.0) const;
};

struct ObstacleBoundary {
    int n = 2;  // ambient dimension; boundary is the graph x1 = -F(x')
    std::string id;
    std::function<double(std::span<const double>)> height;                // F(x')
    std::function<std::vector<double>(std::span<const double>)> grad;     // size n-1
    std::function<std::vector<double>(std::span<const double>)> hess;     // (n-1)^2
    double hessian_bound = 0.0;  // C: bounds the eigenvalues of the Hessian

    // curvature quantity entering the comparison argument:
    // 2 gF . H . gF / (1 + |gF|^2), bounded by 2C.
    double curvature_rate(std::span<const double> x_tan) const;

    // sampled convexity: Hessian PSD with eigenvalues <= C
    void validate(const Box& region, unsigned seed = 17u, int samples = 200) const;

    static ObstacleBoundary flat(int n);
    static ObstacleBoundary parabola();        // n = 2, F = x2^2
    static ObstacleBoundary quartic();         // n = 2, F = x2^4
    static ObstacleBoundary ellipse_vertex();  // n = 2, F = 1 - sqrt(1 - x2^2)
    static ObstacleBoundary make(const std::string& id, int n = 2);
};

// Value and Jacobian fields of the straightening component G at a point x.
struct FlatteningJet {
    std::vector<double> g;        // G(x), size n-1
    std::vector<double> g_x1;     // dG/dx1, size n-1
    std::vector<double> g_tan;    // dG/dx', (n-1) x (n-1) row-major
};

class FlatteningMap {
public:
    enum class Provenance { closed_form, ode_integrated };

    FlatteningMap(ObstacleBoundary boundary, Box region, Provenance prov, double step);

    int dim() const { return boundary_.n; }
    Provenance provenance() const { return prov_; }
    const ObstacleBoundary& boundary() const { return boundary_; }
    const Box& region() const { return region_; }

    FlatteningJet jet(std::span<const double> x) const;

    std::vector<double> to_flat(std::span<const double> x) const;    // y(x)
    std::vector<double> from_flat(std::span<const double> y) const;  // x(y)

    // dy/dx at x, n x n row-major (rows: y1, y'; cols: x1, x').
    std::vector<double> forward_jacobian(std::span<const double> x) const;
    // dx/dy at y (inverse of the forward Jacobian at x(y)).
    std::vector<double> inverse_jacobian(std::span<const double> y) const;

    // residual of the defining transport equation at x
    double pde_residual(std::span<const double> x) const;

private:
    ObstacleBoundary boundary_;
    Box region_;
    Provenance prov_;
    double step_;

    FlatteningJet jet_closed_form(std::span<const double> x) const;
    FlatteningJet jet_ode(std::span<const double> x) const;
    std::vector<double> from_flat_closed_form(std::span<const double> y) const;
    std::vector<double> from_flat_ode(std::span<const double> y) const;
};

// Integrates the straightening field over `region`; uses the closed form for
// the model parabola (cross-checked against the ODE path in tests).
FlatteningMap solve_flattening(const ObstacleBoundary& boundary, const Box& region,
                               double step = 2e-3);

// Operator induced by the wave operator in flattened coordinates, normalized
// to half-space form; mixed normal-tangential terms are certified to vanish.
SymbolModel flattened_symbol(std::shared_ptr<const FlatteningMap> map);

struct NormalCovectorReport {
    double min_eta1 = 0.0;
    double empirical_rate_max = 0.0;  // max of the curvature rate along the rays
    double analytic_rate_bound = 0.0; // 2C
    bool certified = false;
};

class Bicharacteristic;  // ray_tracing.hpp

// Checks eta1 > 0 along reflected rays of a flattened wave model and reports
// the curvature-rate bounds from the comparison ODE y' = -2C y^2.
NormalCovectorReport verify_eta1_positivity(const FlatteningMap& map,
                                            std::span<const Bicharacteristic> rays,
                                            double eta1_floor_rel = 1e-6);

}  // namespace pulses
