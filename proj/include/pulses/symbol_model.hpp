// Second-order hyperbolic operators in half-space form: principal symbol
// p(t,x,tau,xi) = xi_1^2 + q(t,x,tau,xi') with q of signature (n-1,1), plus
// first- and zero-order parts, and the Lipschitz nonlinearity.
//
// Index conventions used throughout the project:
//   space dim n >= 1; x[0] is the normal coordinate (boundary at x[0] = 0),
//   x[1..n-1] the tangential ones.  Covariables: tau and xi[0..n-1].
//   q takes z = (tau, xi[1], .., xi[n-1]), a vector of size n.
//   "jet" vectors over (t,x) are indexed 0 = t, 1..n = x[0..n-1].
#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pulses/numerics.hpp"

namespace pulses {

struct PhaseSpacePoint {
    double t = 0.0;
    std::vector<double> x;
    double tau = 0.0;
    std::vector<double> xi;

    int dim() const { return static_cast<int>(x.size()); }
};

// Coefficients of q(t,x,z) = z.A z + lin.z + cst at a fixed (t,x).
struct QuadraticForm {
    std::vector<double> a;    // row-major n x n, symmetric
    std::vector<double> lin;  // size n (may be empty = zero)
    double cst = 0.0;

    double eval(std::span<const double> z) const;
    // gradient of q in z
    void grad(std::span<const double> z, std::span<double> out) const;
};

class SymbolModel {
public:
    using FormField = std::function<QuadraticForm(double t, std::span<const double> x)>;
    // Analytic derivative of the coefficient field in jet direction dir (0 = t,
    // 1..n = x); optional, central differences otherwise.
    using FormDeriv = std::function<QuadraticForm(int dir, double t, std::span<const double> x)>;
    using CoeffField = std::function<double(double t, std::span<const double> x)>;
    using B1Field = std::function<std::vector<double>(double t, std::span<const double> x)>;

    SymbolModel(std::string id, int n, FormField form);

    const std::string& id() const { return id_; }
    int dim() const { return n_; }

    void set_form_deriv(FormDeriv d) { form_deriv_ = std::move(d); }
    void set_b1(B1Field b1) { b1_ = std::move(b1); }
    void set_b0(CoeffField b0) { b0_ = std::move(b0); }
    void set_const_radius(double r) { const_radius_ = r; }
    double const_radius() const { return const_radius_; }
    bool has_analytic_deriv() const { return static_cast<bool>(form_deriv_); }

    QuadraticForm form(double t, std::span<const double> x) const { return form_(t, x); }
    double q(double t, std::span<const double> x, double tau, std::span<const double> xi_tan) const;

    // p = xi_1^2 + q evaluated at a phase-space point.
    double principal(const PhaseSpacePoint& p) const;
    // Covector variant: grad is a jet (d_t phi, d_x phi); returns p(t,x,grad).
    double principal_at(double t, std::span<const double> x, std::span<const double> grad) const;

    // Hamiltonian field of p: output (dt, dx, dtau, dxi)/ds, size 2n+2.
    void hamiltonian(const PhaseSpacePoint& p, std::span<double> out) const;
    std::vector<double> hamiltonian(const PhaseSpacePoint& p) const;

    // p(t,x,d_t,grad) phi + B1 phi applied to a second-order jet of phi.
    // hess is (n+1)x(n+1) row-major over (t,x).
    double p1_on_jet(double t, std::span<const double> x, double value,
                     std::span<const double> grad, std::span<const double> hess) const;

    std::vector<double> b1_coeffs(double t, std::span<const double> x) const;
    double b0(double t, std::span<const double> x) const;

    // jet derivative of q at fixed covariables (analytic if available, else FD)
    double q_jet_deriv(int dir, double t, std::span<const double> x,
                       std::span<const double> z) const;

    // Structural invariants checked by sampling: signature (n-1,1) of the
    // quadratic part, spacelike initial surfaces, timelike boundary, and
    // constant coefficients outside const_radius.
    void validate(unsigned seed = 7u, int samples = 64) const;

    // Largest characteristic speed |dx/dt| over sampled points and directions;
    // used for CFL bounds.
    double max_speed(std::span<const double> box_lo, std::span<const double> box_hi,
                     unsigned seed = 11u, int samples = 256) const;

private:
    std::string id_;
    int n_;
    FormField form_;
    FormDeriv form_deriv_;
    B1Field b1_;
    CoeffField b0_;
    double const_radius_ = 10.0;
};

// Built-in operators; flattened-obstacle models are produced by the
// convex-geometry module and registered under "wave_parabola_flattened" and
// "wave_convex_flattened(<boundary>)".
SymbolModel make_model(const std::string& id, int n);

struct Nonlinearity {
    int n = 1;
    std::string id = "zero";
    double lipschitz = 0.0;
    // zeta = (u, d_t u, grad u), size n+2
    std::function<double(double t, std::span<const double> x, std::span<const double> zeta)> f;
    // gradient in zeta (size n+2); analytic for the registry entries
    std::function<void(double t, std::span<const double> x, std::span<const double> zeta,
                       std::span<double> out)>
        grad_zeta;

    double operator()(double t, std::span<const double> x, std::span<const double> zeta) const {
        return f(t, x, zeta);
    }

    // Sampled invariants: f(t,x,0) = 0 and the Lipschitz bound on random pairs.
    void validate(unsigned seed = 13u, int samples = 200) const;

    static Nonlinearity zero(int n);
    static Nonlinearity sine(int n, double m);        // m * sin(last gradient slot)
    static Nonlinearity saturating(int n, double m);  // m * tanh(last gradient slot)
    static Nonlinearity make(const std::string& id, int n, double m);
};

}  // namespace pulses
