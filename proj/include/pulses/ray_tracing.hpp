// Bicharacteristic integration, classification of boundary tangencies by
// order, and location of the grazing set of an incoming phase.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pulses/symbol_model.hpp"

namespace pulses {

// Second-order jet of a scalar field over (t,x): value and gradient (size n+1).
using JetField = std::function<void(double t, std::span<const double> x, double& value,
                                    std::span<double> grad)>;

struct RayEvent {
    enum class Kind { crossing, tangency };
    double s = 0.0;
    Kind kind = Kind::crossing;
};

// A sampled integral curve of the Hamiltonian field. Samples are kept at the
// integrator's (possibly boundary-refined) steps, monotone in s.
class Bicharacteristic {
public:
    Bicharacteristic(int n) : n_(n) {}

    int dim() const { return n_; }
    std::size_t size() const { return s_.size(); }
    double s_at(std::size_t i) const { return s_[i]; }
    double s_front() const { return s_.front(); }
    double s_back() const { return s_.back(); }

    // state layout: (t, x[0..n-1], tau, xi[0..n-1]), size 2n+2
    std::span<const double> state(std::size_t i) const;
    PhaseSpacePoint point(std::size_t i) const;

    // cubic interpolation in s (non-uniform samples)
    std::vector<double> state_at(double s) const;

    const std::vector<RayEvent>& events() const { return events_; }

    // max relative drift of p along the samples
    double conservation_drift(const SymbolModel& model) const;

    void append(double s, std::span<const double> state);
    void add_event(RayEvent e) { events_.push_back(e); }
    void reverse_in_place();

private:
    int n_;
    std::vector<double> s_;
    std::vector<double> states_;  // size() * (2n+2)
    std::vector<RayEvent> events_;
};

struct RayOptions {
    double base_step = 0.0;      // 0: s-range / 2000
    double boundary_zone = 1e-2; // refine steps when |x1| is below this
    double event_tol = 1e-10;    // bisection tolerance in s for events
    double guard_radius = 0.0;   // 0: 4 * model const_radius; abort beyond
    bool stop_at_crossing = false;
};

// Integrates the bicharacteristic through `start` (taken at s = 0) over
// [s_min, s_max]; requires |p(start)| < char_tol.
Bicharacteristic integrate_bicharacteristic(const SymbolModel& model,
                                            const PhaseSpacePoint& start, double s_min,
                                            double s_max, const RayOptions& opts = {},
                                            double char_tol = 1e-8);

struct GrazingClassification {
    int order = 0;            // 0 means ">= max_order" (all derivatives below threshold)
    bool at_least_max = false;
    bool diffractive = false;
    double leading_coeff = 0.0;  // fitted d^order/ds^order x1 / order!
};

// Order of tangency of the ray through a glancing point rho with the boundary,
// from a polynomial fit of x1 along the integrated ray on [-s_probe, s_probe].
GrazingClassification grazing_order(const SymbolModel& model, const PhaseSpacePoint& rho,
                                    int max_order = 8, double s_probe = 0.05,
                                    double rel_threshold = 1e-7);

struct GrazingSetModel {
    std::vector<double> t_samples;      // root locus on the boundary
    std::vector<double> xtan_samples;   // matching tangential coordinate (n = 2)
    std::vector<double> xi_poly;        // Xi(t,x') = x' - poly(t)
    double transversality_margin = 0.0; // <T_phi, dXi> at the anchor root
    bool a02_verified = false;          // transversality + diffractive samples
    std::vector<GrazingClassification> classifications;

    double xi_value(double t, double xtan) const;
    // jet over (t,x): (d_t Xi, d_{x1} Xi = 0, d_{x'} Xi)
    std::vector<double> xi_gradient(double t) const;
};

struct BoundaryWindow {
    double t_lo = -1.0, t_hi = 1.0;
    double xtan_lo = -1.0, xtan_hi = 1.0;
    int nt = 33, nxtan = 129;
};

// Roots of d_{x1} phi(t, 0, x') over the boundary window (n = 2 only), a
// fitted defining function, the transversality margin against T_phi, and the
// diffractive classification of the sampled roots.
GrazingSetModel locate_grazing_set(const SymbolModel& model, const JetField& phase_jet,
                                   const BoundaryWindow& window, int max_order = 8);

}  // namespace pulses
