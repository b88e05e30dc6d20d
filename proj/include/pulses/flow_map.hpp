// Flow maps of the characteristic fields: forward evaluators cached on a
// (s, label) lattice, Newton inversion, exit bookkeeping and Jacobian
// monitoring.  Incoming maps are seeded on an initial surface, reflected maps
// on a boundary patch with the normal covector flipped.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pulses/ray_tracing.hpp"
#include "pulses/symbol_model.hpp"

namespace pulses {

// Uniform lattice of ray labels (seed coordinates), m = 1 or 2 dimensions.
struct LabelGrid {
    int m = 1;
    std::array<double, 2> lo{}, h{};
    std::array<int, 2> count{1, 1};

    std::int64_t total() const { return static_cast<std::int64_t>(count[0]) * count[1]; }
    std::array<double, 2> at(std::int64_t flat) const {
        const int i = static_cast<int>(flat % count[0]);
        const int j = static_cast<int>(flat / count[0]);
        return {lo[0] + i * h[0], m > 1 ? lo[1] + j * h[1] : 0.0};
    }
    std::array<double, 2> hi() const {
        return {lo[0] + (count[0] - 1) * h[0], m > 1 ? lo[1] + (count[1] - 1) * h[1] : 0.0};
    }
};

struct InverseResult {
    bool ok = false;
    double s = 0.0;
    std::array<double, 2> label{};
    int iterations = 0;
    double residual = 0.0;
};

class FlowMap {
public:
    enum class Kind { incoming, reflected };
    enum class ExitKind { time_cap, boundary };

    Kind kind() const { return kind_; }
    int dim() const { return n_; }
    const LabelGrid& labels() const { return labels_; }
    int s_count() const { return ns_; }
    double ds() const { return ds_; }
    double s_min() const { return -pad_ * ds_; }
    double s_max() const { return ns_ * ds_; }

    // state (t, x, tau, xi) at lattice node (k, flat label index)
    std::span<const double> node(int k, std::int64_t lab) const;

    // cubic interpolation in (s, labels); out has size 2n+2
    void state(double s, std::span<const double> label, std::span<double> out) const;
    // spacetime position only (size n+1)
    void position(double s, std::span<const double> label, std::span<double> out) const;
    // Jacobian of the position w.r.t. (s, labels): (n+1) x (1+m) row-major
    void position_jacobian(double s, std::span<const double> label,
                           std::span<double> out) const;
    double jacobian_det(double s, std::span<const double> label) const;

    // Newton inversion of (s, label) -> (t, x).  A warm start makes repeated
    // nearby queries cheap; a cold start scans a decimated lattice.
    InverseResult invert(double t, std::span<const double> x,
                         const InverseResult* warm = nullptr, double tol = 1e-9,
                         int max_iter = 40) const;

    double exit_s(std::int64_t lab) const { return exit_s_[lab]; }
    ExitKind exit_kind(std::int64_t lab) const { return exit_kind_[lab]; }
    std::span<const double> exit_state(std::int64_t lab) const;
    // interpolated exit parameter at a non-lattice label
    double exit_s_at(std::span<const double> label) const;

    // membership of (s, label) in the flow domain [0, s_exit]
    bool in_domain(double s, std::span<const double> label, double tol = 1e-9) const;

    // largest forward-then-inverse round-trip error over sampled interior points
    double roundtrip_error(unsigned seed = 23u, int samples = 100) const;

    // sampled injectivity: the position Jacobian determinant keeps one sign on
    // nodes with edge_margin(label) > 0 (throws otherwise)
    void certify_injective(const std::function<double(std::span<const double>)>& edge_margin,
                           const char* what) const;

    struct BuildAccess;  // builder backdoor

private:
    Kind kind_ = Kind::incoming;
    int n_ = 1;
    LabelGrid labels_;
    int ns_ = 0, pad_ = 0;
    double ds_ = 0.0;
    std::vector<double> cache_;      // (labels.total() * (ns+pad+1)) * (2n+2)
    std::vector<double> exit_s_;
    std::vector<ExitKind> exit_kind_;
    std::vector<double> exit_states_;

    friend struct BuildAccess;
    int width() const { return 2 * n_ + 2; }
    std::int64_t node_index(int k, std::int64_t lab) const {
        return (lab * (ns_ + pad_ + 1) + (k + pad_)) * width();
    }
};

struct FlowBuildOptions {
    int ns = 192;        // number of forward s-nodes
    int pad = 3;         // backward pad nodes (for interpolation near s = 0)
    double t_margin = 0.02;
    double rk_substeps = 4;  // RK4 substeps per s-node interval
};

// Flow of the characteristic field of `phase` seeded at (t_start, y) for y in
// the seed lattice; rays are cut at the boundary x1 = 0 (exit recorded) or at
// t = t_end.  The Jacobian sign is checked on the lattice.
FlowMap build_incoming_flow(const SymbolModel& model, const JetField& phase,
                            const LabelGrid& seeds, double t_start, double t_end,
                            const FlowBuildOptions& opts = {});

// Reflected flow seeded on the boundary patch lattice (t0, x0') with covector
// (d_t phi, -d_{x1} phi, d_{x'} phi); rays run to t = t_end.
// `grazing_margin` masks the Jacobian sign check near the grazing edge.
FlowMap build_reflected_flow(const SymbolModel& model, const JetField& phase_i,
                             const LabelGrid& boundary_patch, double t_end,
                             const std::function<double(std::span<const double>)>&
                                 grazing_margin,
                             const FlowBuildOptions& opts = {});

}  // namespace pulses
