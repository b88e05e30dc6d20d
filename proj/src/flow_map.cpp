#include "pulses/flow_map.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pulses {

namespace {

// field of the full bicharacteristic system (state = t, x, tau, xi)
void hamilton_field(const SymbolModel& model, std::span<const double> st, std::span<double> d) {
    const int n = model.dim();
    PhaseSpacePoint p;
    p.t = st[0];
    p.x.assign(st.begin() + 1, st.begin() + 1 + n);
    p.tau = st[1 + n];
    p.xi.assign(st.begin() + n + 2, st.end());
    model.hamiltonian(p, d);
}

// field of the characteristic vector field of a phase: positions move with
// T_phi, the covector slots follow the phase gradient (state as above)
void transport_field(const SymbolModel& model, const JetField& phase,
                     std::span<const double> st, std::span<double> d) {
    const int n = model.dim();
    std::vector<double> grad(n + 1);
    double value;
    std::span<const double> x(st.data() + 1, n);
    phase(st[0], x, value, grad);
    std::vector<double> z(n), gz(n);
    z[0] = grad[0];
    for (int i = 1; i < n; ++i) z[i] = grad[i + 1];
    model.form(st[0], x).grad(z, gz);
    d[0] = gz[0];
    d[1] = 2.0 * grad[1];
    for (int i = 1; i < n; ++i) d[1 + i] = gz[i];
    // covector slots: recomputed from the phase at every node, so their
    // derivative is taken along the motion by finite update in the stepper
    for (int i = 0; i <= n; ++i) d[n + 1 + i] = 0.0;
}

struct RaySampler {
    const SymbolModel& model;
    const JetField* phase;  // non-null: transport flow, covector = d(phase)
    std::vector<double> work;

    RaySampler(const SymbolModel& m, const JetField* ph)
        : model(m), phase(ph), work(5 * (2 * m.dim() + 2)) {}

    void refresh_covector(std::span<double> st) {
        if (!phase) return;
        const int n = model.dim();
        double value;
        std::vector<double> grad(n + 1);
        std::span<const double> x(st.data() + 1, n);
        (*phase)(st[0], x, value, grad);
        st[n + 1] = grad[0];
        st[n + 2] = grad[1];
        for (int i = 1; i < n; ++i) st[n + 2 + i] = grad[i + 1];
    }

    void step(std::span<double> st, double h) {
        OdeField f = [this](double, std::span<const double> y, std::span<double> d) {
            if (phase)
                transport_field(model, *phase, y, d);
            else
                hamilton_field(model, y, d);
        };
        rk4_step(f, 0.0, h, st, work);
        refresh_covector(st);
    }
};

}  // namespace

struct FlowMap::BuildAccess {
    static FlowMap build(const SymbolModel& model, const JetField* phase, Kind kind,
                         const LabelGrid& labels, double t_end,
                         const std::function<std::vector<double>(std::array<double, 2>)>&
                             seed_state,
                         const FlowBuildOptions& opts) {
        FlowMap fm;
        fm.kind_ = kind;
        fm.n_ = model.dim();
        fm.labels_ = labels;
        fm.pad_ = opts.pad;
        const int w = fm.width();
        const std::int64_t nl = labels.total();

        // pass 1: estimate the common s extent from a coarse integration of the
        // corner and center rays
        double s_needed = 0.0;
        {
            std::vector<std::int64_t> probes{0, nl - 1, nl / 2};
            if (labels.m > 1) {
                probes.push_back(labels.count[0] - 1);
                probes.push_back(nl - labels.count[0]);
            }
            for (const auto lab : probes) {
                RaySampler smp(model, phase);
                std::vector<double> st = seed_state(labels.at(lab));
                double s = 0.0;
                const double h = 0.01 * (t_end - st[0] + 1.0);
                int guard = 0;
                while (st[0] < t_end + opts.t_margin && guard++ < 100000) {
                    smp.step(st, h);
                    s += h;
                }
                require(guard < 100000, "flow build: rays do not reach the final time");
                s_needed = std::max(s_needed, s);
            }
        }
        fm.ns_ = opts.ns;
        fm.ds_ = s_needed / opts.ns;

        fm.cache_.assign(static_cast<std::size_t>(nl) * (opts.ns + opts.pad + 1) * w, 0.0);
        fm.exit_s_.assign(nl, 0.0);
        fm.exit_kind_.assign(nl, ExitKind::time_cap);
        fm.exit_states_.assign(static_cast<std::size_t>(nl) * w, 0.0);

        const double hsub = fm.ds_ / opts.rk_substeps;
        for (std::int64_t lab = 0; lab < nl; ++lab) {
            RaySampler smp(model, phase);
            std::vector<double> st = seed_state(labels.at(lab));
            smp.refresh_covector(st);
            // backward pad
            {
                std::vector<double> bk = st;
                for (int k = -1; k >= -opts.pad; --k) {
                    for (int i = 0; i < opts.rk_substeps; ++i) smp.step(bk, -hsub);
                    std::copy(bk.begin(), bk.end(),
                              fm.cache_.begin() + fm.node_index(k, lab));
                }
            }
            std::copy(st.begin(), st.end(), fm.cache_.begin() + fm.node_index(0, lab));
            bool exited = false;
            double s = 0.0;
            for (int k = 1; k <= opts.ns; ++k) {
                for (int i = 0; i < opts.rk_substeps; ++i) {
                    std::vector<double> prev = st;
                    const double sp = s;
                    smp.step(st, hsub);
                    s += hsub;
                    if (!exited && prev[1] > 0.0 && st[1] <= 0.0) {
                        // boundary exit: bisect for the crossing
                        double a = sp, b = s;
                        std::vector<double> sta = prev;
                        while (b - a > 1e-12) {
                            const double mid = 0.5 * (a + b);
                            std::vector<double> stm = sta;
                            smp.step(stm, mid - a);
                            if (stm[1] > 0.0) {
                                a = mid;
                                sta = stm;
                            } else {
                                b = mid;
                            }
                        }
                        exited = true;
                        fm.exit_s_[lab] = a;
                        fm.exit_kind_[lab] = ExitKind::boundary;
                        std::copy(sta.begin(), sta.end(),
                                  fm.exit_states_.begin() + lab * w);
                    }
                    if (!exited && prev[0] < t_end && st[0] >= t_end) {
                        // time cap: linear fraction is enough for bookkeeping,
                        // refined by one secant pass
                        double a = sp, b = s;
                        std::vector<double> sta = prev;
                        while (b - a > 1e-12) {
                            const double mid = 0.5 * (a + b);
                            std::vector<double> stm = sta;
                            smp.step(stm, mid - a);
                            if (stm[0] < t_end) {
                                a = mid;
                                sta = stm;
                            } else {
                                b = mid;
                            }
                        }
                        exited = true;
                        fm.exit_s_[lab] = a;
                        fm.exit_kind_[lab] = ExitKind::time_cap;
                        std::copy(sta.begin(), sta.end(),
                                  fm.exit_states_.begin() + lab * w);
                    }
                }
                std::copy(st.begin(), st.end(), fm.cache_.begin() + fm.node_index(k, lab));
            }
            if (!exited) {
                fm.exit_s_[lab] = fm.s_max();
                fm.exit_kind_[lab] = ExitKind::time_cap;
                std::copy_n(fm.cache_.begin() + fm.node_index(opts.ns, lab), w,
                            fm.exit_states_.begin() + lab * w);
            }
        }
        return fm;
    }
};

std::span<const double> FlowMap::node(int k, std::int64_t lab) const {
    return {cache_.data() + node_index(k, lab), static_cast<std::size_t>(width())};
}

std::span<const double> FlowMap::exit_state(std::int64_t lab) const {
    return {exit_states_.data() + lab * width(), static_cast<std::size_t>(width())};
}

namespace {

struct StencilAxis {
    int start = 0;       // first node index (in padded k-units or label units)
    double local = 0.0;  // Lagrange coordinate in [0,3]
};

StencilAxis axis_stencil(double coord, double lo, double h, int count) {
    double u = (coord - lo) / h;
    int i = static_cast<int>(std::floor(u));
    i = std::clamp(i, 0, count - 2);
    const int js = lagrange4_start(i, count);
    return {js, u - js};
}

}  // namespace

void FlowMap::state(double s, std::span<const double> label, std::span<double> out) const {
    const int w = width();
    require(static_cast<int>(out.size()) == w, "FlowMap::state: bad output size");
    const int nk = ns_ + pad_ + 1;
    const auto ax_s = axis_stencil(s, -pad_ * ds_, ds_, nk);
    const auto ws = lagrange4_weights(ax_s.local);
    const auto ax_0 = axis_stencil(label[0], labels_.lo[0], labels_.h[0], labels_.count[0]);
    const auto w0 = lagrange4_weights(ax_0.local);
    std::fill(out.begin(), out.end(), 0.0);
    if (labels_.m == 1) {
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
                const double wt = ws[a] * w0[b];
                const double* nd =
                    cache_.data() + node_index(ax_s.start + a - pad_, ax_0.start + b);
                for (int c = 0; c < w; ++c) out[c] += wt * nd[c];
            }
        return;
    }
    const auto ax_1 = axis_stencil(label[1], labels_.lo[1], labels_.h[1], labels_.count[1]);
    const auto w1 = lagrange4_weights(ax_1.local);
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            for (int c2 = 0; c2 < 4; ++c2) {
                const double wt = ws[a] * w0[b] * w1[c2];
                const std::int64_t lab =
                    (ax_0.start + b) +
                    static_cast<std::int64_t>(labels_.count[0]) * (ax_1.start + c2);
                const double* nd = cache_.data() + node_index(ax_s.start + a - pad_, lab);
                for (int c = 0; c < w; ++c) out[c] += wt * nd[c];
            }
}

void FlowMap::position(double s, std::span<const double> label, std::span<double> out) const {
    std::vector<double> full(width());
    state(s, label, full);
    std::copy_n(full.begin(), n_ + 1, out.begin());
}

void FlowMap::position_jacobian(double s, std::span<const double> label,
                                std::span<double> out) const {
    const int rows = n_ + 1, cols = 1 + labels_.m;
    require(static_cast<int>(out.size()) == rows * cols, "position_jacobian: bad size");
    const int nk = ns_ + pad_ + 1;
    const auto ax_s = axis_stencil(s, -pad_ * ds_, ds_, nk);
    const auto ax_0 = axis_stencil(label[0], labels_.lo[0], labels_.h[0], labels_.count[0]);
    const auto ws = lagrange4_weights(ax_s.local), dws = lagrange4_weights_deriv(ax_s.local);
    const auto w0 = lagrange4_weights(ax_0.local), dw0 = lagrange4_weights_deriv(ax_0.local);
    std::fill(out.begin(), out.end(), 0.0);
    const int w = width();
    if (labels_.m == 1) {
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
                const double* nd =
                    cache_.data() + node_index(ax_s.start + a - pad_, ax_0.start + b);
                for (int r = 0; r < rows; ++r) {
                    out[r * cols + 0] += dws[a] * w0[b] / ds_ * nd[r];
                    out[r * cols + 1] += ws[a] * dw0[b] / labels_.h[0] * nd[r];
                }
            }
        return;
    }
    const auto ax_1 = axis_stencil(label[1], labels_.lo[1], labels_.h[1], labels_.count[1]);
    const auto w1 = lagrange4_weights(ax_1.local), dw1 = lagrange4_weights_deriv(ax_1.local);
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            for (int c2 = 0; c2 < 4; ++c2) {
                const std::int64_t lab =
                    (ax_0.start + b) +
                    static_cast<std::int64_t>(labels_.count[0]) * (ax_1.start + c2);
                const double* nd = cache_.data() + node_index(ax_s.start + a - pad_, lab);
                for (int r = 0; r < rows; ++r) {
                    out[r * cols + 0] += dws[a] * w0[b] * w1[c2] / ds_ * nd[r];
                    out[r * cols + 1] += ws[a] * dw0[b] * w1[c2] / labels_.h[0] * nd[r];
                    out[r * cols + 2] += ws[a] * w0[b] * dw1[c2] / labels_.h[1] * nd[r];
                }
            }
}

double FlowMap::jacobian_det(double s, std::span<const double> label) const {
    const int m = 1 + labels_.m;
    std::vector<double> j((n_ + 1) * m);
    position_jacobian(s, label, j);
    require(n_ + 1 == m, "jacobian_det: non-square flow Jacobian");
    if (m == 2) return j[0] * j[3] - j[1] * j[2];
    return j[0] * (j[4] * j[8] - j[5] * j[7]) - j[1] * (j[3] * j[8] - j[5] * j[6]) +
           j[2] * (j[3] * j[7] - j[4] * j[6]);
}

InverseResult FlowMap::invert(double t, std::span<const double> x, const InverseResult* warm,
                              double tol, int max_iter) const {
    const int m = labels_.m;
    require(n_ == m, "FlowMap::invert: flow is not square");
    InverseResult cur;
    if (warm && warm->ok) {
        cur = *warm;
    } else {
        // cold start: scan a decimated lattice
        double best = std::numeric_limits<double>::infinity();
        const int stride_k = std::max(1, ns_ / 16);
        const std::int64_t stride_l = std::max<std::int64_t>(1, labels_.total() / 256);
        for (int k = 0; k <= ns_; k += stride_k)
            for (std::int64_t lab = 0; lab < labels_.total(); lab += stride_l) {
                const auto nd = node(k, lab);
                double d2 = (nd[0] - t) * (nd[0] - t);
                for (int i = 0; i < n_; ++i) d2 += (nd[1 + i] - x[i]) * (nd[1 + i] - x[i]);
                if (d2 < best) {
                    best = d2;
                    cur.s = k * ds_;
                    const auto lc = labels_.at(lab);
                    cur.label = lc;
                }
            }
    }
    const int rows = n_ + 1;
    std::vector<double> pos(rows), jac(rows * rows), rhs(rows);
    const auto lhi = labels_.hi();
    for (cur.iterations = 0; cur.iterations < max_iter; ++cur.iterations) {
        std::array<double, 2> lb{cur.label[0], cur.label[1]};
        position(cur.s, std::span<const double>(lb.data(), m), pos);
        rhs[0] = pos[0] - t;
        for (int i = 0; i < n_; ++i) rhs[1 + i] = pos[1 + i] - x[i];
        double r2 = 0.0;
        for (double v : rhs) r2 += v * v;
        cur.residual = std::sqrt(r2);
        if (cur.residual < tol) {
            cur.ok = true;
            return cur;
        }
        position_jacobian(cur.s, std::span<const double>(lb.data(), m), jac);
        std::vector<double> a(jac);
        try {
            solve_dense(a, rhs, rows);
        } catch (const error&) {
            break;
        }
        cur.s -= rhs[0];
        for (int i = 0; i < m; ++i) cur.label[i] -= rhs[1 + i];
        // keep the iterate inside the cached box (half-cell slack)
        cur.s = std::clamp(cur.s, s_min() + 1e-12, s_max() - 1e-12);
        for (int i = 0; i < m; ++i)
            cur.label[i] = std::clamp(cur.label[i], labels_.lo[i] - 0.49 * labels_.h[i],
                                      lhi[i] + 0.49 * labels_.h[i]);
    }
    cur.ok = false;
    return cur;
}

double FlowMap::exit_s_at(std::span<const double> label) const {
    if (labels_.m == 1)
        return interp_cubic(exit_s_, labels_.lo[0], labels_.h[0], label[0]);
    // separable cubic over the 2-d label lattice
    const auto ax0 = axis_stencil(label[0], labels_.lo[0], labels_.h[0], labels_.count[0]);
    const auto ax1 = axis_stencil(label[1], labels_.lo[1], labels_.h[1], labels_.count[1]);
    const auto w0 = lagrange4_weights(ax0.local), w1 = lagrange4_weights(ax1.local);
    double r = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            r += w0[a] * w1[b] *
                 exit_s_[(ax0.start + a) +
                         static_cast<std::int64_t>(labels_.count[0]) * (ax1.start + b)];
    return r;
}

bool FlowMap::in_domain(double s, std::span<const double> label, double tol) const {
    if (s < -tol || s > exit_s_at(label) + tol) return false;
    const auto lhi = labels_.hi();
    for (int i = 0; i < labels_.m; ++i)
        if (label[i] < labels_.lo[i] - tol || label[i] > lhi[i] + tol) return false;
    return true;
}

double FlowMap::roundtrip_error(unsigned seed, int samples) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.05, 0.95);
    double worst = 0.0;
    InverseResult warm;
    for (int trial = 0; trial < samples; ++trial) {
        std::array<double, 2> lab;
        const auto lhi = labels_.hi();
        for (int i = 0; i < labels_.m; ++i)
            lab[i] = labels_.lo[i] + (lhi[i] - labels_.lo[i]) * u01(rng);
        std::span<const double> lb(lab.data(), labels_.m);
        const double se = exit_s_at(lb);
        if (se <= 0.0) continue;
        const double s = se * u01(rng);
        std::vector<double> pos(n_ + 1);
        position(s, lb, pos);
        const auto inv = invert(pos[0], std::span<const double>(pos.data() + 1, n_));
        if (!inv.ok) {
            worst = std::numeric_limits<double>::infinity();
            continue;
        }
        double err = std::abs(inv.s - s);
        for (int i = 0; i < labels_.m; ++i) err = std::max(err, std::abs(inv.label[i] - lab[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

void FlowMap::certify_injective(
    const std::function<double(std::span<const double>)>& edge_margin, const char* what) const {
    double ref = 0.0;
    for (std::int64_t lab = 0; lab < labels_.total(); ++lab) {
        const auto lc = labels_.at(lab);
        std::span<const double> lb(lc.data(), labels_.m);
        if (edge_margin && edge_margin(lb) <= 0.0) continue;
        const double se = exit_s_at(lb);
        for (int k = 0; k <= ns_; ++k) {
            const double s = k * ds_;
            if (s > se) break;
            const double det = jacobian_det(std::max(s, 1e-3 * ds_), lb);
            if (ref == 0.0) ref = det;
            if (det * ref <= 0.0) throw error(what);
        }
    }
}

FlowMap build_incoming_flow(const SymbolModel& model, const JetField& phase,
                            const LabelGrid& seeds, double t_start, double t_end,
                            const FlowBuildOptions& opts) {
    const int n = model.dim();
    require(seeds.m == n, "build_incoming_flow: label dimension must match space dimension");
    auto seed_state = [&](std::array<double, 2> lab) {
        std::vector<double> st(2 * n + 2, 0.0);
        st[0] = t_start;
        for (int i = 0; i < n; ++i) st[1 + i] = lab[i];
        return st;  // covector slots refreshed from the phase
    };
    FlowMap fm = FlowMap::BuildAccess::build(model, &phase, FlowMap::Kind::incoming, seeds,
                                             t_end, seed_state, opts);
    fm.certify_injective(nullptr, "build_incoming_flow: Z not injective (Jacobian sign change)");
    return fm;
}

FlowMap build_reflected_flow(const SymbolModel& model, const JetField& phase_i,
                             const LabelGrid& boundary_patch, double t_end,
                             const std::function<double(std::span<const double>)>&
                                 grazing_margin,
                             const FlowBuildOptions& opts) {
    const int n = model.dim();
    require(boundary_patch.m == n,
            "build_reflected_flow: labels must be (t0, x') with m = n");
    auto seed_state = [&, n](std::array<double, 2> lab) {
        // label = (t0, x0'); seed on the boundary with flipped normal covector
        std::vector<double> st(2 * n + 2, 0.0);
        st[0] = lab[0];
        st[1] = 0.0;
        if (n > 1) st[2] = lab[1];
        double value;
        std::vector<double> grad(n + 1);
        std::span<const double> x(st.data() + 1, n);
        phase_i(lab[0], x, value, grad);
        st[n + 1] = grad[0];
        st[n + 2] = -grad[1];
        for (int i = 1; i < n; ++i) st[n + 2 + i] = grad[i + 1];
        return st;
    };
    FlowMap fm = FlowMap::BuildAccess::build(model, nullptr, FlowMap::Kind::reflected,
                                             boundary_patch, t_end, seed_state, opts);
    fm.certify_injective(grazing_margin,
                         "build_reflected_flow: Jacobian sign change off the grazing set "
                         "(reflected flow assumption violated)");
    return fm;
}

}  // namespace pulses
