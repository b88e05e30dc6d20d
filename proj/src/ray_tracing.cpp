#include "pulses/ray_tracing.hpp"

#include <algorithm>
#include <cmath>

namespace pulses {

std::span<const double> Bicharacteristic::state(std::size_t i) const {
    const std::size_t w = 2 * n_ + 2;
    return {states_.data() + i * w, w};
}

PhaseSpacePoint Bicharacteristic::point(std::size_t i) const {
    const auto st = state(i);
    PhaseSpacePoint p;
    p.t = st[0];
    p.x.assign(st.begin() + 1, st.begin() + 1 + n_);
    p.tau = st[1 + n_];
    p.xi.assign(st.begin() + n_ + 2, st.end());
    return p;
}

void Bicharacteristic::append(double s, std::span<const double> state) {
    require(static_cast<int>(state.size()) == 2 * n_ + 2, "Bicharacteristic: bad state size");
    s_.push_back(s);
    states_.insert(states_.end(), state.begin(), state.end());
}

void Bicharacteristic::reverse_in_place() {
    const std::size_t w = 2 * n_ + 2, m = s_.size();
    std::reverse(s_.begin(), s_.end());
    std::vector<double> tmp(states_.size());
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(states_.begin() + (m - 1 - i) * w, w, tmp.begin() + i * w);
    states_.swap(tmp);
}

std::vector<double> Bicharacteristic::state_at(double s) const {
    const std::size_t w = 2 * n_ + 2, m = s_.size();
    require(m >= 2, "Bicharacteristic: too few samples");
    auto it = std::upper_bound(s_.begin(), s_.end(), s);
    int i = static_cast<int>(it - s_.begin()) - 1;
    i = std::clamp(i, 0, static_cast<int>(m) - 2);
    if (m < 4) {  // linear fallback for very short rays
        const double f = (s - s_[i]) / (s_[i + 1] - s_[i]);
        std::vector<double> out(w);
        const double* a = states_.data() + static_cast<std::size_t>(i) * w;
        const double* b = a + w;
        for (std::size_t c = 0; c < w; ++c) out[c] = (1.0 - f) * a[c] + f * b[c];
        return out;
    }
    // cubic through four distinct consecutive samples (non-uniform Lagrange)
    const int js = lagrange4_start(i, static_cast<int>(m));
    const int idx[4] = {js, js + 1, js + 2, js + 3};
    double lw[4];
    for (int a = 0; a < 4; ++a) {
        double num = 1.0, den = 1.0;
        for (int b = 0; b < 4; ++b) {
            if (a == b) continue;
            num *= s - s_[idx[b]];
            den *= s_[idx[a]] - s_[idx[b]];
        }
        lw[a] = num / den;
    }
    std::vector<double> out(w, 0.0);
    for (int a = 0; a < 4; ++a) {
        const double* st = states_.data() + static_cast<std::size_t>(idx[a]) * w;
        for (std::size_t c = 0; c < w; ++c) out[c] += lw[a] * st[c];
    }
    return out;
}

double Bicharacteristic::conservation_drift(const SymbolModel& model) const {
    double p0 = 0.0, drift = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        const double p = model.principal(point(i));
        if (i == 0) p0 = p;
        drift = std::max(drift, std::abs(p - p0));
    }
    double scale = 0.0;
    const auto st0 = state(0);
    for (double c : st0.subspan(1 + n_)) scale += c * c;
    return drift / std::max(scale, 1e-12);
}

namespace {

struct Stepper {
    const SymbolModel& model;
    int n;
    std::vector<double> work;

    explicit Stepper(const SymbolModel& m) : model(m), n(m.dim()), work(5 * (2 * m.dim() + 2)) {}

    void field(std::span<const double> st, std::span<double> d) {
        PhaseSpacePoint p;
        p.t = st[0];
        p.x.assign(st.begin() + 1, st.begin() + 1 + n);
        p.tau = st[1 + n];
        p.xi.assign(st.begin() + n + 2, st.end());
        model.hamiltonian(p, d);
    }

    void step(std::span<double> st, double h) {
        OdeField f = [this](double, std::span<const double> y, std::span<double> d) {
            field(y, d);
        };
        rk4_step(f, 0.0, h, st, work);
    }
};

}  // namespace

Bicharacteristic integrate_bicharacteristic(const SymbolModel& model,
                                            const PhaseSpacePoint& start, double s_min,
                                            double s_max, const RayOptions& opts,
                                            double char_tol) {
    const int n = model.dim();
    require(start.dim() == n, "integrate_bicharacteristic: dimension mismatch");
    require(s_min <= 0.0 && s_max >= 0.0, "integrate_bicharacteristic: s range must contain 0");
    const double p0 = model.principal(start);
    double cov2 = start.tau * start.tau;
    for (double c : start.xi) cov2 += c * c;
    require(std::abs(p0) < char_tol * std::max(1.0, cov2),
            "integrate_bicharacteristic: start point is not characteristic");

    const double range = s_max - s_min;
    const double base = opts.base_step > 0 ? opts.base_step : range / 2000.0;
    const double guard = opts.guard_radius > 0 ? opts.guard_radius : 4.0 * model.const_radius();

    const std::size_t w = 2 * n + 2;
    std::vector<double> st0(w);
    st0[0] = start.t;
    std::copy(start.x.begin(), start.x.end(), st0.begin() + 1);
    st0[1 + n] = start.tau;
    std::copy(start.xi.begin(), start.xi.end(), st0.begin() + n + 2);

    auto march = [&](double dir, double s_end) {
        Bicharacteristic leg(n);
        Stepper stp(model);
        std::vector<double> st = st0;
        double s = 0.0;
        leg.append(s, st);
        while (dir * (s_end - s) > 1e-14) {
            double h = base;
            const double ax1 = std::abs(st[1]);
            if (ax1 < opts.boundary_zone / 8.0) h = base / 16.0;
            else if (ax1 < opts.boundary_zone) h = base / 4.0;
            h = std::min(h, std::abs(s_end - s));
            std::vector<double> prev = st;
            stp.step(st, dir * h);
            const double s_new = s + dir * h;
            double r2 = st[0] * st[0];
            for (int i = 0; i < n; ++i) r2 += st[1 + i] * st[1 + i];
            if (std::sqrt(r2) > guard)
                throw error("integrate_bicharacteristic: trajectory left the compact coefficient region");
            if (prev[1] != 0.0 && st[1] * prev[1] < 0.0) {
                // boundary crossing: bisection from the last pre-crossing state
                double a = s, b = s_new;
                std::vector<double> sta = prev;
                while (std::abs(b - a) > opts.event_tol) {
                    const double mid = 0.5 * (a + b);
                    std::vector<double> stm = sta;
                    stp.step(stm, mid - a);
                    if (stm[1] * sta[1] >= 0.0) {
                        a = mid;
                        sta = stm;
                    } else {
                        b = mid;
                    }
                }
                leg.add_event({a, RayEvent::Kind::crossing});
                leg.append(a, sta);
                if (opts.stop_at_crossing) return leg;
            }
            s = s_new;
            leg.append(s, st);
        }
        return leg;
    };

    if (s_min == 0.0) {
        Bicharacteristic fwd = march(+1.0, s_max);
        // tangency at the start point itself
        if (std::abs(st0[1]) < 1e-12 && std::abs(st0[n + 2]) < 1e-10)
            fwd.add_event({0.0, RayEvent::Kind::tangency});
        return fwd;
    }
    Bicharacteristic bwd = march(-1.0, s_min);
    bwd.reverse_in_place();
    Bicharacteristic fwd = march(+1.0, s_max);
    Bicharacteristic out(n);
    for (std::size_t i = 0; i < bwd.size(); ++i) out.append(bwd.s_at(i), bwd.state(i));
    for (std::size_t i = 1; i < fwd.size(); ++i) out.append(fwd.s_at(i), fwd.state(i));
    for (const auto& e : bwd.events()) out.add_event(e);
    for (const auto& e : fwd.events()) out.add_event(e);
    if (std::abs(st0[1]) < 1e-12 && std::abs(st0[n + 2]) < 1e-10)
        out.add_event({0.0, RayEvent::Kind::tangency});
    // interior tangencies: local minima of |x1| touching zero
    for (std::size_t i = 1; i + 1 < out.size(); ++i) {
        const double xm = out.state(i)[1];
        if (std::abs(xm) < 1e-9 && std::abs(out.state(i)[n + 2]) < 1e-6 &&
            std::abs(out.s_at(i)) > 1e-12)
            out.add_event({out.s_at(i), RayEvent::Kind::tangency});
    }
    return out;
}

namespace {

struct ProbeFit {
    std::vector<double> coeff;  // x1(s) ~ sum_j coeff[j] (s/s_probe)^j
    double scale = 0.0;
};

ProbeFit fit_normal_coordinate(const SymbolModel& model, const PhaseSpacePoint& rho,
                               int max_order, double s_probe) {
    RayOptions opts;
    opts.base_step = s_probe / 256.0;
    opts.boundary_zone = 0.0;  // tangential probe: no event refinement wanted
    Bicharacteristic ray = integrate_bicharacteristic(model, rho, -s_probe, s_probe, opts);
    const int npts = 4 * (max_order + 4);
    ProbeFit out;
    std::vector<double> u(npts), x1(npts);
    for (int i = 0; i < npts; ++i) {
        u[i] = -1.0 + 2.0 * i / (npts - 1);
        x1[i] = ray.state_at(u[i] * s_probe)[1];
        out.scale = std::max(out.scale, std::abs(x1[i]));
    }
    out.coeff = polyfit(u, x1, max_order);
    return out;
}

}  // namespace

GrazingClassification grazing_order(const SymbolModel& model, const PhaseSpacePoint& rho,
                                    int max_order, double s_probe, double rel_threshold) {
    require(std::abs(rho.x[0]) < 1e-10, "grazing_order: point not on the boundary");
    require(std::abs(rho.xi[0]) < 1e-10, "grazing_order: point not glancing (xi1 != 0)");

    // Two-scale fit: a genuine j-th derivative contributes coeff[j] ~ c s^j, so
    // halving the probe rescales it by 2^-j.  Least-squares leakage from terms
    // beyond the fit degree rescales much faster and is rejected by the ratio
    // test below.
    const ProbeFit full = fit_normal_coordinate(model, rho, max_order, s_probe);
    const ProbeFit half = fit_normal_coordinate(model, rho, max_order, 0.5 * s_probe);

    GrazingClassification out;
    double xref = 1.0 + std::abs(rho.t);
    for (double c : rho.x) xref += std::abs(c);
    if (full.scale < 1e-13 * xref || half.scale < 1e-13 * xref) {
        out.at_least_max = true;
        return out;
    }
    for (int j = 1; j <= max_order; ++j) {
        const double bf = full.coeff[j], bh = half.coeff[j];
        if (std::abs(bf) <= rel_threshold * full.scale ||
            std::abs(bh) <= rel_threshold * half.scale)
            continue;
        const double ratio = bf / bh;
        const double expected = std::pow(2.0, j);
        if (std::abs(ratio / expected - 1.0) > 0.5) continue;
        out.order = j;
        // coeff[j] = (d/ds)^j x1 / j! * s_probe^j
        double fact = 1.0;
        for (int k = 2; k <= j; ++k) fact *= k;
        out.leading_coeff = bf * fact / std::pow(s_probe, j);
        out.diffractive = (j % 2 == 0) && (bf > 0.0) && j >= 2;
        return out;
    }
    out.at_least_max = true;
    return out;
}

double GrazingSetModel::xi_value(double t, double xtan) const {
    double p = 0.0, tp = 1.0;
    for (double c : xi_poly) {
        p += c * tp;
        tp *= t;
    }
    return xtan - p;
}

std::vector<double> GrazingSetModel::xi_gradient(double t) const {
    double dp = 0.0, tp = 1.0;
    for (std::size_t j = 1; j < xi_poly.size(); ++j) {
        dp += static_cast<double>(j) * xi_poly[j] * tp;
        tp *= t;
    }
    return {-dp, 0.0, 1.0};
}

GrazingSetModel locate_grazing_set(const SymbolModel& model, const JetField& phase_jet,
                                   const BoundaryWindow& window, int max_order) {
    const int n = model.dim();
    require(n == 2, "locate_grazing_set: implemented for n = 2");
    GrazingSetModel out;

    std::vector<double> x(2), grad(n + 1);
    auto dx1_phi = [&](double t, double xtan) {
        x[0] = 0.0;
        x[1] = xtan;
        double v;
        phase_jet(t, x, v, grad);
        return grad[1];
    };

    const double ht = (window.t_hi - window.t_lo) / (window.nt - 1);
    const double hx = (window.xtan_hi - window.xtan_lo) / (window.nxtan - 1);
    for (int it = 0; it < window.nt; ++it) {
        const double t = window.t_lo + it * ht;
        double prev = dx1_phi(t, window.xtan_lo);
        for (int ix = 1; ix < window.nxtan; ++ix) {
            const double xr = window.xtan_lo + ix * hx;
            const double cur = dx1_phi(t, xr);
            if (prev == 0.0 || prev * cur < 0.0 || cur == 0.0) {
                double a = xr - hx, b = xr, fa = prev;
                for (int k = 0; k < 80 && b - a > 1e-13; ++k) {
                    const double mid = 0.5 * (a + b), fm = dx1_phi(t, mid);
                    if (fa * fm <= 0.0) b = mid;
                    else { a = mid; fa = fm; }
                }
                out.t_samples.push_back(t);
                out.xtan_samples.push_back(0.5 * (a + b));
                prev = cur;
                continue;
            }
            prev = cur;
        }
    }
    if (out.t_samples.empty()) throw error("locate_grazing_set: no roots in window");

    const int deg = std::min<int>(2, static_cast<int>(out.t_samples.size()) - 1);
    out.xi_poly = polyfit(out.t_samples, out.xtan_samples, deg);

    // transversality of T_phi against {Xi = 0} at the root nearest the origin
    std::size_t anchor = 0;
    for (std::size_t i = 1; i < out.t_samples.size(); ++i)
        if (std::hypot(out.t_samples[i], out.xtan_samples[i]) <
            std::hypot(out.t_samples[anchor], out.xtan_samples[anchor]))
            anchor = i;
    {
        const double t = out.t_samples[anchor];
        x[0] = 0.0;
        x[1] = out.xtan_samples[anchor];
        double v;
        phase_jet(t, x, v, grad);
        PhaseSpacePoint p;
        p.t = t;
        p.x = x;
        p.tau = grad[0];
        p.xi = {grad[1], grad[2]};
        const auto h = model.hamiltonian(p);
        // T_phi components over (t, x1, x'); dXi over the same slots
        const auto dxi = out.xi_gradient(t);
        out.transversality_margin =
            std::abs(h[0] * dxi[0] + h[1] * dxi[1] + h[2] * dxi[2]);
    }

    bool all_diffractive = true;
    for (std::size_t i = 0; i < out.t_samples.size(); i += std::max<std::size_t>(1, out.t_samples.size() / 8)) {
        const double t = out.t_samples[i];
        x[0] = 0.0;
        x[1] = out.xtan_samples[i];
        double v;
        phase_jet(t, x, v, grad);
        PhaseSpacePoint p;
        p.t = t;
        p.x = x;
        p.tau = grad[0];
        p.xi = {0.0, grad[2]};  // glancing representative
        const auto cls = grazing_order(model, p, max_order);
        out.classifications.push_back(cls);
        if (!cls.diffractive && !cls.at_least_max) all_diffractive = false;
    }
    out.a02_verified = out.transversality_margin > 1e-6 && all_diffractive;
    return out;
}

}  // namespace pulses
