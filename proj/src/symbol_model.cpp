#include "pulses/symbol_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pulses {

double QuadraticForm::eval(std::span<const double> z) const {
    const int m = static_cast<int>(z.size());
    double r = cst;
    for (int i = 0; i < m; ++i) {
        double row = 0.0;
        for (int j = 0; j < m; ++j) row += a[i * m + j] * z[j];
        r += z[i] * row;
    }
    if (!lin.empty())
        for (int i = 0; i < m; ++i) r += lin[i] * z[i];
    return r;
}

void QuadraticForm::grad(std::span<const double> z, std::span<double> out) const {
    const int m = static_cast<int>(z.size());
    for (int i = 0; i < m; ++i) {
        double row = 0.0;
        for (int j = 0; j < m; ++j) row += a[i * m + j] * z[j];
        out[i] = 2.0 * row + (lin.empty() ? 0.0 : lin[i]);
    }
}

SymbolModel::SymbolModel(std::string id, int n, FormField form)
    : id_(std::move(id)), n_(n), form_(std::move(form)) {
    require(n_ >= 1, "SymbolModel: dimension must be >= 1");
}

double SymbolModel::q(double t, std::span<const double> x, double tau,
                      std::span<const double> xi_tan) const {
    std::vector<double> z(n_);
    z[0] = tau;
    for (int i = 1; i < n_; ++i) z[i] = xi_tan[i - 1];
    return form_(t, x).eval(z);
}

double SymbolModel::principal(const PhaseSpacePoint& p) const {
    require(p.dim() == n_ && static_cast<int>(p.xi.size()) == n_,
            "eval_symbol: dimension mismatch");
    std::vector<double> z(n_);
    z[0] = p.tau;
    for (int i = 1; i < n_; ++i) z[i] = p.xi[i];
    return p.xi[0] * p.xi[0] + form_(p.t, p.x).eval(z);
}

double SymbolModel::principal_at(double t, std::span<const double> x,
                                 std::span<const double> grad) const {
    require(static_cast<int>(grad.size()) == n_ + 1, "principal_at: bad jet size");
    std::vector<double> z(n_);
    z[0] = grad[0];
    for (int i = 1; i < n_; ++i) z[i] = grad[i + 1];
    return grad[1] * grad[1] + form_(t, x).eval(z);
}

double SymbolModel::q_jet_deriv(int dir, double t, std::span<const double> x,
                                std::span<const double> z) const {
    if (form_deriv_) return form_deriv_(dir, t, x).eval(z);
    // central differences on the coefficient field
    std::vector<double> xs(x.begin(), x.end());
    if (dir == 0) {
        const double h = fd_step(t);
        const double qp = form_(t + h, x).eval(z), qm = form_(t - h, x).eval(z);
        return (qp - qm) / (2.0 * h);
    }
    const int k = dir - 1;
    const double h = fd_step(xs[k]);
    xs[k] += h;
    const double qp = form_(t, xs).eval(z);
    xs[k] -= 2.0 * h;
    const double qm = form_(t, xs).eval(z);
    return (qp - qm) / (2.0 * h);
}

void SymbolModel::hamiltonian(const PhaseSpacePoint& p, std::span<double> out) const {
    require(p.dim() == n_ && static_cast<int>(out.size()) == 2 * n_ + 2,
            "hamiltonian_field: dimension mismatch");
    std::vector<double> z(n_), gz(n_);
    z[0] = p.tau;
    for (int i = 1; i < n_; ++i) z[i] = p.xi[i];
    form_(p.t, p.x).grad(z, gz);
    // (dt, dx)/ds = d_{tau,xi} p
    out[0] = gz[0];
    out[1] = 2.0 * p.xi[0];
    for (int i = 1; i < n_; ++i) out[1 + i] = gz[i];
    // (dtau, dxi)/ds = -d_{t,x} p = -d_{t,x} q
    for (int dir = 0; dir <= n_; ++dir) out[n_ + 1 + dir] = -q_jet_deriv(dir, p.t, p.x, z);
}

std::vector<double> SymbolModel::hamiltonian(const PhaseSpacePoint& p) const {
    std::vector<double> out(2 * n_ + 2);
    hamiltonian(p, out);
    return out;
}

double SymbolModel::p1_on_jet(double t, std::span<const double> x, double value,
                              std::span<const double> grad, std::span<const double> hess) const {
    const int m = n_ + 1;
    require(static_cast<int>(grad.size()) == m &&
                static_cast<int>(hess.size()) == m * m,
            "p1_on_jet: bad jet sizes");
    const QuadraticForm f = form_(t, x);
    // xi_1^2 -> d^2/dx1^2 (jet slot 1)
    double r = hess[1 * m + 1];
    // q's z-slots map to jet slots: z0 -> t (0), z_i -> x[i] (i+1) for i >= 1
    auto slot = [this](int zi) { return zi == 0 ? 0 : zi + 1; };
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) r += f.a[i * n_ + j] * hess[slot(i) * m + slot(j)];
    if (!f.lin.empty())
        for (int i = 0; i < n_; ++i) r += f.lin[i] * grad[slot(i)];
    r += f.cst * value;
    if (b1_) {
        const std::vector<double> b = b1_(t, x);
        for (int i = 0; i < m; ++i) r += b[i] * grad[i];
    }
    return r;
}

std::vector<double> SymbolModel::b1_coeffs(double t, std::span<const double> x) const {
    if (b1_) return b1_(t, x);
    return std::vector<double>(n_ + 1, 0.0);
}

double SymbolModel::b0(double t, std::span<const double> x) const {
    return b0_ ? b0_(t, x) : 0.0;
}

namespace {

// Jacobi eigenvalues of a small symmetric matrix (row-major m x m).
std::vector<double> sym_eigenvalues(std::vector<double> a, int m) {
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) off += a[i * m + j] * a[i * m + j];
        if (off < 1e-28) break;
        for (int p = 0; p < m; ++p)
            for (int qi = p + 1; qi < m; ++qi) {
                if (std::abs(a[p * m + qi]) < 1e-30) continue;
                const double theta = (a[qi * m + qi] - a[p * m + p]) / (2.0 * a[p * m + qi]);
                const double tt = (theta >= 0 ? 1.0 : -1.0) /
                                  (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(tt * tt + 1.0), s = tt * c;
                for (int k = 0; k < m; ++k) {
                    const double akp = a[k * m + p], akq = a[k * m + qi];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + qi] = s * akp + c * akq;
                }
                for (int k = 0; k < m; ++k) {
                    const double apk = a[p * m + k], aqk = a[qi * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[qi * m + k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(m);
    for (int i = 0; i < m; ++i) ev[i] = a[i * m + i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

}  // namespace

void SymbolModel::validate(unsigned seed, int samples) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(n_);
    for (int s = 0; s < samples; ++s) {
        const double t = u(rng);
        for (auto& c : x) c = u(rng);
        x[0] = std::abs(x[0]);  // stay in the half space
        const QuadraticForm f = form_(t, x);
        const auto ev = sym_eigenvalues(f.a, n_);
        int neg = 0, pos = 0;
        for (double e : ev) (e < 0 ? neg : pos)++;
        require(neg == 1 && pos == n_ - 1,
                "SymbolModel: q does not have signature (n-1,1) at a sample");
        // spacelike t = const: p(t,x,1,0) < 0
        std::vector<double> z(n_, 0.0);
        z[0] = 1.0;
        require(f.eval(z) < 0.0, "SymbolModel: initial surface not spacelike at a sample");
        // timelike boundary: p(t,0,x',0,1,0) > 0, trivially 1 + q(.,0) with tau=0
        std::vector<double> xb(x.begin(), x.end());
        xb[0] = 0.0;
        std::vector<double> zb(n_, 0.0);
        require(1.0 + form_(t, xb).eval(zb) > 0.0,
                "SymbolModel: boundary not timelike at a sample");
    }
    // constant outside the declared compact set: sample on a sphere of radius 2R
    const double r2 = 2.0 * const_radius_;
    std::vector<double> xref(n_, 0.0);
    xref[0] = r2;
    const QuadraticForm ref = form_(0.0, xref);
    std::vector<double> z(n_);
    for (int s = 0; s < samples; ++s) {
        double nrm = 0.0;
        for (auto& c : x) { c = u(rng); nrm += c * c; }
        nrm = std::sqrt(nrm);
        if (nrm < 1e-12) continue;
        for (auto& c : x) c = c / nrm * r2;
        x[0] = std::abs(x[0]);
        for (auto& c : z) c = u(rng);
        const double dq = form_(2.0 * r2 * u(rng), x).eval(z) - ref.eval(z);
        require(std::abs(dq) < 1e-9 * (1.0 + std::abs(ref.eval(z))),
                "SymbolModel: coefficients vary outside the declared compact set");
    }
}

double SymbolModel::max_speed(std::span<const double> box_lo, std::span<const double> box_hi,
                              unsigned seed, int samples) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double vmax = 0.0;
    PhaseSpacePoint p;
    p.x.resize(n_);
    p.xi.resize(n_);
    std::vector<double> h(2 * n_ + 2);
    for (int s = 0; s < samples; ++s) {
        p.t = 0.0;
        for (int i = 0; i < n_; ++i) p.x[i] = box_lo[i] + (box_hi[i] - box_lo[i]) * u01(rng);
        double nrm = 0.0;
        for (int i = 0; i < n_; ++i) { p.xi[i] = gauss(rng); nrm += p.xi[i] * p.xi[i]; }
        nrm = std::sqrt(nrm);
        for (int i = 0; i < n_; ++i) p.xi[i] /= nrm;
        // characteristic root in tau: solve p(tau) = 0 (quadratic in tau)
        std::vector<double> z(n_, 0.0);
        for (int i = 1; i < n_; ++i) z[i] = p.xi[i];
        const QuadraticForm f = form_(p.t, p.x);
        // p(tau) = a00 tau^2 + 2 b tau + c0 at fixed tangential covariables
        const double a00 = f.a[0];
        const double c0 = f.eval(z) + p.xi[0] * p.xi[0];
        std::vector<double> gz(n_);
        f.grad(z, gz);  // z[0] = 0, so gz[0] is the tau-linear coefficient
        const double b = 0.5 * gz[0];
        const double disc = b * b - a00 * c0;
        if (disc <= 0 || std::abs(a00) < 1e-14) continue;
        for (double sign : {-1.0, 1.0}) {
            p.tau = (-b + sign * std::sqrt(disc)) / a00;
            hamiltonian(p, h);
            if (std::abs(h[0]) < 1e-10) continue;
            double vx = 0.0;
            for (int i = 0; i < n_; ++i) vx += h[1 + i] * h[1 + i];
            vmax = std::max(vmax, std::sqrt(vx) / std::abs(h[0]));
        }
    }
    require(vmax > 0.0, "max_speed: no characteristic directions found");
    return vmax;
}

SymbolModel make_model(const std::string& id, int n) {
    if (id == "wave_free") {
        // q = -tau^2 + |xi'|^2
        SymbolModel m(id, n, [n](double, std::span<const double>) {
            QuadraticForm f;
            f.a.assign(static_cast<std::size_t>(n) * n, 0.0);
            f.a[0] = -1.0;
            for (int i = 1; i < n; ++i) f.a[i * n + i] = 1.0;
            return f;
        });
        m.set_form_deriv([n](int, double, std::span<const double>) {
            QuadraticForm f;
            f.a.assign(static_cast<std::size_t>(n) * n, 0.0);
            return f;
        });
        return m;
    }
    throw error("make_model: unknown model id '" + id + "'");
}

void Nonlinearity::validate(unsigned seed, int samples) const {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<double> x(n), z1(n + 2), z2(n + 2), zz(n + 2, 0.0);
    for (int s = 0; s < samples; ++s) {
        const double t = u(rng);
        for (auto& c : x) c = u(rng);
        require(std::abs(f(t, x, zz)) < 1e-14, "Nonlinearity: f(t,x,0) != 0");
        for (int i = 0; i < n + 2; ++i) { z1[i] = u(rng); z2[i] = u(rng); }
        double dz = 0.0;
        for (int i = 0; i < n + 2; ++i) dz += (z1[i] - z2[i]) * (z1[i] - z2[i]);
        dz = std::sqrt(dz);
        require(std::abs(f(t, x, z1) - f(t, x, z2)) <= lipschitz * dz + 1e-12,
                "Nonlinearity: Lipschitz bound violated at a sample");
    }
}

Nonlinearity Nonlinearity::zero(int n) {
    Nonlinearity f;
    f.n = n;
    f.id = "zero";
    f.lipschitz = 0.0;
    f.f = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
    f.grad_zeta = [n](double, std::span<const double>, std::span<const double>,
                      std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    };
    return f;
}

Nonlinearity Nonlinearity::sine(int n, double m) {
    Nonlinearity f;
    f.n = n;
    f.id = "sin";
    f.lipschitz = m;
    f.f = [m, n](double, std::span<const double>, std::span<const double> z) {
        return m * std::sin(z[n + 1]);
    };
    f.grad_zeta = [m, n](double, std::span<const double>, std::span<const double> z,
                         std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        out[n + 1] = m * std::cos(z[n + 1]);
    };
    return f;
}

Nonlinearity Nonlinearity::saturating(int n, double m) {
    Nonlinearity f;
    f.n = n;
    f.id = "saturating";
    f.lipschitz = m;
    f.f = [m, n](double, std::span<const double>, std::span<const double> z) {
        return m * std::tanh(z[n + 1]);
    };
    f.grad_zeta = [m, n](double, std::span<const double>, std::span<const double> z,
                         std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        const double c = std::cosh(z[n + 1]);
        out[n + 1] = m / (c * c);
    };
    return f;
}

Nonlinearity Nonlinearity::make(const std::string& id, int n, double m) {
    if (id == "zero") return zero(n);
    if (id == "sin") return sine(n, m);
    if (id == "saturating") return saturating(n, m);
    throw error("Nonlinearity: unknown id '" + id + "'");
}

}  // namespace pulses
