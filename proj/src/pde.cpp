#include "ncx/pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "ncx/multipliers.hpp"
#include "ncx/parallel.hpp"
#include "ncx/symbol_ops.hpp"

namespace ncx {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_time(double t, const char* what) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError(std::string(what) + ": t must be finite and nonnegative");
}

ModeKernels with_derivatives(double k0, double k1, double xi2, const DampedWaveParams& p, KernelCase which) {
    ModeKernels k;
    k.k0 = k0;
    k.k1 = k1;
    k.dk0 = -(p.m + xi2) * k1;
    k.dk1 = k0 - p.b * k1;
    k.which = which;
    return k;
}

// Norms of the symbol pieces that make up the Omega_0 weight, without
// building elements.
struct SnapshotNorms {
    double l2 = 0.0, dl2 = 0.0, grad = 0.0;
};

SnapshotNorms snapshot_norms(const Symbol& x, const Symbol& dx, const std::vector<double>& r2) {
    SnapshotNorms n;
    double a = 0.0, b = 0.0, c = 0.0;
    for (std::size_t i = 0; i < r2.size(); ++i) {
        const double v = std::norm(x[i]);
        a += v;
        b += std::norm(dx[i]);
        c += r2[i] * v;
    }
    const double w = x.grid().cell_volume();
    n.l2 = std::sqrt(a * w);
    n.dl2 = std::sqrt(b * w);
    n.grad = std::sqrt(c * w);
    return n;
}

double omega_weight(double t, double delta) { return std::exp(delta * t) / std::sqrt(1.0 + t); }

double omega0_of(const std::vector<double>& times, const std::vector<Symbol>& x, const std::vector<Symbol>& dx,
                 const std::vector<double>& r2, double delta) {
    double sup = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const SnapshotNorms n = snapshot_norms(x[k], dx[k], r2);
        sup = std::max(sup, omega_weight(times[k], delta) * (n.l2 + n.dl2 + n.grad));
    }
    return sup;
}

}  // namespace

void DampedWaveParams::validate() const {
    if (!(b > 0.0) || !std::isfinite(b)) throw DomainError("damped wave: b must be positive");
    if (!(m > 0.0) || !std::isfinite(m)) throw DomainError("damped wave: m must be positive");
}

double DampedWaveParams::delta_pred() const {
    validate();
    if (b * b > 4.0 * m) return 0.5 * b * (1.0 - std::sqrt(1.0 - 4.0 * m / (b * b)));
    return 0.5 * b;
}

double discriminant(double xi2, const DampedWaveParams& p) { return 0.25 * p.b * p.b - (p.m + xi2); }

double discriminant(const double* xi, int d, const DampedWaveParams& p) {
    double r2 = 0.0;
    for (int j = 0; j < d; ++j) r2 += xi[j] * xi[j];
    return discriminant(r2, p);
}

std::string to_string(KernelCase c) {
    switch (c) {
        case KernelCase::Hyperbolic: return "hyperbolic";
        case KernelCase::Critical: return "critical";
        case KernelCase::Oscillatory: return "oscillatory";
    }
    return "?";
}

ModeKernels mode_kernels_critical(double t, const DampedWaveParams& p) {
    require_time(t, "mode_kernels");
    const double e = std::exp(-0.5 * p.b * t);
    // at D = 0, m + |xi|^2 = b^2/4
    return with_derivatives((1.0 + 0.5 * p.b * t) * e, t * e, 0.25 * p.b * p.b - p.m, p, KernelCase::Critical);
}

ModeKernels mode_kernels_closed_form(double t, double xi2, const DampedWaveParams& p) {
    require_time(t, "mode_kernels");
    const double D = discriminant(xi2, p);
    const double hb = 0.5 * p.b;
    if (D > 0.0) {
        const double s = std::sqrt(D);
        // e^{-bt/2} cosh(st) and e^{-bt/2} sinh(st) without overflow
        const double ep = std::exp((s - hb) * t), em = std::exp((-s - hb) * t);
        const double ch = 0.5 * (ep + em), sh = 0.5 * (ep - em);
        return with_derivatives(ch + hb * sh / s, sh / s, xi2, p, KernelCase::Hyperbolic);
    }
    if (D < 0.0) {
        const double w = std::sqrt(-D);
        const double e = std::exp(-hb * t);
        const double sn = std::sin(w * t), cs = std::cos(w * t);
        return with_derivatives(e * (cs + hb * sn / w), e * sn / w, xi2, p, KernelCase::Oscillatory);
    }
    return mode_kernels_critical(t, p);
}

ModeKernels mode_kernels(double t, double xi2, const DampedWaveParams& p) {
    p.validate();
    if (std::abs(discriminant(xi2, p)) < p.eps_D()) {
        ModeKernels k = mode_kernels_critical(t, p);
        // derivatives use the actual mode frequency
        return with_derivatives(k.k0, k.k1, xi2, p, KernelCase::Critical);
    }
    return mode_kernels_closed_form(t, xi2, p);
}

PropagatorKernels propagator_kernels(double t, const GridSpec& g, const DampedWaveParams& p) {
    require_time(t, "propagator_kernels");
    p.validate();
    const std::vector<double> r2 = radius_squared(g);
    PropagatorKernels K;
    K.t = t;
    K.k0 = Symbol(g);
    K.k1 = Symbol(g);
    K.dk0 = Symbol(g);
    K.dk1 = Symbol(g);
    for (std::size_t i = 0; i < r2.size(); ++i) {
        const ModeKernels k = mode_kernels(t, r2[i], p);
        K.k0[i] = k.k0;
        K.k1[i] = k.k1;
        K.dk0[i] = k.dk0;
        K.dk1[i] = k.dk1;
    }
    return K;
}

void CauchyData::validate() const {
    require_compatible(x0, x1, "Cauchy data");
}

double CauchyData::size() const { return h1_norm(x0) + x1.symbol().l2_norm(); }

std::vector<double> uniform_times(double t_max, int steps) {
    if (!(t_max > 0.0) || !std::isfinite(t_max)) throw DomainError("time grid: t_max must be positive");
    if (steps < 1) throw DomainError("time grid: need at least one step");
    std::vector<double> t(steps + 1);
    for (int k = 0; k <= steps; ++k) t[k] = t_max * k / steps;
    return t;
}

std::vector<WaveSnapshot> linear_wave_solve(const CauchyData& data, const DampedWaveParams& p, const std::vector<double>& times) {
    data.validate();
    p.validate();
    if (times.empty() || times.front() != 0.0) throw DomainError("linear_wave_solve: times must start at 0");
    for (std::size_t k = 1; k < times.size(); ++k)
        if (!(times[k] > times[k - 1])) throw DomainError("linear_wave_solve: times must increase");

    const GridSpec& g = data.x0.symbol().grid();
    const Symbol& f0 = data.x0.symbol();
    const Symbol& f1 = data.x1.symbol();
    std::vector<WaveSnapshot> out(times.size());
    parallel_for(times.size(), [&](std::size_t k) {
        const PropagatorKernels K = propagator_kernels(times[k], g, p);
        Symbol x(g), dx(g);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = K.k0[i] * f0[i] + K.k1[i] * f1[i];
            dx[i] = K.dk0[i] * f0[i] + K.dk1[i] * f1[i];
        }
        out[k] = WaveSnapshot{times[k], data.x0.with_symbol(std::move(x)), data.x0.with_symbol(std::move(dx))};
    });
    return out;
}

double h1_norm(const NcElement& x) { return sobolev_norm(x, 1.0); }

double grad_norm(const NcElement& x) { return gradient_l2(x); }

NcElement heat_evolve(const NcElement& u0, double t) {
    require_time(t, "heat_evolve");
    if (t == 0.0) return u0;
    const NcElement u = apply_multiplier(u0, Multiplier::heat(t));
    return u0.positive() ? u.with_symbol(u.symbol(), true) : u;
}

DecayReport decay_rate_fit(const std::vector<std::pair<double, double>>& series, double window) {
    if (!(window > 0.0 && window <= 1.0)) throw DomainError("decay_rate_fit: window must lie in (0, 1]");
    if (series.size() < 2) throw DomainError("decay_rate_fit: need at least two points");
    DecayReport r;
    r.window = window;
    for (const auto& [t, v] : series) {
        r.t.push_back(t);
        r.norm.push_back(v);
    }
    const double t0 = series.front().first, t1 = series.back().first;
    r.t_from = t1 - window * (t1 - t0);
    r.t_to = t1;
    double n = 0.0, st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    const double eps = 1e-12 * std::max(1.0, std::abs(t1));
    for (const auto& [t, v] : series) {
        if (t < r.t_from - eps) continue;
        if (!(v > 0.0) || !std::isfinite(v))
            throw DomainError("decay_rate_fit: nonpositive or non-finite value at t = " + std::to_string(t));
        const double y = std::log(v);
        n += 1.0;
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    const double den = n * stt - st * st;
    if (n < 2.0 || !(den > 0.0)) throw DomainError("decay_rate_fit: fewer than two distinct times in the window");
    r.delta_fit = -(n * sty - st * sy) / den;
    return r;
}

HeatDecayReport heat_decay_report(const NcElement& u0, const std::vector<double>& times, const EstimatedConstant& nash) {
    if (!u0.positive()) throw DomainError("heat_decay_report: u0 must be a positive element (e.g. from star_square)");
    if (u0.is_zero()) throw ZeroElementError("heat_decay_report: u0 = 0");
    const int d = u0.symbol().grid().d;
    if (nash.kind != IneqKind::Nash) throw DomainError("heat_decay_report: the constant must come from a Nash estimate");
    if (nash.backend.grid.d != d)
        throw DomainError("heat_decay_report: Nash constant estimated in dimension " + std::to_string(nash.backend.grid.d) +
                          ", data live in dimension " + std::to_string(d));
    if (!(nash.value > 0.0) || !std::isfinite(nash.value)) throw DomainError("heat_decay_report: Nash constant must be positive");
    for (double t : times) require_time(t, "heat_decay_report");

    HeatDecayReport R;
    R.nash_constant = nash.value;
    R.c_d2 = nash.value * nash.value;
    const double l1_0 = lp_norm(u0, 1.0, false, NormRoute::Trace);
    const double l2_0 = lp_norm(u0, 2.0);
    R.mass0 = l1_0;
    const double a = std::pow(l2_0, -4.0 / d);
    const double b = 4.0 / (d * R.c_d2) * std::pow(l1_0, -4.0 / d);

    R.rows.resize(times.size());
    parallel_for(times.size(), [&](std::size_t k) {
        const double t = times[k];
        const NcElement u = heat_evolve(u0, t);
        HeatRow& row = R.rows[k];
        row.t = t;
        row.l1 = lp_norm(u, 1.0, false, NormRoute::Trace);
        row.l2 = lp_norm(u, 2.0);
        row.h1 = h1_norm(u);
        row.dt_l2 = laplacian(u).symbol().l2_norm();
        try {
            row.linf = lp_norm(u, kInf);
        } catch (const TruncationTailError&) {
            row.linf = kNaN;
        }
        row.bound = std::pow(a + b * t, -0.25 * d);
        const double g = gradient_l2(u);
        row.nash_ratio = std::pow(row.l2, 1.0 + 2.0 / d) / (g * std::pow(row.l1, 2.0 / d));
    });

    R.min_margin = std::numeric_limits<double>::infinity();
    double worst_ratio = 0.0;
    int missing_linf = 0;
    for (std::size_t k = 0; k < R.rows.size(); ++k) {
        const HeatRow& row = R.rows[k];
        R.max_mass_drift = std::max(R.max_mass_drift, std::abs(row.l1 - l1_0) / l1_0);
        R.min_margin = std::min(R.min_margin, row.bound - row.l2);
        if (row.l2 > row.bound + 1e-8) R.bound_holds = false;
        if (k > 0 && row.t >= R.rows[k - 1].t && row.l2 > R.rows[k - 1].l2 * (1.0 + 1e-13)) R.monotone = false;
        worst_ratio = std::max(worst_ratio, row.nash_ratio);
        if (std::isnan(row.linf)) ++missing_linf;
    }
    if (worst_ratio > nash.value)
        R.notes.push_back("the Nash quotient along the flow reaches " + std::to_string(worst_ratio) + ", above the estimated constant " +
                          std::to_string(nash.value) + "; the bound is not guaranteed");
    if (missing_linf > 0)
        R.notes.push_back("linf omitted at " + std::to_string(missing_linf) + " times where u(t) leaves the Hermite truncation");
    return R;
}

// ---------------------------------------------------------------------------

Nonlinearity Nonlinearity::modulus_power(int p) {
    if (p < 2) throw DomainError("nonlinearity: the power must be an integer p > 1");
    return {Form::ModulusPower, p};
}

std::string Nonlinearity::describe() const {
    switch (form) {
        case Form::Zero: return "zero";
        case Form::Square: return "square";
        case Form::ModulusPower: return "modulus-power(p=" + std::to_string(p) + ")";
    }
    return "?";
}

NcElement Nonlinearity::apply(const NcElement& x) const {
    switch (form) {
        case Form::Zero: return x.with_symbol(Symbol(x.symbol().grid()));
        case Form::Square: return multiply(x, x);
        case Form::ModulusPower: {
            if (x.backend().kind != BackendKind::NcMatrix)
                throw DomainError("nonlinearity: the modulus-power form needs the matrix backend");
            const MatrixRep& X = x.matrix();
            if (X.hermitian_defect() > 1e-8) throw DomainError("nonlinearity: the modulus-power form needs a self-adjoint element");
            const Eigen::MatrixXcd A = X.to_dense();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (A + A.adjoint()));
            Eigen::VectorXd lam = es.eigenvalues();
            for (Eigen::Index i = 0; i < lam.size(); ++i) lam[i] = std::pow(std::abs(lam[i]), p - 1) * lam[i];
            const Eigen::MatrixXcd Y = es.eigenvectors() * lam.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
            return NcElement::from_matrix(MatrixRep::from_dense(X.d(), X.truncation(), Y), x.backend_ptr());
        }
    }
    throw DomainError("nonlinearity: unknown form");
}

double lipschitz_quotient(const Nonlinearity& F, const NcElement& x, const NcElement& y) {
    const double q = 2.0 * F.p;
    const NcElement diff = linear_combination(1.0, x, -1.0, y);
    if (diff.is_zero()) throw ZeroElementError("lipschitz_quotient: x = y");
    const NcElement dF = linear_combination(1.0, F.apply(x), -1.0, F.apply(y));
    const double den = (std::pow(lp_norm(x, q), F.p - 1) + std::pow(lp_norm(y, q), F.p - 1)) * lp_norm(diff, q);
    return lp_norm(dF, 2.0) / den;
}

double omega0_norm(const std::vector<WaveSnapshot>& series, double delta) {
    if (series.empty()) return 0.0;
    const std::vector<double> r2 = radius_squared(series.front().x.symbol().grid());
    double sup = 0.0;
    for (const WaveSnapshot& s : series) {
        const SnapshotNorms n = snapshot_norms(s.x.symbol(), s.dx.symbol(), r2);
        sup = std::max(sup, omega_weight(s.t, delta) * (n.l2 + n.dl2 + n.grad));
    }
    return sup;
}

SemilinearResult semilinear_picard(const CauchyData& data, const DampedWaveParams& p, const Nonlinearity& F,
                                   const PicardConfig& cfg) {
    data.validate();
    p.validate();
    if (!(cfg.M > 0.0) || !(cfg.r > 1.0) || cfg.max_iters < 1 || !(cfg.tol >= 0.0))
        throw ConfigError("semilinear: need M > 0, r > 1, max_iters >= 1 and tol >= 0");
    const double size = data.size();
    if (size > cfg.eps)
        throw DomainError("semilinear: data size ||x0||_H1 + ||x1||_2 = " + std::to_string(size) + " exceeds eps = " +
                          std::to_string(cfg.eps));

    const std::vector<double> times = uniform_times(cfg.t_max, cfg.steps);
    const std::size_t n = times.size();
    const double dt = cfg.t_max / cfg.steps;
    const GridSpec& g = data.x0.symbol().grid();
    const std::vector<double> r2 = radius_squared(g);

    SemilinearResult out;
    PicardState& S = out.state;
    S.delta = cfg.delta >= 0.0 ? cfg.delta : 0.5 * p.delta_pred();

    // linear part and the K1 lags K1(j dt), d/dt K1(j dt)
    const std::vector<WaveSnapshot> lin = linear_wave_solve(data, p, times);
    std::vector<Symbol> L(n), dL(n);
    parallel_for(n, [&](std::size_t j) {
        const PropagatorKernels K = propagator_kernels(times[j], g, p);
        L[j] = K.k1;
        dL[j] = K.dk1;
    });

    std::vector<Symbol> x(n), dx(n), xlin(n), dxlin(n);
    for (std::size_t k = 0; k < n; ++k) {
        xlin[k] = lin[k].x.symbol();
        dxlin[k] = lin[k].dx.symbol();
    }
    x = xlin;
    dx = dxlin;
    S.omega_norms.push_back(omega0_of(times, x, dx, r2, S.delta));
    if (S.omega_norms.back() > cfg.M)
        throw DivergenceError("semilinear: the linear solution already has Omega_0 norm " + std::to_string(S.omega_norms.back()) +
                              " > M = " + std::to_string(cfg.M));

    for (int it = 1; it <= cfg.max_iters; ++it) {
        std::vector<Symbol> f(n);
        parallel_for(n, [&](std::size_t k) { f[k] = F.apply(data.x0.with_symbol(x[k])).symbol(); });
        for (const Symbol& fk : f)
            if (!fk.all_finite()) throw NumericalError("semilinear: non-finite nonlinearity");

        std::vector<Symbol> nx(n), ndx(n);
        parallel_for(n, [&](std::size_t k) {
            Symbol a = xlin[k], b = dxlin[k];
            // trapezoid over s_j = j dt, j = 0..k
            for (std::size_t j = 0; j <= k && k > 0; ++j) {
                const double w = (j == 0 || j == k) ? 0.5 * dt : dt;
                const Symbol& Lk = L[k - j];
                const Symbol& dLk = dL[k - j];
                const Symbol& fj = f[j];
                for (std::size_t i = 0; i < a.size(); ++i) {
                    a[i] += w * Lk[i].real() * fj[i];
                    b[i] += w * dLk[i].real() * fj[i];
                }
            }
            nx[k] = std::move(a);
            ndx[k] = std::move(b);
        });

        // successive difference in the Omega_0 norm
        std::vector<Symbol> ex(n), edx(n);
        for (std::size_t k = 0; k < n; ++k) {
            ex[k] = nx[k] - x[k];
            edx[k] = ndx[k] - dx[k];
        }
        const double diff = omega0_of(times, ex, edx, r2, S.delta);
        const double norm = omega0_of(times, nx, ndx, r2, S.delta);
        if (!std::isfinite(norm) || !std::isfinite(diff)) throw NumericalError("semilinear: non-finite iterate");
        S.iterations = it;
        S.omega_norms.push_back(norm);
        if (!S.differences.empty() && S.differences.back() > 0.0) S.contraction.push_back(diff / S.differences.back());
        S.differences.push_back(diff);
        x = std::move(nx);
        dx = std::move(ndx);
        if (norm > cfg.M)
            throw DivergenceError("semilinear: iterate " + std::to_string(it) + " has Omega_0 norm " + std::to_string(norm) +
                                  " > M = " + std::to_string(cfg.M));
        if (diff <= cfg.tol * norm) {
            S.converged = true;
            break;
        }
    }

    for (double c : S.contraction) S.max_contraction = std::max(S.max_contraction, c);
    if (S.max_contraction > 1.0 / cfg.r)
        S.notes.push_back("largest contraction ratio " + std::to_string(S.max_contraction) + " exceeds 1/r = " +
                          std::to_string(1.0 / cfg.r));
    if (!S.converged) S.notes.push_back("no convergence within " + std::to_string(cfg.max_iters) + " iterations");

    out.solution.resize(n);
    for (std::size_t k = 0; k < n; ++k)
        out.solution[k] = WaveSnapshot{times[k], data.x0.with_symbol(std::move(x[k])), data.x0.with_symbol(std::move(dx[k]))};
    return out;
}

}  // namespace ncx
