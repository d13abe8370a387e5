#include <array>
#include <cmath>
#include <random>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/numeric/odeint.hpp>

#include "doctest.h"
#include "ncx/families.hpp"
#include "ncx/multipliers.hpp"
#include "ncx/pde.hpp"

using namespace ncx;

namespace {

BackendPtr nc2() {
    static BackendPtr b = BackendConfig::from_tag("nc2").build();
    return b;
}

// coarser d = 2 grid for the Picard runs; the data decay well inside L = 8
BackendPtr nc2_small() {
    static BackendPtr b = [] {
        BackendConfig c = BackendConfig::from_tag("nc2");
        c.grid = GridSpec{2, 8.0, 64};
        return c.build();
    }();
    return b;
}

// h = 0.09375 keeps the trace interpolation of wide heat flows exact to 1e-12
BackendConfig heat_config() {
    BackendConfig c;
    c.kind = BackendKind::Commutative;
    c.grid = GridSpec{3, 6.0, 128};
    return c;
}

BackendPtr heat_backend() {
    static BackendPtr b = heat_config().build();
    return b;
}

NcElement gaussian(const BackendPtr& b, double a) { return NcElement(make_test_symbol(TestFamilySpec::gaussian(a), b->grid), b); }

double max_diff(const Symbol& a, const Symbol& b) { return (a - b).max_abs(); }

NcElement times(const NcElement& x, double alpha) { return x.with_symbol(alpha * x.symbol()); }

// y = (K, K') for K'' + b K' + (m + xi^2) K = 0
std::array<double, 2> ode_mode(double t, double xi2, const DampedWaveParams& p, std::array<double, 2> y) {
    using namespace boost::numeric::odeint;
    const double w = p.m + xi2;
    auto rhs = [&](const std::array<double, 2>& s, std::array<double, 2>& ds, double) {
        ds[0] = s[1];
        ds[1] = -p.b * s[1] - w * s[0];
    };
    if (t > 0.0) integrate_adaptive(make_controlled<runge_kutta_dopri5<std::array<double, 2>>>(1e-13, 1e-13), rhs, y, 0.0, t, 1e-3);
    return y;
}

std::vector<std::pair<double, double>> series(const std::vector<WaveSnapshot>& s, double (*norm)(const WaveSnapshot&)) {
    std::vector<std::pair<double, double>> out;
    for (const WaveSnapshot& w : s) out.emplace_back(w.t, norm(w));
    return out;
}

double h1_of(const WaveSnapshot& w) { return h1_norm(w.x); }
double l2_of(const WaveSnapshot& w) { return w.x.symbol().l2_norm(); }
double grad_of(const WaveSnapshot& w) { return grad_norm(w.x); }
double dt_of(const WaveSnapshot& w) { return w.dx.symbol().l2_norm(); }

CauchyData small_data(double size) {
    const NcElement x0 = gaussian(nc2_small(), 0.8);
    const NcElement x1 = gaussian(nc2_small(), 1.2);
    const double s = CauchyData{x0, x1}.size();
    return CauchyData{times(x0, size / s), times(x1, size / s)};
}

}  // namespace

TEST_CASE("discriminant") {
    CHECK(discriminant(0.0, {2.0, 1.0}) == 0.0);
    CHECK(discriminant(0.0, {2.0, 0.75}) == doctest::Approx(0.25));
    CHECK(discriminant(100.0, {2.0, 0.75}) < 0.0);
    const double xi[2] = {0.3, -0.4};
    CHECK(discriminant(xi, 2, {2.0, 0.75}) == doctest::Approx(0.25 - 0.25));

    CHECK(DampedWaveParams{2.0, 0.75}.delta_pred() == doctest::Approx(0.5));
    CHECK(DampedWaveParams{2.0, 1.0}.delta_pred() == doctest::Approx(1.0));
    CHECK(DampedWaveParams{1.0, 1.0}.delta_pred() == doctest::Approx(0.5));
    CHECK_THROWS_AS(DampedWaveParams({0.0, 1.0}).validate(), DomainError);
    CHECK_THROWS_AS(DampedWaveParams({1.0, -1.0}).validate(), DomainError);
}

TEST_CASE("propagator kernels") {
    const DampedWaveParams p{2.0, 0.75};

    SUBCASE("t = 0 reproduces the data") {
        const PropagatorKernels K = propagator_kernels(0.0, nc2()->grid, p);
        for (std::size_t i = 0; i < K.k0.size(); ++i) {
            REQUIRE(K.k0[i] == cplx(1.0, 0.0));
            REQUIRE(K.k1[i] == cplx(0.0, 0.0));
        }
        CHECK_THROWS_AS(propagator_kernels(-0.1, nc2()->grid, p), DomainError);
        CHECK_THROWS_AS(mode_kernels(-1.0, 0.0, p), DomainError);
    }

    SUBCASE("D = 0 formulas") {
        const DampedWaveParams c{2.0, 1.0};
        for (double t : {0.5, 2.0, 7.0}) {
            const ModeKernels k = mode_kernels(t, 0.0, c);
            CHECK(k.which == KernelCase::Critical);
            CHECK(k.k0 == doctest::Approx((1.0 + t) * std::exp(-t)).epsilon(1e-14));
            CHECK(k.k1 == doctest::Approx(t * std::exp(-t)).epsilon(1e-14));
        }
        // D = 0 away from xi = 0
        const DampedWaveParams c2{3.0, 1.25};
        const ModeKernels k = mode_kernels(1.5, 1.0, c2);
        CHECK(k.which == KernelCase::Critical);
        CHECK(k.k0 == doctest::Approx((1.0 + 2.25) * std::exp(-2.25)).epsilon(1e-14));
    }

    SUBCASE("oscillatory envelope") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> xi2(0.3, 40.0), tt(0.0, 10.0);
        for (int i = 0; i < 200; ++i) {
            const double x = xi2(rng), t = tt(rng);
            const double D = discriminant(x, p);
            REQUIRE(D < 0.0);
            const ModeKernels k = mode_kernels(t, x, p);
            CHECK(k.which == KernelCase::Oscillatory);
            CHECK(std::abs(k.k1) <= std::exp(-p.b * t / 2.0) / std::sqrt(-D) + 1e-12);
        }
    }

    SUBCASE("closed forms against an adaptive ODE integrator") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> xi(-2.0, 2.0);
        for (const DampedWaveParams& q : {DampedWaveParams{2.0, 0.75}, DampedWaveParams{2.0, 1.0}, DampedWaveParams{1.0, 1.0}}) {
            for (int i = 0; i < 20; ++i) {
                const double x2 = std::pow(xi(rng), 2) + std::pow(xi(rng), 2);
                for (double t : {0.7, 3.0, 10.0}) {
                    const ModeKernels k = mode_kernels(t, x2, q);
                    const auto y0 = ode_mode(t, x2, q, {1.0, 0.0});
                    const auto y1 = ode_mode(t, x2, q, {0.0, 1.0});
                    CHECK(std::abs(k.k0 - y0[0]) <= 1e-6);
                    CHECK(std::abs(k.dk0 - y0[1]) <= 1e-6);
                    CHECK(std::abs(k.k1 - y1[0]) <= 1e-6);
                    CHECK(std::abs(k.dk1 - y1[1]) <= 1e-6);
                }
            }
            // the xi = 0 mode, hyperbolic for m = 0.75, critical for (2, 1), oscillatory for (1, 1)
            const auto y = ode_mode(4.0, 0.0, q, {1.0, 0.0});
            CHECK(std::abs(mode_kernels(4.0, 0.0, q).k0 - y[0]) <= 1e-6);
        }
    }

    SUBCASE("continuity across the D = 0 band") {
        // Against the D = 0 limit the closed forms differ by
        // e^{-u} |D| t^2 (1/2 + u/6) for K0 and e^{-u} |D| t^3 / 6 for K1 to
        // leading order, u = bt/2.
        for (const DampedWaveParams& q : {DampedWaveParams{2.0, 1.0}, DampedWaveParams{1.0, 0.1}, DampedWaveParams{4.0, 2.0}}) {
            const double eps = q.eps_D();
            const double xi2_0 = 0.25 * q.b * q.b - q.m;  // D = 0 at this |xi|^2
            for (double f : {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0}) {
                const double x2 = xi2_0 - f * eps;
                if (x2 < 0.0) continue;
                const double D = discriminant(x2, q);
                for (double t : {0.5, 2.0, 5.0, 10.0}) {
                    const ModeKernels a = mode_kernels_closed_form(t, x2, q);
                    const ModeKernels c = mode_kernels_critical(t, q);
                    const double u = q.b * t / 2.0;
                    const double b0 = std::exp(-u) * std::abs(D) * t * t * (0.5 + u / 6.0);
                    const double b1 = std::exp(-u) * std::abs(D) * t * t * t / 6.0;
                    CAPTURE(q.b);
                    CAPTURE(D);
                    CAPTURE(t);
                    CHECK(std::abs(a.k0 - c.k0) <= 1.01 * b0 + 1e-13);
                    CHECK(std::abs(a.k1 - c.k1) <= 1.01 * b1 + 1e-13);
                }
                if (std::abs(D) < eps) CHECK(mode_kernels(1.0, x2, q).which == KernelCase::Critical);
            }
        }
    }

    SUBCASE("small b and m stay finite") {
        const DampedWaveParams q{1e-3, 1e-4};
        for (double t : {0.0, 1e-3, 1.0, 10.0}) {
            const PropagatorKernels K = propagator_kernels(t, nc2()->grid, q);
            CHECK(K.k0.all_finite());
            CHECK(K.k1.all_finite());
            CHECK(K.dk0.all_finite());
            CHECK(K.dk1.all_finite());
        }
        const CauchyData data{gaussian(nc2(), 0.8), gaussian(nc2(), 1.2)};
        for (const WaveSnapshot& s : linear_wave_solve(data, q, uniform_times(10.0, 10))) {
            CHECK(s.x.symbol().all_finite());
            CHECK(s.dx.symbol().all_finite());
        }
    }
}

TEST_CASE("linear damped wave") {
    const CauchyData data{gaussian(nc2(), 0.8), gaussian(nc2(), 1.2)};

    SUBCASE("per-mode evolution on the grid") {
        const DampedWaveParams p{2.0, 1.0};
        const std::vector<double> ts = {0.0, 0.5, 3.0};
        const auto sol = linear_wave_solve(data, p, ts);
        REQUIRE(sol.size() == 3);
        const std::vector<double> r2 = radius_squared(nc2()->grid);
        const Symbol& f0 = data.x0.symbol();
        const Symbol& f1 = data.x1.symbol();
        for (std::size_t k = 0; k < ts.size(); ++k) {
            double err = 0.0, derr = 0.0;
            for (std::size_t i = 0; i < r2.size(); i += 37) {
                const ModeKernels m = mode_kernels(ts[k], r2[i], p);
                err = std::max(err, std::abs(sol[k].x.symbol()[i] - (m.k0 * f0[i] + m.k1 * f1[i])));
                derr = std::max(derr, std::abs(sol[k].dx.symbol()[i] - (m.dk0 * f0[i] + m.dk1 * f1[i])));
            }
            CHECK(err <= 1e-14);
            CHECK(derr <= 1e-14);
        }
        CHECK(max_diff(sol[0].x.symbol(), f0) == 0.0);
        CHECK(max_diff(sol[0].dx.symbol(), f1) == 0.0);
    }

    SUBCASE("time grid validation") {
        CHECK_THROWS_AS(linear_wave_solve(data, {}, {0.5, 1.0}), DomainError);
        CHECK_THROWS_AS(linear_wave_solve(data, {}, {0.0, 1.0, 1.0}), DomainError);
        CHECK_THROWS_AS(uniform_times(0.0, 10), DomainError);
    }

    SUBCASE("fitted H1 decay reaches the predicted rate") {
        for (const DampedWaveParams& p : {DampedWaveParams{2.0, 0.75}, DampedWaveParams{2.0, 1.0}, DampedWaveParams{1.0, 1.0}}) {
            const auto sol = linear_wave_solve(data, p, uniform_times(10.0, 200));
            const DecayReport r = decay_rate_fit(series(sol, h1_of));
            CAPTURE(p.b);
            CAPTURE(p.m);
            CAPTURE(r.delta_fit);
            CHECK(r.delta_fit >= 0.95 * p.delta_pred());
            // the H1 size stays bounded by a constant times the data size
            for (const WaveSnapshot& s : sol) CHECK(h1_norm(s.x) <= 3.0 * data.size());
        }
    }
}

TEST_CASE("decay rate fit") {
    std::vector<std::pair<double, double>> e, c, w;
    for (int k = 0; k <= 100; ++k) {
        const double t = 0.1 * k;
        e.emplace_back(t, std::exp(-0.5 * t));
        c.emplace_back(t, 2.5);
        w.emplace_back(t, (1.0 + t) * std::exp(-t));
    }
    CHECK(std::abs(decay_rate_fit(e).delta_fit - 0.5) <= 1e-6);
    CHECK(std::abs(decay_rate_fit(c).delta_fit) <= 1e-12);

    // least squares of log((1+t)e^{-t}) on t in [5, 10], computed directly
    const DecayReport r = decay_rate_fit(w);
    CHECK(r.t_from == doctest::Approx(5.0));
    CHECK(r.t_to == doctest::Approx(10.0));
    double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
    for (const auto& [t, v] : w) {
        if (t < 5.0 - 1e-9) continue;
        n += 1;
        st += t;
        sy += std::log(v);
        stt += t * t;
        sty += t * std::log(v);
    }
    const double slope = (n * sty - st * sy) / (n * stt - st * st);
    CHECK(r.delta_fit == doctest::Approx(-slope).epsilon(1e-12));
    CHECK(r.delta_fit > 0.85);
    CHECK(r.delta_fit < 1.0);

    w[90].second = 0.0;
    CHECK_THROWS_AS(decay_rate_fit(w), DomainError);
    w[90].second = 1.0;
    w[10].second = -1.0;  // outside the window
    CHECK_NOTHROW(decay_rate_fit(w));
    CHECK_THROWS_AS(decay_rate_fit(w, 1.0), DomainError);
}

TEST_CASE("heat flow") {
    const NcElement u0 = star_square(gaussian(heat_backend(), 1.5));
    REQUIRE(u0.positive());

    SUBCASE("identity at t = 0 and negative times") {
        CHECK(max_diff(heat_evolve(u0, 0.0).symbol(), u0.symbol()) == 0.0);
        CHECK_THROWS_AS(heat_evolve(u0, -1.0), DomainError);
    }

    SUBCASE("mass conservation") {
        const double m0 = lp_norm(u0, 1.0);
        for (double t : {0.1, 1.0, 10.0}) {
            const NcElement u = heat_evolve(u0, t);
            CHECK(u.positive());
            CHECK(std::abs(lp_norm(u, 1.0) - m0) / m0 <= 1e-6);
        }
    }

    SUBCASE("L2 norm against radial quadrature") {
        // the flow of exp(-a|t|^2) is exp(-(a+s)|t|^2); its L2 norm squared is
        // the surface measure of S^{d-1} times int_0^inf r^{d-1} e^{-2(a+s) r^2} dr
        const NcElement g = gaussian(nc2(), 0.9);
        boost::math::quadrature::exp_sinh<double> q;
        for (double s : {0.05, 0.5, 3.0}) {
            const double c = 0.9 + s;
            const double radial = q.integrate([&](double r) { return r * std::exp(-2.0 * c * r * r); });
            const double oracle = std::sqrt(2.0 * M_PI * radial);
            const double l2 = heat_evolve(g, s).symbol().l2_norm();
            CHECK(std::abs(l2 - oracle) / oracle <= 1e-8);
        }
    }
}

TEST_CASE("heat decay report with an estimated Nash constant") {
    const EstimatedConstant nash = estimate_constant(IneqSpec::defaults(IneqKind::Nash, 3),
                                                     FamilyDescriptor::parse("mixed,count=6,seed=2"), BackendConfig::from_tag("comm:3"));
    REQUIRE(nash.value > 0.0);
    const NcElement u0 = star_square(gaussian(heat_backend(), 1.5));
    const std::vector<double> ts = {0.0, 0.5, 1.0, 2.0, 5.0, 10.0};
    const HeatDecayReport R = heat_decay_report(u0, ts, nash);
    REQUIRE(R.rows.size() == ts.size());
    CHECK(R.c_d2 == doctest::Approx(nash.value * nash.value));
    CHECK(R.rows[0].bound == doctest::Approx(R.rows[0].l2).epsilon(1e-13));
    CHECK(R.bound_holds);
    CHECK(R.monotone);
    CHECK(R.max_mass_drift <= 1e-6);
    for (std::size_t k = 1; k < R.rows.size(); ++k) {
        CHECK(R.rows[k].l2 <= R.rows[k - 1].l2);
        CHECK(R.rows[k].bound < R.rows[k - 1].bound);
    }

    SUBCASE("preconditions") {
        const NcElement g = gaussian(heat_backend(), 1.0);
        CHECK_THROWS_AS(heat_decay_report(g, ts, nash), DomainError);
        EstimatedConstant wrong = nash;
        wrong.kind = IneqKind::Sobolev;
        CHECK_THROWS_AS(heat_decay_report(u0, ts, wrong), DomainError);
        wrong = nash;
        wrong.backend = BackendConfig::from_tag("nc4");
        CHECK_THROWS_AS(heat_decay_report(u0, ts, wrong), DomainError);
    }
}

TEST_CASE("nonlinearity") {
    const NcElement x = gaussian(nc2(), 0.8);
    const NcElement y = times(gaussian(nc2(), 1.1), 0.6);

    const NcElement zero(Symbol(nc2()->grid), nc2());
    CHECK(Nonlinearity::square().apply(zero).is_zero());
    CHECK(Nonlinearity::zero().apply(x).is_zero());
    CHECK(Nonlinearity::modulus_power(3).apply(zero).symbol().l2_norm() <= 1e-14);
    CHECK_THROWS_AS(Nonlinearity::modulus_power(1), DomainError);

    SUBCASE("square agrees with the twisted product") {
        CHECK(max_diff(Nonlinearity::square().apply(x).symbol(), multiply(x, x).symbol()) <= 1e-14);
    }
    SUBCASE("modulus power p = 2 on a positive element is the square") {
        const NcElement a = Nonlinearity::modulus_power(2).apply(x);
        const NcElement b = Nonlinearity::square().apply(x);
        CHECK(max_diff(a.symbol(), b.symbol()) <= 1e-6 * b.symbol().max_abs());
    }
    SUBCASE("empirical Lipschitz quotients are finite") {
        for (const Nonlinearity& F : {Nonlinearity::square(), Nonlinearity::modulus_power(2), Nonlinearity::modulus_power(3)}) {
            CAPTURE(F.describe());
            const double q = lipschitz_quotient(F, x, y);
            CHECK(std::isfinite(q));
            CHECK(q > 0.0);
        }
        // x^2 - y^2 = x(x - y) + (x - y)y and Hoelder give a quotient <= 1
        CHECK(lipschitz_quotient(Nonlinearity::square(), x, y) <= 1.0 + 1e-6);
        CHECK_THROWS_AS(lipschitz_quotient(Nonlinearity::square(), x, x), ZeroElementError);
    }
    SUBCASE("modulus power needs the matrix backend") {
        const NcElement c = gaussian(heat_backend(), 1.0);
        CHECK_THROWS_AS(Nonlinearity::modulus_power(3).apply(c), DomainError);
    }
}

TEST_CASE("semilinear damped wave by Picard iteration") {
    const DampedWaveParams p{2.0, 0.75};
    PicardConfig cfg;
    cfg.eps = 0.06;
    cfg.steps = 100;
    const CauchyData data = small_data(0.05);

    SUBCASE("F = 0 reproduces the linear solution") {
        const SemilinearResult r = semilinear_picard(data, p, Nonlinearity::zero(), cfg);
        CHECK(r.state.converged);
        CHECK(r.state.iterations == 1);
        const auto lin = linear_wave_solve(data, p, uniform_times(cfg.t_max, cfg.steps));
        REQUIRE(lin.size() == r.solution.size());
        for (std::size_t k = 0; k < lin.size(); ++k) REQUIRE(max_diff(lin[k].x.symbol(), r.solution[k].x.symbol()) == 0.0);
    }

    SUBCASE("square nonlinearity on small data") {
        const SemilinearResult r = semilinear_picard(data, p, Nonlinearity::square(), cfg);
        CHECK(r.state.converged);
        CHECK(r.state.delta == doctest::Approx(0.25));
        REQUIRE(!r.state.contraction.empty());
        for (double c : r.state.contraction) CHECK(c < 1.0 / cfg.r);
        CHECK(r.state.notes.empty());
        for (double n : r.state.omega_norms) CHECK(n <= cfg.M);

        for (auto norm : {l2_of, grad_of, dt_of}) {
            const DecayReport d = decay_rate_fit(series(r.solution, norm));
            CHECK(d.delta_fit > 0.0);
        }

        // halving the Duhamel step
        PicardConfig fine = cfg;
        fine.steps = 2 * cfg.steps;
        const SemilinearResult rf = semilinear_picard(data, p, Nonlinearity::square(), fine);
        const double w = omega0_norm(r.solution, r.state.delta);
        const double wf = omega0_norm(rf.solution, rf.state.delta);
        CHECK(std::abs(w - wf) / wf <= 1e-4);
        // the difference itself, on the common time grid
        std::vector<WaveSnapshot> diff;
        for (std::size_t k = 0; k < r.solution.size(); ++k) {
            const WaveSnapshot& a = r.solution[k];
            const WaveSnapshot& b = rf.solution[2 * k];
            REQUIRE(a.t == doctest::Approx(b.t));
            diff.push_back({a.t, linear_combination(1.0, a.x, -1.0, b.x), linear_combination(1.0, a.dx, -1.0, b.dx)});
        }
        CHECK(omega0_norm(diff, r.state.delta) / wf <= 1e-4);
    }

    SUBCASE("errors") {
        PicardConfig tight = cfg;
        tight.M = 1e-4;
        CHECK_THROWS_AS(semilinear_picard(data, p, Nonlinearity::square(), tight), DivergenceError);
        PicardConfig small = cfg;
        small.eps = 0.01;
        CHECK_THROWS_AS(semilinear_picard(data, p, Nonlinearity::square(), small), DomainError);
        PicardConfig bad = cfg;
        bad.r = 1.0;
        CHECK_THROWS_AS(semilinear_picard(data, p, Nonlinearity::square(), bad), ConfigError);
    }
}
