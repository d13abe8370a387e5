#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ncx/element.hpp"
#include "ncx/inequality.hpp"

namespace ncx {

// x'' + (-Delta) x + b x' + m x = F(x)
struct DampedWaveParams {
    double b = 2.0;
    double m = 1.0;

    void validate() const;
    // Below this |D| the D = 0 limit formulas are used.
    double eps_D() const { return 1e-8 * b * b; }
    // (b/2)(1 - sqrt(1 - 4m/b^2)) when b^2 > 4m, else b/2
    double delta_pred() const;
};

// D(xi) = b^2/4 - (m + |xi|^2)
double discriminant(double xi2, const DampedWaveParams& p);
double discriminant(const double* xi, int d, const DampedWaveParams& p);

enum class KernelCase { Hyperbolic, Critical, Oscillatory };
std::string to_string(KernelCase c);

// K0, K1 and their time derivatives at one mode.  K0(0) = 1, K1(0) = 0,
// K0' = -(m + |xi|^2) K1 and K1' = K0 - b K1.
struct ModeKernels {
    double k0 = 1.0, k1 = 0.0, dk0 = 0.0, dk1 = 1.0;
    KernelCase which = KernelCase::Critical;
};

// Case selection on D with the eps_D band.  DomainError for t < 0.
ModeKernels mode_kernels(double t, double xi2, const DampedWaveParams& p);
// The hyperbolic/oscillatory closed form regardless of the band (D != 0).
ModeKernels mode_kernels_closed_form(double t, double xi2, const DampedWaveParams& p);
// The D = 0 formulas (1 + bt/2)e^{-bt/2} and t e^{-bt/2}.
ModeKernels mode_kernels_critical(double t, const DampedWaveParams& p);

// Kernel symbols on a grid at time t.
struct PropagatorKernels {
    double t = 0.0;
    Symbol k0, k1, dk0, dk1;
};
PropagatorKernels propagator_kernels(double t, const GridSpec& g, const DampedWaveParams& p);

struct CauchyData {
    NcElement x0, x1;
    void validate() const;
    // ||x0||_{H^1} + ||x1||_2
    double size() const;
};

struct WaveSnapshot {
    double t = 0.0;
    NcElement x, dx;
};

// Uniform grid 0, dt, ..., t_max with `steps` intervals.
std::vector<double> uniform_times(double t_max, int steps);

// x(t) = K0(t) * x0 + K1(t) * x1 and its time derivative at each time.
// Times must start at 0 and increase.
std::vector<WaveSnapshot> linear_wave_solve(const CauchyData& data, const DampedWaveParams& p, const std::vector<double>& times);

// ||(1 - Delta)^{1/2} x||_2
double h1_norm(const NcElement& x);
// ||(-Delta)^{1/2} x||_2
double grad_norm(const NcElement& x);

// e^{-t|xi|^2} applied to the symbol; keeps the positivity flag.
NcElement heat_evolve(const NcElement& u0, double t);

struct DecayReport {
    std::vector<double> t, norm;
    double window = 0.5;
    double t_from = 0.0, t_to = 0.0;
    double delta_fit = 0.0;
    double delta_pred = 0.0;  // 0 when no prediction applies
};

// Least-squares slope of log(norm) over the last `window` fraction of the
// time span; delta_fit = -slope.  DomainError on nonpositive norms in the
// window or fewer than two points there.
DecayReport decay_rate_fit(const std::vector<std::pair<double, double>>& series, double window = 0.5);

struct HeatRow {
    double t = 0.0;
    double l1 = 0.0;    // trace route (u(t) is positive)
    double l2 = 0.0;
    double h1 = 0.0;
    double linf = 0.0;  // NaN where u(t) leaves the Hermite truncation
    double dt_l2 = 0.0; // ||Delta u(t)||_2
    double bound = 0.0;
    double nash_ratio = 0.0;
};

struct HeatDecayReport {
    std::vector<HeatRow> rows;
    double nash_constant = 0.0;  // the Nash quotient bound sqrt(C_{d,2})
    double c_d2 = 0.0;           // C_{d,2} = nash_constant^2
    double mass0 = 0.0;
    double max_mass_drift = 0.0; // max |l1(t) - l1(0)| / l1(0)
    double min_margin = 0.0;     // min bound - l2
    bool bound_holds = true;     // l2 <= bound + 1e-8 at every t
    bool monotone = true;        // l2 nonincreasing
    std::vector<std::string> notes;
};

// Checks ||u(t)||_2 <= (||u0||_2^{-4/d} + 4/(d C) ||u0||_1^{-4/d} t)^{-d/4}
// with C = nash.value^2.  u0 must be flagged positive; nash must be a Nash
// estimate on the dimension of u0.
HeatDecayReport heat_decay_report(const NcElement& u0, const std::vector<double>& times, const EstimatedConstant& nash);

// F(x) = x^2 (twisted product) or |x|^{p-1} x through the eigendecomposition
// of a self-adjoint truncated matrix.
struct Nonlinearity {
    enum class Form { Zero, Square, ModulusPower };
    Form form = Form::Square;
    int p = 2;

    static Nonlinearity zero() { return {Form::Zero, 2}; }
    static Nonlinearity square() { return {Form::Square, 2}; }
    static Nonlinearity modulus_power(int p);
    std::string describe() const;
    NcElement apply(const NcElement& x) const;
};

// ||F(x) - F(y)||_2 / ((||x||_{2p}^{p-1} + ||y||_{2p}^{p-1}) ||x - y||_{2p})
double lipschitz_quotient(const Nonlinearity& F, const NcElement& x, const NcElement& y);

struct PicardConfig {
    double eps = 0.1;      // data smallness: ||x0||_{H^1} + ||x1||_2 <= eps
    double M = 1.0;        // iterate bound in the Omega_0 norm
    double r = 2.0;        // contraction margin; ratios above 1/r are noted
    double delta = -1.0;   // Omega_0 weight rate; negative means delta_pred / 2
    int max_iters = 40;
    double tol = 1e-12;    // relative change of successive iterates
    double t_max = 10.0;
    int steps = 200;
};

struct PicardState {
    int iterations = 0;
    bool converged = false;
    double delta = 0.0;
    std::vector<double> omega_norms;   // ||x^(k)||_Omega0, k = 0, 1, ...
    std::vector<double> differences;   // ||x^(k+1) - x^(k)||_Omega0
    std::vector<double> contraction;   // differences[k+1] / differences[k]
    double max_contraction = 0.0;
    std::vector<std::string> notes;
};

struct SemilinearResult {
    PicardState state;
    std::vector<WaveSnapshot> solution;
};

// sup_t (1+t)^{-1/2} e^{delta t} (||x||_2 + ||x'||_2 + ||(-Delta)^{1/2} x||_2)
double omega0_norm(const std::vector<WaveSnapshot>& series, double delta);

// Picard iteration of x -> x_lin + int_0^t K1(t-s) * F(x(s)) ds with the
// composite trapezoid rule on the uniform time grid.  DivergenceError when
// an iterate leaves the Omega_0 ball of radius M; DomainError when the data
// are larger than eps.
SemilinearResult semilinear_picard(const CauchyData& data, const DampedWaveParams& p, const Nonlinearity& F,
                                   const PicardConfig& cfg);

}  // namespace ncx
