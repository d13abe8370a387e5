#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ncx/element.hpp"

namespace ncx {

// How a multiplier that is singular at t = 0 treats the 2^d samples
// adjacent to the origin (the origin cell of the half-offset grid).
enum class OriginRule {
    None,    // no rule declared; applying a singular multiplier throws
    Zero,    // zero the origin cell
    Moment   // choose the origin-cell value so that the grid quadrature of
             // sigma(t) e^{-|t|^2} is exact
};

enum class MultiplierKind { Identity, Derivative, Laplacian, FracLaplacian, Bessel, KernelHat, Riesz, Heat, Custom };

class Multiplier {
public:
    using Fn = std::function<cplx(const double* t, int d)>;

    static Multiplier identity();
    // i t_j, axis j in [1, d]
    static Multiplier derivative(int j);
    // -|t|^2
    static Multiplier laplacian();
    // |t|^s, s > 0
    static Multiplier frac_laplacian(double s);
    // (1 + |t|^2)^{gamma/2}
    static Multiplier bessel(double gamma);
    // e^{-t |xi|^2}
    static Multiplier heat(double t);
    // |t|^{-s}; singular at the origin
    static Multiplier riesz(double s, OriginRule rule = OriginRule::Zero);
    static Multiplier custom(Fn fn, std::string name, bool singular_origin = false, bool even = false, bool real = false);

    MultiplierKind kind() const { return kind_; }
    const std::string& name() const { return name_; }
    bool singular_origin() const { return singular_; }
    OriginRule rule() const { return rule_; }
    bool even() const { return even_; }
    bool real() const { return real_; }
    double param() const { return param_; }
    Multiplier with_rule(OriginRule r) const;

    cplx operator()(const double* t, int d) const { return fn_(t, d); }
    // Samples on the grid with the origin rule applied.
    Symbol on_grid(const GridSpec& g) const;
    // Pointwise product; singular if either factor is.
    Multiplier operator*(const Multiplier& o) const;

private:
    friend struct KernelDescriptor;
    MultiplierKind kind_ = MultiplierKind::Identity;
    std::string name_ = "identity";
    Fn fn_;
    bool singular_ = false;
    bool even_ = true;
    bool real_ = true;
    double param_ = 0.0;
    OriginRule rule_ = OriginRule::None;
    // int sigma(t) e^{-|t|^2} dt as a function of d, for the moment rule
    std::function<double(int)> gauss_moment_;
    // whole-grid evaluation when faster than pointwise fn_
    std::function<std::vector<cplx>(const GridSpec&)> sampler_;
    std::vector<Multiplier> factors_;
};

// Classical kernels K on R^d acting by K * x = lambda(K^ f).
struct KernelDescriptor {
    enum class Kind { Heat, Riesz, Gaussian, Custom };
    Kind kind = Kind::Heat;
    double t = 1.0;      // heat: (4 pi t)^{-d/2} e^{-|x|^2 / 4t}
    double s = 1.0;      // riesz: K^ = |xi|^{-s}, 0 < s < d
    double a = 1.0;      // gaussian: e^{-a |x|^2}
    std::string path;    // custom: NCSY samples of K on its own grid
    OriginRule rule = OriginRule::Moment;

    // "heat:t=0.5", "riesz:s=1", "gaussian:a=2", "custom-file:path=k.ncsy"
    static KernelDescriptor parse(const std::string& text);
    std::string describe() const;
    bool positive() const;
    // K^ as a multiplier for dimension d.
    Multiplier hat(int d) const;
    // Analytic ||K||_{L^{q,inf}(R^d)}; for Riesz kernels q must equal d/(d-s).
    double weak_norm(int d, double q) const;
    // K(x) at a point (Riesz: the Gamma-function constant).
    double value(const double* x, int d) const;
};

// Constants of the Riesz kernel K_s = C |x|^{s-d} with K^ = |xi|^{-s}.
struct RieszConstants {
    double analytic = 0.0;    // Gamma((d-s)/2) / (2^s pi^{d/2} Gamma(s/2))
    double calibrated = 0.0;  // from pairing K_s with a Gaussian by radial quadrature
    double printed = 0.0;     // (2pi)^s pi^{-(s+d)/2} pi^{-s/2} Gamma((d+s)/2) / Gamma(-s/2)
};
RieszConstants riesz_constants(int d, double s);

// |t|^2 at every grid point in flat order, built axis by axis.
std::vector<double> radius_squared(const GridSpec& g);

NcElement apply_multiplier(const NcElement& x, const Multiplier& m);
NcElement partial_theta(const NcElement& x, int j);
// (sum_j ||d_j x||_2^2)^{1/2}
double gradient_l2(const NcElement& x);
NcElement laplacian(const NcElement& x);
NcElement fractional_laplacian(const NcElement& x, double s);
NcElement bessel_potential(const NcElement& x, double gamma);
NcElement riesz_apply(const NcElement& x, double s, OriginRule rule = OriginRule::Zero);
NcElement convolve_kernel(const KernelDescriptor& k, const NcElement& x);

}  // namespace ncx
