#include "ncx/multipliers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "ncx/fourier.hpp"
#include "ncx/symbol_io.hpp"
#include "ncx/symbol_ops.hpp"

namespace ncx {

std::vector<double> radius_squared(const GridSpec& g) {
    const std::vector<double> ax = g.axis();
    std::vector<double> r2{0.0};
    for (int k = 0; k < g.d; ++k) {
        std::vector<double> next(r2.size() * ax.size());
        for (std::size_t i = 0; i < r2.size(); ++i)
            for (std::size_t j = 0; j < ax.size(); ++j) next[i * ax.size() + j] = r2[i] + ax[j] * ax[j];
        r2 = std::move(next);
    }
    return r2;
}

namespace {

double norm2(const double* t, int d) {
    double r2 = 0.0;
    for (int j = 0; j < d; ++j) r2 += t[j] * t[j];
    return r2;
}

// Flat indices of the 2^d samples with every index in {N/2 - 1, N/2}.
std::vector<std::size_t> origin_cell(const GridSpec& g) {
    std::vector<std::size_t> out;
    std::vector<int> idx(g.d);
    for (unsigned mask = 0; mask < (1u << g.d); ++mask) {
        for (int k = 0; k < g.d; ++k) idx[k] = g.N / 2 - 1 + static_cast<int>((mask >> k) & 1u);
        out.push_back(g.flat(idx.data()));
    }
    return out;
}

// Whole-grid sampler for a multiplier phi(|t|^2).
std::function<std::vector<cplx>(const GridSpec&)> radial_sampler(std::function<double(double)> phi) {
    return [phi = std::move(phi)](const GridSpec& g) {
        const std::vector<double> r2 = radius_squared(g);
        std::vector<cplx> out(r2.size());
        for (std::size_t i = 0; i < r2.size(); ++i) out[i] = phi(r2[i]);
        return out;
    };
}

double unit_ball_volume(int d) { return std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d + 1.0); }

// int_0^inf r^alpha e^{-r^2 / 2} dr, alpha > -1
double radial_gaussian_moment(double alpha) {
    boost::math::quadrature::exp_sinh<double> integrator;
    return integrator.integrate([alpha](double r) { return std::pow(r, alpha) * std::exp(-0.5 * r * r); });
}

}  // namespace

Multiplier Multiplier::identity() {
    Multiplier m;
    m.fn_ = [](const double*, int) { return cplx(1.0, 0.0); };
    return m;
}

Multiplier Multiplier::derivative(int j) {
    if (j < 1) throw DomainError("derivative: axis must be at least 1");
    Multiplier m;
    m.kind_ = MultiplierKind::Derivative;
    m.name_ = "d" + std::to_string(j);
    m.param_ = j;
    m.even_ = false;
    m.real_ = false;
    m.fn_ = [j](const double* t, int d) {
        if (j > d) throw DomainError("derivative: axis exceeds the dimension");
        return cplx(0.0, t[j - 1]);
    };
    return m;
}

Multiplier Multiplier::laplacian() {
    Multiplier m;
    m.kind_ = MultiplierKind::Laplacian;
    m.name_ = "laplacian";
    m.fn_ = [](const double* t, int d) { return cplx(-norm2(t, d), 0.0); };
    m.sampler_ = radial_sampler([](double r2) { return -r2; });
    return m;
}

Multiplier Multiplier::frac_laplacian(double s) {
    if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("frac_laplacian: s must be positive");
    Multiplier m;
    m.kind_ = MultiplierKind::FracLaplacian;
    m.name_ = "frac_laplacian(" + std::to_string(s) + ")";
    m.param_ = s;
    m.fn_ = [s](const double* t, int d) { return cplx(std::pow(norm2(t, d), 0.5 * s), 0.0); };
    m.sampler_ = radial_sampler([s](double r2) { return s == 2.0 ? r2 : std::pow(r2, 0.5 * s); });
    return m;
}

Multiplier Multiplier::bessel(double gamma) {
    if (!std::isfinite(gamma)) throw DomainError("bessel: gamma must be finite");
    Multiplier m;
    m.kind_ = MultiplierKind::Bessel;
    m.name_ = "bessel(" + std::to_string(gamma) + ")";
    m.param_ = gamma;
    m.fn_ = [gamma](const double* t, int d) { return cplx(std::pow(1.0 + norm2(t, d), 0.5 * gamma), 0.0); };
    m.sampler_ = radial_sampler([gamma](double r2) { return std::pow(1.0 + r2, 0.5 * gamma); });
    return m;
}

Multiplier Multiplier::heat(double t) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("heat: t must be nonnegative");
    Multiplier m;
    m.kind_ = MultiplierKind::Heat;
    m.name_ = "heat(" + std::to_string(t) + ")";
    m.param_ = t;
    m.fn_ = [t](const double* x, int d) { return cplx(std::exp(-t * norm2(x, d)), 0.0); };
    m.sampler_ = radial_sampler([t](double r2) { return std::exp(-t * r2); });
    return m;
}

Multiplier Multiplier::riesz(double s, OriginRule rule) {
    if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("riesz: s must be positive");
    Multiplier m;
    m.kind_ = MultiplierKind::Riesz;
    m.name_ = "riesz(" + std::to_string(s) + ")";
    m.param_ = s;
    m.singular_ = true;
    m.rule_ = rule;
    m.fn_ = [s](const double* t, int d) { return cplx(std::pow(norm2(t, d), -0.5 * s), 0.0); };
    m.sampler_ = radial_sampler([s](double r2) { return std::pow(r2, -0.5 * s); });
    // int |t|^{-s} e^{-|t|^2} dt over R^d
    m.gauss_moment_ = [s](int d) {
        if (!(s < d)) throw DomainError("riesz: the Gaussian moment needs s < d");
        return std::pow(M_PI, 0.5 * d) * std::tgamma(0.5 * (d - s)) / std::tgamma(0.5 * d);
    };
    return m;
}

Multiplier Multiplier::custom(Fn fn, std::string name, bool singular_origin, bool even, bool real) {
    Multiplier m;
    m.kind_ = MultiplierKind::Custom;
    m.name_ = std::move(name);
    m.fn_ = std::move(fn);
    m.singular_ = singular_origin;
    m.even_ = even;
    m.real_ = real;
    return m;
}

Multiplier Multiplier::with_rule(OriginRule r) const {
    Multiplier m = *this;
    m.rule_ = r;
    return m;
}

Symbol Multiplier::on_grid(const GridSpec& g) const {
    g.validate();
    if (!factors_.empty()) {
        Symbol out = factors_.front().on_grid(g);
        for (std::size_t k = 1; k < factors_.size(); ++k) {
            const Symbol s = factors_[k].on_grid(g);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s[i];
        }
        return out;
    }
    Symbol out = sampler_ ? Symbol(g, sampler_(g)) : Symbol::sample(g, [&](const double* t) { return fn_(t, g.d); });
    if (!singular_) return out;

    switch (rule_) {
        case OriginRule::None:
            throw DomainError("multiplier " + name_ + " is singular at the origin and has no origin rule");
        case OriginRule::Zero:
            for (std::size_t i : origin_cell(g)) out[i] = 0.0;
            break;
        case OriginRule::Moment: {
            if (!gauss_moment_) throw DomainError("multiplier " + name_ + ": the moment rule needs a known Gaussian moment");
            const double target = gauss_moment_(g.d);
            const std::vector<std::size_t> cell_idx = origin_cell(g);
            const std::vector<double> r2 = radius_squared(g);
            for (std::size_t i : cell_idx) out[i] = 0.0;
            double off = 0.0, cell = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) off += out[i].real() * std::exp(-r2[i]);
            for (std::size_t i : cell_idx) cell += std::exp(-r2[i]);
            const double v = (target / g.cell_volume() - off) / cell;
            for (std::size_t i : cell_idx) out[i] = v;
            break;
        }
    }
    return out;
}

Multiplier Multiplier::operator*(const Multiplier& o) const {
    Multiplier m;
    m.kind_ = MultiplierKind::Custom;
    m.name_ = name_ + "*" + o.name_;
    m.singular_ = singular_ || o.singular_;
    m.rule_ = singular_ ? rule_ : o.rule_;
    m.even_ = even_ && o.even_;
    m.real_ = real_ && o.real_;
    const Fn a = fn_, b = o.fn_;
    m.fn_ = [a, b](const double* t, int d) { return a(t, d) * b(t, d); };
    // keep the factors so that on_grid applies each origin rule separately
    auto flatten = [&](const Multiplier& x) {
        if (x.factors_.empty())
            m.factors_.push_back(x);
        else
            m.factors_.insert(m.factors_.end(), x.factors_.begin(), x.factors_.end());
    };
    flatten(*this);
    flatten(o);
    return m;
}

// ---------------------------------------------------------------------------

KernelDescriptor KernelDescriptor::parse(const std::string& text) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    KernelDescriptor k;
    if (head == "heat")
        k.kind = Kind::Heat;
    else if (head == "riesz")
        k.kind = Kind::Riesz;
    else if (head == "gaussian")
        k.kind = Kind::Gaussian;
    else if (head == "custom-file" || head == "custom")
        k.kind = Kind::Custom;
    else
        throw ConfigError("kernel: unknown kind '" + head + "' (expected heat, riesz, gaussian or custom-file)");

    if (colon != std::string::npos) {
        std::stringstream ss(text.substr(colon + 1));
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            const auto eq = item.find('=');
            if (eq == std::string::npos) throw ConfigError("kernel: expected key=value, got '" + item + "'");
            const std::string key = item.substr(0, eq), val = item.substr(eq + 1);
            try {
                if (key == "t")
                    k.t = std::stod(val);
                else if (key == "s")
                    k.s = std::stod(val);
                else if (key == "a")
                    k.a = std::stod(val);
                else if (key == "path")
                    k.path = val;
                else if (key == "origin")
                    k.rule = val == "zero" ? OriginRule::Zero : val == "moment" ? OriginRule::Moment : throw ConfigError("kernel: origin must be zero or moment");
                else
                    throw ConfigError("kernel: unknown parameter '" + key + "'");
            } catch (const std::invalid_argument&) {
                throw ConfigError("kernel: parameter " + key + " is not a number: '" + val + "'");
            }
        }
    }
    if (k.kind == Kind::Heat && !(k.t >= 0.0)) throw ConfigError("kernel: heat needs t >= 0");
    if (k.kind == Kind::Riesz && !(k.s > 0.0)) throw ConfigError("kernel: riesz needs s > 0");
    if (k.kind == Kind::Gaussian && !(k.a > 0.0)) throw ConfigError("kernel: gaussian needs a > 0");
    if (k.kind == Kind::Custom && k.path.empty()) throw ConfigError("kernel: custom-file needs path=");
    return k;
}

std::string KernelDescriptor::describe() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind) {
        case Kind::Heat: os << "heat:t=" << t; break;
        case Kind::Riesz: os << "riesz:s=" << s << ",origin=" << (rule == OriginRule::Zero ? "zero" : "moment"); break;
        case Kind::Gaussian: os << "gaussian:a=" << a; break;
        case Kind::Custom: os << "custom-file:path=" << path; break;
    }
    return os.str();
}

namespace {

Symbol load_custom_kernel(const std::string& path) {
    Symbol K = read_ncsy(path);
    try {
        K.check_invariants(1e-8);
    } catch (const SupportViolation&) {
        throw DomainError("kernel " + path + ": samples do not decay inside the box, so K^ cannot be computed; "
                          "the kernel is not integrable on its grid");
    }
    return K;
}

}  // namespace

bool KernelDescriptor::positive() const {
    if (kind != Kind::Custom) return true;
    const Symbol K = load_custom_kernel(path);
    return std::all_of(K.values().begin(), K.values().end(), [](cplx v) { return v.imag() == 0.0 && v.real() >= 0.0; });
}

Multiplier KernelDescriptor::hat(int d) const {
    switch (kind) {
        case Kind::Heat: return Multiplier::heat(t);
        case Kind::Riesz:
            if (!(s < d)) throw DomainError("riesz kernel: s must lie in (0, d)");
            return Multiplier::riesz(s, rule);
        case Kind::Gaussian: {
            const double a_ = a;
            const double pref = std::pow(M_PI / a_, 0.5 * d);
            return Multiplier::custom([a_, pref](const double* x, int dd) { return cplx(pref * std::exp(-norm2(x, dd) / (4.0 * a_)), 0.0); },
                                      describe(), false, true, true);
        }
        case Kind::Custom: {
            auto K = std::make_shared<const Symbol>(load_custom_kernel(path));
            if (K->grid().d != d) throw DomainError("kernel " + path + ": dimension does not match the element");
            Multiplier m = Multiplier::custom(
                [K](const double* xi, int dd) {
                    // direct quadrature of int K(x) e^{-i(xi, x)} dx
                    std::vector<double> x(dd);
                    cplx acc = 0.0;
                    for (std::size_t i = 0; i < K->size(); ++i) {
                        K->point(i, x.data());
                        double ph = 0.0;
                        for (int j = 0; j < dd; ++j) ph += xi[j] * x[j];
                        acc += (*K)[i] * std::polar(1.0, -ph);
                    }
                    return acc * K->grid().cell_volume();
                },
                describe());
            m.kind_ = MultiplierKind::KernelHat;
            m.sampler_ = [K](const GridSpec& g) { return classical_ft_at(*K, g.axis(), FtDirection::Forward); };
            return m;
        }
    }
    throw DomainError("kernel: unknown kind");
}

double KernelDescriptor::weak_norm(int d, double q) const {
    if (!(q >= 1.0)) throw DomainError("kernel weak norm: q must be at least 1");
    // A e^{-b|x|^2}: |{K > l}| = omega_d (log(A/l) / b)^{d/2}; the supremum of
    // l |{K > l}|^{1/q} sits at log(A/l) = d / (2q).
    auto gaussian_weak = [&](double A, double b) {
        if (std::isinf(q)) return A;
        const double beta = 0.5 * d / q;
        return A * std::pow(unit_ball_volume(d), 1.0 / q) * std::pow(beta / (M_E * b), beta);
    };
    if (kind == Kind::Heat && t == 0.0) throw DomainError("kernel: the t = 0 heat kernel is the Dirac mass and has no weak norm");
    switch (kind) {
        case Kind::Heat: return gaussian_weak(std::pow(4.0 * M_PI * t, -0.5 * d), 1.0 / (4.0 * t));
        case Kind::Gaussian: return gaussian_weak(1.0, a);
        case Kind::Riesz: {
            if (!(s < d)) throw DomainError("riesz kernel: s must lie in (0, d)");
            const double qs = d / (d - s);
            if (std::abs(q - qs) > 1e-12 * qs)
                throw DomainError("riesz kernel: K_s lies in L^{q,inf} only for q = d/(d-s)");
            return riesz_constants(d, s).analytic * std::pow(unit_ball_volume(d), 1.0 - s / d);
        }
        case Kind::Custom: {
            const Symbol K = load_custom_kernel(path);
            if (K.grid().d != d) throw DomainError("kernel " + path + ": dimension does not match");
            return classical_norm(K, q, true);
        }
    }
    throw DomainError("kernel: unknown kind");
}

double KernelDescriptor::value(const double* x, int d) const {
    const double r2 = norm2(x, d);
    switch (kind) {
        case Kind::Heat:
            if (t == 0.0) throw DomainError("kernel: the t = 0 heat kernel is the Dirac mass");
            return std::pow(4.0 * M_PI * t, -0.5 * d) * std::exp(-r2 / (4.0 * t));
        case Kind::Gaussian: return std::exp(-a * r2);
        case Kind::Riesz:
            if (!(s < d)) throw DomainError("riesz kernel: s must lie in (0, d)");
            return riesz_constants(d, s).analytic * std::pow(r2, 0.5 * (s - d));
        case Kind::Custom: throw DomainError("kernel: pointwise values of a custom kernel are only available on its grid");
    }
    throw DomainError("kernel: unknown kind");
}

RieszConstants riesz_constants(int d, double s) {
    if (d < 1 || !(s > 0.0) || !(s < d)) throw DomainError("riesz constants: need 0 < s < d");
    RieszConstants c;
    c.analytic = std::tgamma(0.5 * (d - s)) / (std::pow(2.0, s) * std::pow(M_PI, 0.5 * d) * std::tgamma(0.5 * s));
    // Parseval with g = e^{-|x|^2/2}, g^ = (2pi)^{d/2} e^{-|xi|^2/2}:
    //   C int |x|^{s-d} g = (2pi)^{-d/2} int |xi|^{-s} e^{-|xi|^2/2};
    // the sphere areas cancel, leaving two radial integrals.
    c.calibrated = std::pow(2.0 * M_PI, -0.5 * d) * radial_gaussian_moment(d - 1.0 - s) / radial_gaussian_moment(s - 1.0);
    c.printed = std::pow(2.0 * M_PI, s) * std::pow(M_PI, -0.5 * (s + d)) / std::pow(M_PI, 0.5 * s) * std::tgamma(0.5 * (d + s)) /
                std::tgamma(-0.5 * s);
    return c;
}

// ---------------------------------------------------------------------------

NcElement apply_multiplier(const NcElement& x, const Multiplier& m) {
    const Symbol sigma = m.on_grid(x.symbol().grid());
    Symbol f = x.symbol();
    for (std::size_t i = 0; i < f.size(); ++i) f[i] *= sigma[i];
    if (!f.all_finite()) throw NumericalError("apply_multiplier: " + m.name() + " produced non-finite samples");
    return x.with_symbol(std::move(f));
}

NcElement partial_theta(const NcElement& x, int j) {
    const int d = x.symbol().grid().d;
    if (j < 1 || j > d) throw DomainError("partial_theta: axis " + std::to_string(j) + " outside 1.." + std::to_string(d));
    return apply_multiplier(x, Multiplier::derivative(j));
}

double gradient_l2(const NcElement& x) {
    // sum_j ||t_j f||^2 = || |t| f ||^2
    const Symbol& f = x.symbol();
    const std::vector<double> r2 = radius_squared(f.grid());
    double acc = 0.0;
    for (std::size_t i = 0; i < r2.size(); ++i) acc += r2[i] * std::norm(f[i]);
    return std::sqrt(acc * f.grid().cell_volume());
}

NcElement laplacian(const NcElement& x) { return apply_multiplier(x, Multiplier::laplacian()); }

NcElement fractional_laplacian(const NcElement& x, double s) { return apply_multiplier(x, Multiplier::frac_laplacian(s)); }

NcElement bessel_potential(const NcElement& x, double gamma) { return apply_multiplier(x, Multiplier::bessel(gamma)); }

NcElement riesz_apply(const NcElement& x, double s, OriginRule rule) {
    const int d = x.symbol().grid().d;
    if (!(s > 0.0) || !(s < d)) throw DomainError("riesz_apply: s must lie in (0, d)");
    return apply_multiplier(x, Multiplier::riesz(s, rule));
}

NcElement convolve_kernel(const KernelDescriptor& k, const NcElement& x) {
    const NcElement y = apply_multiplier(x, k.hat(x.symbol().grid().d));
    return x.positive() && k.positive() ? y.with_symbol(y.symbol(), true) : y;
}

}  // namespace ncx
