#include "ncx/element.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ncx/fft.hpp"
#include "ncx/fourier.hpp"
#include "ncx/symbol_ops.hpp"

namespace ncx {

std::shared_ptr<const Backend> Backend::noncommutative(const GridSpec& grid, double h, int M,
                                                       std::optional<TraceCalibration> cal, double tail_tol) {
    grid.validate();
    auto b = std::make_shared<Backend>();
    b->kind = BackendKind::NcMatrix;
    b->grid = grid;
    b->theta = ThetaMatrix::canonical(grid.d, h);
    b->trunc = HermiteTruncation{M, h};
    b->trunc.validate();
    b->tail_tol = tail_tol;
    if (cal) {
        if (cal->d != grid.d || cal->M != M || std::abs(cal->h - h) > 1e-14 * h || !cal->valid())
            throw CalibrationError("backend: supplied calibration does not match d, h and M");
        b->calibration = *cal;
    } else {
        b->calibration = calibrate_trace(b->trunc, b->theta, grid, {}, tail_tol);
    }
    return b;
}

std::shared_ptr<const Backend> Backend::commutative(const GridSpec& grid) {
    grid.validate();
    auto b = std::make_shared<Backend>();
    b->kind = BackendKind::Commutative;
    b->grid = grid;
    b->theta = ThetaMatrix::zero(grid.d);
    return b;
}

BackendConfig BackendConfig::from_tag(const std::string& tag) {
    BackendConfig c;
    if (tag == "nc2") {
        c.grid = GridSpec{2, 12.0, 128};
        c.M = 64;
    } else if (tag == "nc4") {
        c.grid = GridSpec{4, 6.5, 32};
        c.M = 32;
    } else if (tag.rfind("comm:", 0) == 0) {
        int d = 0;
        try {
            d = std::stoi(tag.substr(5));
        } catch (const std::exception&) {
            throw ConfigError("backend: bad dimension in '" + tag + "'");
        }
        if (d < 1 || d > 6) throw ConfigError("backend: commutative dimension must be in 1..6");
        c.kind = BackendKind::Commutative;
        c.h = 0.0;
        c.M = 0;
        if (d <= 2)
            c.grid = GridSpec{d, 12.0, d == 1 ? 256 : 128};
        else if (d == 3)
            c.grid = GridSpec{3, 8.0, 32};
        else
            c.grid = GridSpec{d, 6.5, 16};
    } else {
        throw ConfigError("backend: unknown tag '" + tag + "' (expected nc2, nc4 or comm:<d>)");
    }
    return c;
}

std::string BackendConfig::tag() const {
    if (kind == BackendKind::Commutative) return "comm:" + std::to_string(grid.d);
    return "nc" + std::to_string(grid.d);
}

BackendConfig BackendConfig::refined() const {
    BackendConfig c = *this;
    c.grid = grid.refined();
    if (kind == BackendKind::NcMatrix) c.M = 2 * M;
    c.calibration.reset();
    return c;
}

void BackendConfig::validate() const {
    try {
        grid.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("backend: ") + e.what());
    }
    if (kind == BackendKind::NcMatrix) {
        if (grid.d != 2 && grid.d != 4) throw ConfigError("backend: the matrix backend supports d = 2 and d = 4");
        if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("backend: h must be positive");
        if (M < 2) throw ConfigError("backend: M must be at least 2");
    }
    if (!(tail_tol > 0.0)) throw ConfigError("backend: tail_tol must be positive");
}

BackendPtr BackendConfig::build(std::optional<TraceCalibration> cal) const {
    validate();
    if (kind == BackendKind::Commutative) return Backend::commutative(grid);
    if (!cal && calibration) {
        const TraceCalibration& c = *calibration;
        if (c.d != grid.d || c.h != h || c.M != M || c.N != grid.N || c.L != grid.L)
            throw ConfigError("backend: the calibration manifest was made for d=" + std::to_string(c.d) + ", h=" + std::to_string(c.h) +
                              ", M=" + std::to_string(c.M) + ", N=" + std::to_string(c.N) + ", L=" + std::to_string(c.L));
        cal = c;
    }
    return Backend::noncommutative(grid, h, M, std::move(cal), tail_tol);
}

BackendPtr without_tail_check(const BackendPtr& b) {
    auto c = std::make_shared<Backend>(*b);
    c->tail_tol = std::numeric_limits<double>::infinity();
    return c;
}

double Backend::atom_measure() const {
    if (kind == BackendKind::NcMatrix) return calibration.c_theta;
    return std::pow(1.0 / (2.0 * grid.L), grid.d);
}

std::string Backend::tag() const {
    if (kind == BackendKind::Commutative) return "comm:" + std::to_string(grid.d);
    return "nc" + std::to_string(grid.d);
}

bool Backend::same_as(const Backend& o) const {
    if (this == &o) return true;
    return kind == o.kind && grid == o.grid && theta == o.theta && trunc.M == o.trunc.M && trunc.h == o.trunc.h &&
           calibration.c_theta == o.calibration.c_theta;
}

double SingularValueFn::mu(double t) const {
    if (t < 0.0) throw DomainError("mu: t must be nonnegative");
    const double k = std::floor(t / weight);
    if (k >= static_cast<double>(values.size())) return 0.0;
    return values[static_cast<std::size_t>(k)];
}

double SingularValueFn::distribution(double s) const {
    // values are decreasing: count those strictly above s
    const auto it = std::lower_bound(values.begin(), values.end(), s, [](double v, double x) { return v > x; });
    return weight * static_cast<double>(it - values.begin());
}

double SingularValueFn::norm(double p, bool weak) const {
    if (std::isinf(p) && sup) return *sup;
    return classical_norm(values, weight, p, weak);
}

NcElement::NcElement(Symbol f, BackendPtr backend, bool positive, std::string label)
    : f_(std::move(f)), backend_(std::move(backend)), positive_(positive), label_(std::move(label)) {
    if (!backend_) throw DomainError("element: missing backend");
    if (!(f_.grid() == backend_->grid)) throw DomainError("element: symbol grid does not match the backend grid");
    if (!f_.all_finite()) throw NumericalError("element: non-finite symbol samples");
}

NcElement NcElement::from_matrix(const MatrixRep& X, BackendPtr backend, bool positive) {
    if (!backend || backend->kind != BackendKind::NcMatrix) throw DomainError("from_matrix: matrix backend required");
    MatrixRep Y = X;
    Y.calibrate(backend->calibration);
    NcElement e(dequantize(Y, backend->grid), backend, positive);
    e.cache_->matrix = std::move(Y);
    return e;
}

NcElement NcElement::with_symbol(Symbol f, bool positive) const { return NcElement(std::move(f), backend_, positive, label_); }

NcElement NcElement::with_label(std::string label) const {
    NcElement e = *this;
    e.label_ = std::move(label);
    return e;
}

const MatrixRep& NcElement::matrix() const {
    if (backend_->kind != BackendKind::NcMatrix) throw DomainError("element: the commutative backend has no matrix realization");
    std::lock_guard<std::mutex> lock(cache_->mu);
    if (!cache_->matrix) {
        const Backend& b = *backend_;
        MatrixRep X = quantize(f_, b.theta, b.trunc, QuantizeMode::General, QuantizeRoute::Fast, b.tail_tol);
        X.calibrate(b.calibration);
        cache_->matrix = std::move(X);
    }
    return *cache_->matrix;
}

namespace {

// |F(s)|, F(s) = int f(t) e^{i(t, s)} dt, on the lattice s = k pi / L,
// k = -N/2 .. N/2 - 1, which spans the band [-pi/h_grid, pi/h_grid) resolved
// by the grid and contains s = 0.  With t_j = -L + (j + 1/2) h_grid each axis
// is a length-N DFT up to unit-modulus phases, so only the FFT magnitudes
// are needed (in FFT bin order; callers sort them).
std::vector<double> commutative_profile_abs(const Symbol& f) {
    const GridSpec& g = f.grid();
    std::vector<cplx> data = f.values();
    for (int a = 0; a < g.d; ++a) fft::dft_axis(data, g.d, g.N, a, +1);
    const double w = g.cell_volume();
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = w * std::abs(data[i]);
    return out;
}

// sup_s |F(s)| of the trigonometric profile, which in general peaks between
// lattice points.  Damped Newton ascent on |F|^2 from the largest lattice
// sample; F and its first two derivatives are direct sums over the grid.
double commutative_profile_sup(const Symbol& f, const std::vector<double>& abs_values) {
    const GridSpec& g = f.grid();
    const int d = g.d, N = g.N;
    const std::size_t start = static_cast<std::size_t>(
        std::max_element(abs_values.begin(), abs_values.end()) - abs_values.begin());
    if (abs_values[start] == 0.0) return 0.0;

    std::vector<int> idx(d);
    g.unflat(start, idx.data());
    Eigen::VectorXd s(d);
    for (int a = 0; a < d; ++a) s(a) = (idx[a] < N / 2 ? idx[a] : idx[a] - N) * M_PI / g.L;
    const std::vector<double> axis = g.axis();

    struct Eval {
        double G;
        Eigen::VectorXd grad;
        Eigen::MatrixXd hess;
    };
    // Moments sum_k f_k e^{i(t_k, s)} t_k^alpha for |alpha| <= 2, contracting
    // one axis at a time from the last (contiguous) one.
    auto evaluate = [&](const Eigen::VectorXd& at) {
        struct Moment {
            std::vector<int> alpha;
            std::vector<cplx> values;
        };
        std::vector<Moment> cur{{std::vector<int>(d, 0), f.values()}};
        std::size_t prefix = f.size();
        std::vector<cplx> w(3 * N);
        for (int a = d - 1; a >= 0; --a) {
            for (int k = 0; k < N; ++k) {
                w[k] = std::polar(1.0, axis[k] * at(a));
                w[N + k] = axis[k] * w[k];
                w[2 * N + k] = axis[k] * w[N + k];
            }
            prefix /= N;
            std::vector<Moment> next;
            for (const Moment& m : cur) {
                int used = 0;
                for (int e : m.alpha) used += e;
                for (int e = 0; used + e <= 2; ++e) {
                    Moment n{m.alpha, std::vector<cplx>(prefix)};
                    n.alpha[a] = e;
                    const cplx* we = &w[e * N];
                    for (std::size_t q = 0; q < prefix; ++q) {
                        const cplx* row = &m.values[q * N];
                        cplx acc = 0.0;
                        for (int k = 0; k < N; ++k) acc += row[k] * we[k];
                        n.values[q] = acc;
                    }
                    next.push_back(std::move(n));
                }
            }
            cur = std::move(next);
        }
        auto moment = [&](int a, int b) {
            std::vector<int> alpha(d, 0);
            if (a >= 0) ++alpha[a];
            if (b >= 0) ++alpha[b];
            for (const Moment& m : cur)
                if (m.alpha == alpha) return m.values[0];
            return cplx(0.0);
        };
        const cplx F = moment(-1, -1);
        Eval e{std::norm(F), Eigen::VectorXd(d), Eigen::MatrixXd(d, d)};
        for (int a = 0; a < d; ++a) {
            const cplx dFa = cplx(0.0, 1.0) * moment(a, -1);
            e.grad(a) = 2.0 * (std::conj(F) * dFa).real();
            for (int b = a; b < d; ++b) {
                const cplx dFb = cplx(0.0, 1.0) * moment(b, -1);
                e.hess(a, b) = e.hess(b, a) = 2.0 * (std::conj(dFb) * dFa - std::conj(F) * moment(a, b)).real();
            }
        }
        return e;
    };

    const double cell = M_PI / g.L;
    Eval cur = evaluate(s);
    for (int it = 0; it < 40; ++it) {
        Eigen::VectorXd step;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cur.hess);
        if (es.eigenvalues().maxCoeff() < 0.0)
            step = -es.eigenvectors() * (es.eigenvectors().transpose() * cur.grad).cwiseQuotient(es.eigenvalues());
        else
            step = cur.grad * (0.1 * cell / (cur.grad.norm() + 1e-300));
        if (step.norm() > cell) step *= cell / step.norm();
        // the Newton error is quadratic in the step, far below rounding here
        if (step.norm() < 1e-7 * cell) break;
        bool improved = false;
        for (int half = 0; half < 12 && !improved; ++half, step *= 0.5) {
            Eval next = evaluate(s + step);
            if (next.G > cur.G) {
                s += step;
                cur = std::move(next);
                improved = true;
            }
        }
        if (!improved) break;
    }
    return std::max(abs_values[start], g.cell_volume() * std::sqrt(cur.G));
}

}  // namespace

const SingularValueFn& NcElement::singular_values() const {
    if (backend_->kind == BackendKind::NcMatrix) matrix();
    std::lock_guard<std::mutex> lock(cache_->mu);
    if (!cache_->sv) {
        SingularValueFn s;
        s.weight = backend_->atom_measure();
        if (backend_->kind == BackendKind::NcMatrix) {
            const Eigen::VectorXd v = cache_->matrix->singular_values();
            s.values.assign(v.data(), v.data() + v.size());
            s.source = "svd";
        } else {
            s.values = commutative_profile_abs(f_);
            s.sup = commutative_profile_sup(f_, s.values);
            std::sort(s.values.begin(), s.values.end(), std::greater<>());
            s.source = "rearrangement";
        }
        cache_->sv = std::move(s);
    }
    return *cache_->sv;
}

cplx trace(const NcElement& x) { return value_at_origin(x.symbol()); }

cplx pairing(const NcElement& x, const NcElement& y) {
    require_compatible(x, y, "pairing");
    const Symbol& f = x.symbol();
    const Symbol& g = y.symbol();
    const GridSpec& gr = f.grid();
    cplx acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * g[gr.reflect(i)];
    return acc * gr.cell_volume();
}

double lp_norm(const NcElement& x, double p, bool weak, NormRoute route) {
    validate_exponent(p, "lp_norm");
    if (route == NormRoute::Auto) {
        if (p == 2.0 && !weak)
            route = NormRoute::Plancherel;
        else if (p == 1.0 && !weak && x.positive())
            route = NormRoute::Trace;
        else
            route = NormRoute::SingularValues;
    }
    switch (route) {
        case NormRoute::Plancherel:
            if (p != 2.0 || weak) throw DomainError("lp_norm: the Plancherel route computes the strong p = 2 norm only");
            return x.symbol().l2_norm();
        case NormRoute::Trace:
            if (p != 1.0 || weak || !x.positive())
                throw DomainError("lp_norm: the trace route needs p = 1 and a positive element");
            return std::max(0.0, trace(x).real());
        default: return x.singular_values().norm(p, weak);
    }
}

double sobolev_norm(const NcElement& x, double gamma) {
    const Symbol& f = x.symbol();
    const GridSpec& g = f.grid();
    std::vector<double> t(g.d);
    double acc = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.point(i, t.data());
        double r2 = 0.0;
        for (double v : t) r2 += v * v;
        acc += std::pow(1.0 + r2, gamma) * std::norm(f[i]);
    }
    return std::sqrt(acc * g.cell_volume());
}

double entropy(const NcElement& x) {
    if (x.is_zero()) throw ZeroElementError("entropy: x = 0");
    const SingularValueFn& s = x.singular_values();
    double s2 = 0.0;
    for (double v : s.values) s2 += v * v;
    s2 *= s.weight;
    if (!(s2 > 0.0)) throw ZeroElementError("entropy: all singular values vanish");
    const double top = s.values.front() * s.values.front() / s2;
    double acc = 0.0;
    for (double v : s.values) {
        const double lam = v * v / s2;
        if (lam < 1e-14 * top) break;  // decreasing
        acc += lam * std::log(lam);
    }
    return s.weight * acc;
}

void require_compatible(const NcElement& x, const NcElement& y, const char* what) {
    if (!x.backend().same_as(y.backend())) {
        std::ostringstream os;
        os << what << ": elements live on different backends (" << x.backend().tag() << " vs " << y.backend().tag() << ")";
        throw DomainError(os.str());
    }
}

NcElement multiply(const NcElement& x, const NcElement& y) {
    require_compatible(x, y, "multiply");
    return x.with_symbol(twisted_convolution(x.symbol(), y.symbol(), x.backend().theta));
}

NcElement adjoint(const NcElement& x) { return x.with_symbol(sharp(x.symbol()), x.positive()); }

NcElement star_square(const NcElement& y) {
    return y.with_symbol(twisted_convolution(sharp(y.symbol()), y.symbol(), y.backend().theta), true);
}

NcElement linear_combination(cplx a, const NcElement& x, cplx b, const NcElement& y) {
    require_compatible(x, y, "linear_combination");
    const bool pos = x.positive() && y.positive() && a.imag() == 0.0 && b.imag() == 0.0 && a.real() >= 0.0 && b.real() >= 0.0;
    return x.with_symbol(a * x.symbol() + b * y.symbol(), pos);
}

NcElement flat_element(const BackendPtr& backend, int k, double alpha) {
    if (!backend || backend->kind != BackendKind::NcMatrix) throw DomainError("flat_element: matrix backend required");
    const int M = backend->trunc.M;
    const Eigen::Index dim = backend->grid.d == 2 ? M : static_cast<Eigen::Index>(M) * M;
    if (k < 1 || k > dim) throw DomainError("flat_element: rank out of range");
    Eigen::VectorXcd diag = Eigen::VectorXcd::Zero(dim);
    // lowest modes first so the symbol stays well inside the box
    if (backend->grid.d == 2) {
        diag.head(k).setConstant(alpha);
    } else {
        int placed = 0;
        for (int s = 0; placed < k; ++s)
            for (int n1 = 0; n1 <= s && placed < k; ++n1) {
                diag(static_cast<Eigen::Index>(n1) * M + (s - n1)) = alpha;
                ++placed;
            }
    }
    return NcElement::from_matrix(MatrixRep::from_diagonal(backend->grid.d, backend->trunc, std::move(diag)), backend,
                                  alpha > 0.0);
}

}  // namespace ncx
