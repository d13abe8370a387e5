#include "ncx/grid.hpp"

#include <cmath>
#include <sstream>

namespace ncx {

double GridSpec::cell_volume() const { return std::pow(spacing(), d); }

std::size_t GridSpec::size() const {
    std::size_t n = 1;
    for (int i = 0; i < d; ++i) n *= static_cast<std::size_t>(N);
    return n;
}

std::vector<double> GridSpec::axis() const {
    std::vector<double> a(N);
    for (int k = 0; k < N; ++k) a[k] = coord(k);
    return a;
}

std::size_t GridSpec::flat(const int* idx) const {
    std::size_t f = 0;
    for (int i = 0; i < d; ++i) f = f * N + idx[i];
    return f;
}

void GridSpec::unflat(std::size_t f, int* idx) const {
    for (int i = d - 1; i >= 0; --i) {
        idx[i] = static_cast<int>(f % N);
        f /= N;
    }
}

std::size_t GridSpec::reflect(std::size_t f) const {
    std::size_t r = 0, mul = 1;
    for (int i = 0; i < d; ++i) {
        int k = static_cast<int>(f % N);
        f /= N;
        r += static_cast<std::size_t>(N - 1 - k) * mul;
        mul *= N;
    }
    return r;
}

void GridSpec::validate() const {
    if (d < 1) throw DomainError("grid: dimension must be >= 1");
    if (!(L > 0.0) || !std::isfinite(L)) throw DomainError("grid: L must be positive");
    if (N < 2 || (N & (N - 1)) != 0) throw DomainError("grid: N must be a power of two >= 2");
    if (std::pow(static_cast<double>(N), d) > 2.0e8) throw DomainError("grid: too many points");
}

ThetaMatrix ThetaMatrix::zero(int d) {
    if (d < 1) throw DomainError("theta: dimension must be >= 1");
    ThetaMatrix t;
    t.d_ = d;
    return t;
}

ThetaMatrix ThetaMatrix::canonical(int d, double h) {
    if (d != 2 && d != 4) throw DomainError("theta: canonical form supports d = 2 or d = 4");
    return from_blocks(std::vector<double>(d / 2, h));
}

ThetaMatrix ThetaMatrix::from_blocks(const std::vector<double>& hs) {
    if (hs.empty()) throw DomainError("theta: at least one block required");
    for (double h : hs)
        if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("theta: block scale h must be positive");
    ThetaMatrix t;
    t.d_ = 2 * static_cast<int>(hs.size());
    t.blocks_ = hs;
    return t;
}

Eigen::MatrixXd ThetaMatrix::matrix() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d_, d_);
    for (int b = 0; b < num_blocks(); ++b) {
        m(2 * b, 2 * b + 1) = -blocks_[b];
        m(2 * b + 1, 2 * b) = blocks_[b];
    }
    return m;
}

double ThetaMatrix::form(const double* t, const double* s) const {
    double acc = 0.0;
    for (int b = 0; b < num_blocks(); ++b) {
        const double* tb = t + 2 * b;
        const double* sb = s + 2 * b;
        acc += blocks_[b] * (tb[1] * sb[0] - tb[0] * sb[1]);
    }
    return acc;
}

Symbol::Symbol(const GridSpec& g) : grid_(g) {
    g.validate();
    v_.assign(g.size(), cplx(0.0, 0.0));
}

Symbol::Symbol(const GridSpec& g, std::vector<cplx> values) : grid_(g), v_(std::move(values)) {
    g.validate();
    if (v_.size() != g.size()) throw DomainError("symbol: value count does not match grid");
}

Symbol Symbol::sample(const GridSpec& g, const std::function<cplx(const double*)>& fn) {
    Symbol s(g);
    std::vector<double> t(g.d);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s.point(i, t.data());
        s.v_[i] = fn(t.data());
    }
    return s;
}

void Symbol::point(std::size_t i, double* t) const {
    std::vector<int> idx(grid_.d);
    grid_.unflat(i, idx.data());
    for (int a = 0; a < grid_.d; ++a) t[a] = grid_.coord(idx[a]);
}

double Symbol::max_abs() const {
    double m = 0.0;
    for (const auto& z : v_) m = std::max(m, std::abs(z));
    return m;
}

double Symbol::boundary_max_abs() const {
    double m = 0.0;
    std::vector<int> idx(grid_.d);
    for (std::size_t i = 0; i < v_.size(); ++i) {
        grid_.unflat(i, idx.data());
        bool edge = false;
        for (int a = 0; a < grid_.d; ++a)
            if (idx[a] == 0 || idx[a] == grid_.N - 1) edge = true;
        if (edge) m = std::max(m, std::abs(v_[i]));
    }
    return m;
}

bool Symbol::all_finite() const {
    for (const auto& z : v_)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

void Symbol::check_invariants(double decay_tol) const {
    if (!all_finite()) throw NumericalError("symbol: non-finite sample");
    const double mx = max_abs();
    if (mx == 0.0) return;
    const double edge = boundary_max_abs();
    if (edge > decay_tol * mx) {
        std::ostringstream os;
        os << "symbol: boundary shell max " << edge << " exceeds decay_tol * max = " << decay_tol * mx;
        throw SupportViolation(os.str());
    }
}

double Symbol::l2_norm() const {
    double acc = 0.0;
    for (const auto& z : v_) acc += std::norm(z);
    return std::sqrt(acc * grid_.cell_volume());
}

Symbol& Symbol::operator+=(const Symbol& o) {
    require_same_grid(*this, o, "symbol +");
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    return *this;
}

Symbol& Symbol::operator-=(const Symbol& o) {
    require_same_grid(*this, o, "symbol -");
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    return *this;
}

Symbol& Symbol::operator*=(cplx a) {
    for (auto& z : v_) z *= a;
    return *this;
}

void require_same_grid(const Symbol& a, const Symbol& b, const char* what) {
    if (a.grid() != b.grid()) throw DomainError(std::string(what) + ": grid mismatch");
}

double relative_l2(const Symbol& a, const Symbol& b) {
    require_same_grid(a, b, "relative_l2");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

double sup_distance(const Symbol& a, const Symbol& b) {
    require_same_grid(a, b, "sup_distance");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace ncx
