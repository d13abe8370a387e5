#include "ncx/weyl.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "ncx/binary.hpp"
#include "ncx/symbol_io.hpp"
#include "ncx/symbol_ops.hpp"

namespace ncx {

namespace {

std::vector<double> log_factorials(int n) {
    std::vector<double> lf(n + 1, 0.0);
    for (int k = 1; k <= n; ++k) lf[k] = lf[k - 1] + std::log(static_cast<double>(k));
    return lf;
}

Eigen::VectorXcd kron(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    Eigen::VectorXcd k(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) k.segment(i * b.size(), b.size()) = a(i) * b;
    return k;
}

int tail_cut(int M) { return M - static_cast<int>(std::ceil(0.1 * M)); }

void check_theta(const Symbol& f, const ThetaMatrix& theta, const HermiteTruncation& trunc) {
    trunc.validate();
    const int d = f.grid().d;
    if (theta.dim() != d) throw DomainError("quantize: theta dimension does not match the symbol");
    if (theta.is_zero()) throw DomainError("quantize: theta = 0 has no matrix realization (use the commutative backend)");
    if (d != 2 && d != 4) throw DomainError("quantize: only d = 2 and d = 4 are supported");
    for (double hb : theta.blocks())
        if (std::abs(hb - trunc.h) > 1e-14 * trunc.h)
            throw DomainError("quantize: truncation h does not match the theta blocks");
}

// Necessary conditions for rotation invariance inside every block: invariance
// under the grid-exact maps (t_a, t_b) -> (t_b, t_a) and t_a -> -t_a.
void check_radial(const Symbol& f) {
    const GridSpec& g = f.grid();
    const double tol = 1e-10 * f.max_abs();
    std::vector<int> idx(g.d), img(g.d);
    for (std::size_t i = 0; i < f.size(); ++i) {
        g.unflat(i, idx.data());
        for (int b = 0; b < g.d / 2; ++b) {
            img = idx;
            std::swap(img[2 * b], img[2 * b + 1]);
            if (std::abs(f[g.flat(img.data())] - f[i]) > tol)
                throw DomainError("quantize: radial mode requires a symbol that is radial in every block");
            img = idx;
            img[2 * b] = g.N - 1 - img[2 * b];
            if (std::abs(f[g.flat(img.data())] - f[i]) > tol)
                throw DomainError("quantize: radial mode requires a symbol that is radial in every block");
        }
    }
}

// Lattice s_p = p * Delta carrying the Hermite functions for the position-space
// evaluation of the quantization integral.  Delta = h * h_grid / (2k) makes
// every shift s -> s + h t_2 a whole number of lattice steps.
struct PositionLattice {
    double delta = 0.0;
    int k = 1;
    int P = 0;     // s_p for p in [-P, P]
    int Qext = 0;  // extended rows cover [-Qext, Qext]
    Eigen::MatrixXd phi_ext;
    std::vector<int> shift;  // h t_j / Delta

    int S() const { return 2 * P + 1; }
    double s(int p) const { return p * delta; }  // p in [-P, P]
};

PositionLattice make_lattice(int N, double L, int M, double h) {
    PositionLattice lat;
    const double ell = std::sqrt(h);
    const double hg = 2.0 * L / N;
    const double band = 2.0 * std::sqrt(2.0 * M + 1.0) / ell + L;
    lat.k = std::max(1, static_cast<int>(std::ceil(1.25 * band * h * hg / (4.0 * M_PI))));
    lat.delta = h * hg / (2.0 * lat.k);
    lat.P = static_cast<int>(std::ceil(ell * (std::sqrt(2.0 * M + 1.0) + 8.0) / lat.delta));
    lat.Qext = lat.P + lat.k * (N - 1);
    lat.shift.resize(N);
    for (int j = 0; j < N; ++j) lat.shift[j] = 2 * lat.k * (j - N / 2) + lat.k;
    lat.phi_ext.resize(2 * lat.Qext + 1, M);
    std::vector<double> buf(M);
    for (int q = -lat.Qext; q <= lat.Qext; ++q) {
        hermite_functions(q * lat.delta, ell, M, buf.data());
        for (int n = 0; n < M; ++n) lat.phi_ext(q + lat.Qext, n) = buf[n];
    }
    return lat;
}

// values: N x N row-major samples on the half-offset grid (axis 0 = t_1).
Eigen::MatrixXcd quantize_fast_block(const cplx* values, int N, double L, int M, double h) {
    const PositionLattice lat = make_lattice(N, L, M, h);
    const double hg = 2.0 * L / N;
    const int S = lat.S();
    std::vector<double> t(N);
    for (int i = 0; i < N; ++i) t[i] = -L + (i + 0.5) * hg;

    Eigen::MatrixXcd E(S, N);
    for (int p = 0; p < S; ++p)
        for (int i = 0; i < N; ++i) E(p, i) = std::polar(1.0, t[i] * lat.s(p - lat.P));
    Eigen::MatrixXcd G(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) G(i, j) = values[static_cast<std::size_t>(i) * N + j] * std::polar(hg, 0.5 * h * t[i] * t[j]);
    const Eigen::MatrixXcd F1 = E * G;  // F1(p, j) = sum_i f(t_i, t_j) e^{i t_i (s_p + h t_j / 2)} h_grid

    Eigen::MatrixXcd Q = Eigen::MatrixXcd::Zero(S, M);
    for (int p = 0; p < S; ++p) {
        const int pp = p - lat.P;
        for (int j = 0; j < N; ++j) {
            const cplx w = F1(p, j);
            Q.row(p) += w * lat.phi_ext.row(pp + lat.shift[j] + lat.Qext).cast<cplx>();
        }
    }
    const Eigen::MatrixXd Phi = lat.phi_ext.middleRows(lat.Qext - lat.P, S);
    return (hg * lat.delta) * (Phi.transpose().cast<cplx>() * Q);
}

// Returns Tr(X U(t)^*) on the N x N target grid (row-major, axis 0 = t_1).
Eigen::MatrixXcd dequantize_fast_block(const Eigen::MatrixXcd& X, int N, double L, double h) {
    const int M = static_cast<int>(X.rows());
    const PositionLattice lat = make_lattice(N, L, M, h);
    const double hg = 2.0 * L / N;
    const int S = lat.S();
    std::vector<double> t(N);
    for (int i = 0; i < N; ++i) t[i] = -L + (i + 0.5) * hg;

    const Eigen::MatrixXcd Y = X * lat.phi_ext.transpose().cast<cplx>();  // M x (2 Qext + 1)
    Eigen::MatrixXcd V(S, N);
    for (int p = 0; p < S; ++p) {
        const int pp = p - lat.P;
        const auto phi_row = lat.phi_ext.row(pp + lat.Qext).cast<cplx>();
        for (int j = 0; j < N; ++j) V(p, j) = phi_row * Y.col(pp + lat.shift[j] + lat.Qext);
    }
    Eigen::MatrixXcd EH(N, S);
    for (int i = 0; i < N; ++i)
        for (int p = 0; p < S; ++p) EH(i, p) = std::polar(1.0, -t[i] * lat.s(p - lat.P));
    Eigen::MatrixXcd R = EH * V;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) R(i, j) *= std::polar(lat.delta, -0.5 * h * t[i] * t[j]);
    return R;
}

Eigen::MatrixXcd quantize_reference_block(const cplx* values, int N, double L, int M, double h) {
    const double hg = 2.0 * L / N;
    double mx = 0.0;
    for (int i = 0; i < N * N; ++i) mx = std::max(mx, std::abs(values[i]));
    Eigen::MatrixXcd X = Eigen::MatrixXcd::Zero(M, M);
    // Terms below 1e-17 of the peak cannot change the sum at double precision.
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            const cplx v = values[static_cast<std::size_t>(i) * N + j];
            if (std::abs(v) <= 1e-17 * mx) continue;
            X += v * displacement_block(-L + (i + 0.5) * hg, -L + (j + 0.5) * hg, M, h);
        }
    return X * (hg * hg);
}

// Diagonal displacement table T(p, n) over the N^2 points of one block grid.
Eigen::MatrixXd radial_table(int N, double L, int M, double h) {
    const double hg = 2.0 * L / N;
    Eigen::MatrixXd T(N * N, M);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            const double a = -L + (i + 0.5) * hg, b = -L + (j + 0.5) * hg;
            T.row(i * N + j) = displacement_diagonal(a * a + b * b, M, h).transpose();
        }
    return T;
}

Eigen::MatrixXcd displacement_table(int N, double L, int M, double h) {
    const double hg = 2.0 * L / N;
    Eigen::MatrixXcd W(N * N, M * M);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            const Eigen::MatrixXcd D = displacement_block(-L + (i + 0.5) * hg, -L + (j + 0.5) * hg, M, h);
            for (int m = 0; m < M; ++m)
                for (int n = 0; n < M; ++n) W(i * N + j, m * M + n) = D(m, n);
        }
    return W;
}

Eigen::VectorXcd radial_block(const cplx* values, int N, double L, int M, double h) {
    const Eigen::MatrixXd T = radial_table(N, L, M, h);
    Eigen::Map<const Eigen::VectorXcd> fv(values, static_cast<Eigen::Index>(N) * N);
    const double hg = 2.0 * L / N;
    return (hg * hg) * (T.transpose().cast<cplx>() * fv);
}

Eigen::MatrixXcd general_block(const cplx* values, int N, double L, int M, double h, QuantizeRoute route) {
    return route == QuantizeRoute::Fast ? quantize_fast_block(values, N, L, M, h)
                                        : quantize_reference_block(values, N, L, M, h);
}

// Squared Frobenius mass of the head (all indices < cut) and the rest.
std::pair<double, double> head_tail_mass(const Eigen::MatrixXcd& A, int cut) {
    const double head = A.topLeftCorner(cut, cut).squaredNorm();
    return {head, A.squaredNorm() - head};
}

}  // namespace

Eigen::MatrixXcd kron(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B) {
    Eigen::MatrixXcd K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

void HermiteTruncation::validate() const {
    if (M < 8) throw DomainError("truncation: M must be at least 8");
    if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("truncation: h must be positive");
}

std::string TraceCalibration::manifest_json(const std::string& created_at) const {
    nlohmann::json j;
    j["d"] = d;
    j["h"] = h;
    j["M"] = M;
    j["N"] = N;
    j["L"] = L;
    j["c_theta"] = c_theta;
    j["block_c"] = block_c;
    j["reference_widths"] = reference_widths;
    j["residuals"] = residuals;
    j["created_at"] = created_at;
    return j.dump(2) + "\n";
}

TraceCalibration TraceCalibration::from_manifest_json(const std::string& text) {
    TraceCalibration c;
    try {
        const auto j = nlohmann::json::parse(text);
        c.d = j.at("d").get<int>();
        c.h = j.at("h").get<double>();
        c.M = j.at("M").get<int>();
        c.N = j.at("N").get<int>();
        c.L = j.at("L").get<double>();
        c.c_theta = j.at("c_theta").get<double>();
        if (j.contains("block_c")) c.block_c = j.at("block_c").get<std::vector<double>>();
        c.reference_widths = j.at("reference_widths").get<std::vector<double>>();
        c.residuals = j.at("residuals").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("calibration manifest: ") + e.what());
    }
    if (!c.valid()) throw ConfigError("calibration manifest: c_theta must be positive");
    return c;
}

MatrixRep MatrixRep::from_dense(int d, const HermiteTruncation& tr, Eigen::MatrixXcd X) {
    MatrixRep r;
    r.d_ = d;
    r.trunc_ = tr;
    r.storage_ = Storage::Dense;
    r.dense_ = std::move(X);
    const Eigen::Index want = d == 2 ? tr.M : static_cast<Eigen::Index>(tr.M) * tr.M;
    if (r.dense_.rows() != want || r.dense_.cols() != want) throw DomainError("MatrixRep: wrong matrix size");
    return r;
}

MatrixRep MatrixRep::from_diagonal(int d, const HermiteTruncation& tr, Eigen::VectorXcd diag) {
    MatrixRep r;
    r.d_ = d;
    r.trunc_ = tr;
    r.storage_ = Storage::Diagonal;
    r.diag_ = std::move(diag);
    const Eigen::Index want = d == 2 ? tr.M : static_cast<Eigen::Index>(tr.M) * tr.M;
    if (r.diag_.size() != want) throw DomainError("MatrixRep: wrong diagonal size");
    return r;
}

MatrixRep MatrixRep::from_kronecker(const HermiteTruncation& tr, Eigen::MatrixXcd A, Eigen::MatrixXcd B) {
    if (A.rows() != tr.M || A.cols() != tr.M || B.rows() != tr.M || B.cols() != tr.M)
        throw DomainError("MatrixRep: wrong Kronecker factor size");
    MatrixRep r;
    r.d_ = 4;
    r.trunc_ = tr;
    r.storage_ = Storage::Kronecker;
    r.dense_ = std::move(A);
    r.second_ = std::move(B);
    return r;
}

const Eigen::MatrixXcd& MatrixRep::dense() const {
    if (storage_ != Storage::Dense) throw DomainError("MatrixRep: dense() on a structured matrix, use to_dense()");
    return dense_;
}

Eigen::Index MatrixRep::dim() const {
    switch (storage_) {
        case Storage::Diagonal: return diag_.size();
        case Storage::Kronecker: return dense_.rows() * second_.rows();
        default: return dense_.rows();
    }
}

Eigen::MatrixXcd MatrixRep::to_dense() const {
    switch (storage_) {
        case Storage::Diagonal: return diag_.asDiagonal();
        case Storage::Kronecker: return kron(dense_, second_);
        default: return dense_;
    }
}

Eigen::VectorXd MatrixRep::singular_values() const {
    Eigen::VectorXd s;
    switch (storage_) {
        case Storage::Diagonal: s = diag_.cwiseAbs(); break;
        case Storage::Kronecker: {
            const Eigen::VectorXd a = Eigen::BDCSVD<Eigen::MatrixXcd>(dense_).singularValues();
            const Eigen::VectorXd b = Eigen::BDCSVD<Eigen::MatrixXcd>(second_).singularValues();
            s.resize(a.size() * b.size());
            for (Eigen::Index i = 0; i < a.size(); ++i) s.segment(i * b.size(), b.size()) = a(i) * b;
            break;
        }
        default: s = Eigen::BDCSVD<Eigen::MatrixXcd>(dense_).singularValues(); break;
    }
    std::sort(s.data(), s.data() + s.size(), std::greater<>());
    return s;
}

cplx MatrixRep::matrix_trace() const {
    switch (storage_) {
        case Storage::Diagonal: return diag_.sum();
        case Storage::Kronecker: return dense_.trace() * second_.trace();
        default: return dense_.trace();
    }
}

double MatrixRep::frobenius() const {
    switch (storage_) {
        case Storage::Diagonal: return diag_.norm();
        case Storage::Kronecker: return dense_.norm() * second_.norm();
        default: return dense_.norm();
    }
}

bool MatrixRep::all_finite() const {
    switch (storage_) {
        case Storage::Diagonal: return diag_.allFinite();
        case Storage::Kronecker: return dense_.allFinite() && second_.allFinite();
        default: return dense_.allFinite();
    }
}

double MatrixRep::hermitian_defect() const {
    if (storage_ == Storage::Diagonal) {
        double mx = diag_.cwiseAbs().maxCoeff(), im = 0.0;
        for (Eigen::Index i = 0; i < diag_.size(); ++i) im = std::max(im, 2.0 * std::abs(diag_(i).imag()));
        return mx > 0.0 ? im / mx : 0.0;
    }
    if (storage_ == Storage::Kronecker) {
        const Eigen::MatrixXcd& A = dense_;
        const Eigen::MatrixXcd& B = second_;
        const double mx = A.cwiseAbs().maxCoeff() * B.cwiseAbs().maxCoeff();
        if (mx == 0.0) return 0.0;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < A.rows(); ++i)
            for (Eigen::Index j = 0; j < A.cols(); ++j) {
                const cplx a = A(i, j), at = std::conj(A(j, i));
                worst = std::max(worst, (a * B - at * B.adjoint()).cwiseAbs().maxCoeff());
            }
        return worst / mx;
    }
    const double mx = dense_.cwiseAbs().maxCoeff();
    if (mx == 0.0) return 0.0;
    return (dense_ - dense_.adjoint()).cwiseAbs().maxCoeff() / mx;
}

MatrixRep& MatrixRep::calibrate(const TraceCalibration& c) {
    if (!c.valid()) throw CalibrationError("MatrixRep: invalid calibration");
    if (c.d != d_ || c.M != trunc_.M || std::abs(c.h - trunc_.h) > 1e-14 * c.h)
        throw CalibrationError("MatrixRep: calibration was computed for a different truncation");
    calib_ = c;
    return *this;
}

Eigen::MatrixXcd displacement_block(double t0, double t1, int M, double h) {
    const cplx alpha = std::sqrt(h / 2.0) * cplx(-t1, t0);
    const double x = std::norm(alpha);
    Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(M, M);
    if (x == 0.0) {
        D.setIdentity();
        return D;
    }
    const auto lf = log_factorials(M);
    const double lx = std::log(x);
    const double arg_lo = std::arg(alpha);       // m >= n: alpha^{m-n}
    const double arg_up = std::arg(-std::conj(alpha));  // m < n: (-conj alpha)^{n-m}
    std::vector<double> lag(M);
    for (int k = 0; k < M; ++k) {
        // L_n^{(k)}(x), n = 0 .. M-1-k
        const int nmax = M - 1 - k;
        lag[0] = 1.0;
        if (nmax >= 1) lag[1] = 1.0 + k - x;
        for (int n = 1; n < nmax; ++n) lag[n + 1] = ((2.0 * n + 1.0 + k - x) * lag[n] - (n + k) * lag[n - 1]) / (n + 1.0);
        for (int n = 0; n <= nmax; ++n) {
            const double mag = std::exp(-0.5 * x + 0.5 * k * lx + 0.5 * (lf[n] - lf[n + k])) * lag[n];
            D(n + k, n) = mag * std::polar(1.0, k * arg_lo);
            if (k > 0) D(n, n + k) = mag * std::polar(1.0, k * arg_up);
        }
    }
    return D;
}

Eigen::MatrixXcd displacement_matrix(const std::vector<double>& t, const HermiteTruncation& trunc) {
    trunc.validate();
    if (t.size() == 2) return displacement_block(t[0], t[1], trunc.M, trunc.h);
    if (t.size() == 4)
        return kron(displacement_block(t[0], t[1], trunc.M, trunc.h), displacement_block(t[2], t[3], trunc.M, trunc.h));
    throw DomainError("displacement_matrix: only d = 2 and d = 4 are supported");
}

Eigen::VectorXd displacement_diagonal(double r2, int M, double h) {
    const double x = 0.5 * h * r2;
    Eigen::VectorXd out(M);
    const double e = std::exp(-0.5 * x);
    double lm = 1.0, l = 1.0 - x;
    out(0) = e;
    if (M > 1) out(1) = e * l;
    for (int n = 1; n + 1 < M; ++n) {
        const double ln = ((2.0 * n + 1.0 - x) * l - n * lm) / (n + 1.0);
        lm = l;
        l = ln;
        out(n + 1) = e * l;
    }
    return out;
}

void hermite_functions(double s, double ell, int M, double* out) {
    const double u = s / ell;
    out[0] = std::pow(M_PI, -0.25) / std::sqrt(ell) * std::exp(-0.5 * u * u);
    if (M > 1) out[1] = std::sqrt(2.0) * u * out[0];
    for (int n = 1; n + 1 < M; ++n)
        out[n + 1] = std::sqrt(2.0 / (n + 1)) * u * out[n] - std::sqrt(static_cast<double>(n) / (n + 1)) * out[n - 1];
}

double tail_indicator(const MatrixRep& X) {
    const int M = X.truncation().M;
    const int cut = tail_cut(M);
    const double total = X.frobenius();
    if (total == 0.0) return 0.0;
    if (X.is_kronecker()) {
        const auto [h1, t1] = head_tail_mass(X.factor(0), cut);
        const auto [h2, t2] = head_tail_mass(X.factor(1), cut);
        return std::sqrt(t1 * (h2 + t2) + h1 * t2) / total;
    }
    auto in_tail = [&](Eigen::Index i) {
        if (X.d() == 2) return i >= cut;
        return (i / M) >= cut || (i % M) >= cut;
    };
    double acc = 0.0;
    if (X.is_diagonal()) {
        for (Eigen::Index i = 0; i < X.dim(); ++i)
            if (in_tail(i)) acc += std::norm(X.diagonal()(i));
    } else {
        const auto& D = X.dense();
        for (Eigen::Index j = 0; j < D.cols(); ++j)
            for (Eigen::Index i = 0; i < D.rows(); ++i)
                if (in_tail(i) || in_tail(j)) acc += std::norm(D(i, j));
    }
    return std::sqrt(acc) / total;
}

MatrixRep quantize(const Symbol& f, const ThetaMatrix& theta, const HermiteTruncation& trunc, QuantizeMode mode,
                   QuantizeRoute route, double tail_tol) {
    check_theta(f, theta, trunc);
    if (!f.all_finite()) throw NumericalError("quantize: non-finite symbol samples");
    const GridSpec& g = f.grid();
    const int N = g.N, M = trunc.M;
    const double L = g.L, h = trunc.h;
    if (mode == QuantizeMode::Radial) check_radial(f);

    MatrixRep X;
    if (g.d == 2) {
        if (mode == QuantizeMode::Radial)
            X = MatrixRep::from_diagonal(2, trunc, radial_block(f.values().data(), N, L, M, h));
        else
            X = MatrixRep::from_dense(2, trunc, general_block(f.values().data(), N, L, M, h, route));
    } else {
        const int B = N * N;
        const double hg2 = g.spacing() * g.spacing();
        Symbol us, vs;
        const bool product = split_block_product(f, us, vs);
        const std::vector<cplx>& u = us.values();
        const std::vector<cplx>& v = vs.values();
        if (mode == QuantizeMode::Radial) {
            if (product) {
                X = MatrixRep::from_diagonal(4, trunc, kron(radial_block(u.data(), N, L, M, h), radial_block(v.data(), N, L, M, h)));
            } else {
                const Eigen::MatrixXd T = radial_table(N, L, M, h);
                Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> F(f.values().data(), B, B);
                const Eigen::MatrixXcd Tc = T.cast<cplx>();
                const Eigen::MatrixXcd Xm = (hg2 * hg2) * (Tc.transpose() * F * Tc);
                Eigen::VectorXcd diag(static_cast<Eigen::Index>(M) * M);
                for (int n1 = 0; n1 < M; ++n1)
                    for (int n2 = 0; n2 < M; ++n2) diag(n1 * M + n2) = Xm(n1, n2);
                X = MatrixRep::from_diagonal(4, trunc, std::move(diag));
            }
        } else if (product) {
            X = MatrixRep::from_kronecker(trunc, general_block(u.data(), N, L, M, h, route), general_block(v.data(), N, L, M, h, route));
        } else {
            if (static_cast<double>(B) * B * M * M > 3.0e9)
                throw DomainError("quantize: general d = 4 quantization of a non-product symbol is too large for this grid");
            const Eigen::MatrixXcd W = displacement_table(N, L, M, h);
            Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> F(f.values().data(), B, B);
            const Eigen::MatrixXcd A = F * W;
            const Eigen::MatrixXcd Y = W.transpose() * A;  // Y(m1 n1, m2 n2)
            Eigen::MatrixXcd D(M * M, M * M);
            for (int m1 = 0; m1 < M; ++m1)
                for (int n1 = 0; n1 < M; ++n1)
                    for (int m2 = 0; m2 < M; ++m2)
                        for (int n2 = 0; n2 < M; ++n2) D(m1 * M + m2, n1 * M + n2) = hg2 * hg2 * Y(m1 * M + n1, m2 * M + n2);
            X = MatrixRep::from_dense(4, trunc, std::move(D));
        }
    }
    if (!X.all_finite()) throw NumericalError("quantize: non-finite matrix entries");
    if (tail_tol >= 0.0) {
        const double tail = tail_indicator(X);
        if (tail > tail_tol) {
            std::ostringstream os;
            os << "quantize: truncation tail " << tail << " exceeds tail_tol " << tail_tol << " at M = " << M;
            throw TruncationTailError(os.str());
        }
    }
    return X;
}

Symbol dequantize(const MatrixRep& X, const GridSpec& grid) {
    if (!X.calibration()) throw CalibrationError("dequantize: the matrix carries no trace calibration");
    grid.validate();
    if (grid.d != X.d()) throw DomainError("dequantize: grid dimension does not match the matrix");
    const double c = X.calibration()->c_theta;
    const int N = grid.N, M = X.truncation().M;
    const double L = grid.L, h = X.truncation().h;
    Symbol out(grid);
    if (X.d() == 2) {
        if (X.is_diagonal()) {
            const Eigen::MatrixXd T = radial_table(N, L, M, h);
            const Eigen::VectorXcd v = c * (T.cast<cplx>() * X.diagonal());
            for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v(i);
        } else {
            const Eigen::MatrixXcd R = dequantize_fast_block(X.dense(), N, L, h);
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j) out[static_cast<std::size_t>(i) * N + j] = c * R(i, j);
        }
        return out;
    }
    const int B = N * N;
    if (X.is_kronecker()) {
        const Eigen::MatrixXcd R1 = dequantize_fast_block(X.factor(0), N, L, h);
        const Eigen::MatrixXcd R2 = dequantize_fast_block(X.factor(1), N, L, h);
        for (int p1 = 0; p1 < B; ++p1) {
            const cplx a = c * R1(p1 / N, p1 % N);
            for (int p2 = 0; p2 < B; ++p2) out[static_cast<std::size_t>(p1) * B + p2] = a * R2(p2 / N, p2 % N);
        }
        return out;
    }
    if (X.is_diagonal()) {
        const Eigen::MatrixXcd T = radial_table(N, L, M, h).cast<cplx>();
        Eigen::MatrixXcd Xm(M, M);
        for (int n1 = 0; n1 < M; ++n1)
            for (int n2 = 0; n2 < M; ++n2) Xm(n1, n2) = X.diagonal()(n1 * M + n2);
        const Eigen::MatrixXcd R = c * (T * Xm * T.transpose());
        for (int p1 = 0; p1 < B; ++p1)
            for (int p2 = 0; p2 < B; ++p2) out[static_cast<std::size_t>(p1) * B + p2] = R(p1, p2);
        return out;
    }
    if (static_cast<double>(B) * M * M * (B + M * M) > 3.0e9)
        throw DomainError("dequantize: dense d = 4 matrix is too large for this grid");
    const Eigen::MatrixXcd W = displacement_table(N, L, M, h).conjugate();
    Eigen::MatrixXcd Y(M * M, M * M);
    const auto& D = X.dense();
    for (int m1 = 0; m1 < M; ++m1)
        for (int n1 = 0; n1 < M; ++n1)
            for (int m2 = 0; m2 < M; ++m2)
                for (int n2 = 0; n2 < M; ++n2) Y(m1 * M + n1, m2 * M + n2) = D(m1 * M + m2, n1 * M + n2);
    const Eigen::MatrixXcd R = c * (W * Y * W.transpose());
    for (int p1 = 0; p1 < B; ++p1)
        for (int p2 = 0; p2 < B; ++p2) out[static_cast<std::size_t>(p1) * B + p2] = R(p1, p2);
    return out;
}

cplx dequantize_at(const MatrixRep& X, const std::vector<double>& s) {
    if (!X.calibration()) throw CalibrationError("dequantize: the matrix carries no trace calibration");
    if (static_cast<int>(s.size()) != X.d()) throw DomainError("dequantize: point has wrong dimension");
    const HermiteTruncation& tr = X.truncation();
    if (X.is_kronecker()) {
        const Eigen::MatrixXcd U1 = displacement_block(s[0], s[1], tr.M, tr.h);
        const Eigen::MatrixXcd U2 = displacement_block(s[2], s[3], tr.M, tr.h);
        return X.calibration()->c_theta * (X.factor(0).array() * U1.array().conjugate()).sum() *
               (X.factor(1).array() * U2.array().conjugate()).sum();
    }
    const Eigen::MatrixXcd U = displacement_matrix(s, tr);
    cplx acc = 0.0;
    if (X.is_diagonal()) {
        for (Eigen::Index i = 0; i < X.dim(); ++i) acc += X.diagonal()(i) * std::conj(U(i, i));
    } else {
        acc = (X.dense().array() * U.array().conjugate()).sum();
    }
    return X.calibration()->c_theta * acc;
}

TraceCalibration calibrate_trace(const HermiteTruncation& trunc, const ThetaMatrix& theta, const GridSpec& grid,
                                 std::vector<double> widths, double tail_tol, double consistency_tol) {
    trunc.validate();
    grid.validate();
    if (theta.dim() != grid.d) throw DomainError("calibrate_trace: theta dimension does not match the grid");
    if (theta.is_zero()) throw DomainError("calibrate_trace: theta = 0 needs no calibration");
    if (widths.empty()) {
        // Both references must decay inside the box and fit the truncation.
        const double a0 = std::max(0.5 * trunc.h, 30.0 / (grid.L * grid.L));
        widths = {a0, 1.2 * a0};
    }
    if (widths.size() < 2) throw DomainError("calibrate_trace: at least two reference widths are required");

    TraceCalibration cal;
    cal.d = grid.d;
    cal.h = trunc.h;
    cal.M = trunc.M;
    cal.N = grid.N;
    cal.L = grid.L;
    cal.reference_widths = widths;

    const GridSpec block_grid{2, grid.L, grid.N};
    const ThetaMatrix block_theta = ThetaMatrix::canonical(2, trunc.h);
    std::vector<double> cs;
    for (double a : widths) {
        if (!(a > 0.0)) throw DomainError("calibrate_trace: reference widths must be positive");
        Symbol f = Symbol::sample(block_grid, [a](const double* t) { return cplx(std::exp(-a * (t[0] * t[0] + t[1] * t[1]))); });
        f.check_invariants();
        const MatrixRep X = quantize(f, block_theta, trunc, QuantizeMode::Radial, QuantizeRoute::Fast, tail_tol);
        cs.push_back(1.0 / X.matrix_trace().real());  // f(0) = 1
    }
    for (double c : cs) cal.residuals.push_back(std::abs(c / cs[0] - 1.0));
    const int blocks = theta.num_blocks();
    cal.block_c.assign(blocks, cs[0]);
    cal.c_theta = std::pow(cs[0], blocks);

    if (blocks == 2) {
        const double a = widths[0];
        Symbol f = Symbol::sample(grid, [a](const double* t) {
            return cplx(std::exp(-a * (t[0] * t[0] + t[1] * t[1] + t[2] * t[2] + t[3] * t[3])));
        });
        const MatrixRep X = quantize(f, theta, trunc, QuantizeMode::Radial, QuantizeRoute::Fast, tail_tol);
        cal.residuals.push_back(std::abs(cal.c_theta * X.matrix_trace().real() - 1.0));
    }
    for (double r : cal.residuals)
        if (!(r <= consistency_tol)) {
            std::ostringstream os;
            os << "calibrate_trace: reference Gaussians disagree (residual " << r << " > " << consistency_tol << ")";
            throw CalibrationError(os.str());
        }
    return cal;
}

void write_ncmx(const std::string& path, const MatrixRep& X) {
    const Eigen::MatrixXcd D = X.to_dense();
    std::string out = "NCMX";
    bin::put_u32(out, 1);
    bin::put_u32(out, static_cast<std::uint32_t>(X.d()));
    bin::put_u32(out, static_cast<std::uint32_t>(X.truncation().M));
    bin::put_u32(out, static_cast<std::uint32_t>(D.rows()));
    bin::put_u32(out, static_cast<std::uint32_t>(D.cols()));
    bin::put_f64(out, X.truncation().h);
    bin::put_f64(out, X.calibration() ? X.calibration()->c_theta : 0.0);
    for (Eigen::Index i = 0; i < D.rows(); ++i)
        for (Eigen::Index j = 0; j < D.cols(); ++j) {
            bin::put_f32(out, static_cast<float>(D(i, j).real()));
            bin::put_f32(out, static_cast<float>(D(i, j).imag()));
        }
    atomic_write(path, out);
}

MatrixRep read_ncmx(const std::string& path) {
    const std::string data = bin::read_file(path);
    bin::Reader r(data, path);
    if (r.take(4) != "NCMX") throw IoError("'" + path + "' is not an NCMX file");
    if (r.u32() != 1) throw IoError("'" + path + "': unsupported NCMX version");
    const int d = static_cast<int>(r.u32());
    HermiteTruncation tr;
    tr.M = static_cast<int>(r.u32());
    const Eigen::Index rows = r.u32(), cols = r.u32();
    tr.h = r.f64();
    const double c = r.f64();
    Eigen::MatrixXcd D(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            const float re = r.f32();
            const float im = r.f32();
            D(i, j) = cplx(re, im);
        }
    if (!r.done()) throw IoError("'" + path + "': trailing bytes");
    MatrixRep X;
    try {
        X = MatrixRep::from_dense(d, tr, std::move(D));
    } catch (const DomainError& e) {
        throw IoError("'" + path + "': " + e.what());
    }
    (void)c;  // the calibration itself lives in the JSON manifest
    return X;
}

}  // namespace ncx
