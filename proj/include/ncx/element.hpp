#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ncx/grid.hpp"
#include "ncx/weyl.hpp"

namespace ncx {

enum class BackendKind { NcMatrix, Commutative };

// Everything an element needs besides its symbol: the grid, theta, and for
// the matrix backend the truncation and its trace calibration.
struct Backend {
    BackendKind kind = BackendKind::NcMatrix;
    GridSpec grid;
    ThetaMatrix theta;
    HermiteTruncation trunc;
    TraceCalibration calibration;
    double tail_tol = 1e-6;

    // Calibrates on construction unless a calibration is supplied.
    static std::shared_ptr<const Backend> noncommutative(const GridSpec& grid, double h, int M,
                                                         std::optional<TraceCalibration> cal = std::nullopt,
                                                         double tail_tol = 1e-6);
    static std::shared_ptr<const Backend> commutative(const GridSpec& grid);

    // tau-measure of one spectral atom: c_theta for matrices, one lattice
    // cell (1 / 2L)^d of the commutative profile otherwise (spacing pi / L
    // with measure (2pi)^{-d} ds).
    double atom_measure() const;
    // "nc2", "nc4" or "comm:<d>"
    std::string tag() const;
    bool same_as(const Backend& o) const;
};
using BackendPtr = std::shared_ptr<const Backend>;

// Value description of a backend, enough to rebuild it or its refinement.
struct BackendConfig {
    BackendKind kind = BackendKind::NcMatrix;
    GridSpec grid;
    double h = 1.0;  // theta block parameter (matrix backend)
    int M = 64;      // Hermite truncation per block (matrix backend)
    double tail_tol = 1e-6;
    // Calibration read from a manifest; used by build() instead of
    // recalibrating.  Dropped by refined().
    std::optional<TraceCalibration> calibration;

    // "nc2", "nc4" or "comm:<d>" with per-dimension default grids.
    static BackendConfig from_tag(const std::string& tag);
    std::string tag() const;
    // N -> 2N and, for the matrix backend, M -> 2M.
    BackendConfig refined() const;
    void validate() const;
    BackendPtr build(std::optional<TraceCalibration> cal = std::nullopt) const;
};

// Same backend with the truncation tail check switched off, for elements
// whose symbols are not smooth (singular-kernel convolutions); their
// truncation error is assessed by refinement instead.
BackendPtr without_tail_check(const BackendPtr& b);

// Decreasing singular values, each carrying tau-measure `weight`.
struct SingularValueFn {
    std::vector<double> values;
    double weight = 0.0;
    std::string source;
    // Commutative backend: sup of the continuous profile, which the lattice
    // samples in `values` can miss.  Used for p = infinity.
    std::optional<double> sup;

    // mu(t) = values[floor(t / weight)], right-continuous, 0 past the end.
    double mu(double t) const;
    // d(s) = tau-measure of {mu > s}.
    double distribution(double s) const;
    double norm(double p, bool weak) const;
};

class NcElement {
public:
    NcElement() = default;
    NcElement(Symbol f, BackendPtr backend, bool positive = false, std::string label = {});

    // Element whose truncated matrix is X itself; the symbol is dequantize(X).
    static NcElement from_matrix(const MatrixRep& X, BackendPtr backend, bool positive = false);

    const Symbol& symbol() const { return f_; }
    const Backend& backend() const { return *backend_; }
    const BackendPtr& backend_ptr() const { return backend_; }
    bool positive() const { return positive_; }
    const std::string& label() const { return label_; }
    bool is_zero() const { return f_.max_abs() == 0.0; }

    // Same backend, new symbol, fresh caches.
    NcElement with_symbol(Symbol f, bool positive = false) const;
    NcElement with_label(std::string label) const;

    // Calibrated truncated matrix (matrix backend only), computed once.
    const MatrixRep& matrix() const;
    const SingularValueFn& singular_values() const;

private:
    struct Cache {
        std::mutex mu;
        std::optional<MatrixRep> matrix;
        std::optional<SingularValueFn> sv;
    };
    Symbol f_;
    BackendPtr backend_;
    bool positive_ = false;
    std::string label_;
    std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

enum class NormRoute {
    Auto,            // Plancherel for p = 2, trace for positive p = 1, singular values otherwise
    Plancherel,      // p = 2 only
    SingularValues,
    Trace            // p = 1 of a positive element
};

// tau(x) = f(0), read off the trigonometric interpolant.
cplx trace(const NcElement& x);
// (x, y) = int f(t) g(-t) dt
cplx pairing(const NcElement& x, const NcElement& y);

double lp_norm(const NcElement& x, double p, bool weak = false, NormRoute route = NormRoute::Auto);
// ||(1 + |t|^2)^{gamma/2} f||_{L^2}
double sobolev_norm(const NcElement& x, double gamma);
// tau(y log y), y = |x|^2 / ||x||_2^2, from the singular values; 0 log 0 = 0.
double entropy(const NcElement& x);

void require_compatible(const NcElement& x, const NcElement& y, const char* what);
NcElement multiply(const NcElement& x, const NcElement& y);
NcElement adjoint(const NcElement& x);
// y^* y, flagged positive
NcElement star_square(const NcElement& y);
NcElement linear_combination(cplx a, const NcElement& x, cplx b, const NcElement& y);

// alpha times a rank-k spectral projection of the matrix backend.
NcElement flat_element(const BackendPtr& backend, int k, double alpha = 1.0);

}  // namespace ncx
