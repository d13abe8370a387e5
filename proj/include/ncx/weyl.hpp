#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ncx/grid.hpp"

namespace ncx {

// Number-basis truncation of one canonical 2x2 block of theta.
struct HermiteTruncation {
    int M = 64;
    double h = 1.0;
    void validate() const;
};

// tau_theta(x) = c_theta * Tr(X).  For two blocks the constant is the product
// of the per-block constants, recorded in block_c.
struct TraceCalibration {
    int d = 2;
    double h = 1.0;
    int M = 64;
    int N = 128;
    double L = 12.0;
    double c_theta = 0.0;
    std::vector<double> block_c;
    std::vector<double> reference_widths;
    std::vector<double> residuals;

    bool valid() const { return c_theta > 0.0; }
    // Manifest fields {d, h, M, N, L, c_theta, reference_widths, residuals, created_at}.
    std::string manifest_json(const std::string& created_at) const;
    static TraceCalibration from_manifest_json(const std::string& text);
};

enum class QuantizeMode { General, Radial };
// Fast: position-space evaluation (FFT-free GEMMs).  Reference: direct grid
// sum of f(t) U(t) built from the Laguerre matrix elements.
enum class QuantizeRoute { Fast, Reference };

// Truncated matrix of x = lambda_theta(f).  d = 2 gives an M x M matrix, d = 4
// an M^2 x M^2 matrix on the tensor basis |m1> (x) |m2> with index m1*M + m2.
// Radial symbols are stored as their diagonal, d = 4 product symbols as the
// two Kronecker factors.
class MatrixRep {
public:
    enum class Storage { Dense, Diagonal, Kronecker };

    MatrixRep() = default;
    static MatrixRep from_dense(int d, const HermiteTruncation& tr, Eigen::MatrixXcd X);
    static MatrixRep from_diagonal(int d, const HermiteTruncation& tr, Eigen::VectorXcd diag);
    static MatrixRep from_kronecker(const HermiteTruncation& tr, Eigen::MatrixXcd A, Eigen::MatrixXcd B);

    int d() const { return d_; }
    const HermiteTruncation& truncation() const { return trunc_; }
    Eigen::Index dim() const;
    Storage storage() const { return storage_; }
    bool is_diagonal() const { return storage_ == Storage::Diagonal; }
    bool is_kronecker() const { return storage_ == Storage::Kronecker; }
    // Valid for Dense storage only.
    const Eigen::MatrixXcd& dense() const;
    const Eigen::VectorXcd& diagonal() const { return diag_; }
    const Eigen::MatrixXcd& factor(int i) const { return i == 0 ? dense_ : second_; }
    Eigen::MatrixXcd to_dense() const;
    // Singular values in decreasing order.
    Eigen::VectorXd singular_values() const;

    cplx matrix_trace() const;
    double frobenius() const;
    bool all_finite() const;
    // max |X - X^*| relative to max |X|
    double hermitian_defect() const;

    const std::optional<TraceCalibration>& calibration() const { return calib_; }
    MatrixRep& calibrate(const TraceCalibration& c);

private:
    int d_ = 2;
    HermiteTruncation trunc_;
    Storage storage_ = Storage::Dense;
    Eigen::MatrixXcd dense_;   // the matrix, or the first Kronecker factor
    Eigen::MatrixXcd second_;  // second Kronecker factor
    Eigen::VectorXcd diag_;
    std::optional<TraceCalibration> calib_;
};

// Matrix elements <m| U(t) |n> for one block, U(t) = exp(i(t0 X + h t1 P)),
// [X, P] = i, number basis of oscillator length sqrt(h).  This is the
// displacement D(alpha), alpha = sqrt(h/2) (i t0 - t1), with
// <m|D|n> = sqrt(n!/m!) alpha^{m-n} e^{-|alpha|^2/2} L_n^{(m-n)}(|alpha|^2), m >= n.
Eigen::MatrixXcd displacement_block(double t0, double t1, int M, double h);

Eigen::MatrixXcd kron(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B);

// d = 2: one block; d = 4: Kronecker product of the two blocks.
Eigen::MatrixXcd displacement_matrix(const std::vector<double>& t, const HermiteTruncation& trunc);

// Diagonal <n|U(t)|n> = e^{-x/2} L_n(x), x = h |t|^2 / 2.
Eigen::VectorXd displacement_diagonal(double r2, int M, double h);

// Hermite functions phi_0..phi_{M-1} of length ell at s (stable recurrence).
void hermite_functions(double s, double ell, int M, double* out);

// Relative Frobenius mass of the entries with any block index in the last
// ceil(0.1 M) positions.
double tail_indicator(const MatrixRep& X);

// lambda_theta(f) ~ sum_t f(t) U(t) h_grid^d.  Throws TruncationTailError when
// tail_indicator exceeds tail_tol (pass a negative tail_tol to skip the check).
MatrixRep quantize(const Symbol& f, const ThetaMatrix& theta, const HermiteTruncation& trunc,
                   QuantizeMode mode = QuantizeMode::General, QuantizeRoute route = QuantizeRoute::Fast,
                   double tail_tol = 1e-6);

// Symbol s -> c_theta Tr(X U(s)^*) on the grid; requires a calibration.
Symbol dequantize(const MatrixRep& X, const GridSpec& grid);
cplx dequantize_at(const MatrixRep& X, const std::vector<double>& s);

// Reference Gaussians e^{-a|t|^2}; c = f(0) / Tr(quantize(f)) for each width,
// all widths must agree within consistency_tol.  Empty widths picks {h/2, h}.
TraceCalibration calibrate_trace(const HermiteTruncation& trunc, const ThetaMatrix& theta, const GridSpec& grid,
                                 std::vector<double> widths = {}, double tail_tol = 1e-6,
                                 double consistency_tol = 1e-6);

// "NCMX", u32 version, u32 d, u32 M, u32 rows, u32 cols, f64 h, f64 c_theta,
// then rows*cols row-major (re, im) little-endian f32 pairs.
void write_ncmx(const std::string& path, const MatrixRep& X);
MatrixRep read_ncmx(const std::string& path);

}  // namespace ncx
