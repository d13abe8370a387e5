#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "ncx/errors.hpp"

namespace ncx {

using cplx = std::complex<double>;

// Uniform centred box [-L, L]^d with N samples per axis at the cell midpoints
// t_k = -L + (k + 1/2) * h_grid.  With even N the reflection t -> -t maps the
// sample set onto itself (index k -> N-1-k).
struct GridSpec {
    int d = 2;
    double L = 12.0;
    int N = 128;

    double spacing() const { return 2.0 * L / N; }
    double cell_volume() const;
    std::size_t size() const;
    double coord(int k) const { return -L + (k + 0.5) * spacing(); }
    std::vector<double> axis() const;

    // Flat row-major index; axis 0 varies slowest.
    std::size_t flat(const int* idx) const;
    void unflat(std::size_t flat, int* idx) const;
    std::size_t reflect(std::size_t flat) const;

    // Grid with the same L and dimension but twice the points per axis.
    GridSpec refined() const { return GridSpec{d, L, 2 * N}; }

    void validate() const;
    bool operator==(const GridSpec& o) const { return d == o.d && L == o.L && N == o.N; }
    bool operator!=(const GridSpec& o) const { return !(*this == o); }
};

// Antisymmetric deformation matrix in canonical block form: either zero, or a
// direct sum of 2x2 blocks h_b * [[0,-1],[1,0]].
class ThetaMatrix {
public:
    static ThetaMatrix zero(int d);
    static ThetaMatrix canonical(int d, double h);
    static ThetaMatrix from_blocks(const std::vector<double>& hs);

    int dim() const { return d_; }
    bool is_zero() const { return blocks_.empty(); }
    int num_blocks() const { return static_cast<int>(blocks_.size()); }
    double block_h(int b) const { return blocks_.at(b); }
    const std::vector<double>& blocks() const { return blocks_; }

    Eigen::MatrixXd matrix() const;
    // (t, theta s)
    double form(const double* t, const double* s) const;

    bool operator==(const ThetaMatrix& o) const { return d_ == o.d_ && blocks_ == o.blocks_; }

private:
    int d_ = 0;
    std::vector<double> blocks_;
};

// Complex samples of a Schwartz function on a GridSpec.
class Symbol {
public:
    Symbol() = default;
    explicit Symbol(const GridSpec& g);
    Symbol(const GridSpec& g, std::vector<cplx> values);

    // Sample fn(t) at every grid point; t has grid.d entries.
    static Symbol sample(const GridSpec& g, const std::function<cplx(const double*)>& fn);

    const GridSpec& grid() const { return grid_; }
    std::size_t size() const { return v_.size(); }
    const std::vector<cplx>& values() const { return v_; }
    std::vector<cplx>& values() { return v_; }
    cplx operator[](std::size_t i) const { return v_[i]; }
    cplx& operator[](std::size_t i) { return v_[i]; }

    // Coordinates of the grid point with flat index i.
    void point(std::size_t i, double* t) const;

    double max_abs() const;
    double boundary_max_abs() const;
    bool all_finite() const;
    // Throws SupportViolation when the outermost shell is not below
    // decay_tol * max, NumericalError on non-finite samples.
    void check_invariants(double decay_tol = 1e-10) const;

    // Quadrature of |f|^2 (rectangle rule).
    double l2_norm() const;

    Symbol& operator+=(const Symbol& o);
    Symbol& operator-=(const Symbol& o);
    Symbol& operator*=(cplx a);
    friend Symbol operator+(Symbol a, const Symbol& b) { return a += b; }
    friend Symbol operator-(Symbol a, const Symbol& b) { return a -= b; }
    friend Symbol operator*(cplx a, Symbol b) { return b *= a; }

private:
    GridSpec grid_;
    std::vector<cplx> v_;
};

void require_same_grid(const Symbol& a, const Symbol& b, const char* what);

// Relative L2 distance ||a-b|| / ||b|| on the grid.
double relative_l2(const Symbol& a, const Symbol& b);
double sup_distance(const Symbol& a, const Symbol& b);

}  // namespace ncx
