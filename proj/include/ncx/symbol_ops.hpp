#pragma once

#include <limits>
#include <vector>

#include "ncx/grid.hpp"

namespace ncx {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Pointwise multiplication by e^{i(eta, t)}.
Symbol translate(const Symbol& f, const std::vector<double>& eta);

// f#(t) = conj(f(-t)); exact on the half-offset grid.
Symbol sharp(const Symbol& f);

// Reference quadrature of int e^{(i/2)(zeta, theta xi)} f(zeta - xi) g(xi) dxi at
// every grid point zeta.  Cost O(N^{2d}).
Symbol twisted_convolution_direct(const Symbol& f, const Symbol& g, const ThetaMatrix& theta);

// Same quadrature through FFTs: full d-dimensional convolution for theta = 0,
// row-wise phase-factored convolution for a single canonical block (d = 2).
// Falls back to the direct sum for other cases on small grids and throws
// DomainError when that would be too expensive.
Symbol twisted_convolution(const Symbol& f, const Symbol& g, const ThetaMatrix& theta);

// d = 4 only: f(t) = u(t_0, t_1) v(t_2, t_3) up to 1e-13 of max |f|.  On
// success u and v are d = 2 symbols on the same box.
bool split_block_product(const Symbol& f, Symbol& u, Symbol& v);
Symbol outer_product(const Symbol& u, const Symbol& v);

// Value of f *_theta g at an arbitrary point.  At zeta = 0 the phase is 1 and
// f(-xi) is read off the grid by reflection, so no interpolation is involved.
cplx twisted_convolution_at(const Symbol& f, const Symbol& g, const ThetaMatrix& theta, const std::vector<double>& zeta);

// (x <> y)(eta) = int f(-xi) e^{-i(eta, xi)} g(xi) dxi, sampled on dual_grid.
Symbol diamond(const Symbol& f, const Symbol& g);
cplx diamond_at(const Symbol& f, const Symbol& g, const std::vector<double>& eta);

// Classical L^p (strong) or weak L^{p,inf} quasinorm of grid samples.
// Strong: (sum |f|^p h^d)^{1/p}, max for p = inf.
// Weak: sup_s s * |{|f| > s}|^{1/p}, evaluated exactly for the step function.
double classical_norm(const Symbol& f, double p, bool weak);
double classical_norm(const std::vector<double>& abs_values, double cell_measure, double p, bool weak);

void validate_exponent(double p, const char* what);

}  // namespace ncx
