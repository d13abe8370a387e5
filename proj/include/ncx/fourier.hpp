#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ncx/grid.hpp"

namespace ncx {

enum class FtDirection { Forward, Inverse };

// Grid on which classical_ft returns its samples: same N, half-offset
// samples with spacing pi/L, so L' = pi N / (2L).  dual(dual(g)) == g.
GridSpec dual_grid(const GridSpec& g);

// f^(s) = int f(t) e^{-i(s,t)} dt (forward), f(t) = (2pi)^{-d} int f^(s) e^{i(s,t)} ds
// (inverse).  FFT per axis with phase corrections for the centred grids.
Symbol classical_ft(const Symbol& f, FtDirection dir);

// Same transform evaluated by a direct separable sum at an arbitrary tensor
// grid of target coordinates (the same list on every axis).  Returned as a
// row-major array of size targets.size()^d.
std::vector<cplx> classical_ft_at(const Symbol& f, const std::vector<double>& targets, FtDirection dir);

// Apply a matrix along one axis of a row-major array with extents dims;
// dims[axis] is replaced by A.rows().
std::vector<cplx> apply_axis_matrix(const std::vector<cplx>& data, std::vector<int>& dims, int axis,
                                    const Eigen::MatrixXcd& A);

// Band-limited interpolation weights that evaluate the trigonometric
// interpolant of axis samples at t = 0.
std::vector<double> origin_weights(int N);

// Trigonometric interpolation of f at the origin.
cplx value_at_origin(const Symbol& f);

// Values of the trigonometric interpolant of f on the integer lattice
// t = k * spacing, k = -N/2 .. N/2-1 on every axis (row-major, index k + N/2).
// Differences of two grid points land on this lattice.
std::vector<cplx> resample_to_lattice(const Symbol& f);

}  // namespace ncx
