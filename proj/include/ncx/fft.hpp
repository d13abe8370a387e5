#pragma once

#include <vector>

#include "ncx/grid.hpp"

namespace ncx::fft {

// Unnormalized 1-D DFT, out[m] = sum_k in[k] exp(sign * 2 pi i m k / n).
// Plans are created once per (n, sign) with FFTW_ESTIMATE so results do not
// depend on planner timing.
void dft(const cplx* in, cplx* out, int n, int sign);

// Apply the 1-D DFT along one axis of a row-major N^d array, in place.
void dft_axis(std::vector<cplx>& data, int d, int N, int axis, int sign);

// Linear (non-circular) convolution of two length-n sequences, returning
// length 2n-1 (FFT with zero padding).
std::vector<cplx> linear_convolve(const std::vector<cplx>& a, const std::vector<cplx>& b);

}  // namespace ncx::fft
