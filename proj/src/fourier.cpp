#include "ncx/fourier.hpp"

#include <cmath>

#include "ncx/fft.hpp"

namespace ncx {

GridSpec dual_grid(const GridSpec& g) {
    g.validate();
    return GridSpec{g.d, M_PI * g.N / (2.0 * g.L), g.N};
}

Symbol classical_ft(const Symbol& f, FtDirection dir) {
    const GridSpec& g = f.grid();
    const GridSpec out_grid = dual_grid(g);
    const int N = g.N;
    const double sigma = dir == FtDirection::Forward ? -1.0 : 1.0;
    const double weight = dir == FtDirection::Forward ? g.spacing() : g.spacing() / (2.0 * M_PI);

    // s_m t_k = L L' - pi(k+1/2) - pi(m+1/2) + (2pi/N)(m+1/2)(k+1/2)
    std::vector<cplx> pre(N);
    for (int k = 0; k < N; ++k) pre[k] = std::polar(1.0, sigma * (-M_PI * k + M_PI * k / N));
    const cplx c = weight * std::polar(1.0, sigma * (g.L * out_grid.L - M_PI + M_PI / (2.0 * N)));
    std::vector<cplx> post(N);
    for (int m = 0; m < N; ++m) post[m] = c * pre[m];

    std::vector<cplx> data = f.values();
    std::size_t stride = 1;
    for (int axis = g.d - 1; axis >= 0; --axis) {
        const std::size_t block = stride * N;
        for (std::size_t i = 0; i < data.size(); ++i) data[i] *= pre[(i / stride) % N];
        fft::dft_axis(data, g.d, N, axis, sigma < 0 ? -1 : 1);
        for (std::size_t i = 0; i < data.size(); ++i) data[i] *= post[(i / stride) % N];
        stride = block;
    }
    return Symbol(out_grid, std::move(data));
}

std::vector<cplx> apply_axis_matrix(const std::vector<cplx>& data, std::vector<int>& dims, int axis,
                                    const Eigen::MatrixXcd& A) {
    const int n = dims.at(axis);
    if (A.cols() != n) throw DomainError("apply_axis_matrix: shape mismatch");
    std::size_t inner = 1, outer = 1;
    for (std::size_t a = axis + 1; a < dims.size(); ++a) inner *= dims[a];
    for (int a = 0; a < axis; ++a) outer *= dims[a];
    const int m = static_cast<int>(A.rows());
    std::vector<cplx> out(outer * m * inner);
    const Eigen::MatrixXcd At = A.transpose();
    for (std::size_t o = 0; o < outer; ++o) {
        Eigen::Map<const Eigen::MatrixXcd> S(data.data() + o * n * inner, inner, n);
        Eigen::Map<Eigen::MatrixXcd> R(out.data() + o * m * inner, inner, m);
        R.noalias() = S * At;
    }
    dims[axis] = m;
    return out;
}

std::vector<cplx> classical_ft_at(const Symbol& f, const std::vector<double>& targets, FtDirection dir) {
    const GridSpec& g = f.grid();
    const double sigma = dir == FtDirection::Forward ? -1.0 : 1.0;
    const double weight = dir == FtDirection::Forward ? g.spacing() : g.spacing() / (2.0 * M_PI);
    const auto t = g.axis();
    Eigen::MatrixXcd E(targets.size(), g.N);
    for (std::size_t m = 0; m < targets.size(); ++m)
        for (int k = 0; k < g.N; ++k) E(m, k) = weight * std::polar(1.0, sigma * targets[m] * t[k]);
    std::vector<int> dims(g.d, g.N);
    std::vector<cplx> data = f.values();
    for (int a = 0; a < g.d; ++a) data = apply_axis_matrix(data, dims, a, E);
    return data;
}

std::vector<double> origin_weights(int N) {
    std::vector<double> w(N);
    for (int j = 0; j < N; ++j) {
        const double u = j - N / 2 + 0.5;
        double acc = 1.0;
        for (int k = 1; k < N / 2; ++k) acc += 2.0 * std::cos(2.0 * M_PI * k * u / N);
        w[j] = acc / N;
    }
    return w;
}

cplx value_at_origin(const Symbol& f) {
    const GridSpec& g = f.grid();
    const auto w = origin_weights(g.N);
    Eigen::MatrixXcd W(1, g.N);
    for (int j = 0; j < g.N; ++j) W(0, j) = w[j];
    std::vector<int> dims(g.d, g.N);
    std::vector<cplx> data = f.values();
    for (int a = 0; a < g.d; ++a) data = apply_axis_matrix(data, dims, a, W);
    return data.at(0);
}

std::vector<cplx> resample_to_lattice(const Symbol& f) {
    const GridSpec& g = f.grid();
    const int N = g.N;
    // Row j evaluates the interpolant at fractional index j - 1/2; the
    // Nyquist mode is dropped so the interpolant is real for real data.
    Eigen::MatrixXcd R(N, N);
    for (int j = 0; j < N; ++j)
        for (int k = 0; k < N; ++k) {
            const double x = j - 0.5 - k;
            double acc = 1.0;
            for (int m = 1; m < N / 2; ++m) acc += 2.0 * std::cos(2.0 * M_PI * m * x / N);
            R(j, k) = acc / N;
        }
    std::vector<int> dims(g.d, N);
    std::vector<cplx> data = f.values();
    for (int a = 0; a < g.d; ++a) data = apply_axis_matrix(data, dims, a, R);
    return data;
}

}  // namespace ncx
