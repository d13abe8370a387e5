#include "ncx/symbol_ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ncx/fft.hpp"
#include "ncx/fourier.hpp"

namespace ncx {

namespace {

void require_theta(const Symbol& f, const ThetaMatrix& theta) {
    if (theta.dim() != f.grid().d) {
        std::ostringstream os;
        os << "twisted convolution: theta has dimension " << theta.dim() << " but the grid has d = " << f.grid().d;
        throw DomainError(os.str());
    }
}

// Lattice values F[k], k = -N/2..N/2 per axis, stored with extent N+1; the
// k = N/2 slice repeats k = -N/2 (periodic interpolant).
std::vector<cplx> extended_lattice(const Symbol& f) {
    const GridSpec& g = f.grid();
    const int N = g.N, E = N + 1;
    const auto lat = resample_to_lattice(f);
    std::size_t total = 1;
    for (int a = 0; a < g.d; ++a) total *= E;
    std::vector<cplx> out(total);
    std::vector<int> idx(g.d);
    for (std::size_t i = 0; i < total; ++i) {
        std::size_t r = i, src = 0;
        for (int a = g.d - 1; a >= 0; --a) {
            idx[a] = static_cast<int>(r % E);
            r /= E;
        }
        for (int a = 0; a < g.d; ++a) src = src * N + (idx[a] == N ? 0 : idx[a]);
        out[i] = lat[src];
    }
    return out;
}

// Sum_j f(-xi_j) g(xi_j) h^d, shared by the zeta = 0 and eta = 0 evaluations.
cplx reflected_sum(const Symbol& f, const Symbol& g) {
    const GridSpec& gr = f.grid();
    cplx acc = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) acc += f[gr.reflect(j)] * g[j];
    return acc * gr.cell_volume();
}

Symbol convolve_commutative(const Symbol& f, const Symbol& g) {
    const GridSpec& gr = f.grid();
    const int N = gr.N, E = N + 1, P = 2 * N, d = gr.d;
    const auto F = extended_lattice(f);
    std::size_t total = 1;
    for (int a = 0; a < d; ++a) total *= P;
    std::vector<cplx> A(total, 0.0), B(total, 0.0);
    std::vector<int> idx(d);
    for (std::size_t i = 0; i < F.size(); ++i) {
        std::size_t r = i, dst = 0;
        for (int a = d - 1; a >= 0; --a) {
            idx[a] = static_cast<int>(r % E);
            r /= E;
        }
        for (int a = 0; a < d; ++a) dst = dst * P + idx[a];
        A[dst] = F[i];
    }
    for (std::size_t j = 0; j < g.size(); ++j) {
        gr.unflat(j, idx.data());
        std::size_t dst = 0;
        for (int a = 0; a < d; ++a) dst = dst * P + idx[a];
        B[dst] = g[j];
    }
    for (int a = 0; a < d; ++a) {
        fft::dft_axis(A, d, P, a, -1);
        fft::dft_axis(B, d, P, a, -1);
    }
    for (std::size_t i = 0; i < total; ++i) A[i] *= B[i];
    for (int a = 0; a < d; ++a) fft::dft_axis(A, d, P, a, +1);
    // lattice index of F is k + N/2, so out[i] = conv[i + N/2]
    Symbol out(gr);
    const double scale = gr.cell_volume() / static_cast<double>(total);
    for (std::size_t i = 0; i < out.size(); ++i) {
        gr.unflat(i, idx.data());
        std::size_t src = 0;
        for (int a = 0; a < d; ++a) src = src * P + (idx[a] + N / 2);
        out[i] = A[src] * scale;
    }
    return out;
}

Symbol convolve_block2(const Symbol& f, const Symbol& g, double h) {
    const GridSpec& gr = f.grid();
    const int N = gr.N, E = N + 1, P = 2 * N;
    const auto F = extended_lattice(f);
    const auto t = gr.axis();

    // Spectra of the zero-padded lattice rows F[k1, :].
    std::vector<std::vector<cplx>> rowhat(E, std::vector<cplx>(P));
    std::vector<cplx> buf(P), tmp(P);
    for (int r = 0; r < E; ++r) {
        std::fill(buf.begin(), buf.end(), cplx(0.0));
        for (int k = 0; k < E; ++k) buf[k] = F[static_cast<std::size_t>(r) * E + k];
        fft::dft(buf.data(), rowhat[r].data(), P, -1);
    }
    // phase tables e^{(ih/2) t_a t_b}
    std::vector<cplx> ph(static_cast<std::size_t>(N) * N);
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) ph[static_cast<std::size_t>(a) * N + b] = std::polar(1.0, 0.5 * h * t[a] * t[b]);

    // Row pairs whose magnitudes multiply to below 1e-18 of the peak product
    // contribute nothing at double precision and are skipped.
    std::vector<double> fmax(E, 0.0), gmax(N, 0.0);
    for (int r = 0; r < E; ++r)
        for (int k = 0; k < E; ++k) fmax[r] = std::max(fmax[r], std::abs(F[static_cast<std::size_t>(r) * E + k]));
    for (int r = 0; r < N; ++r)
        for (int k = 0; k < N; ++k) gmax[r] = std::max(gmax[r], std::abs(g[static_cast<std::size_t>(r) * N + k]));
    const double cut = 1e-18 * *std::max_element(fmax.begin(), fmax.end()) * *std::max_element(gmax.begin(), gmax.end());

    std::vector<cplx> out(gr.size(), 0.0);
    const double scale = gr.cell_volume() / P;
    for (int i1 = 0; i1 < N; ++i1) {
        for (int j1 = 0; j1 < N; ++j1) {
            const int k1 = i1 - j1;
            if (k1 < -N / 2 || k1 > N / 2) continue;
            if (fmax[k1 + N / 2] * gmax[j1] <= cut) continue;
            const auto& Fr = rowhat[k1 + N / 2];
            std::fill(buf.begin(), buf.end(), cplx(0.0));
            for (int j2 = 0; j2 < N; ++j2)
                buf[j2] = std::conj(ph[static_cast<std::size_t>(i1) * N + j2]) * g[static_cast<std::size_t>(j1) * N + j2];
            fft::dft(buf.data(), tmp.data(), P, -1);
            for (int m = 0; m < P; ++m) tmp[m] *= Fr[m];
            fft::dft(tmp.data(), buf.data(), P, +1);
            cplx* o = out.data() + static_cast<std::size_t>(i1) * N;
            for (int i2 = 0; i2 < N; ++i2)
                o[i2] += ph[static_cast<std::size_t>(i2) * N + j1] * buf[i2 + N / 2] * scale;
        }
    }
    return Symbol(gr, std::move(out));
}

}  // namespace

void validate_exponent(double p, const char* what) {
    if (!(p >= 1.0)) {
        std::ostringstream os;
        os << what << ": exponent p = " << p << " must lie in [1, inf]";
        throw DomainError(os.str());
    }
}

Symbol translate(const Symbol& f, const std::vector<double>& eta) {
    const GridSpec& g = f.grid();
    if (static_cast<int>(eta.size()) != g.d) throw DomainError("translate: eta has wrong dimension");
    Symbol out = f;
    std::vector<double> t(g.d);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.point(i, t.data());
        double ph = 0.0;
        for (int a = 0; a < g.d; ++a) ph += eta[a] * t[a];
        out[i] *= std::polar(1.0, ph);
    }
    return out;
}

Symbol sharp(const Symbol& f) {
    Symbol out(f.grid());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = std::conj(f[f.grid().reflect(i)]);
    return out;
}

Symbol twisted_convolution_direct(const Symbol& f, const Symbol& g, const ThetaMatrix& theta) {
    require_same_grid(f, g, "twisted convolution");
    require_theta(f, theta);
    const GridSpec& gr = f.grid();
    const int N = gr.N, E = N + 1, d = gr.d;
    const auto F = extended_lattice(f);
    Symbol out(gr);
    std::vector<int> ii(d), jj(d);
    std::vector<double> zeta(d), xi(d);
    for (std::size_t i = 0; i < out.size(); ++i) {
        gr.unflat(i, ii.data());
        f.point(i, zeta.data());
        cplx acc = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            gr.unflat(j, jj.data());
            std::size_t src = 0;
            bool inside = true;
            for (int a = 0; a < d; ++a) {
                const int k = ii[a] - jj[a];
                if (k < -N / 2 || k > N / 2) {
                    inside = false;
                    break;
                }
                src = src * E + (k + N / 2);
            }
            if (!inside) continue;
            g.point(j, xi.data());
            const double phase = theta.is_zero() ? 0.0 : 0.5 * theta.form(zeta.data(), xi.data());
            acc += std::polar(1.0, phase) * F[src] * g[j];
        }
        out[i] = acc * gr.cell_volume();
    }
    return out;
}

Symbol twisted_convolution(const Symbol& f, const Symbol& g, const ThetaMatrix& theta) {
    require_same_grid(f, g, "twisted convolution");
    require_theta(f, theta);
    const GridSpec& gr = f.grid();
    if (theta.is_zero()) {
        if (std::pow(2.0 * gr.N, gr.d) > 6.0e7) throw DomainError("twisted convolution: grid too large for FFT path");
        return convolve_commutative(f, g);
    }
    if (theta.num_blocks() == 1) return convolve_block2(f, g, theta.block_h(0));
    if (theta.num_blocks() == 2) {
        // The phase factorizes over the blocks, so products of block symbols
        // multiply blockwise.
        Symbol f1, f2, g1, g2;
        if (split_block_product(f, f1, f2) && split_block_product(g, g1, g2)) {
            const Symbol a = convolve_block2(f1, g1, theta.block_h(0));
            const Symbol b = convolve_block2(f2, g2, theta.block_h(1));
            return outer_product(a, b);
        }
    }
    if (std::pow(static_cast<double>(gr.N), 2 * gr.d) > 5.0e8)
        throw DomainError("twisted convolution: no fast path for several blocks and the direct sum is too large");
    return twisted_convolution_direct(f, g, theta);
}

bool split_block_product(const Symbol& f, Symbol& u, Symbol& v) {
    const GridSpec& g = f.grid();
    if (g.d != 4) throw DomainError("split_block_product: d = 4 symbols only");
    const int N = g.N, B = N * N;
    std::size_t arg = 0;
    double mx = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (std::abs(f[i]) > mx) {
            mx = std::abs(f[i]);
            arg = i;
        }
    if (mx == 0.0) return false;
    const GridSpec half{2, g.L, N};
    u = Symbol(half);
    v = Symbol(half);
    const std::size_t p1s = arg / B, p2s = arg % B;
    const cplx pivot = f[arg];
    for (int p = 0; p < B; ++p) {
        u[p] = f[static_cast<std::size_t>(p) * B + p2s];
        v[p] = f[p1s * B + p] / pivot;
    }
    const double tol = 1e-13 * mx;
    for (int p1 = 0; p1 < B; ++p1)
        for (int p2 = 0; p2 < B; ++p2)
            if (std::abs(f[static_cast<std::size_t>(p1) * B + p2] - u[p1] * v[p2]) > tol) return false;
    return true;
}

Symbol outer_product(const Symbol& u, const Symbol& v) {
    require_same_grid(u, v, "outer_product");
    if (u.grid().d != 2) throw DomainError("outer_product: d = 2 factors only");
    const GridSpec g{4, u.grid().L, u.grid().N};
    Symbol out(g);
    const std::size_t B = u.size();
    for (std::size_t p1 = 0; p1 < B; ++p1)
        for (std::size_t p2 = 0; p2 < B; ++p2) out[p1 * B + p2] = u[p1] * v[p2];
    return out;
}

cplx twisted_convolution_at(const Symbol& f, const Symbol& g, const ThetaMatrix& theta,
                            const std::vector<double>& zeta) {
    require_same_grid(f, g, "twisted convolution");
    require_theta(f, theta);
    const GridSpec& gr = f.grid();
    if (static_cast<int>(zeta.size()) != gr.d) throw DomainError("twisted convolution: point has wrong dimension");
    bool origin = true;
    for (double z : zeta) origin = origin && z == 0.0;
    if (origin) return reflected_sum(f, g);

    // f(zeta - xi_j) from the trigonometric interpolant, separably per axis.
    const int N = gr.N;
    const double hgrid = gr.spacing();
    std::vector<int> dims(gr.d, N);
    std::vector<cplx> shifted = f.values();
    for (int a = 0; a < gr.d; ++a) {
        Eigen::MatrixXcd A(N, N);
        for (int j = 0; j < N; ++j) {
            const double u = (zeta[a] - gr.coord(j) + gr.L) / hgrid - 0.5;
            for (int k = 0; k < N; ++k) {
                double acc = 1.0;
                for (int m = 1; m < N / 2; ++m) acc += 2.0 * std::cos(2.0 * M_PI * m * (u - k) / N);
                A(j, k) = acc / N;
            }
        }
        shifted = apply_axis_matrix(shifted, dims, a, A);
    }
    std::vector<double> xi(gr.d);
    cplx acc = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        g.point(j, xi.data());
        const double phase = theta.is_zero() ? 0.0 : 0.5 * theta.form(zeta.data(), xi.data());
        acc += std::polar(1.0, phase) * shifted[j] * g[j];
    }
    return acc * gr.cell_volume();
}

Symbol diamond(const Symbol& f, const Symbol& g) {
    require_same_grid(f, g, "diamond");
    Symbol prod(f.grid());
    for (std::size_t j = 0; j < g.size(); ++j) prod[j] = f[f.grid().reflect(j)] * g[j];
    return classical_ft(prod, FtDirection::Forward);
}

cplx diamond_at(const Symbol& f, const Symbol& g, const std::vector<double>& eta) {
    require_same_grid(f, g, "diamond");
    const GridSpec& gr = f.grid();
    if (static_cast<int>(eta.size()) != gr.d) throw DomainError("diamond: point has wrong dimension");
    bool origin = true;
    for (double e : eta) origin = origin && e == 0.0;
    if (origin) return reflected_sum(f, g);
    std::vector<double> xi(gr.d);
    cplx acc = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        g.point(j, xi.data());
        double ph = 0.0;
        for (int a = 0; a < gr.d; ++a) ph -= eta[a] * xi[a];
        acc += f[gr.reflect(j)] * std::polar(1.0, ph) * g[j];
    }
    return acc * gr.cell_volume();
}

double classical_norm(const std::vector<double>& abs_values, double cell_measure, double p, bool weak) {
    validate_exponent(p, "classical_norm");
    if (!(cell_measure > 0.0)) throw DomainError("classical_norm: cell measure must be positive");
    if (std::isinf(p)) {
        double m = 0.0;
        for (double v : abs_values) m = std::max(m, v);
        return m;
    }
    if (!weak) {
        // scale by the maximum to avoid overflow for large p
        double m = 0.0;
        for (double v : abs_values) m = std::max(m, v);
        if (m == 0.0) return 0.0;
        double acc = 0.0;
        for (double v : abs_values) acc += std::pow(v / m, p);
        return m * std::pow(acc * cell_measure, 1.0 / p);
    }
    std::vector<double> s = abs_values;
    std::sort(s.begin(), s.end(), std::greater<double>());
    double best = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (s[k] == 0.0) break;
        best = std::max(best, s[k] * std::pow((k + 1) * cell_measure, 1.0 / p));
    }
    return best;
}

double classical_norm(const Symbol& f, double p, bool weak) {
    std::vector<double> a(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) a[i] = std::abs(f[i]);
    return classical_norm(a, f.grid().cell_volume(), p, weak);
}

}  // namespace ncx
