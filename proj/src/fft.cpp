#include "ncx/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>

namespace ncx::fft {

namespace {

std::mutex plan_mutex;

fftw_plan plan_for(int n, int sign) {
    static std::map<std::pair<int, int>, fftw_plan> cache;
    std::lock_guard<std::mutex> lock(plan_mutex);
    auto key = std::make_pair(n, sign);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    fftw_complex* a = fftw_alloc_complex(n);
    fftw_complex* b = fftw_alloc_complex(n);
    fftw_plan p = fftw_plan_dft_1d(n, a, b, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(a);
    fftw_free(b);
    cache.emplace(key, p);
    return p;
}

}  // namespace

void dft(const cplx* in, cplx* out, int n, int sign) {
    fftw_plan p = plan_for(n, sign);
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)), reinterpret_cast<fftw_complex*>(out));
}

void dft_axis(std::vector<cplx>& data, int d, int N, int axis, int sign) {
    std::size_t stride = 1;
    for (int a = axis + 1; a < d; ++a) stride *= N;
    const std::size_t total = data.size();
    const std::size_t block = stride * N;
    std::vector<cplx> in(N), out(N);
    for (std::size_t base = 0; base < total; base += block) {
        for (std::size_t off = 0; off < stride; ++off) {
            const std::size_t s = base + off;
            for (int k = 0; k < N; ++k) in[k] = data[s + k * stride];
            dft(in.data(), out.data(), N, sign);
            for (int k = 0; k < N; ++k) data[s + k * stride] = out[k];
        }
    }
}

std::vector<cplx> linear_convolve(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    const int n = static_cast<int>(std::max(a.size(), b.size()));
    const int m = 2 * n;
    std::vector<cplx> pa(m, 0.0), pb(m, 0.0), fa(m), fb(m);
    std::copy(a.begin(), a.end(), pa.begin());
    std::copy(b.begin(), b.end(), pb.begin());
    dft(pa.data(), fa.data(), m, -1);
    dft(pb.data(), fb.data(), m, -1);
    for (int k = 0; k < m; ++k) fa[k] *= fb[k] / static_cast<double>(m);
    dft(fa.data(), pa.data(), m, +1);
    pa.resize(a.size() + b.size() - 1);
    return pa;
}

}  // namespace ncx::fft
