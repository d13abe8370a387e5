#include "ncx/symbol_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ncx/binary.hpp"

namespace ncx {

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open '" + tmp + "' for writing");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("write to '" + tmp + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

void write_ncsy(const std::string& path, const Symbol& f) {
    const GridSpec& g = f.grid();
    std::string out = "NCSY";
    bin::put_u32(out, 1);
    bin::put_f64(out, g.d);
    bin::put_f64(out, g.N);
    bin::put_f64(out, g.L);
    for (const auto& z : f.values()) {
        bin::put_f32(out, static_cast<float>(z.real()));
        bin::put_f32(out, static_cast<float>(z.imag()));
    }
    atomic_write(path, out);
}

Symbol read_ncsy(const std::string& path) {
    const std::string data = bin::read_file(path);
    bin::Reader r(data, path);
    if (r.take(4) != "NCSY") throw IoError("'" + path + "' is not an NCSY file");
    const std::uint32_t version = r.u32();
    if (version != 1) throw IoError("'" + path + "': unsupported NCSY version " + std::to_string(version));
    const double d = r.f64(), N = r.f64(), L = r.f64();
    GridSpec g{static_cast<int>(d), L, static_cast<int>(N)};
    if (g.d != d || g.N != N) throw IoError("'" + path + "': malformed header");
    try {
        g.validate();
    } catch (const DomainError& e) {
        throw IoError("'" + path + "': " + e.what());
    }
    std::vector<cplx> v(g.size());
    for (auto& z : v) {
        const float re = r.f32();
        const float im = r.f32();
        z = cplx(re, im);
    }
    if (!r.done()) throw IoError("'" + path + "': trailing bytes");
    return Symbol(g, std::move(v));
}

void write_symbol_csv(const std::string& path, const Symbol& f) {
    const GridSpec& g = f.grid();
    std::ostringstream os;
    os << std::setprecision(17);
    for (int a = 0; a < g.d; ++a) os << "t" << a << ",";
    os << "re,im\n";
    std::vector<double> t(g.d);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.point(i, t.data());
        for (int a = 0; a < g.d; ++a) os << t[a] << ",";
        os << f[i].real() << "," << f[i].imag() << "\n";
    }
    atomic_write(path, os.str());
}

}  // namespace ncx
