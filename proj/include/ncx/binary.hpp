#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "ncx/errors.hpp"

// Little-endian encoding helpers shared by the NCSY and NCMX containers.
namespace ncx::bin {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

inline void put_u32(std::string& s, std::uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }
inline void put_f32(std::string& s, float v) { s.append(reinterpret_cast<const char*>(&v), 4); }
inline void put_f64(std::string& s, double v) { s.append(reinterpret_cast<const char*>(&v), 8); }

inline std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

class Reader {
public:
    Reader(const std::string& data, std::string name) : d_(data), name_(std::move(name)) {}
    std::string take(std::size_t n) {
        if (pos_ + n > d_.size()) throw IoError("'" + name_ + "': truncated file");
        std::string s = d_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    float f32() { return get<float>(); }
    double f64() { return get<double>(); }
    bool done() const { return pos_ == d_.size(); }

private:
    template <class T>
    T get() {
        const std::string s = take(sizeof(T));
        T v;
        std::memcpy(&v, s.data(), sizeof(T));
        return v;
    }
    const std::string& d_;
    std::string name_;
    std::size_t pos_ = 0;
};

}  // namespace ncx::bin
