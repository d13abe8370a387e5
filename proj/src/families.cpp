#include "ncx/families.hpp"

#include <cmath>
#include <sstream>

namespace ncx {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

double hermite_normalized(int k, double x) {
    // H_k(x) / sqrt(2^k k!) by the scaled three-term recurrence.
    if (k == 0) return 1.0;
    double hm = 1.0, h = std::sqrt(2.0) * x;
    for (int n = 1; n < k; ++n) {
        const double hp = std::sqrt(2.0 / (n + 1)) * x * h - std::sqrt(static_cast<double>(n) / (n + 1)) * hm;
        hm = h;
        h = hp;
    }
    return h;
}

std::vector<double> point_in_ball(Rng& rng, int d, double radius) {
    std::vector<double> v(d);
    double n2 = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        n2 += x * x;
    }
    const double r = radius * std::pow(rng.uniform(), 1.0 / d);
    const double s = n2 > 0.0 ? r / std::sqrt(n2) : 0.0;
    for (auto& x : v) x *= s;
    return v;
}

double coord_or_zero(const std::vector<double>& v, int j) { return v.empty() ? 0.0 : v.at(j); }

void check_vector(const std::vector<double>& v, int d, const char* name) {
    if (!v.empty() && static_cast<int>(v.size()) != d)
        throw DomainError(std::string("test family: ") + name + " has wrong dimension");
}

}  // namespace

std::string to_string(FamilyKind k) {
    switch (k) {
        case FamilyKind::Gaussian: return "gaussian";
        case FamilyKind::ModulatedGaussian: return "modulated-gaussian";
        case FamilyKind::Hermite: return "hermite";
        case FamilyKind::RandomBandlimited: return "random-bandlimited";
    }
    return "?";
}

FamilyKind family_kind_from_string(const std::string& s) {
    if (s == "gaussian") return FamilyKind::Gaussian;
    if (s == "modulated-gaussian") return FamilyKind::ModulatedGaussian;
    if (s == "hermite") return FamilyKind::Hermite;
    if (s == "random-bandlimited") return FamilyKind::RandomBandlimited;
    throw ConfigError("unknown test family kind '" + s + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) { return splitmix64(seed + (index + 1) * kGolden); }

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

TestFamilySpec TestFamilySpec::gaussian(double a) {
    TestFamilySpec s;
    s.kind = FamilyKind::Gaussian;
    s.width = a;
    return s;
}

TestFamilySpec TestFamilySpec::modulated(double a, std::vector<double> eta, std::vector<double> center) {
    TestFamilySpec s;
    s.kind = FamilyKind::ModulatedGaussian;
    s.width = a;
    s.modulation = std::move(eta);
    s.center = std::move(center);
    return s;
}

TestFamilySpec TestFamilySpec::hermite(double a, std::vector<int> degrees) {
    TestFamilySpec s;
    s.kind = FamilyKind::Hermite;
    s.width = a;
    s.degrees = std::move(degrees);
    return s;
}

TestFamilySpec TestFamilySpec::random_bandlimited(std::uint64_t seed) {
    TestFamilySpec s;
    s.kind = FamilyKind::RandomBandlimited;
    s.seed = seed;
    return s;
}

bool TestFamilySpec::radial_per_block(int d) const {
    if (d % 2 != 0) return false;
    auto zero = [](const std::vector<double>& v) {
        for (double x : v)
            if (x != 0.0) return false;
        return true;
    };
    if (kind == FamilyKind::Gaussian || (kind == FamilyKind::ModulatedGaussian && zero(modulation))) {
        if (!zero(center)) return false;
        if (axis_widths.empty()) return true;
        for (int b = 0; b < d / 2; ++b)
            if (axis_widths.at(2 * b) != axis_widths.at(2 * b + 1)) return false;
        return true;
    }
    if (kind == FamilyKind::Hermite) {
        for (int k : degrees)
            if (k != 0) return false;
        return true;
    }
    return false;
}

std::string TestFamilySpec::describe() const {
    std::ostringstream os;
    os << to_string(kind);
    if (kind == FamilyKind::RandomBandlimited) {
        os << "(seed=" << seed << ",bumps=" << bumps << ")";
        return os.str();
    }
    os << "(a=" << width;
    auto vec = [&](const char* name, const auto& v) {
        if (v.empty()) return;
        os << "," << name << "=[";
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
        os << "]";
    };
    vec("widths", axis_widths);
    vec("center", center);
    vec("eta", modulation);
    vec("deg", degrees);
    os << ")";
    return os.str();
}

Symbol make_test_symbol(const TestFamilySpec& spec, const GridSpec& grid) {
    grid.validate();
    const int d = grid.d;
    check_vector(spec.center, d, "center");
    check_vector(spec.modulation, d, "modulation");
    check_vector(spec.axis_widths, d, "axis_widths");
    if (!spec.degrees.empty() && static_cast<int>(spec.degrees.size()) != d)
        throw DomainError("test family: degrees has wrong dimension");

    Symbol out(grid);
    std::vector<double> t(d);

    if (spec.kind == FamilyKind::RandomBandlimited) {
        if (spec.bumps < 1) throw DomainError("test family: bumps must be >= 1");
        if (!(spec.width_min > 0.0) || spec.width_max < spec.width_min)
            throw DomainError("test family: bad width range");
        Rng rng(spec.seed);
        struct Packet {
            cplx amp;
            double a;
            std::vector<double> c, eta;
        };
        std::vector<Packet> packets;
        for (int b = 0; b < spec.bumps; ++b) {
            Packet p;
            p.amp = cplx(rng.normal(), rng.normal()) / std::sqrt(2.0);
            p.a = rng.uniform(spec.width_min, spec.width_max);
            p.c = point_in_ball(rng, d, spec.radius);
            p.eta = point_in_ball(rng, d, spec.modulation_max);
            packets.push_back(std::move(p));
        }
        for (std::size_t i = 0; i < out.size(); ++i) {
            out.point(i, t.data());
            cplx acc = 0.0;
            for (const auto& p : packets) {
                double r2 = 0.0, ph = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double u = t[j] - p.c[j];
                    r2 += u * u;
                    ph += p.eta[j] * t[j];
                }
                acc += p.amp * std::exp(-p.a * r2) * std::polar(1.0, ph);
            }
            out[i] = spec.amplitude * acc;
        }
    } else {
        if (!(spec.width > 0.0) && spec.axis_widths.empty()) throw DomainError("test family: width must be positive");
        for (double a : spec.axis_widths)
            if (!(a > 0.0)) throw DomainError("test family: widths must be positive");
        for (std::size_t i = 0; i < out.size(); ++i) {
            out.point(i, t.data());
            double expo = 0.0, ph = 0.0, poly = 1.0;
            for (int j = 0; j < d; ++j) {
                const double a = spec.axis_widths.empty() ? spec.width : spec.axis_widths[j];
                const double u = t[j] - coord_or_zero(spec.center, j);
                expo -= a * u * u;
                ph += coord_or_zero(spec.modulation, j) * t[j];
                if (spec.kind == FamilyKind::Hermite && !spec.degrees.empty())
                    poly *= hermite_normalized(spec.degrees[j], std::sqrt(2.0 * a) * u);
            }
            out[i] = spec.amplitude * poly * std::exp(expo) * std::polar(1.0, ph);
        }
    }
    out.check_invariants(spec.decay_tol);
    return out;
}

FamilyDescriptor FamilyDescriptor::parse(const std::string& text) {
    FamilyDescriptor f;
    std::stringstream ss(text);
    std::string tok;
    bool first = true;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        const auto eq = tok.find('=');
        if (first && eq == std::string::npos) {
            f.kind = tok;
            first = false;
            continue;
        }
        first = false;
        if (eq == std::string::npos) throw ConfigError("family: expected key=value, got '" + tok + "'");
        const std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
        try {
            if (k == "kind") f.kind = v;
            else if (k == "count") f.count = std::stoi(v);
            else if (k == "seed") f.seed = std::stoull(v);
            else if (k == "amin") f.width_min = std::stod(v);
            else if (k == "amax") f.width_max = std::stod(v);
            else if (k == "radius") f.center_radius = std::stod(v);
            else if (k == "mod") f.modulation_max = std::stod(v);
            else if (k == "degree") f.max_degree = std::stoi(v);
            else throw ConfigError("family: unknown key '" + k + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("family: bad value for '" + k + "'");
        }
    }
    if (f.kind != "mixed") family_kind_from_string(f.kind);
    if (f.count < 0) throw ConfigError("family: count must be >= 0");
    if (!(f.width_min > 0.0) || f.width_max < f.width_min) throw ConfigError("family: bad width range");
    return f;
}

std::string FamilyDescriptor::to_string() const {
    std::ostringstream os;
    os << kind << ",count=" << count << ",seed=" << seed << ",amin=" << width_min << ",amax=" << width_max
       << ",radius=" << center_radius << ",mod=" << modulation_max << ",degree=" << max_degree;
    return os.str();
}

std::vector<TestFamilySpec> expand_family(const FamilyDescriptor& fam, int d) {
    static const FamilyKind cycle[] = {FamilyKind::Gaussian, FamilyKind::ModulatedGaussian, FamilyKind::Hermite,
                                       FamilyKind::RandomBandlimited};
    const bool mixed = fam.kind == "mixed";
    const FamilyKind fixed = mixed ? FamilyKind::Gaussian : family_kind_from_string(fam.kind);
    std::vector<TestFamilySpec> out;
    out.reserve(fam.count);
    for (int i = 0; i < fam.count; ++i) {
        const std::uint64_t s = child_seed(fam.seed, static_cast<std::uint64_t>(i));
        Rng rng(s);
        const FamilyKind k = mixed ? cycle[i % 4] : fixed;
        TestFamilySpec spec;
        spec.kind = k;
        const double a = rng.uniform(fam.width_min, fam.width_max);
        switch (k) {
            case FamilyKind::Gaussian:
                if (mixed || fam.count == 1)
                    spec.width = mixed ? a : fam.width_min;
                else  // dilation family: log-spaced widths
                    spec.width = fam.width_min * std::pow(fam.width_max / fam.width_min,
                                                          static_cast<double>(i) / (fam.count - 1));
                break;
            case FamilyKind::ModulatedGaussian:
                spec.width = a;
                spec.modulation = point_in_ball(rng, d, fam.modulation_max);
                spec.center = point_in_ball(rng, d, fam.center_radius);
                break;
            case FamilyKind::Hermite:
                spec.width = a;
                spec.degrees.resize(d);
                for (auto& deg : spec.degrees)
                    deg = static_cast<int>(std::floor(rng.uniform() * (fam.max_degree + 1)));
                break;
            case FamilyKind::RandomBandlimited:
                spec.seed = s;
                spec.radius = fam.center_radius;
                spec.width_min = fam.width_min;
                spec.width_max = fam.width_max;
                spec.modulation_max = fam.modulation_max;
                break;
        }
        out.push_back(std::move(spec));
    }
    return out;
}

}  // namespace ncx
