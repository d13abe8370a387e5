#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ncx/grid.hpp"

namespace ncx {

enum class FamilyKind { Gaussian, ModulatedGaussian, Hermite, RandomBandlimited };

std::string to_string(FamilyKind k);
FamilyKind family_kind_from_string(const std::string& s);

// Parameters of one test symbol.
//   gaussian            A exp(-sum_j a_j (t_j - c_j)^2)
//   modulated-gaussian  gaussian times exp(i (eta, t))
//   hermite             prod_j H_{k_j}(sqrt(2a) t_j) / sqrt(2^k_j k_j!) times exp(-a|t|^2)
//   random-bandlimited  sum of `bumps` modulated gaussian packets with seeded
//                       complex amplitudes, centres in a ball and widths in a range
struct TestFamilySpec {
    FamilyKind kind = FamilyKind::Gaussian;
    double width = 1.0;
    std::vector<double> axis_widths;  // overrides width per axis when non-empty
    std::vector<double> center;       // empty means origin
    std::vector<double> modulation;   // empty means zero
    std::vector<int> degrees;         // hermite degrees per axis
    cplx amplitude{1.0, 0.0};

    std::uint64_t seed = 0;
    int bumps = 3;
    double radius = 1.5;
    double width_min = 0.6;
    double width_max = 1.4;
    double modulation_max = 0.0;

    double decay_tol = 1e-10;

    static TestFamilySpec gaussian(double a);
    static TestFamilySpec modulated(double a, std::vector<double> eta, std::vector<double> center = {});
    static TestFamilySpec hermite(double a, std::vector<int> degrees);
    static TestFamilySpec random_bandlimited(std::uint64_t seed);

    // True when the symbol is invariant under rotations inside each 2-plane
    // (t_{2b}, t_{2b+1}); used to pick the diagonal quantization path.
    bool radial_per_block(int d) const;
    std::string describe() const;
};

Symbol make_test_symbol(const TestFamilySpec& spec, const GridSpec& grid);

// A reproducible list of test symbols.
struct FamilyDescriptor {
    std::string kind = "gaussian";  // one of the FamilyKind names, or "mixed"
    int count = 8;
    std::uint64_t seed = 1;
    double width_min = 0.6;
    double width_max = 1.6;
    double center_radius = 1.0;
    double modulation_max = 0.8;
    int max_degree = 2;

    static FamilyDescriptor parse(const std::string& text);
    std::string to_string() const;
};

std::vector<TestFamilySpec> expand_family(const FamilyDescriptor& fam, int d);

// Seed splitting: child(seed, i) = splitmix64(seed + (i + 1) * golden), where
// golden = 0x9E3779B97F4A7C15.  Every family member draws from its own child.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index);

// Small portable generator so the parameter streams do not depend on the
// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    double normal();

private:
    std::mt19937_64 eng_;
};

}  // namespace ncx
