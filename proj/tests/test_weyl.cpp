#include <cmath>
#include <cstdio>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "ncx/families.hpp"
#include "ncx/symbol_ops.hpp"
#include "ncx/weyl.hpp"

using namespace ncx;

namespace {

const GridSpec kGrid{2, 12.0, 128};
const HermiteTruncation kTrunc{64, 1.0};

Symbol gaussian(const GridSpec& g, double a) { return make_test_symbol(TestFamilySpec::gaussian(a), g); }

// exp(i(t0 X + h t1 P)) from an eigendecomposition of the Hermitian generator in
// a larger number basis; an oracle independent of the Laguerre formula.
Eigen::MatrixXcd generator_exponential(double t0, double t1, double h, int big) {
    const double ell = std::sqrt(h);
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(big, big);
    for (int n = 1; n < big; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    const Eigen::MatrixXcd ad = a.adjoint();
    const Eigen::MatrixXcd X = ell / std::sqrt(2.0) * (a + ad);
    const Eigen::MatrixXcd P = cplx(0.0, -1.0) / (std::sqrt(2.0) * ell) * (a - ad);
    const Eigen::MatrixXcd G = t0 * X + h * t1 * P;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G);
    Eigen::VectorXcd ph(big);
    for (int k = 0; k < big; ++k) ph(k) = std::polar(1.0, es.eigenvalues()(k));
    return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

// Gaussian e^{-a|t|^2} has X_nn = (2pi/h) q^n / (2a/h + 1/2), q = (4a - h)/(4a + h)
// (generating function of the Laguerre polynomials).
double gaussian_diag(double a, double h, int n) {
    const double q = (4 * a - h) / (4 * a + h);
    return (2 * M_PI / h) / (2 * a / h + 0.5) * std::pow(q, n);
}

double rel_frob(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B) { return (A - B).norm() / B.norm(); }

}  // namespace

TEST_CASE("displacement matrices") {
    const int M = 64;
    CHECK(displacement_block(0.0, 0.0, M, 1.0) == Eigen::MatrixXcd::Identity(M, M));

    SUBCASE("matches the exponential of the generator") {
        for (auto [t0, t1] : {std::pair{0.7, -0.4}, std::pair{-1.5, 1.1}, std::pair{0.0, 2.0}}) {
            const Eigen::MatrixXcd D = displacement_block(t0, t1, M, 1.0);
            const Eigen::MatrixXcd ref = generator_exponential(t0, t1, 1.0, 200).topLeftCorner(M, M);
            CHECK((D - ref).cwiseAbs().maxCoeff() < 1e-10);
        }
        const Eigen::MatrixXcd D2 = displacement_block(0.5, 0.3, 32, 2.0);
        const Eigen::MatrixXcd ref2 = generator_exponential(0.5, 0.3, 2.0, 160).topLeftCorner(32, 32);
        CHECK((D2 - ref2).cwiseAbs().maxCoeff() < 1e-10);
    }

    SUBCASE("column norms") {
        for (auto [t0, t1] : {std::pair{2.0, 0.0}, std::pair{1.2, -1.6}, std::pair{-0.3, 0.9}}) {
            const Eigen::MatrixXcd D = displacement_block(t0, t1, M, 1.0);
            for (int n = 0; n < M; ++n) {
                const double c = D.col(n).norm();
                CHECK(c <= 1.0 + 1e-12);
                if (n < M / 2) CHECK(c >= 1.0 - 1e-8);
            }
        }
    }

    SUBCASE("Weyl relation on the top-left corner") {
        const double h = 1.0;
        auto th = ThetaMatrix::canonical(2, h);
        const std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs = {
            {{0.5, -0.3}, {0.2, 0.8}}, {{-0.7, 0.7}, {0.6, 0.1}}, {{0.0, 1.0}, {1.0, 0.0}}};
        for (const auto& [t, s] : pairs) {
            const Eigen::MatrixXcd Ut = displacement_block(t[0], t[1], M, h);
            const Eigen::MatrixXcd Us = displacement_block(s[0], s[1], M, h);
            const Eigen::MatrixXcd Uts = displacement_block(t[0] + s[0], t[1] + s[1], M, h);
            const cplx phase = std::polar(1.0, 0.5 * th.form(t.data(), s.data()));
            const Eigen::MatrixXcd diff = (Ut * Us - phase * Uts).topLeftCorner(M / 2, M / 2);
            CHECK(diff.norm() <= 1e-6);
        }
    }

    SUBCASE("diagonal is the Laguerre profile") {
        const Eigen::MatrixXcd D = displacement_block(0.8, -0.6, M, 1.0);
        const Eigen::VectorXd dg = displacement_diagonal(1.0, M, 1.0);
        for (int n = 0; n < M; ++n) CHECK(std::abs(D(n, n) - dg(n)) < 1e-13);
    }

    CHECK_THROWS_AS(displacement_matrix({0.1, 0.2, 0.3}, kTrunc), DomainError);
}

TEST_CASE("quantization") {
    auto th = ThetaMatrix::canonical(2, 1.0);
    const double c_expected = 1.0 / (2 * M_PI);

    SUBCASE("Gaussian quantizes to the closed-form geometric diagonal") {
        for (double a : {0.5, 1.0, 1.7}) {
            auto X = quantize(gaussian(kGrid, a), th, kTrunc, QuantizeMode::Radial);
            REQUIRE(X.is_diagonal());
            for (int n : {0, 1, 5, 20})
                CHECK(X.diagonal()(n).real() == doctest::Approx(gaussian_diag(a, 1.0, n)).epsilon(1e-9));
            // a = h/4 would give a rank-one projector; a close value is nearly rank one
        }
    }

    SUBCASE("general, radial and reference routes agree") {
        auto f = gaussian(kGrid, 1.0);
        auto G = quantize(f, th, kTrunc, QuantizeMode::General);
        auto R = quantize(f, th, kTrunc, QuantizeMode::Radial);
        const Eigen::MatrixXcd Gd = G.dense();
        const double diag_max = Gd.diagonal().cwiseAbs().maxCoeff();
        Eigen::MatrixXcd off = Gd;
        off.diagonal().setZero();
        CHECK(off.cwiseAbs().maxCoeff() <= 1e-8 * diag_max);
        CHECK((Gd.diagonal() - R.diagonal()).cwiseAbs().maxCoeff() <= 1e-6 * diag_max);

        GridSpec g{2, 10.0, 64};
        auto r = make_test_symbol(TestFamilySpec::random_bandlimited(9), g);
        auto fast = quantize(r, th, kTrunc, QuantizeMode::General, QuantizeRoute::Fast, -1.0);
        auto ref = quantize(r, th, kTrunc, QuantizeMode::General, QuantizeRoute::Reference, -1.0);
        CHECK(rel_frob(fast.dense(), ref.dense()) < 1e-10);
    }

    SUBCASE("linearity") {
        auto f = make_test_symbol(TestFamilySpec::modulated(1.0, {0.3, 0.1}, {0.2, -0.4}), kGrid);
        auto g = make_test_symbol(TestFamilySpec::hermite(1.2, {1, 2}), kGrid);
        const cplx al(0.7, -1.3), be(2.0, 0.5);
        auto lhs = quantize(al * f + be * g, th, kTrunc).dense();
        auto rhs = al * quantize(f, th, kTrunc).dense() + be * quantize(g, th, kTrunc).dense();
        CHECK(rel_frob(lhs, rhs) < 1e-13);
    }

    SUBCASE("Plancherel through the calibrated Frobenius norm") {
        auto cal = calibrate_trace(kTrunc, th, kGrid);
        for (double a : {0.6, 1.0, 1.5}) {
            auto f = gaussian(kGrid, a);
            auto X = quantize(f, th, kTrunc);
            const double l2 = std::sqrt(cal.c_theta) * X.frobenius();
            CHECK(std::abs(l2 - f.l2_norm()) <= 1e-4 * f.l2_norm());
        }
    }

    SUBCASE("adjoint and product homomorphism") {
        GridSpec g{2, 12.0, 128};
        auto f = make_test_symbol(TestFamilySpec::modulated(0.9, {0.4, -0.2}, {0.3, 0.3}), g);
        auto k = make_test_symbol(TestFamilySpec::modulated(1.1, {-0.1, 0.5}, {-0.2, 0.1}), g);
        auto Xf = quantize(f, th, kTrunc).dense();
        auto Xk = quantize(k, th, kTrunc).dense();
        auto Xs = quantize(sharp(f), th, kTrunc).dense();
        CHECK((Xs - Xf.adjoint()).cwiseAbs().maxCoeff() <= 1e-8 * Xf.cwiseAbs().maxCoeff());
        auto Xfk = quantize(twisted_convolution(f, k, th), th, kTrunc).dense();
        CHECK(rel_frob(Xfk, Xf * Xk) <= 1e-4);

        auto pos = twisted_convolution(sharp(k), k, th);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(quantize(pos, th, kTrunc).dense());
        const double top = es.eigenvalues().maxCoeff();
        CHECK(es.eigenvalues().minCoeff() >= -1e-8 * top);
    }

    SUBCASE("tail and domain errors") {
        auto f = gaussian(kGrid, 1.0);
        CHECK_THROWS_AS(quantize(f, th, HermiteTruncation{8, 1.0}), TruncationTailError);
        CHECK_THROWS_AS(quantize(f, th, HermiteTruncation{4, 1.0}), DomainError);
        CHECK_THROWS_AS(quantize(f, ThetaMatrix::zero(2), kTrunc), DomainError);
        CHECK_THROWS_AS(quantize(f, ThetaMatrix::canonical(2, 2.0), kTrunc), DomainError);
        auto m = make_test_symbol(TestFamilySpec::modulated(1.0, {0.5, 0.0}), kGrid);
        CHECK_THROWS_AS(quantize(m, th, kTrunc, QuantizeMode::Radial), DomainError);
    }

    SUBCASE("calibration") {
        auto cal = calibrate_trace(kTrunc, th, kGrid, {1.0, 2.0});
        CHECK(cal.residuals.at(1) <= 1e-6);
        CHECK(cal.c_theta == doctest::Approx(c_expected).epsilon(1e-8));
        auto held = gaussian(kGrid, 1.4);
        auto X = quantize(held, th, kTrunc, QuantizeMode::Radial);
        CHECK(std::abs(cal.c_theta * X.matrix_trace() - 1.0) <= 1e-8);
        CHECK_THROWS_AS(calibrate_trace(HermiteTruncation{8, 1.0}, th, kGrid, {0.5, 0.6}), TruncationTailError);

        auto c2 = calibrate_trace(HermiteTruncation{64, 2.0}, ThetaMatrix::canonical(2, 2.0), kGrid);
        CHECK(c2.c_theta == doctest::Approx(2.0 / (2 * M_PI)).epsilon(1e-8));

        const std::string js = cal.manifest_json("2024-01-01T00:00:00Z");
        auto back = TraceCalibration::from_manifest_json(js);
        CHECK(back.c_theta == cal.c_theta);
        CHECK(back.reference_widths == cal.reference_widths);
        CHECK_THROWS_AS(TraceCalibration::from_manifest_json("{\"d\": 2}"), ConfigError);
    }
}

TEST_CASE("dequantization") {
    auto th = ThetaMatrix::canonical(2, 1.0);
    auto cal = calibrate_trace(kTrunc, th, kGrid);

    SUBCASE("roundtrip") {
        for (double a : {0.7, 1.0, 1.6}) {
            auto f = gaussian(kGrid, a);
            auto X = quantize(f, th, kTrunc);
            X.calibrate(cal);
            CHECK(sup_distance(dequantize(X, kGrid), f) <= 1e-4);
            auto R = quantize(f, th, kTrunc, QuantizeMode::Radial);
            R.calibrate(cal);
            CHECK(sup_distance(dequantize(R, kGrid), f) <= 1e-4);
        }
        auto m = make_test_symbol(TestFamilySpec::modulated(1.0, {0.5, -0.3}, {0.4, 0.2}), kGrid);
        auto X = quantize(m, th, kTrunc);
        X.calibrate(cal);
        CHECK(sup_distance(dequantize(X, kGrid), m) <= 1e-4);
        // point evaluation agrees with the grid evaluation
        std::vector<double> t(2);
        auto D = dequantize(X, kGrid);
        for (std::size_t i : {std::size_t(8256), std::size_t(8000), std::size_t(7000)}) {
            D.point(i, t.data());
            CHECK(std::abs(dequantize_at(X, t) - D[i]) < 1e-9);
        }
    }

    SUBCASE("zero matrix and missing calibration") {
        auto Z = MatrixRep::from_dense(2, kTrunc, Eigen::MatrixXcd::Zero(64, 64));
        CHECK_THROWS_AS(dequantize(Z, kGrid), CalibrationError);
        Z.calibrate(cal);
        CHECK(dequantize(Z, kGrid).max_abs() == 0.0);
    }

    SUBCASE("geometric diagonal against the generating function") {
        const double q = 0.55;
        Eigen::VectorXcd dg(64);
        for (int n = 0; n < 64; ++n) dg(n) = std::pow(q, n);
        auto X = MatrixRep::from_diagonal(2, kTrunc, dg);
        X.calibrate(cal);
        for (double r : {0.0, 0.4, 1.1, 2.0, 3.5}) {
            const double x = 0.5 * r * r;
            const double oracle = cal.c_theta * std::exp(-0.5 * x) * std::exp(-x * q / (1 - q)) / (1 - q);
            CHECK(std::abs(dequantize_at(X, {r, 0.0}) - oracle) <= 1e-5);
            CHECK(std::abs(dequantize_at(X, {r / std::sqrt(2.0), r / std::sqrt(2.0)}) - oracle) <= 1e-5);
        }
    }
}

TEST_CASE("two blocks") {
    GridSpec g4{4, 6.0, 32};
    HermiteTruncation tr{32, 1.0};
    auto th = ThetaMatrix::canonical(4, 1.0);
    auto cal = calibrate_trace(tr, th, g4);
    CHECK(cal.block_c.size() == 2);
    CHECK(cal.c_theta == doctest::Approx(cal.block_c[0] * cal.block_c[1]).epsilon(1e-15));
    CHECK(cal.c_theta == doctest::Approx(1.0 / (4 * M_PI * M_PI)).epsilon(1e-7));
    CHECK(cal.residuals.back() <= 1e-6);

    SUBCASE("product symbols quantize to Kronecker products") {
        auto f = gaussian(g4, 0.8);
        auto X = quantize(f, th, tr, QuantizeMode::Radial);
        GridSpec g2{2, 6.0, 32};
        auto X1 = quantize(gaussian(g2, 0.8), ThetaMatrix::canonical(2, 1.0), tr, QuantizeMode::Radial);
        for (int n1 : {0, 3, 10})
            for (int n2 : {0, 1, 7})
                CHECK(std::abs(X.diagonal()(n1 * 32 + n2) - X1.diagonal()(n1) * X1.diagonal()(n2)) < 1e-12);
    }

    SUBCASE("non-product radial symbol against the general tensor route") {
        GridSpec small{4, 4.5, 16};
        HermiteTruncation t8{8, 1.0};
        auto f = Symbol::sample(small, [](const double* t) {
            const double r1 = t[0] * t[0] + t[1] * t[1], r2 = t[2] * t[2] + t[3] * t[3];
            return cplx((1.0 + 0.3 * r1 * r2) * std::exp(-(r1 + r2)));
        });
        auto R = quantize(f, th, t8, QuantizeMode::Radial, QuantizeRoute::Fast, -1.0);
        auto G = quantize(f, th, t8, QuantizeMode::General, QuantizeRoute::Fast, -1.0);
        Eigen::MatrixXcd diff = G.dense();
        diff.diagonal() -= R.diagonal();
        CHECK(diff.cwiseAbs().maxCoeff() <= 1e-6 * R.diagonal().cwiseAbs().maxCoeff());

        // direct sum of f(t) U1 (x) U2 over the grid as the oracle
        Eigen::MatrixXcd ref = Eigen::MatrixXcd::Zero(64, 64);
        std::vector<double> t(4);
        for (std::size_t i = 0; i < f.size(); ++i) {
            f.point(i, t.data());
            ref += f[i] * displacement_matrix(t, t8);
        }
        ref *= small.cell_volume();
        CHECK(rel_frob(G.dense(), ref) < 1e-10);
    }

    SUBCASE("dequantize a product state") {
        auto f = gaussian(g4, 0.9);
        auto X = quantize(f, th, tr, QuantizeMode::Radial);
        X.calibrate(cal);
        CHECK(sup_distance(dequantize(X, g4), f) <= 1e-4);
    }
}

TEST_CASE("NCMX container") {
    auto th = ThetaMatrix::canonical(2, 1.0);
    auto X = quantize(gaussian(kGrid, 1.0), th, HermiteTruncation{16, 1.0}, QuantizeMode::General, QuantizeRoute::Fast, -1);
    const std::string path = "test_weyl_roundtrip.ncmx";
    write_ncmx(path, X);
    auto Y = read_ncmx(path);
    CHECK(Y.d() == 2);
    CHECK(Y.truncation().M == 16);
    CHECK((Y.dense() - X.dense()).cwiseAbs().maxCoeff() < 1e-6 * X.dense().cwiseAbs().maxCoeff());
    std::remove(path.c_str());
    CHECK_THROWS_AS(read_ncmx("does-not-exist.ncmx"), IoError);
}

TEST_CASE("Kronecker storage for product symbols") {
    GridSpec g4{4, 4.5, 16};
    HermiteTruncation t8{8, 1.0};
    auto th = ThetaMatrix::canonical(4, 1.0);
    GridSpec g2{2, 4.5, 16};
    // the box is too small for the family decay check, so sample directly
    auto u = Symbol::sample(g2, [](const double* t) {
        return std::exp(-(t[0] * t[0] + t[1] * t[1])) * std::polar(1.0, 0.3 * t[0] - 0.2 * t[1]);
    });
    auto v = Symbol::sample(g2, [](const double* t) { return cplx(std::exp(-1.3 * (t[0] * t[0] + t[1] * t[1]))); });
    auto f = outer_product(u, v);
    auto X = quantize(f, th, t8, QuantizeMode::General, QuantizeRoute::Fast, -1.0);
    REQUIRE(X.is_kronecker());
    CHECK_THROWS_AS(X.dense(), DomainError);

    Eigen::MatrixXcd ref = Eigen::MatrixXcd::Zero(64, 64);
    std::vector<double> t(4);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f.point(i, t.data());
        ref += f[i] * displacement_matrix(t, t8);
    }
    ref *= g4.cell_volume();
    const Eigen::MatrixXcd D = X.to_dense();
    CHECK(rel_frob(D, ref) < 1e-10);
    CHECK(std::abs(X.matrix_trace() - D.trace()) < 1e-12 * std::abs(D.trace()));
    CHECK(X.frobenius() == doctest::Approx(D.norm()).epsilon(1e-12));

    const Eigen::VectorXd sv = X.singular_values();
    const Eigen::VectorXd sv_dense = Eigen::BDCSVD<Eigen::MatrixXcd>(D).singularValues();
    CHECK((sv - sv_dense).cwiseAbs().maxCoeff() < 1e-12 * sv_dense(0));

    auto dense_rep = MatrixRep::from_dense(4, t8, D);
    CHECK(tail_indicator(X) == doctest::Approx(tail_indicator(dense_rep)).epsilon(1e-10));
    CHECK(X.hermitian_defect() == doctest::Approx(dense_rep.hermitian_defect()).epsilon(1e-10));

    SUBCASE("product twisted convolution factorizes") {
        GridSpec small2{2, 4.5, 8};
        auto a = Symbol::sample(small2, [](const double* t) { return cplx(std::exp(-0.9 * (t[0] * t[0] + t[1] * t[1]))); });
        auto b = Symbol::sample(small2, [](const double* t) {
            return std::exp(-1.1 * (t[0] * t[0] + t[1] * t[1])) * std::polar(1.0, 0.2 * t[0] + 0.1 * t[1]);
        });
        auto p = outer_product(a, b), q = outer_product(b, a);
        auto fast = twisted_convolution(p, q, th);
        auto direct = twisted_convolution_direct(p, q, th);
        CHECK(sup_distance(fast, direct) < 1e-13 * direct.max_abs());
    }
}
