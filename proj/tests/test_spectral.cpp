#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"

#include "bhh/errors.hpp"
#include "bhh/numerics.hpp"
#include "bhh/spectral.hpp"

using namespace bhh;
using namespace bhh::spectral;

namespace {
constexpr double kPi = std::numbers::pi;

// brute-force count of (i, k) pairs with |k| <= K
std::size_t brute_mode_count(int d, int K) {
    std::size_t n = 0;
    const int hi2 = d >= 2 ? K : 0;
    const int hi3 = d >= 3 ? K : 0;
    for (int a = 0; a <= K; ++a)
        for (int b = 0; b <= hi2; ++b)
            for (int c = 0; c <= hi3; ++c) {
                if (a * a + b * b + c * c > K * K) continue;
                int nz = (a > 0) + (d >= 2 && b > 0) + (d >= 3 && c > 0);
                n += std::size_t{1} << nz;
            }
    return n;
}
}  // namespace

TEST_CASE("modes: single wavevector radius in one dimension") {
    const auto m = enumerate_modes(1, 1);
    REQUIRE(m.size() == 3);
    CHECK(m[0].k[0] == 0);
    CHECK(m[0].branch[0] == 1);
    CHECK(eigenvalue(m[1]) == 1.0);
    CHECK(eigenvalue(m[2]) == 1.0);
}

TEST_CASE("modes: counts match brute force") {
    for (int d = 1; d <= 3; ++d)
        for (int K : {0, 1, 2, 5, 9}) CHECK(enumerate_modes(d, K).size() == brute_mode_count(d, K));
}

TEST_CASE("modes: no duplicates and lexicographic order") {
    const auto m = enumerate_modes(3, 4);
    for (std::size_t i = 1; i < m.size(); ++i) {
        const bool less = m[i - 1].k < m[i].k || (m[i - 1].k == m[i].k && m[i - 1].branch < m[i].branch);
        CHECK(less);
    }
}

TEST_CASE("modes: dimension outside 1..3 is rejected") {
    CHECK_THROWS_AS(enumerate_modes(4, 2), UnsupportedDimension);
    CHECK_THROWS_AS(enumerate_modes(0, 2), UnsupportedDimension);
}

TEST_CASE("basis: orthonormal on the circle and the 2-torus") {
    const auto m1 = enumerate_modes(1, 4);
    const int n = 64;  // trapezoid rule is exact for trigonometric polynomials of degree < n
    for (const auto& a : m1)
        for (const auto& b : m1) {
            double s = 0;
            for (int i = 0; i < n; ++i) {
                const double x = 2 * kPi * i / n;
                s += basis_eval(a, std::span(&x, 1)) * basis_eval(b, std::span(&x, 1));
            }
            s *= 2 * kPi / n;
            CHECK(s == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12).scale(1));
        }
    const auto m2 = enumerate_modes(2, 2);
    const int n2 = 16;
    for (const auto& a : m2)
        for (const auto& b : m2) {
            double s = 0;
            for (int i = 0; i < n2; ++i)
                for (int j = 0; j < n2; ++j) {
                    const double x[2] = {2 * kPi * i / n2, 2 * kPi * j / n2};
                    s += basis_eval(a, x) * basis_eval(b, x);
                }
            s *= std::pow(2 * kPi / n2, 2);
            CHECK(std::abs(s - (a == b ? 1.0 : 0.0)) < 1e-12);
        }
}

TEST_CASE("wavevectors: folded weights reproduce the basis products") {
    const int d = 2;
    const auto modes = enumerate_modes(d, 3);
    const auto waves = enumerate_wavevectors(d, 3);
    const double x[2] = {0.3, 1.7};
    const double y[2] = {2.9, 5.1};
    for (const auto& w : waves) {
        double direct = 0;
        for (const auto& m : modes)
            if (m.k == w.k) direct += basis_eval(m, x) * basis_eval(m, y);
        const double folded = w.weight * std::cos(w.k[0] * (x[0] - y[0])) * std::cos(w.k[1] * (x[1] - y[1]));
        CHECK(std::abs(direct - folded) < 1e-14);
    }
}

TEST_CASE("wavevectors: sorted by decreasing eigenvalue, budget enforced") {
    const auto w = enumerate_wavevectors(3, 6);
    for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i - 1].lambda >= w[i].lambda);
    CHECK(w.back().lambda == 0.0);
    CHECK_THROWS_AS(enumerate_wavevectors(3, 40, 1000), ResourceError);
}

TEST_CASE("truncation: tail bound dominates a long explicit shell sum") {
    for (int d = 1; d <= 3; ++d) {
        const int K = 6;
        const int K1 = d == 3 ? 60 : 300;
        double s = 0;
        for (const auto& w : enumerate_wavevectors(d, K1)) {
            const double r2 = double(w.k[0]) * w.k[0] + double(w.k[1]) * w.k[1] + double(w.k[2]) * w.k[2];
            if (r2 > K * K) s += w.weight / w.lambda;
        }
        CHECK(inverse_lambda_tail_bound(d, K) >= s);
        CHECK(inverse_lambda_tail_bound(d, K) < 20 * s + 1e-3);
    }
    const auto tr = choose_truncation(1, 1e-6, 500);
    CHECK(tr.tail_estimate <= 1e-6);
    CHECK(inverse_lambda_tail_bound(1, tr.k_max - 1) > 1e-6);
}

TEST_CASE("green: one-dimensional diagonal value against a direct series") {
    const double x = 0.4;
    double s = 1 / (2 * kPi);
    for (int k = 1; k <= 10; ++k) s += std::exp(-std::pow(k, 4.0)) / kPi;
    const auto g = green(1, 1.0, std::span(&x, 1), std::span(&x, 1), make_truncation(1, 10));
    CHECK(g.value == doctest::Approx(s).epsilon(1e-14));
    CHECK(g.value == doctest::Approx(0.276254).epsilon(1e-6));
}

TEST_CASE("green: long times relax to the uniform density") {
    const double x[3] = {0.1, 2.0, 4.0};
    const double y[3] = {3.0, 0.5, 1.0};
    for (int d = 1; d <= 3; ++d) {
        const auto g = green(d, 50.0, std::span(x, d), std::span(y, d), make_truncation(d, 4));
        CHECK(g.value == doctest::Approx(std::pow(2 * kPi, -d)).epsilon(1e-15));
    }
}

TEST_CASE("green: rejects t <= 0 and reports a tail bound") {
    const double x = 0;
    CHECK_THROWS_AS(green(1, 0.0, std::span(&x, 1), std::span(&x, 1), make_truncation(1, 5)), DomainError);
    const auto g = green(1, 1e-4, std::span(&x, 1), std::span(&x, 1), make_truncation(1, 5));
    double tail = 0;
    for (int k = 6; k < 200; ++k) tail += std::exp(-std::pow(k, 4.0) * 1e-4) / kPi;
    CHECK(g.tail_bound >= tail);
}

TEST_CASE("heat kernel: series and short-time dual agree where both are accurate") {
    // dual branch is taken for rho below ~46 / 4000^4
    for (double rho : {1e-14, 5e-15}) {
        for (double z : {0.0, 3e-4, 1e-3, -2e-3}) {
            KahanSum s;
            for (int k = 1; k <= 20000; ++k) s += std::exp(-std::pow(double(k), 4) * rho) * std::cos(k * z);
            const double direct = 1 / (2 * kPi) + s.value() / kPi;
            CHECK(heat_kernel_1d(rho, z) == doctest::Approx(direct).epsilon(1e-10));
        }
    }
}

TEST_CASE("heat kernel: integrates to one over the circle") {
    for (double rho : {1e-6, 1e-2, 1.0}) {
        const double v = integrate_adaptive([&](double z) { return heat_kernel_1d(rho, z); }, -kPi, kPi,
                                            {.order = 16, .rel_tol = 1e-13});
        CHECK(v == doctest::Approx(1.0).epsilon(1e-11));
    }
}
