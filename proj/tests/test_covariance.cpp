#include <cmath>
#include <numbers>

#include "doctest.h"

#include "bhh/covariance.hpp"
#include "bhh/errors.hpp"
#include "bhh/numerics.hpp"
#include "bhh/rng.hpp"

using namespace bhh;

namespace {
constexpr double kPi = std::numbers::pi;

SpaceTimePoint pt(double t, double x0, double x1 = 0, double x2 = 0) {
    SpaceTimePoint p;
    p.t = t;
    p.x = {x0, x1, x2};
    return p;
}

SecondOrderEngine make(int d, double T = 1.0, bool exact = true) {
    EngineConfig c;
    c.d = d;
    c.horizon = T;
    c.exact = exact;
    return SecondOrderEngine(c);
}
}  // namespace

TEST_CASE("variance: closed form in one dimension at large time") {
    const auto eng = make(1, 10.0);
    // sum_{k>=1} (1 - e^{-20 k^4}) / (2 pi k^4) = pi^3 / 180 - e^{-20} / (2 pi) - O(e^{-320})
    const double expected = 10.0 / (2 * kPi) + std::pow(kPi, 3) / 180.0 - std::exp(-20.0) / (2 * kPi);
    CHECK(eng.variance(10.0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(eng.variance(10.0) == doctest::Approx(1.763806).epsilon(1e-6));
}

TEST_CASE("variance: zero at t = 0, invariant in x, and above the zero-mode floor") {
    for (int d = 1; d <= 3; ++d) {
        const auto eng = make(d);
        CHECK(eng.variance(0.0) == 0.0);
        for (double t : {1e-6, 0.01, 0.5, 1.0}) {
            const double floor = -std::expm1(-2 * t) / std::pow(2 * kPi, d);
            CHECK(eng.variance(t) >= floor);
        }
        CHECK(eng.variance(pt(0.3, 1.0, 2.0, 3.0)) == eng.variance(pt(0.3, 4.0, 0.1, 5.0)));
    }
}

TEST_CASE("variance: small-time scaling t^{1-d/4} against the dual-kernel constant") {
    // E u(t,x)^2 ~ (1/2) int_0^{2t} (Gamma(5/4)/pi)^d rho^{-d/4} d rho for t -> 0
    for (int d = 1; d <= 3; ++d) {
        const auto eng = make(d);
        const double t = 1e-9;
        const double c = std::pow(std::tgamma(1.25) / kPi, d);
        const double a = 1.0 - d / 4.0;
        const double lead = 0.5 * c * std::pow(2 * t, a) / a;
        CHECK(eng.variance(t) == doctest::Approx(lead).epsilon(1e-3));
    }
}

TEST_CASE("increment: zero on the diagonal and symmetric") {
    for (int d = 1; d <= 3; ++d) {
        const auto eng = make(d);
        const auto p = pt(0.7, 1.0, 2.0, 3.0);
        const auto q = pt(0.6, 1.5, 2.5, 2.0);
        CHECK(eng.increment_norm_sq(p, p) == 0.0);
        CHECK(eng.increment_norm_sq(p, q) == doctest::Approx(eng.increment_norm_sq(q, p)).epsilon(1e-14));
    }
}

TEST_CASE("increment: agrees with the Wiener isometry oracle") {
    for (int d = 1; d <= 3; ++d) {
        const auto eng = make(d);
        CounterRng rng(substream(42, d));
        for (int i = 0; i < 4; ++i) {
            const auto p = pt(rng.uniform(0, 1), rng.uniform(0, 6), rng.uniform(0, 6), rng.uniform(0, 6));
            const auto q = pt(rng.uniform(0, 1), rng.uniform(0, 6), rng.uniform(0, 6), rng.uniform(0, 6));
            const double a = eng.increment_norm_sq(p, q);
            const double b = wiener_isometry_oracle(p, q, eng);
            CHECK(a == doctest::Approx(b).epsilon(1e-8));
        }
        // small increments, where cancellation would hurt a naive formula
        const auto p = pt(0.5, 1.0, 1.0, 1.0);
        const auto q = pt(0.5 + 1e-7, 1.0 + 1e-4, 1.0, 1.0);
        CHECK(eng.increment_norm_sq(p, q) == doctest::Approx(wiener_isometry_oracle(p, q, eng)).epsilon(1e-7));
    }
}

TEST_CASE("covariance: variance + increment identity and correlation below one") {
    const auto eng = make(2);
    const auto p = pt(0.8, 1.0, 2.0);
    const auto q = pt(0.55, 1.3, 2.2);
    const double c = eng.covariance(p, q);
    CHECK(c == doctest::Approx(0.5 * (eng.variance(0.8) + eng.variance(0.55) - eng.increment_norm_sq(p, q))));
    CHECK(eng.correlation(p, q) < 1.0);
    CHECK(eng.correlation(p, q) == doctest::Approx(c / std::sqrt(eng.variance(0.8) * eng.variance(0.55))));
    const auto near = pt(0.8, 1.0 + 1e-9, 2.0);
    CHECK(eng.decorrelation(p, near) > 0.0);
    CHECK(eng.correlation(p, pt(0.8, 1.001, 2.0)) < 1.0 - 1e-12);
    CHECK_THROWS_AS(eng.correlation(pt(0.0, 1.0, 1.0), p), DomainError);
}

TEST_CASE("engine: the truncated field misses exactly the remainder") {
    const auto full = make(1);
    const auto trunc = make(1, 1.0, false);
    const auto p = pt(0.9, 2.0);
    const auto q = pt(0.4, 1.0);
    // for separations far above rho_c the two agree to the mode tail
    const double tail = full.truncation().tail_estimate;
    CHECK(std::abs(full.increment_norm_sq(p, q) - trunc.increment_norm_sq(p, q)) <= 2 * tail);
    CHECK(full.variance(1.0) - trunc.variance(1.0) >= 0.0);
}

TEST_CASE("engine: rejects bad configuration and times") {
    EngineConfig c;
    c.d = 4;
    CHECK_THROWS_AS(SecondOrderEngine{c}, UnsupportedDimension);
    c.d = 1;
    c.horizon = 0;
    CHECK_THROWS_AS(SecondOrderEngine{c}, ConfigError);
    const auto eng = make(1);
    CHECK_THROWS_AS(eng.variance(1.5), DomainError);
    CHECK_THROWS_AS(wiener_isometry_oracle(pt(0.5, 1), pt(0.2, 1), eng, 1), ConfigError);
}

TEST_CASE("envelope and ratio scan") {
    const auto eng = make(1);
    CHECK(envelope(pt(0.5, 1.0), pt(0.5 + 1e-4, 1.0), eng) == doctest::Approx(std::pow(1e-4, 0.75)));
    CHECK(envelope(pt(0.5, 1.0), pt(0.5, 1.01), eng) == doctest::Approx(1e-4));
    ScanRegion r;
    const auto a = ratio_scan(r, 200, eng, 7);
    const auto b = ratio_scan(r, 200, eng, 7, 3);
    CHECK(a.ratio_min == b.ratio_min);
    CHECK(a.ratio_max == b.ratio_max);
    CHECK(a.ratio_min > 0.0);
    CHECK(std::isfinite(a.ratio_max));
    CHECK(to_csv_row(a).find(",7,1,64") != std::string::npos);
    r.t0 = r.t1 = 0.7;
    r.lo[0] = r.hi[0] = 2.0;
    CHECK_THROWS_AS(ratio_scan(r, 10, eng, 1), DomainError);
}

TEST_CASE("exponent fits") {
    const auto eng = make(1);
    const double x = 1.0;
    const std::vector<double> hs{1e-6, 1e-5, 1e-4, 1e-3};
    const auto f = time_exponent_fit(std::span(&x, 1), 0.5, hs, eng);
    CHECK(f.slope == doctest::Approx(0.75).epsilon(0.03));
    const std::vector<double> zs{1e-4, 1e-3, 1e-2};
    const auto s = space_exponent_fit(0.5, std::span(&x, 1), zs, eng);
    REQUIRE(s.fit);
    CHECK(s.fit->slope == doctest::Approx(2.0).epsilon(0.02));
    CHECK_THROWS_AS(space_exponent_fit(0.0, std::span(&x, 1), zs, eng), DomainError);
}

TEST_CASE("inclusion-exclusion matches the stable product") {
    CounterRng rng(3);
    for (int m = 1; m <= 5; ++m) {
        std::vector<double> p(m);
        for (auto& v : p) v = rng.uniform();
        CHECK(inclusion_exclusion(p) == doctest::Approx(one_minus_product(p)).epsilon(1e-13));
    }
    const std::vector<double> bad{0.5, 1.5};
    CHECK_THROWS_AS(inclusion_exclusion(bad), DomainError);
}

TEST_CASE("lemma ratio stays bounded") {
    for (int d = 1; d <= 3; ++d) {
        const auto eng = make(d);
        double lo = 1e300, hi = 0;
        for (double h = 1e-6; h <= 1.0; h *= 10) {
            const double r = lemma_a1_ratio(h, eng);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        CHECK(lo > 0);
        CHECK(hi / lo < 50);
    }
}
