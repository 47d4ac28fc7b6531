#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "doctest.h"

#include "bhh/errors.hpp"
#include "bhh/numerics.hpp"
#include "bhh/simulate.hpp"

using namespace bhh;
using namespace bhh::sim;

namespace {
constexpr double kPi = std::numbers::pi;

SecondOrderEngine engine(int d, double T = 1.0) {
    EngineConfig c;
    c.d = d;
    c.horizon = T;
    return SecondOrderEngine(c);
}

struct Moments {
    double mean = 0, var = 0, se = 0;
};

// sample variance and its standard error from fourth moments
Moments moments(const std::vector<double>& x) {
    Moments m;
    const double n = static_cast<double>(x.size());
    for (double v : x) m.mean += v;
    m.mean /= n;
    double m2 = 0, m4 = 0;
    for (double v : x) {
        const double c = (v - m.mean) * (v - m.mean);
        m2 += c;
        m4 += c * c;
    }
    m.var = m2 / (n - 1);
    m.se = std::sqrt((m4 / n - (m2 / n) * (m2 / n)) / n);
    return m;
}
}  // namespace

TEST_CASE("ou path: marginal variance and lag covariance") {
    const double lambda = 3.0;
    const std::vector<double> times{0.2, 0.5};
    const int n = 100000;
    std::vector<double> a(n), b(n), ab(n);
    for (int i = 0; i < n; ++i) {
        const auto p = ou_mode_path(lambda, times, CounterRng(substream(11, i)));
        a[i] = p[0];
        b[i] = p[1];
        ab[i] = p[0] * p[1];
    }
    const auto ma = moments(a);
    const auto mb = moments(b);
    const double va = -std::expm1(-2 * lambda * 0.2) / (2 * lambda);
    const double vb = -std::expm1(-2 * lambda * 0.5) / (2 * lambda);
    CHECK(std::abs(ma.var - va) < 4 * ma.se);
    CHECK(std::abs(mb.var - vb) < 4 * mb.se);
    const auto mab = moments(ab);
    CHECK(std::abs(mab.mean - std::exp(-lambda * 0.3) * va) < 4 * std::sqrt(mab.var / n));
}

TEST_CASE("ou path: Brownian branch and strong damping") {
    const std::vector<double> times{0.25, 1.0};
    const int n = 50000;
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = ou_mode_path(0.0, times, CounterRng(substream(5, i)))[1];
        y[i] = ou_mode_path(1e12, times, CounterRng(substream(5, i)))[1];
    }
    const auto m = moments(x);
    CHECK(std::abs(m.var - 1.0) < 4 * m.se);
    CHECK(moments(y).var < 1e-11);
    const std::vector<double> bad{0.0, 1.0};
    CHECK_THROWS_AS(ou_mode_path(1.0, bad, CounterRng(1)), DomainError);
}

TEST_CASE("synthesize: linear in the paths") {
    const auto modes = spectral::enumerate_modes(1, 3);
    const SimGrid g = regular_grid(1, 0.1, 1.0, 4, 0.0, 6.0, 5);
    std::vector<double> paths(modes.size() * 4, 0.0);
    for (double v : synthesize(paths, g, modes)) CHECK(v == 0.0);
    paths[3 * 4 + 2] = 1.7;  // mode 3 at time index 2
    const auto f = synthesize(paths, g, modes);
    for (std::size_t s = 0; s < 5; ++s) {
        const double e = 1.7 * spectral::basis_eval(modes[3], std::span<const double>(g.sites[s].data(), 1));
        CHECK(f[2 * 5 + s] == doctest::Approx(e).epsilon(1e-15));
    }
    const std::vector<spectral::Mode> no_const(modes.begin() + 1, modes.end());
    const std::vector<double> p2((modes.size() - 1) * 4, 0.0);
    CHECK_THROWS_AS(synthesize(p2, g, no_const), ConfigError);
    CHECK_THROWS_AS(synthesize(std::span<const double>(paths).first(5), g, modes), ConfigError);
}

TEST_CASE("simulate: deterministic and independent of the worker count") {
    const auto eng = engine(2);
    const SimGrid g = regular_grid(2, 0.5, 1.0, 3, 1.0, 5.0, 3);
    const auto a = simulate(eng, g, 3, 99, {.k_max = 8, .workers = 1});
    const auto b = simulate(eng, g, 3, 99, {.k_max = 8, .workers = 3});
    CHECK(a.values == b.values);
    CHECK(a.config_digest == b.config_digest);
    const auto c = simulate(eng, g, 3, 100, {.k_max = 8});
    CHECK(a.values != c.values);
    CHECK(a.config_digest != c.config_digest);
    CHECK_THROWS_AS(simulate(eng, g, 0, 1), ConfigError);
    CHECK_THROWS_AS(simulate(eng, g, 1, 1, {.k_max = 3000}), ResourceError);
}

TEST_CASE("simulate: marginal variance and copy independence") {
    const auto eng = engine(1);
    SimGrid g;
    g.times = {0.3, 0.9};
    g.sites = {Site{1.0}, Site{4.0}};
    const int n = 20000;
    std::vector<double> x(n), cross(n);
    for (int r = 0; r < n; ++r) {
        const auto s = simulate(eng, g, 2, substream(2024, r), {.k_max = 32});
        x[r] = s.at(0, 1, 0);
        cross[r] = s.at(0, 1, 0) * s.at(1, 1, 0);
    }
    const auto m = moments(x);
    const double target = eng.variance(0.9) - variance_deficit(1, 32, 0.9);
    CHECK(std::abs(m.var - target) < 4 * m.se);
    const auto mc = moments(cross);
    CHECK(std::abs(mc.mean) < 4 * std::sqrt(mc.var / n));
}

TEST_CASE("variance deficit is small, positive and below the 1/lambda tail") {
    for (int d = 1; d <= 3; ++d) {
        const double v = variance_deficit(d, 10, 0.5);
        CHECK(v > 0);
        CHECK(v <= 0.5 * spectral::inverse_lambda_tail_bound(d, 10));
    }
}

TEST_CASE("cholesky oracle: single point and coincident points") {
    const auto eng = engine(1);
    SpaceTimePoint p;
    p.t = 0.7;
    p.x = {2.0};
    const std::vector<SpaceTimePoint> one{p};
    const auto s = cholesky_oracle(one, eng, 40000, 3);
    const auto m = moments(s);
    CHECK(std::abs(m.var - eng.variance(0.7)) < 4 * m.se);
    const std::vector<SpaceTimePoint> two{p, p};
    const auto t = cholesky_oracle(two, eng, 100, 3);
    for (int r = 0; r < 100; ++r) CHECK(t[2 * r] == doctest::Approx(t[2 * r + 1]).epsilon(1e-4));
}

TEST_CASE("cholesky oracle and simulator agree in law on a 3x3 grid") {
    const auto eng = engine(1);
    const SimGrid g = regular_grid(1, 0.5, 1.0, 3, 1.0, 5.0, 3);
    std::vector<SpaceTimePoint> pts;
    for (double t : g.times)
        for (const auto& x : g.sites) {
            SpaceTimePoint p;
            p.t = t;
            p.x = x;
            pts.push_back(p);
        }
    const std::size_t n = 4000;
    const auto chol = cholesky_oracle(pts, eng, n, 77);
    std::vector<std::vector<double>> sim(pts.size()), orc(pts.size());
    for (std::size_t r = 0; r < n; ++r) {
        const auto s = simulate(eng, g, 1, substream(78, r));
        for (std::size_t j = 0; j < pts.size(); ++j) {
            sim[j].push_back(s.values[j]);
            orc[j].push_back(chol[r * pts.size() + j]);
        }
    }
    for (std::size_t j = 0; j < pts.size(); ++j) {
        // Bonferroni over the nine marginals
        CHECK(ks_two_sample(sim[j], orc[j]).p_value > 0.01 / 9);
    }
}

TEST_CASE("ks test: detects a shift and accepts identical laws") {
    std::vector<double> a, b, c;
    CounterRng r(1);
    for (int i = 0; i < 3000; ++i) {
        a.push_back(r.normal());
        b.push_back(r.normal());
        c.push_back(r.normal() + 0.3);
    }
    CHECK(ks_two_sample(a, b).p_value > 0.01);
    CHECK(ks_two_sample(a, c).p_value < 1e-6);
}

TEST_CASE("drift: constants, eigenfunctions and the quadrature route") {
    const auto eng = engine(2);
    InitialCondition c;
    c.function = [](std::span<const double>) { return 2.5; };
    c.quad_points = 16;
    const double x[2] = {1.0, 3.0};
    CHECK(drift_I0(0.3, x, c, eng) == doctest::Approx(2.5).epsilon(1e-13));

    spectral::Mode m;
    m.dim = 2;
    m.k = {2, 1, 0};
    m.branch = {0, 1, 0};
    InitialCondition e;
    e.coefficients = {{m, 1.0}};
    const double t = 0.05;
    CHECK(std::abs(drift_I0(t, x, e, eng) - std::exp(-17 * t) * spectral::basis_eval(m, x)) < 1e-12);

    InitialCondition smooth;
    smooth.function = [](std::span<const double> z) { return std::exp(std::sin(z[0]) + 0.5 * std::cos(2 * z[1])); };
    smooth.quad_points = 48;
    InitialCondition coef;
    coef.coefficients = fourier_coefficients(smooth.function, 2, 20, 64);
    for (double tt : {0.05, 0.5}) {
        CHECK(std::abs(drift_I0(tt, x, coef, eng) - drift_I0_quadrature(tt, x, smooth, eng)) < 1e-8);
    }
    CHECK(drift_I0(0.0, x, coef, eng) == doctest::Approx(smooth.function(x)).epsilon(1e-10));
}

TEST_CASE("drift: Lipschitz constant settles under refinement") {
    const auto eng = engine(1);
    InitialCondition ic;
    ic.coefficients = fourier_coefficients([](std::span<const double> z) { return std::cos(z[0]) + 0.3 * std::sin(3 * z[0]); }, 1, 6, 32);
    const auto a = drift_lipschitz(ic, eng, 0.5, 1.0, 0.0, 2 * kPi, 41);
    const auto b = drift_lipschitz(ic, eng, 0.5, 1.0, 0.0, 2 * kPi, 81);
    CHECK(std::isfinite(a.constant));
    CHECK(b.constant == doctest::Approx(a.constant).epsilon(0.1));
}

TEST_CASE("solution field: drift plus scaled noise") {
    const auto eng = engine(1);
    const SimGrid g = regular_grid(1, 0.2, 1.0, 3, 0.0, 3.0, 4);
    const auto u = simulate(eng, g, 2, 5, {.k_max = 16});
    CHECK_THROWS_AS(solution_field(u, InitialCondition::zero(), 0.0, eng), DomainError);
    CHECK(solution_field(u, InitialCondition::zero(), 1.0, eng).values == u.values);
    InitialCondition ic;
    ic.function = [](std::span<const double> z) { return std::sin(z[0]); };
    ic.quad_points = 32;
    const auto v1 = solution_field(u, ic, 1.0, eng);
    const auto v2 = solution_field(u, ic, 2.0, eng);
    for (std::size_t i = 0; i < u.values.size(); ++i) {
        const double drift = v1.values[i] - u.values[i];
        CHECK(v2.values[i] - drift == doctest::Approx(2 * u.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("time Holder exponent of sampled paths") {
    const auto eng = engine(1);
    const SimGrid g = regular_grid(1, 0.5, 1.0, 257, 1.0, 5.0, 8);
    const auto s = simulate(eng, g, 20, 8);
    const auto h = time_holder_scan(s, 16);
    CHECK(h.exponent == doctest::Approx(3.0 / 8.0).epsilon(0.08));
    CHECK(h.exponent < 3.0 / 8.0 + 0.03);
}

TEST_CASE("field sample container round trip") {
    const auto eng = engine(2);
    const SimGrid g = regular_grid(2, 0.5, 1.0, 2, 1.0, 2.0, 2);
    const auto s = simulate(eng, g, 2, 123, {.k_max = 4});
    const auto path = (std::filesystem::temp_directory_path() / "bhh_roundtrip.bhhf").string();
    write_field_sample(path, s, R"({"note":"test"})");
    const auto r = read_field_sample(path);
    CHECK(r.values == s.values);
    CHECK(r.grid.times == s.grid.times);
    CHECK(r.seed == 123);
    CHECK(r.k_max == 4);
    CHECK(r.config_digest == s.config_digest);
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
