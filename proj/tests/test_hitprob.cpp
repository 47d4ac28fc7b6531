#include <doctest.h>

#include <cmath>
#include <limits>

#include "bhh/errors.hpp"
#include "bhh/hitprob.hpp"

using namespace bhh;

namespace {

const SecondOrderEngine& engine_d1() {
    static const SecondOrderEngine eng(EngineConfig{.d = 1, .horizon = 1.0});
    return eng;
}

hit::HitExperiment small_experiment(int D) {
    hit::HitExperiment e;
    e.D = D;
    e.target = geom::TargetSet::ball(std::vector<double>(static_cast<std::size_t>(D), 0.0), 0.1);
    e.n_times = 16;
    e.n_side = 16;
    e.replicates = 200;
    e.pilot_replicates = 4;
    e.seed = 11;
    return e;
}

}  // namespace

TEST_CASE("wilson interval matches tabulated values") {
    // 0 of 10: the textbook 95% Wilson interval is [0, 0.2775]
    const auto w0 = hit::wilson(0, 10);
    CHECK(w0.lo == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(w0.hi == doctest::Approx(0.27753).epsilon(1e-4));
    // 50 of 100: symmetric about 1/2
    const auto w = hit::wilson(50, 100);
    CHECK(0.5 - w.lo == doctest::Approx(w.hi - 0.5).epsilon(1e-12));
    CHECK(w.lo == doctest::Approx(0.40383).epsilon(1e-4));
    CHECK_THROWS_AS(hit::wilson(0, 0), ConfigError);
}

TEST_CASE("hit indicator on trivial targets") {
    const auto& eng = engine_d1();
    const auto g = sim::regular_grid(1, 0.5, 1.0, 4, 1.0, 5.0, 4);
    const auto s = sim::simulate(eng, g, 2, 3);
    CHECK(hit::hit_indicator(s, geom::TargetSet::ball({0.0, 0.0}, 1e3), 0.0));
    CHECK_FALSE(hit::hit_indicator(s, geom::TargetSet::finite_union({}), 1.0));
    CHECK_THROWS_AS(hit::hit_indicator(s, geom::TargetSet::point({0.0, 0.0, 0.0}), 0.1), ConfigError);
}

TEST_CASE("hit indicator agrees with direct distances on Cholesky samples") {
    const auto& eng = engine_d1();
    std::vector<SpaceTimePoint> pts;
    sim::SimGrid g;
    for (double t : {0.5, 0.75, 1.0}) g.times.push_back(t);
    for (double x : {1.0, 3.0, 5.0}) g.sites.push_back(sim::Site{x});
    for (double t : g.times) {
        for (const auto& x : g.sites) pts.push_back({t, {x[0]}});
    }
    const int D = 2;
    const auto draws = sim::cholesky_oracle(pts, eng, 40, 5);
    for (std::size_t r = 0; r + 1 < 40; r += 2) {
        sim::FieldSample s;
        s.d = 1;
        s.copies = D;
        s.grid = g;
        for (int c = 0; c < D; ++c) {
            for (std::size_t i = 0; i < pts.size(); ++i) s.values.push_back(draws[(r + c) * pts.size() + i]);
        }
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double a = draws[r * pts.size() + i] - 0.2;
            const double b = draws[(r + 1) * pts.size() + i] + 0.1;
            best = std::min(best, std::hypot(a, b));
        }
        const auto z = geom::TargetSet::point({0.2, -0.1});
        CHECK(hit::min_distance(s, z) == doctest::Approx(best).epsilon(1e-14));
        CHECK(hit::hit_indicator(s, z, 0.3) == (best <= 0.3));
    }
}

TEST_CASE("estimate_hit_prob extremes") {
    const auto& eng = engine_d1();
    auto e = small_experiment(2);
    e.dilation = 0.0;
    e.target = geom::TargetSet::ball({0.0, 0.0}, 1e3);
    const auto all = hit::estimate_hit_prob(eng, e);
    CHECK(all.estimate == 1.0);
    CHECK(all.hits == all.replicates);
    e.target = geom::TargetSet::finite_union({});
    const auto none = hit::estimate_hit_prob(eng, e);
    CHECK(none.estimate == 0.0);
    CHECK(none.ci_hi > 0.0);

    e.replicates = 99;
    CHECK_THROWS_AS(hit::estimate_hit_prob(eng, e), ConfigError);
    e.replicates = 200;
    e.t0 = 0.0;
    CHECK_THROWS_AS(hit::estimate_hit_prob(eng, e), DomainError);
}

TEST_CASE("hit estimates are monotone in dilation and target on shared seeds") {
    const auto& eng = engine_d1();
    auto e = small_experiment(3);
    double prev = -1.0;
    for (double eta : {0.0, 0.05, 0.1, 0.2}) {
        e.dilation = eta;
        const auto r = hit::estimate_hit_prob(eng, e);
        CHECK(r.estimate >= prev);
        prev = r.estimate;
    }
    e.dilation = 0.02;
    e.target = geom::TargetSet::ball({0.0, 0.0, 0.0}, 0.1);
    const auto small = hit::estimate_hit_prob(eng, e);
    e.target = geom::TargetSet::ball({0.0, 0.0, 0.0}, 0.3);
    const auto big = hit::estimate_hit_prob(eng, e);
    CHECK(small.estimate <= big.estimate);
    CHECK(small.estimate > 0.0);
}

TEST_CASE("estimates reproduce across worker counts") {
    const auto& eng = engine_d1();
    auto e = small_experiment(2);
    e.workers = 1;
    const auto a = hit::estimate_hit_prob(eng, e);
    e.workers = 4;
    const auto b = hit::estimate_hit_prob(eng, e);
    CHECK(a.hits == b.hits);
    CHECK(a.dilation == b.dilation);
}

TEST_CASE("dilation calibration") {
    const auto& eng = engine_d1();
    auto e = small_experiment(2);
    const auto typ = hit::calibrate_dilation(eng, e);
    const auto sup = hit::calibrate_dilation(eng, e, hit::DilationRule::sup);
    CHECK(typ.eta1 == doctest::Approx(0.8 * 3.0 / 8.0));
    CHECK(typ.eta2 == doctest::Approx(0.8));
    CHECK(typ.value > 0.0);
    CHECK(sup.value > typ.value);
    CHECK(typ.value == doctest::Approx(typ.L * (std::pow(typ.dt, typ.eta1) + std::pow(typ.dx, typ.eta2))));
    // a finer grid gets a smaller default dilation
    e.n_times = 64;
    e.n_side = 64;
    CHECK(hit::calibrate_dilation(eng, e).value < typ.value);
}

TEST_CASE("polarity scan") {
    const auto& eng = engine_d1();
    auto e = small_experiment(4);
    const auto t = hit::polarity_scan(eng, {0.0, 0.0, 0.0, 0.0}, {0.2, 0.1, 0.05}, e);
    REQUIRE(t.rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& row = t.rows[i];
        CHECK(row.gauge == doctest::Approx(std::pow(2.0 * row.eps, 4.0 - 11.0 / 3.0)).epsilon(1e-10));
        CHECK(row.ratio == doctest::Approx(row.result.estimate / row.gauge));
        if (i > 0) CHECK(row.result.estimate <= t.rows[i - 1].result.estimate);
    }
    // a huge radius is hit by every replicate
    const auto big = hit::polarity_scan(eng, {0.0, 0.0, 0.0, 0.0}, {50.0}, e);
    CHECK(big.rows[0].result.estimate == 1.0);

    CHECK_THROWS_AS(hit::polarity_scan(eng, {0.0, 0.0, 0.0, 0.0}, {0.1, 0.2}, e), ConfigError);
    CHECK_THROWS_AS(hit::polarity_scan(eng, {0.0, 0.0, 0.0, 0.0}, {0.1, 0.1}, e), ConfigError);
    CHECK_THROWS_AS(hit::polarity_scan(eng, {0.0, 0.0}, {0.1}, e), ConfigError);
}

TEST_CASE("image dimension regime and degenerate grid") {
    const auto& eng = engine_d1();
    auto e = small_experiment(2);
    const std::vector<double> scales{0.2, 0.1, 0.05, 0.02, 0.005};
    CHECK_THROWS_AS(hit::image_dimension_experiment(eng, e, scales), DomainError);
    e.D = 4;
    e.n_times = 1;
    e.n_side = 1;
    const auto one = hit::image_dimension_experiment(eng, e, scales);
    CHECK(one.fit.dimension == 0.0);
    CHECK(one.fit.warning.has_value());

    const SecondOrderEngine eng2(EngineConfig{.d = 2, .horizon = 1.0});
    e.D = 7;
    CHECK_THROWS_AS(hit::image_dimension_experiment(eng2, e, scales), DomainError);
}

TEST_CASE("image dimension grows toward the critical value under refinement") {
    const auto& eng = engine_d1();
    auto e = small_experiment(4);
    e.seed = 7;
    std::vector<double> scales;
    for (int i = 0; i < 7; ++i) scales.push_back(0.2 * std::pow(0.0063 / 0.2, i / 6.0));
    e.n_times = 4000;
    e.n_side = 50;
    const auto coarse = hit::image_dimension_experiment(eng, e, scales);
    e.n_times = 8000;
    e.n_side = 100;
    const auto fine = hit::image_dimension_experiment(eng, e, scales);
    CHECK(fine.fit.dimension > coarse.fit.dimension);
    CHECK(fine.fit.dimension < 11.0 / 3.0 + 0.4);
}

TEST_CASE("ledger rows") {
    hit::HitResult r;
    r.estimate = 0.5;
    r.ci_halfwidth = 0.01;
    r.dilation = 0.07;
    r.replicates = 10000;
    r.k_max = 64;
    const auto row = hit::ledger_row("pol-1", 1, 4, "ball(0,0.1)", 0.1, r, 9, 1.25);
    CHECK(row == "\"pol-1\",1,4,\"ball(0,0.1)\",0.10000000000000001,0.5,0.01,0.070000000000000007,10000,9,1.25,64");
    CHECK(hit::ledger_header().rfind("experiment_id,d,D,set,eps,estimate,ci,dilation,replicates,seed,wall_time_s", 0) == 0);
}
