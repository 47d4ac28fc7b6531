#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bhh/cli.hpp"
#include "bhh/covariance.hpp"
#include "bhh/errors.hpp"
#include "bhh/geometry.hpp"
#include "bhh/hitprob.hpp"
#include "bhh/rng.hpp"
#include "bhh/simulate.hpp"

#ifndef BHH_VERSION
#define BHH_VERSION "unknown"
#endif

namespace bhh::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "engine.d", "engine.T", "engine.k_max", "engine.log_c", "engine.exact", "engine.quad_order",
        "engine.quad_rel_tol",
        "region.t0", "region.t1", "region.lo", "region.hi",
        "sim.seed", "sim.n_times", "sim.n_side", "sim.copies",
        "cov.n_times", "cov.n_side", "cov.h_min", "cov.h_max", "cov.z_min", "cov.z_max", "cov.points", "cov.t",
        "scan.pairs",
        "hit.D", "hit.target", "hit.replicates", "hit.n_times", "hit.n_side", "hit.dilation", "hit.pilot",
        "hit.rule", "hit.experiment_id", "hit.ledger",
        "polarity.z", "polarity.eps",
        "capacity.set", "capacity.kernel", "capacity.side", "capacity.iters", "capacity.gap_rel",
        "hausdorff.set", "hausdorff.gauge", "hausdorff.exponent", "hausdorff.eps",
        "dim.D", "dim.n_times", "dim.n_side", "dim.eps_max", "dim.eps_min", "dim.scales", "dim.nu",
        "appendix.h_min", "appendix.h_max", "appendix.points", "appendix.vectors", "appendix.m_max",
    };
    return keys;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<double> geometric(double a, double b, std::size_t n) {
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(n == 1 ? a : a * std::pow(b / a, static_cast<double>(i) / static_cast<double>(n - 1)));
    }
    return out;
}

/// Reads typed values and records the effective configuration for the manifest.
class Reader {
public:
    explicit Reader(const Config& c) : cfg_(c) {}

    double dbl(const std::string& k, double def) {
        const double v = cfg_.get_double(k, def);
        echo_[k] = v;
        return v;
    }
    long long integer(const std::string& k, long long def) {
        const long long v = cfg_.get_int(k, def);
        echo_[k] = v;
        return v;
    }
    std::size_t count(const std::string& k, long long def, long long min) {
        const long long v = integer(k, def);
        if (v < min) fail(k, "must be >= " + std::to_string(min));
        return static_cast<std::size_t>(v);
    }
    bool flag(const std::string& k, bool def) {
        const bool v = cfg_.get_bool(k, def);
        echo_[k] = v;
        return v;
    }
    std::string str(const std::string& k, const std::string& def) {
        auto v = cfg_.get_string(k, def);
        echo_[k] = v;
        return v;
    }
    std::vector<double> list(const std::string& k, const std::vector<double>& def) {
        auto v = cfg_.get_list(k, def);
        echo_[k] = v;
        return v;
    }
    geom::TargetSet target(const std::string& k, const std::string& def) {
        const auto text = str(k, def);
        try {
            return parse_target(text);
        } catch (const std::exception& e) {
            fail(k, e.what());
        }
    }
    void positive(const std::string& k, double v) const {
        if (!(v > 0.0)) fail(k, "must be > 0");
    }
    [[noreturn]] void fail(const std::string& k, const std::string& msg) const { cfg_.fail(k, msg); }
    void put(const std::string& k, json v) { echo_[k] = std::move(v); }
    [[nodiscard]] const json& echo() const { return echo_; }

private:
    const Config& cfg_;
    json echo_ = json::object();
};

struct Common {
    EngineConfig engine;
    ScanRegion region;
    int k_max = 0;  // effective
};

Common read_common(Reader& r) {
    Common c;
    const long long d = r.integer("engine.d", 1);
    if (d < 1 || d > 3) {
        r.fail("engine.d", "d = " + std::to_string(d) +
                               " is outside the well-posedness range: the random field solution exists only for "
                               "d = 1, 2, 3");
    }
    c.engine.d = static_cast<int>(d);
    c.engine.horizon = r.dbl("engine.T", 1.0);
    r.positive("engine.T", c.engine.horizon);
    c.engine.k_max = static_cast<int>(r.integer("engine.k_max", 0));
    if (c.engine.k_max < 0) r.fail("engine.k_max", "must be >= 0 (0 selects the default)");
    c.engine.log_c = r.dbl("engine.log_c", 0.0);
    if (c.engine.log_c < 0.0) r.fail("engine.log_c", "must be >= 0 (0 selects the default)");
    c.engine.exact = r.flag("engine.exact", true);
    c.engine.quad_order = static_cast<int>(r.integer("engine.quad_order", 12));
    if (c.engine.quad_order < 2) r.fail("engine.quad_order", "must be >= 2");
    c.engine.quad_rel_tol = r.dbl("engine.quad_rel_tol", 1e-12);
    r.positive("engine.quad_rel_tol", c.engine.quad_rel_tol);
    c.k_max = c.engine.k_max > 0 ? c.engine.k_max : default_k_max(c.engine.d);

    c.region.t0 = r.dbl("region.t0", 0.5);
    if (!(c.region.t0 > 0.0)) r.fail("region.t0", "must be > 0 (the statements hold on I = [t0, T] with t0 > 0)");
    c.region.t1 = r.dbl("region.t1", c.engine.horizon);
    if (!(c.region.t1 > c.region.t0)) r.fail("region.t1", "must exceed region.t0");
    if (c.region.t1 > c.engine.horizon) r.fail("region.t1", "must not exceed engine.T");
    const double lo = r.dbl("region.lo", 1.0);
    const double hi = r.dbl("region.hi", 5.0);
    if (!(lo >= 0.0)) r.fail("region.lo", "must be >= 0");
    if (!(hi > lo) || !(hi < 2.0 * std::numbers::pi)) r.fail("region.hi", "need region.lo < region.hi < 2 pi");
    for (int j = 0; j < 3; ++j) {
        c.region.lo[j] = lo;
        c.region.hi[j] = hi;
    }
    return c;
}

struct Run {
    const Invocation& inv;
    Reader& r;
    Common common;
    std::uint64_t seed = 1;
    int workers = 1;
    fs::path out;
    json& outputs;

    void record(const std::string& name) {
        const auto bytes = read_file(out / name);
        outputs.push_back({{"file", name}, {"bytes", bytes.size()}, {"sha256", sim::sha256_hex(bytes)}});
    }
    void write(const std::string& name, const std::string& content) {
        std::ofstream f(out / name, std::ios::binary | std::ios::trunc);
        f << content;
        f.close();
        if (!f) throw ResourceError("cannot write " + (out / name).string());
        record(name);
    }
    void append_ledger(const std::string& name, const std::vector<std::string>& rows) {
        const auto path = out / name;
        const bool fresh = !fs::exists(path);
        std::ofstream f(path, std::ios::binary | std::ios::app);
        if (fresh) f << hit::ledger_header() << '\n';
        for (const auto& row : rows) f << row << '\n';
        f.close();
        if (!f) throw ResourceError("cannot append to " + path.string());
        record(name);
    }
    [[nodiscard]] std::string tail() const { return std::to_string(seed) + "," + std::to_string(common.k_max); }
};

std::string point_columns(int d) {
    std::string s;
    for (int j = 1; j <= d; ++j) s += ",x" + std::to_string(j);
    return s;
}

std::string point_values(const SpaceTimePoint& p, int d) {
    std::string s = fmt(p.t);
    for (int j = 0; j < d; ++j) s += "," + fmt(p.x[j]);
    return s;
}

// --- commands -------------------------------------------------------------

using Plan = std::function<std::string(Run&)>;  // returns the summary line

Plan plan_cov(Run& run) {
    auto& r = run.r;
    const auto nt = run.r.count("cov.n_times", 3, 1);
    const auto ns = run.r.count("cov.n_side", 3, 1);
    const double h_min = r.dbl("cov.h_min", 1e-6);
    const double h_max = r.dbl("cov.h_max", 1e-2);
    const double z_min = r.dbl("cov.z_min", 1e-4);
    const double z_max = r.dbl("cov.z_max", 1e-1);
    const auto np = r.count("cov.points", 13, 2);
    const double t = r.dbl("cov.t", 0.5 * (run.common.region.t0 + run.common.region.t1));
    r.positive("cov.h_min", h_min);
    r.positive("cov.z_min", z_min);
    if (!(h_max > h_min)) r.fail("cov.h_max", "must exceed cov.h_min");
    if (!(z_max > z_min)) r.fail("cov.z_max", "must exceed cov.z_min");
    if (!(t > 0.0) || t + h_max > run.common.engine.horizon) r.fail("cov.t", "need 0 < t and t + h_max <= T");
    return [=](Run& run) {
        const SecondOrderEngine eng(run.common.engine);
        const int d = eng.dim();
        const auto& reg = run.common.region;
        const auto g = sim::regular_grid(d, reg.t0, reg.t1, nt, reg.lo[0], reg.hi[0], ns);
        std::vector<SpaceTimePoint> pts;
        for (double tt : g.times) {
            for (const auto& s : g.sites) {
                SpaceTimePoint p{tt, {}};
                for (int j = 0; j < d; ++j) p.x[j] = s[j];
                pts.push_back(p);
            }
        }
        std::ostringstream csv;
        csv << "i,j,t_i" << point_columns(d) << ",t_j" << point_columns(d) << ",covariance,correlation,seed,k_max\n";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            for (std::size_t j = 0; j < pts.size(); ++j) {
                const double c = eng.covariance(pts[i], pts[j]);
                const double rho = c / std::sqrt(eng.variance(pts[i].t) * eng.variance(pts[j].t));
                csv << i << ',' << j << ',' << point_values(pts[i], d) << ',' << point_values(pts[j], d) << ','
                    << fmt(c) << ',' << fmt(rho) << ',' << run.tail() << '\n';
            }
        }
        run.write("cov.csv", csv.str());

        std::vector<double> x(static_cast<std::size_t>(d), 0.5 * (reg.lo[0] + reg.hi[0]));
        const auto hs = geometric(h_min, h_max, np);
        const auto tf = time_exponent_fit(x, t, hs, eng);
        std::ostringstream tdat;
        tdat << "# h d_u^2\n";
        for (std::size_t i = 0; i < tf.grid.size(); ++i) tdat << fmt(tf.grid[i]) << ' ' << fmt(tf.values[i]) << '\n';
        run.write("time_exponent.dat", tdat.str());

        const auto zs = geometric(z_min, z_max, np);
        const auto sf = space_exponent_fit(t, x, zs, eng);
        std::ostringstream sdat;
        sdat << "# z d_u^2\n";
        for (std::size_t i = 0; i < sf.z.size(); ++i) sdat << fmt(sf.z[i]) << ' ' << fmt(sf.values[i]) << '\n';
        run.write("space_exponent.dat", sdat.str());

        json j{{"d", d},
               {"seed", run.seed},
               {"k_max", run.common.k_max},
               {"points", pts.size()},
               {"time_slope", tf.slope},
               {"time_slope_stderr", tf.slope_stderr},
               {"time_slope_expected", 1.0 - d / 4.0}};
        if (sf.fit) {
            j["space_slope"] = sf.fit->slope;
            j["space_slope_stderr"] = sf.fit->slope_stderr;
        } else {
            j["space_log_ratio_spread"] = sf.ratio_spread;
        }
        run.write("cov.json", j.dump(2) + "\n");
        return "cov: " + std::to_string(pts.size()) + " points, time slope " + fmt(tf.slope);
    };
}

Plan plan_verify_bounds(Run& run) {
    const auto pairs = run.r.count("scan.pairs", 2000, 1);
    return [=](Run& run) {
        const SecondOrderEngine eng(run.common.engine);
        const auto rep = ratio_scan(run.common.region, pairs, eng, run.seed, run.workers);
        run.write("envelope.csv", to_csv_header(rep) + "\n" + to_csv_row(rep) + "\n");
        run.write("envelope.json", to_json(rep) + "\n");
        return "verify-bounds: ratio in [" + fmt(rep.ratio_min) + ", " + fmt(rep.ratio_max) + "]";
    };
}

Plan plan_simulate(Run& run) {
    auto& r = run.r;
    const auto nt = r.count("sim.n_times", 16, 1);
    const auto ns = r.count("sim.n_side", 16, 1);
    const auto copies = r.count("sim.copies", 1, 1);
    return [=](Run& run) {
        const SecondOrderEngine eng(run.common.engine);
        const int d = eng.dim();
        const auto& reg = run.common.region;
        const auto g = sim::regular_grid(d, reg.t0, reg.t1, nt, reg.lo[0], reg.hi[0], ns);
        const auto s = sim::simulate(eng, g, static_cast<int>(copies), run.seed, {.workers = run.workers});
        sim::write_field_sample((run.out / "field.bhhf").string(), s, run.r.echo().dump());
        run.record("field.bhhf");
        run.record("field.bhhf.json");
        std::ostringstream csv;
        csv << "copy,t" << point_columns(d) << ",value,seed,k_max\n";
        for (int c = 0; c < s.copies; ++c) {
            for (std::size_t ti = 0; ti < s.n_times(); ++ti) {
                for (std::size_t si = 0; si < s.n_sites(); ++si) {
                    csv << c << ',' << fmt(g.times[ti]);
                    for (int j = 0; j < d; ++j) csv << ',' << fmt(g.sites[si][j]);
                    csv << ',' << fmt(s.at(c, ti, si)) << ',' << run.tail() << '\n';
                }
            }
        }
        run.write("field.csv", csv.str());
        return "simulate: " + std::to_string(s.values.size()) + " values, digest " + s.config_digest.substr(0, 12);
    };
}

hit::HitExperiment read_hit(Run& run) {
    auto& r = run.r;
    hit::HitExperiment e;
    const auto& reg = run.common.region;
    e.t0 = reg.t0;
    e.t1 = reg.t1;
    e.j_lo = reg.lo[0];
    e.j_hi = reg.hi[0];
    e.D = static_cast<int>(r.count("hit.D", 2, 1));
    e.replicates = r.count("hit.replicates", 1000, 100);
    e.n_times = r.count("hit.n_times", 64, 2);
    e.n_side = r.count("hit.n_side", 64, 2);
    e.pilot_replicates = r.count("hit.pilot", 16, 1);
    if (r.str("hit.dilation", "auto") != "auto") {
        const double v = r.dbl("hit.dilation", 0.0);
        if (!(v >= 0.0)) r.fail("hit.dilation", "must be >= 0 or 'auto'");
        e.dilation = v;
    }
    e.seed = run.seed;
    e.k_max = run.common.k_max;
    e.workers = run.workers;
    return e;
}

hit::DilationRule read_rule(Run& run) {
    const auto rule = run.r.str("hit.rule", "typical");
    if (rule == "typical") return hit::DilationRule::typical;
    if (rule == "sup") return hit::DilationRule::sup;
    run.r.fail("hit.rule", "expected 'typical' or 'sup'");
}

std::string experiment_id(Run& run, const std::string& command) {
    return run.r.str("hit.experiment_id", command + "-d" + std::to_string(run.common.engine.d) + "-s" +
                                              std::to_string(run.seed));
}

Plan plan_hitprob(Run& run) {
    auto e = read_hit(run);
    std::string zero;
    for (int c = 0; c < e.D; ++c) zero += (c ? ",0" : "0");
    e.target = run.r.target("hit.target", "ball(" + zero + ";0.1)");
    if (e.target.dim() != e.D) run.r.fail("hit.target", "lives in R^" + std::to_string(e.target.dim()) +
                                                            " but hit.D = " + std::to_string(e.D));
    const auto rule = read_rule(run);
    const auto id = experiment_id(run, "hitprob");
    const auto ledger = run.r.str("hit.ledger", "ledger.csv");
    return [=](Run& run) mutable {
        const auto start = std::chrono::steady_clock::now();
        const SecondOrderEngine eng(run.common.engine);
        if (!e.dilation) e.dilation = hit::calibrate_dilation(eng, e, rule).value;
        const auto res = hit::estimate_hit_prob(eng, e);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const auto set = e.target.describe();
        std::ostringstream csv;
        csv << "experiment_id,d,D,set,estimate,ci,ci_lo,ci_hi,hits,dilation,replicates,seed,k_max\n";
        csv << '"' << id << "\"," << eng.dim() << ',' << e.D << ",\"" << set << "\"," << fmt(res.estimate) << ','
            << fmt(res.ci_halfwidth) << ',' << fmt(res.ci_lo) << ',' << fmt(res.ci_hi) << ',' << res.hits << ','
            << fmt(res.dilation) << ',' << res.replicates << ',' << run.tail() << '\n';
        run.write("hitprob.csv", csv.str());
        run.append_ledger(ledger, {hit::ledger_row(id, eng.dim(), e.D, set, 0.0, res, run.seed, wall)});
        return "hitprob: estimate " + fmt(res.estimate) + " +- " + fmt(res.ci_halfwidth);
    };
}

Plan plan_polarity(Run& run) {
    auto e = read_hit(run);
    const auto z = run.r.list("polarity.z", std::vector<double>(static_cast<std::size_t>(e.D), 0.0));
    if (static_cast<int>(z.size()) != e.D) run.r.fail("polarity.z", "needs hit.D coordinates");
    const auto eps = run.r.list("polarity.eps", {0.2, 0.1, 0.05});
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0)) run.r.fail("polarity.eps", "radii must be > 0");
        if (i > 0 && !(eps[i] < eps[i - 1])) run.r.fail("polarity.eps", "radii must be strictly decreasing");
    }
    const auto rule = read_rule(run);
    const auto id = experiment_id(run, "polarity");
    const auto ledger = run.r.str("hit.ledger", "ledger.csv");
    return [=](Run& run) mutable {
        const auto start = std::chrono::steady_clock::now();
        const SecondOrderEngine eng(run.common.engine);
        if (!e.dilation) e.dilation = hit::calibrate_dilation(eng, e, rule).value;
        const auto tab = hit::polarity_scan(eng, z, eps, e);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::ostringstream csv;
        csv << "eps,estimate,ci,ci_lo,ci_hi,hits,gauge,ratio,dilation,replicates,seed,k_max\n";
        std::vector<std::string> rows;
        double rmin = INFINITY;
        double rmax = 0.0;
        for (const auto& row : tab.rows) {
            const auto& res = row.result;
            csv << fmt(row.eps) << ',' << fmt(res.estimate) << ',' << fmt(res.ci_halfwidth) << ',' << fmt(res.ci_lo)
                << ',' << fmt(res.ci_hi) << ',' << res.hits << ',' << fmt(row.gauge) << ',' << fmt(row.ratio) << ','
                << fmt(res.dilation) << ',' << res.replicates << ',' << run.tail() << '\n';
            std::ostringstream set;
            set << "ball(z;" << fmt(row.eps) << ")";
            rows.push_back(hit::ledger_row(id, eng.dim(), e.D, set.str(), row.eps, res, run.seed, wall));
            rmin = std::min(rmin, row.ratio);
            rmax = std::max(rmax, row.ratio);
        }
        run.write("polarity.csv", csv.str());
        run.append_ledger(ledger, rows);
        const json j{{"d", eng.dim()},
                     {"D", e.D},
                     {"D0", geom::d0(eng.dim()).value()},
                     {"z", z},
                     {"dilation", tab.dilation},
                     {"ratio_max_over_min", rmin > 0.0 ? json(rmax / rmin) : json(nullptr)},
                     {"seed", run.seed},
                     {"k_max", run.common.k_max}};
        run.write("polarity.json", j.dump(2) + "\n");
        return "polarity: " + std::to_string(tab.rows.size()) + " radii, ratio spread " +
               (rmin > 0.0 ? fmt(rmax / rmin) : std::string("inf"));
    };
}

Plan plan_capacity(Run& run) {
    auto& r = run.r;
    const auto set = r.target("capacity.set", "box(0;1)");
    const double a = r.dbl("capacity.kernel", 0.5);
    if (!(a >= 0.0)) r.fail("capacity.kernel", "Riesz exponent must be >= 0");
    const double side = r.dbl("capacity.side", 0.01);
    r.positive("capacity.side", side);
    const int iters = static_cast<int>(r.count("capacity.iters", 2000, 1));
    const double gap = r.dbl("capacity.gap_rel", 1e-6);
    r.positive("capacity.gap_rel", gap);
    return [=](Run& run) {
        auto rep = geom::capacity_estimate(set, geom::Kernel::riesz(a), side, iters, gap);
        rep.seed = run.seed;
        run.write("capacity.json", geom::to_json(rep) + "\n");
        std::ostringstream csv;
        csv << "iteration,energy,seed,k_max\n";
        for (std::size_t i = 0; i < rep.energy_trace.size(); ++i) {
            csv << i + 1 << ',' << fmt(rep.energy_trace[i]) << ',' << run.tail() << '\n';
        }
        run.write("capacity_trace.csv", csv.str());
        return "capacity: " + fmt(rep.capacity) + " (energy " + fmt(rep.energy) + ", gap " + fmt(rep.gap) + ")";
    };
}

Plan plan_hausdorff(Run& run) {
    auto& r = run.r;
    const auto set = r.target("hausdorff.set", "box(0;1)");
    const auto kind = r.str("hausdorff.gauge", "power");
    const double eps = r.dbl("hausdorff.eps", 0.01);
    r.positive("hausdorff.eps", eps);
    geom::Gauge g;
    if (kind == "gbar") {
        g = geom::gbar_gauge(geom::GaugeSpec::make(run.common.engine.d, set.dim(), run.common.engine.log_c));
    } else if (kind == "power") {
        g = geom::power_gauge(r.dbl("hausdorff.exponent", 1.0));
    } else if (kind == "logpower") {
        g = geom::log_power_gauge(r.dbl("hausdorff.exponent", 1.0),
                                  run.common.engine.log_c > 0.0 ? run.common.engine.log_c
                                                                : default_log_constant(run.common.engine.d));
    } else {
        r.fail("hausdorff.gauge", "expected gbar, power or logpower");
    }
    return [=](Run& run) {
        const auto rep = geom::hausdorff_estimate(set, g, eps);
        run.write("hausdorff.json", geom::to_json(rep, set.describe(), g.name, eps) + "\n");
        std::ostringstream csv;
        csv << "eps,balls,radius,estimate,seed,k_max\n"
            << fmt(eps) << ',' << rep.balls << ',' << fmt(rep.radius) << ',' << fmt(rep.estimate) << ','
            << run.tail() << '\n';
        run.write("hausdorff.csv", csv.str());
        return "hausdorff: " + fmt(rep.estimate) + " from " + std::to_string(rep.balls) + " balls";
    };
}

Plan plan_dim(Run& run) {
    auto& r = run.r;
    hit::HitExperiment e;
    const auto& reg = run.common.region;
    e.t0 = reg.t0;
    e.t1 = reg.t1;
    e.j_lo = reg.lo[0];
    e.j_hi = reg.hi[0];
    e.D = static_cast<int>(r.count("dim.D", 4, 1));
    e.n_times = r.count("dim.n_times", 20000, 1);
    e.n_side = r.count("dim.n_side", 100, 1);
    e.seed = run.seed;
    e.k_max = run.common.k_max;
    e.workers = run.workers;
    const int d = run.common.engine.d;
    if (d == 2) r.fail("engine.d", "the image-dimension statement covers d = 1, 3 only");
    if (!(e.D > geom::d0(d).value())) {
        r.fail("dim.D", "the image-dimension statement needs D > D0 = " + fmt(geom::d0(d).value()));
    }
    const double hi = r.dbl("dim.eps_max", 0.2);
    const double lo = r.dbl("dim.eps_min", 0.0063);
    r.positive("dim.eps_min", lo);
    if (!(hi > lo)) r.fail("dim.eps_max", "must exceed dim.eps_min");
    const auto ns = r.count("dim.scales", 7, 2);
    const auto nu = r.list("dim.nu", {});
    return [=](Run& run) {
        const SecondOrderEngine eng(run.common.engine);
        const auto scales = geometric(hi, lo, ns);
        std::ostringstream csv;
        json j{{"d", eng.dim()}, {"D", e.D}, {"D0", geom::d0(eng.dim()).value()}, {"seed", run.seed},
               {"k_max", run.common.k_max}};
        geom::BoxCountResult fit;
        if (e.n_times * static_cast<std::size_t>(std::pow(e.n_side, eng.dim())) == 1 || nu.empty()) {
            const auto res = hit::image_dimension_experiment(eng, e, scales);
            fit = res.fit;
            j["points"] = res.points;
        } else {
            const auto pc = hit::image_cloud(eng, e);
            fit = geom::box_counting_dimension(pc, scales);
            j["points"] = pc.size();
            const auto scan = geom::generalized_dimension_scan(
                pc, scales, nu, eng.config().log_c > 0.0 ? eng.config().log_c : default_log_constant(eng.dim()));
            std::ostringstream sc;
            sc << "nu,slope,seed,k_max\n";
            for (const auto& row : scan.rows) sc << fmt(row.nu) << ',' << fmt(row.slope) << ',' << run.tail() << '\n';
            run.write("dim_scan.csv", sc.str());
            j["scan_transition"] = scan.transition ? json(*scan.transition) : json(nullptr);
        }
        csv << "scale,count,seed,k_max\n";
        for (std::size_t i = 0; i < fit.scales.size(); ++i) {
            csv << fmt(fit.scales[i]) << ',' << fmt(fit.counts[i]) << ',' << run.tail() << '\n';
        }
        run.write("dim.csv", csv.str());
        j["dimension"] = fit.dimension;
        j["stderr"] = fit.slope_stderr;
        j["warning"] = fit.warning ? json(*fit.warning) : json(nullptr);
        run.write("dim.json", j.dump(2) + "\n");
        return "dim: " + fmt(fit.dimension) + " +- " + fmt(fit.slope_stderr);
    };
}

Plan plan_appendix(Run& run) {
    auto& r = run.r;
    const double h_min = r.dbl("appendix.h_min", 1e-6);
    const double h_max = r.dbl("appendix.h_max", 1.0);
    r.positive("appendix.h_min", h_min);
    if (!(h_max > h_min)) r.fail("appendix.h_max", "must exceed appendix.h_min");
    const auto np = r.count("appendix.points", 25, 2);
    const auto nv = r.count("appendix.vectors", 1000, 1);
    const auto m_max = r.count("appendix.m_max", 5, 1);
    return [=](Run& run) {
        const SecondOrderEngine eng(run.common.engine);
        std::ostringstream csv;
        csv << "h,ratio,seed,k_max\n";
        double rmin = INFINITY;
        double rmax = 0.0;
        for (double h : geometric(h_min, h_max, np)) {
            const double q = lemma_a1_ratio(h, eng);
            rmin = std::min(rmin, q);
            rmax = std::max(rmax, q);
            csv << fmt(h) << ',' << fmt(q) << ',' << run.tail() << '\n';
        }
        run.write("appendix.csv", csv.str());
        double worst = 0.0;
        std::size_t draws = 0;
        for (std::size_t m = 1; m <= m_max; ++m) {
            for (std::size_t v = 0; v < nv; ++v) {
                const CounterRng rng(substream(substream(run.seed, m), v));
                std::vector<double> p(m);
                double prod = 1.0;
                for (std::size_t i = 0; i < m; ++i) {
                    p[i] = rng.uniform_at(i);
                    prod *= 1.0 - p[i];
                }
                worst = std::max(worst, std::abs(inclusion_exclusion(p) - (1.0 - prod)));
                ++draws;
            }
        }
        const json j{{"d", eng.dim()},       {"ratio_min", rmin},    {"ratio_max", rmax},
                     {"ratio_spread", rmax / rmin}, {"inclusion_exclusion_max_abs_error", worst},
                     {"vectors", draws},     {"seed", run.seed},     {"k_max", run.common.k_max}};
        run.write("appendix.json", j.dump(2) + "\n");
        return "appendix-check: ratio in [" + fmt(rmin) + ", " + fmt(rmax) + "], inclusion-exclusion error " +
               fmt(worst);
    };
}

Plan plan_for(const std::string& command, Run& run) {
    if (command == "cov") return plan_cov(run);
    if (command == "verify-bounds") return plan_verify_bounds(run);
    if (command == "simulate") return plan_simulate(run);
    if (command == "hitprob") return plan_hitprob(run);
    if (command == "polarity") return plan_polarity(run);
    if (command == "capacity") return plan_capacity(run);
    if (command == "hausdorff") return plan_hausdorff(run);
    if (command == "dim") return plan_dim(run);
    return plan_appendix(run);
}

}  // namespace

const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"cov",      "verify-bounds", "simulate", "hitprob",       "polarity",
                                            "capacity", "hausdorff",     "dim",      "appendix-check"};
    return c;
}

std::string usage() {
    std::string s = "usage: bhh <command> [--config PATH] [--seed N] [--workers N] [--out DIR] [--dry-run]\ncommands:";
    for (const auto& c : commands()) s += " " + c;
    return s + "\n";
}

int run(const Invocation& inv, std::ostream& out, std::ostream& err) {
    const auto& cmds = commands();
    if (std::find(cmds.begin(), cmds.end(), inv.command) == cmds.end()) {
        err << "unknown command '" << inv.command << "'\n" << usage();
        return kExitUsage;
    }
    const std::string started = utc_now();
    json manifest{{"command", inv.command}, {"version", BHH_VERSION}, {"started_utc", started},
                  {"dry_run", inv.dry_run}};
    const fs::path out_dir = inv.out_dir;
    int status = kExitOk;
    std::string message;
    Config cfg;
    json outputs = json::array();
    std::optional<Reader> reader;
    try {
        cfg = inv.config_path ? Config::load(*inv.config_path) : Config::parse("", "<defaults>");
        for (const auto& k : cfg.keys()) {
            if (!known_keys().count(k)) cfg.fail(k, "unknown key");
        }
        reader.emplace(cfg);
        Run ctx{inv, *reader, {}, 1, 1, out_dir, outputs};
        ctx.common = read_common(*reader);
        const long long cfg_seed = reader->integer("sim.seed", 1);
        if (cfg_seed < 0) reader->fail("sim.seed", "must be >= 0");
        ctx.seed = inv.seed ? *inv.seed : static_cast<std::uint64_t>(cfg_seed);
        reader->put("sim.seed", ctx.seed);
        ctx.workers = inv.workers ? *inv.workers : 1;
        if (ctx.workers < 0) throw ConfigError("--workers must be >= 0 (0: all cores)");
        manifest["seed"] = ctx.seed;
        manifest["workers"] = ctx.workers;
        auto plan = plan_for(inv.command, ctx);
        fs::create_directories(out_dir);
        if (inv.dry_run) {
            message = inv.command + ": configuration valid (dry run)";
        } else {
            message = plan(ctx);
        }
    } catch (const ConfigFileError& e) {
        status = kExitValidation;
        message = e.what();
    } catch (const ConfigError& e) {
        status = kExitValidation;
        message = e.what();
    } catch (const DomainError& e) {
        status = kExitValidation;
        message = e.what();
    } catch (const NumericalError& e) {
        status = kExitNumerical;
        message = e.what();
    } catch (const ResourceError& e) {
        status = kExitNumerical;
        message = e.what();
    } catch (const std::exception& e) {
        status = kExitNumerical;
        message = e.what();
    }
    manifest["config"] = reader ? reader->echo() : json::object();
    manifest["config_source"] = inv.config_path ? json(*inv.config_path) : json(nullptr);
    manifest["outputs"] = outputs;
    manifest["finished_utc"] = utc_now();
    manifest["exit_status"] = status;
    manifest["message"] = message;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream mf(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    mf << manifest.dump(2) << '\n';
    if (!mf) err << "warning: could not write " << (out_dir / "manifest.json").string() << '\n';
    (status == kExitOk ? out : err) << message << '\n';
    return status;
}

}  // namespace bhh::cli
