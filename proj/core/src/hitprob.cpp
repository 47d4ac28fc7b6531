#include "bhh/hitprob.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "bhh/errors.hpp"
#include "bhh/numerics.hpp"
#include "bhh/rng.hpp"

namespace bhh::hit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool empty_union(const geom::TargetSet& a) {
    const auto* u = std::get_if<geom::FiniteUnion>(&a.shape);
    return u != nullptr && u->parts.empty();
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

void HitExperiment::validate(const SecondOrderEngine& eng) const {
    const int d = eng.dim();
    if (!(t0 > 0.0)) throw DomainError("hit experiment: I must start at t0 > 0");
    if (!(t1 > t0)) throw ConfigError("hit experiment: need t0 < t1");
    eng.check_time(t1, "hit experiment");
    if (!(j_lo >= 0.0) || !(j_hi > j_lo) || !(j_hi < 2.0 * std::numbers::pi)) {
        throw ConfigError("hit experiment: J must be a sub-box of [0, 2 pi) without wraparound");
    }
    if (D < 1) throw ConfigError("hit experiment: D must be >= 1");
    if (replicates < 100) throw ConfigError("hit experiment: need at least 100 replicates");
    if (n_times < 2 || n_side < 2) throw ConfigError("hit experiment: grid needs >= 2 points per axis");
    if (dilation && !(*dilation >= 0.0)) throw ConfigError("hit experiment: dilation must be >= 0");
    if (!empty_union(target)) {
        target.validate();
        if (target.dim() != D) throw ConfigError("hit experiment: target dimension differs from D");
    }
    (void)d;
}

sim::SimGrid HitExperiment::grid(int d) const {
    return sim::regular_grid(d, t0, t1, n_times, j_lo, j_hi, n_side);
}

WilsonInterval wilson(std::size_t hits, std::size_t n, double z) {
    if (n == 0) throw ConfigError("wilson: no trials");
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(hits) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half), half};
}

double min_distance(const sim::FieldSample& s, const geom::TargetSet& a) {
    if (empty_union(a)) return kInf;
    if (a.dim() != s.copies) {
        throw ConfigError("hit_indicator: target lives in R^" + std::to_string(a.dim()) + " but the sample has " +
                          std::to_string(s.copies) + " copies");
    }
    const std::size_t nt = s.n_times();
    const std::size_t ns = s.n_sites();
    std::vector<double> y(static_cast<std::size_t>(s.copies));
    double best = kInf;
    for (std::size_t ti = 0; ti < nt; ++ti) {
        for (std::size_t si = 0; si < ns; ++si) {
            for (int c = 0; c < s.copies; ++c) y[c] = s.at(c, ti, si);
            best = std::min(best, a.distance(y));
        }
    }
    return best;
}

bool hit_indicator(const sim::FieldSample& s, const geom::TargetSet& a, double dilation) {
    return min_distance(s, a) <= dilation;
}

Dilation calibrate_dilation(const SecondOrderEngine& eng, const HitExperiment& exp, DilationRule rule) {
    const int d = eng.dim();
    Dilation out;
    out.eta1 = 0.8 * (4.0 - d) / 8.0;
    out.eta2 = 0.8 * std::min(1.0, (4.0 - d) / 2.0);
    out.dt = (exp.t1 - exp.t0) / static_cast<double>(exp.n_times - 1);
    out.dx = (exp.j_hi - exp.j_lo) / static_cast<double>(exp.n_side - 1);
    const auto g = exp.grid(d);
    const std::size_t nt = g.times.size();
    const std::size_t ns = g.sites.size();
    const auto side = static_cast<std::size_t>(exp.n_side);
    const double st = std::pow(out.dt, out.eta1);
    const double sx = std::pow(out.dx, out.eta2);
    const std::size_t n = std::max<std::size_t>(1, exp.pilot_replicates);
    std::vector<double> per(n, 0.0);
    parallel_for(n, exp.workers, [&](std::size_t r) {
        const auto s = sim::simulate(eng, g, exp.D, substream(substream(exp.seed, 0x70696c6f74ULL), r),
                                     {.k_max = exp.k_max, .workers = 1});
        const auto dist = [&](std::size_t ta, std::size_t sa, std::size_t tb, std::size_t sb) {
            double acc = 0.0;
            for (int c = 0; c < exp.D; ++c) {
                const double v = s.at(c, ta, sa) - s.at(c, tb, sb);
                acc += v * v;
            }
            return std::sqrt(acc);
        };
        double m = 0.0;
        KahanSum acc;
        std::size_t pairs = 0;
        const auto take = [&](double v) {
            m = std::max(m, v);
            acc += v;
            ++pairs;
        };
        for (std::size_t ti = 0; ti < nt; ++ti) {
            for (std::size_t si = 0; si < ns; ++si) {
                if (ti + 1 < nt) take(dist(ti + 1, si, ti, si) / st);
                // axis neighbours: site index is row-major over d axes
                std::size_t stride = 1;
                for (int j = d - 1; j >= 0; --j) {
                    const std::size_t coord = (si / stride) % side;
                    if (coord + 1 < side) take(dist(ti, si + stride, ti, si) / sx);
                    stride *= side;
                }
            }
        }
        per[r] = rule == DilationRule::sup ? m : acc.value() / static_cast<double>(pairs);
    });
    KahanSum mean;
    for (double v : per) mean += v;
    out.L = 0.5 * mean.value() / static_cast<double>(n);
    out.value = out.L * (st + sx);
    return out;
}

std::vector<double> replicate_distances(const SecondOrderEngine& eng, const HitExperiment& exp,
                                        const geom::TargetSet& a) {
    exp.validate(eng);
    const auto g = exp.grid(eng.dim());
    std::vector<double> dist(exp.replicates);
    parallel_for(exp.replicates, exp.workers, [&](std::size_t r) {
        const auto s = sim::simulate(eng, g, exp.D, substream(exp.seed, r), {.k_max = exp.k_max, .workers = 1});
        dist[r] = min_distance(s, a);
    });
    return dist;
}

namespace {

HitResult tally(const std::vector<double>& dist, double reach, double dilation, int k_max) {
    HitResult r;
    r.replicates = dist.size();
    r.hits = static_cast<std::size_t>(std::count_if(dist.begin(), dist.end(), [&](double v) { return v <= reach; }));
    r.estimate = static_cast<double>(r.hits) / static_cast<double>(r.replicates);
    const auto w = wilson(r.hits, r.replicates);
    r.ci_halfwidth = w.halfwidth;
    r.ci_lo = w.lo;
    r.ci_hi = w.hi;
    r.dilation = dilation;
    r.k_max = k_max;
    return r;
}

int effective_k_max(const SecondOrderEngine& eng, const HitExperiment& exp) {
    return exp.k_max > 0 ? exp.k_max : eng.truncation().k_max;
}

}  // namespace

HitResult estimate_hit_prob(const SecondOrderEngine& eng, const HitExperiment& exp) {
    exp.validate(eng);
    const double eta = exp.dilation ? *exp.dilation : calibrate_dilation(eng, exp).value;
    if (empty_union(exp.target)) {
        return tally(std::vector<double>(exp.replicates, kInf), eta, eta, effective_k_max(eng, exp));
    }
    const auto dist = replicate_distances(eng, exp, exp.target);
    return tally(dist, eta, eta, effective_k_max(eng, exp));
}

PolarityTable polarity_scan(const SecondOrderEngine& eng, const std::vector<double>& z,
                            const std::vector<double>& eps_grid, const HitExperiment& base) {
    if (eps_grid.empty()) throw ConfigError("polarity_scan: empty eps grid");
    for (std::size_t i = 0; i < eps_grid.size(); ++i) {
        if (!(eps_grid[i] > 0.0)) throw ConfigError("polarity_scan: radii must be > 0");
        if (i > 0 && !(eps_grid[i] < eps_grid[i - 1])) throw ConfigError("polarity_scan: radii must decrease");
    }
    if (static_cast<int>(z.size()) != base.D) throw ConfigError("polarity_scan: z must have D coordinates");
    HitExperiment exp = base;
    exp.target = geom::TargetSet::point(z);
    exp.validate(eng);
    const double eta = exp.dilation ? *exp.dilation : calibrate_dilation(eng, exp).value;
    const auto dist = replicate_distances(eng, exp, exp.target);
    const auto gauge = geom::GaugeSpec::make(eng.dim(), exp.D);
    PolarityTable t;
    t.z = z;
    t.d = eng.dim();
    t.D = exp.D;
    t.seed = exp.seed;
    t.dilation = eta;
    for (double eps : eps_grid) {
        PolarityRow row;
        row.eps = eps;
        // B_eps(z) dilated by eta is B_{eps + eta}(z)
        row.result = tally(dist, eps + eta, eta, effective_k_max(eng, exp));
        row.gauge = geom::gauge_eval(gauge, 2.0 * eps).gbar;
        row.ratio = row.result.estimate / row.gauge;
        t.rows.push_back(row);
    }
    return t;
}

geom::PointCloud image_cloud(const SecondOrderEngine& eng, const HitExperiment& exp) {
    const auto g = exp.grid(eng.dim());
    geom::PointCloud pc{exp.D, {}};
    // the sample is dropped on return; the cloud is the large buffer
    const auto s = sim::simulate(eng, g, exp.D, exp.seed, {.k_max = exp.k_max, .workers = exp.workers});
    pc.xs.reserve(g.times.size() * g.sites.size() * static_cast<std::size_t>(exp.D));
    for (std::size_t ti = 0; ti < s.n_times(); ++ti) {
        for (std::size_t si = 0; si < s.n_sites(); ++si) {
            for (int c = 0; c < exp.D; ++c) pc.xs.push_back(s.at(c, ti, si));
        }
    }
    return pc;
}

ImageDimension image_dimension_experiment(const SecondOrderEngine& eng, const HitExperiment& exp,
                                          const std::vector<double>& scales) {
    const int d = eng.dim();
    if (d == 2) throw DomainError("image dimension: the exact-dimension statement covers d = 1, 3 only");
    if (!(exp.D > geom::d0(d).value())) {
        throw DomainError("image dimension: needs D > D0 = " + std::to_string(geom::d0(d).value()));
    }
    ImageDimension out;
    out.points = exp.n_times * static_cast<std::size_t>(std::pow(exp.n_side, d));
    if (out.points == 1) {
        out.fit.dimension = 0.0;
        out.fit.scales.assign(scales.begin(), scales.end());
        out.fit.counts.assign(scales.size(), 1.0);
        out.fit.warning = "degenerate grid: a single point has dimension 0";
        return out;
    }
    out.fit = geom::box_counting_dimension(image_cloud(eng, exp), scales);
    return out;
}

std::string ledger_header() {
    return "experiment_id,d,D,set,eps,estimate,ci,dilation,replicates,seed,wall_time_s,k_max";
}

std::string ledger_row(const std::string& experiment_id, int d, int D, const std::string& set, double eps,
                       const HitResult& r, std::uint64_t seed, double wall_time_s) {
    std::ostringstream os;
    os << csv_quote(experiment_id) << ',' << d << ',' << D << ',' << csv_quote(set) << ',' << fmt(eps) << ','
       << fmt(r.estimate) << ',' << fmt(r.ci_halfwidth) << ',' << fmt(r.dilation) << ',' << r.replicates << ','
       << seed << ',' << fmt(wall_time_s) << ',' << r.k_max;
    return os.str();
}

}  // namespace bhh::hit
