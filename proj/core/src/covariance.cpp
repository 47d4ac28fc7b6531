#include "bhh/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bhh/errors.hpp"
#include "bhh/numerics.hpp"
#include "bhh/rng.hpp"

namespace bhh {

namespace {

constexpr double kPi = std::numbers::pi;

// 1 - prod_j cos(k_j delta_j), stable for small arguments
double one_minus_cos_product(const spectral::WaveVector& w, std::span<const double> delta) {
    double r = 0.0;
    for (std::size_t j = 0; j < delta.size(); ++j) {
        const double s = std::sin(0.5 * w.k[j] * delta[j]);
        const double a = 2.0 * s * s;
        r += a * (1.0 - r);
    }
    return r;
}

double cos_product(const spectral::WaveVector& w, std::span<const double> delta) {
    double c = 1.0;
    for (std::size_t j = 0; j < delta.size(); ++j) c *= std::cos(w.k[j] * delta[j]);
    return c;
}

// (e^{-lambda a} - e^{-lambda b}) / lambda
double exp_window(double lambda, double a, double b) {
    if (lambda == 0.0) return b - a;
    return std::exp(-lambda * a) * (-std::expm1(-lambda * (b - a))) / lambda;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Ordered {
    SpaceTimePoint late;
    SpaceTimePoint early;
    double h = 0.0;
    std::array<double, spectral::kMaxDim> delta{};
};

Ordered order_points(const SpaceTimePoint& p, const SpaceTimePoint& q, int d) {
    Ordered o;
    if (p.t >= q.t) {
        o.late = p;
        o.early = q;
    } else {
        o.late = q;
        o.early = p;
    }
    o.h = o.late.t - o.early.t;
    for (int j = 0; j < d; ++j) o.delta[j] = wrap_difference(o.late.x[j], o.early.x[j]);
    return o;
}

}  // namespace

int default_k_max(int d) {
    spectral::require_dimension(d);
    switch (d) {
        case 1: return 64;
        case 2: return 40;
        default: return 24;
    }
}

double default_log_constant(int d) {
    spectral::require_dimension(d);
    return 4.0 * kPi * std::sqrt(static_cast<double>(d));
}

SecondOrderEngine::SecondOrderEngine(const EngineConfig& cfg) : cfg_(cfg) {
    spectral::require_dimension(cfg_.d);
    if (!(cfg_.horizon > 0.0)) throw ConfigError("engine: horizon T must be > 0");
    if (cfg_.k_max == 0) cfg_.k_max = default_k_max(cfg_.d);
    if (cfg_.k_max < 1) throw ConfigError("engine: k_max must be >= 1");
    if (cfg_.log_c == 0.0) cfg_.log_c = default_log_constant(cfg_.d);
    // periodic distances never exceed pi sqrt(d)
    if (std::log(cfg_.log_c / (kPi * std::sqrt(static_cast<double>(cfg_.d)))) < 1.0) {
        throw ConfigError("engine: log constant C must satisfy log(C / (pi sqrt d)) >= 1");
    }
    if (cfg_.quad_order < 2) throw ConfigError("engine: quadrature order must be >= 2");
    trunc_ = spectral::make_truncation(cfg_.d, cfg_.k_max);
    waves_ = spectral::enumerate_wavevectors(cfg_.d, cfg_.k_max);
    const double k4 = std::pow(static_cast<double>(cfg_.k_max), 4);
    rho_c_ = 40.0 * cfg_.d / k4;
    neglected_ = std::exp(-40.0) * trunc_.tail_estimate;
    if (cfg_.exact) {
        const GreenWindow w{0.0, rho_c_, 1.0, {}};
        variance_remainder_ = short_time_remainder(std::span<const GreenWindow>(&w, 1));
    }
}

void SecondOrderEngine::check_time(double t, const char* what) const {
    if (!(t >= 0.0) || t > cfg_.horizon * (1.0 + 1e-12)) {
        throw DomainError(std::string(what) + ": time " + fmt(t) + " outside [0, T]");
    }
}

double SecondOrderEngine::mode_window_sum(std::span<const GreenWindow> windows) const {
    const auto d = static_cast<std::size_t>(cfg_.d);
    KahanSum s;
    for (const auto& w : waves_) {
        double term = 0.0;
        for (const auto& win : windows) {
            if (win.b <= win.a) continue;
            const double c = cos_product(w, std::span<const double>(win.delta.data(), d));
            term += win.coef * c * exp_window(w.lambda, win.a, win.b);
        }
        s += w.weight * term;
    }
    return s.value();
}

double SecondOrderEngine::short_time_remainder(std::span<const GreenWindow> windows) const {
    if (!cfg_.exact) return 0.0;
    std::vector<GreenWindow> clipped;
    std::vector<double> breaks{0.0};
    for (const auto& w : windows) {
        GreenWindow c = w;
        c.a = std::min(w.a, rho_c_);
        c.b = std::min(w.b, rho_c_);
        if (c.b > c.a && c.coef != 0.0) {
            clipped.push_back(c);
            breaks.push_back(c.a);
            breaks.push_back(c.b);
        }
    }
    if (clipped.empty()) return 0.0;
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    const auto d = static_cast<std::size_t>(cfg_.d);
    const AdaptiveOptions opt{.order = cfg_.quad_order, .rel_tol = cfg_.quad_rel_tol, .abs_tol = 1e-24};
    double full = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double lo = breaks[i];
        const double hi = breaks[i + 1];
        std::vector<const GreenWindow*> active;
        for (const auto& c : clipped) {
            if (c.a <= lo && c.b >= hi) active.push_back(&c);
        }
        if (active.empty()) continue;
        // rho = u^4 absorbs the rho^{-d/4} singularity at the origin
        const std::array<double, spectral::kMaxDim> zeros{};
        const std::span<const double> zero(zeros.data(), d);
        double coef_sum = 0.0;
        for (const auto* c : active) coef_sum += c->coef;
        // sum coef G(delta) = (sum coef) G(0) - sum coef (G(0) - G(delta));
        // windows usually cancel in the first term
        const auto f = [&](double u) {
            const double u2 = u * u;
            const double rho = u2 * u2;
            double g = coef_sum == 0.0 ? 0.0 : coef_sum * spectral::green_full(rho, zero);
            for (const auto* c : active) {
                const std::span<const double> dl(c->delta.data(), d);
                if (std::all_of(dl.begin(), dl.end(), [](double v) { return v == 0.0; })) continue;
                g -= c->coef * spectral::green_gap(rho, dl);
            }
            return 4.0 * u2 * u * g;
        };
        full += integrate_adaptive(f, std::pow(lo, 0.25), std::pow(hi, 0.25), opt);
    }
    return full - mode_window_sum(clipped);
}

double SecondOrderEngine::variance(double t) const {
    check_time(t, "variance");
    if (t == 0.0) return 0.0;
    KahanSum s;
    for (const auto& w : waves_) {
        if (w.lambda == 0.0) continue;
        s += 0.5 * w.weight * (-std::expm1(-2.0 * w.lambda * t)) / w.lambda;
    }
    s += t / std::pow(2.0 * kPi, cfg_.d);
    if (cfg_.exact) {
        if (2.0 * t >= rho_c_) {
            s += 0.5 * variance_remainder_;
        } else {
            const GreenWindow win{0.0, 2.0 * t, 0.5, {}};
            s += short_time_remainder(std::span<const GreenWindow>(&win, 1));
        }
    }
    return s.value();
}

double SecondOrderEngine::increment_norm_sq(const SpaceTimePoint& p, const SpaceTimePoint& q) const {
    check_time(p.t, "increment_norm_sq");
    check_time(q.t, "increment_norm_sq");
    const auto d = static_cast<std::size_t>(cfg_.d);
    const Ordered o = order_points(p, q, cfg_.d);
    const double s_time = o.early.t;
    const double h = o.h;
    const std::span<const double> delta(o.delta.data(), d);

    KahanSum s;
    for (const auto& w : waves_) {
        if (w.lambda == 0.0) continue;
        const double lam = w.lambda;
        const double one_minus_a = -std::expm1(-2.0 * lam * s_time);
        const double one_minus_b = -std::expm1(-lam * h);
        const double b = 1.0 - one_minus_b;
        const double one_minus_b2 = -std::expm1(-2.0 * lam * h);
        const double one_minus_c = one_minus_cos_product(w, delta);
        const double bracket = one_minus_a * (one_minus_b * one_minus_b + 2.0 * b * one_minus_c) + one_minus_b2;
        s += 0.5 * w.weight * bracket / lam;
    }
    s += h / std::pow(2.0 * kPi, cfg_.d);

    if (cfg_.exact) {
        const double t_time = o.late.t;
        if (2.0 * s_time >= rho_c_ && h >= rho_c_) {
            s += variance_remainder_;
        } else {
            std::array<GreenWindow, 3> wins{};
            wins[0] = {0.0, 2.0 * t_time, 0.5, {}};
            wins[1] = {0.0, 2.0 * s_time, 0.5, {}};
            wins[2] = {h, t_time + s_time, -1.0, o.delta};
            s += short_time_remainder(wins);
        }
    }
    return std::max(0.0, s.value());
}

double SecondOrderEngine::covariance(const SpaceTimePoint& p, const SpaceTimePoint& q) const {
    return 0.5 * (variance(p.t) + variance(q.t) - increment_norm_sq(p, q));
}

double SecondOrderEngine::decorrelation(const SpaceTimePoint& p, const SpaceTimePoint& q) const {
    const double vp = variance(p.t);
    const double vq = variance(q.t);
    if (vp <= 0.0 || vq <= 0.0) throw DomainError("correlation: zero-variance argument (t = 0)");
    const double sp = std::sqrt(vp);
    const double sq = std::sqrt(vq);
    // 1 - rho = (d^2 - (sp - sq)^2) / (2 sp sq)
    const double dv = (vp - vq) / (sp + sq);
    return (increment_norm_sq(p, q) - dv * dv) / (2.0 * sp * sq);
}

double SecondOrderEngine::correlation(const SpaceTimePoint& p, const SpaceTimePoint& q) const {
    return 1.0 - decorrelation(p, q);
}

double wiener_isometry_oracle(const SpaceTimePoint& p, const SpaceTimePoint& q,
                              const SecondOrderEngine& eng, int quad_order) {
    if (quad_order < 2) throw ConfigError("wiener_isometry_oracle: quad_order must be >= 2");
    eng.check_time(p.t, "wiener_isometry_oracle");
    eng.check_time(q.t, "wiener_isometry_oracle");
    const int d = eng.dim();
    const Ordered o = order_points(p, q, d);
    const double s = o.early.t;
    const double h = o.h;
    const std::array<double, spectral::kMaxDim> zero{};
    const std::span<const double> at_zero(zero.data(), d);
    const std::span<const double> delta(o.delta.data(), d);
    const AdaptiveOptions opt{.order = quad_order, .rel_tol = 1e-12, .abs_tol = 1e-24};

    // int_0^s dr int dz (G(t-r; x, z) - G(s-r; y, z))^2, r = s - v^4
    double first = 0.0;
    if (s > 0.0) {
        const auto f = [&](double v) {
            const double v2 = v * v;
            const double v4 = v2 * v2;
            const double gt = spectral::green_full(2.0 * (h + v4), at_zero);
            const double gs = spectral::green_full(2.0 * v4, at_zero);
            const double gx = spectral::green_full(h + 2.0 * v4, delta);
            return 4.0 * v2 * v * (gt + gs - 2.0 * gx);
        };
        first = integrate_adaptive(f, 0.0, std::pow(s, 0.25), opt);
    }
    // int_s^t dr int dz G^2(t-r; x, z), r = t - v^4
    double second = 0.0;
    if (h > 0.0) {
        const auto f = [&](double v) {
            const double v2 = v * v;
            return 4.0 * v2 * v * spectral::green_full(2.0 * v2 * v2, at_zero);
        };
        second = integrate_adaptive(f, 0.0, std::pow(h, 0.25), opt);
    }
    return first + second;
}

double envelope(const SpaceTimePoint& p, const SpaceTimePoint& q, const SecondOrderEngine& eng) {
    const int d = eng.dim();
    if (p == q) throw DomainError("envelope: points must differ");
    const double ht = std::abs(p.t - q.t);
    const double z = periodic_distance(p.space(d), q.space(d));
    const double time_part = std::pow(ht, 1.0 - d / 4.0);
    double space_part = 0.0;
    if (z > 0.0) {
        const double expo = std::min(2.0, 4.0 - d);
        space_part = std::pow(z, expo);
        if (d == 2) space_part *= std::log(eng.log_constant() / z);
    }
    return time_part + space_part;
}

EnvelopeReport ratio_scan(const ScanRegion& region, std::size_t n, const SecondOrderEngine& eng,
                          std::uint64_t seed, int workers) {
    if (n < 2) throw ConfigError("ratio_scan: need at least 2 samples");
    const int d = eng.dim();
    if (!(region.t0 > 0.0) || region.t1 < region.t0) throw DomainError("ratio_scan: need 0 < t0 <= T");
    eng.check_time(region.t1, "ratio_scan");
    bool degenerate = region.t0 == region.t1;
    for (int j = 0; j < d; ++j) {
        if (region.lo[j] > region.hi[j] || region.lo[j] <= 0.0 || region.hi[j] >= 2.0 * kPi) {
            throw DomainError("ratio_scan: J must be a sub-box of (0, 2 pi)^d");
        }
        degenerate = degenerate && region.lo[j] == region.hi[j];
    }
    if (degenerate) throw DomainError("ratio_scan: empty scan (region is a single point)");

    std::vector<double> ratio(n);
    std::vector<std::array<SpaceTimePoint, 2>> pairs(n);
    parallel_for(n, workers, [&](std::size_t i) {
        CounterRng rng(substream(seed, i));
        SpaceTimePoint a;
        SpaceTimePoint b;
        a.t = rng.uniform(region.t0, region.t1);
        b.t = rng.uniform(region.t0, region.t1);
        for (int j = 0; j < d; ++j) {
            a.x[j] = rng.uniform(region.lo[j], region.hi[j]);
            b.x[j] = rng.uniform(region.lo[j], region.hi[j]);
        }
        pairs[i] = {a, b};
        ratio[i] = eng.increment_norm_sq(a, b) / envelope(a, b, eng);
    });

    EnvelopeReport rep;
    rep.seed = seed;
    rep.sample_count = n;
    rep.d = d;
    rep.k_max = eng.truncation().k_max;
    std::size_t imin = 0;
    std::size_t imax = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (ratio[i] < ratio[imin]) imin = i;
        if (ratio[i] > ratio[imax]) imax = i;
    }
    rep.ratio_min = ratio[imin];
    rep.ratio_max = ratio[imax];
    rep.argmin = pairs[imin];
    rep.argmax = pairs[imax];
    return rep;
}

namespace {

std::string pair_times(const std::array<SpaceTimePoint, 2>& pr) {
    return fmt(pr[0].t) + ";" + fmt(pr[1].t);
}

std::string pair_space(const std::array<SpaceTimePoint, 2>& pr, int d) {
    std::string out;
    for (int k = 0; k < 2; ++k) {
        if (k) out += ";";
        for (int j = 0; j < d; ++j) {
            if (j) out += " ";
            out += fmt(pr[k].x[j]);
        }
    }
    return out;
}

}  // namespace

std::string to_csv_header(const EnvelopeReport&) {
    return "ratio_min,ratio_max,t_min,x_min,t_max,x_max,n_samples,seed,d,k_max";
}

std::string to_csv_row(const EnvelopeReport& r) {
    std::ostringstream os;
    os << fmt(r.ratio_min) << ',' << fmt(r.ratio_max) << ",\"" << pair_times(r.argmin) << "\",\""
       << pair_space(r.argmin, r.d) << "\",\"" << pair_times(r.argmax) << "\",\""
       << pair_space(r.argmax, r.d) << "\"," << r.sample_count << ',' << r.seed << ',' << r.d << ','
       << r.k_max;
    return os.str();
}

std::string to_json(const EnvelopeReport& r) {
    auto pt = [&](const std::array<SpaceTimePoint, 2>& pr) {
        nlohmann::json xs = nlohmann::json::array();
        for (const auto& p : pr) xs.push_back(std::vector<double>(p.x.begin(), p.x.begin() + r.d));
        return std::pair{nlohmann::json::array({pr[0].t, pr[1].t}), xs};
    };
    const auto [tmin, xmin] = pt(r.argmin);
    const auto [tmax, xmax] = pt(r.argmax);
    nlohmann::json j{{"ratio_min", r.ratio_min}, {"ratio_max", r.ratio_max}, {"t_min", tmin},
                     {"x_min", xmin},           {"t_max", tmax},           {"x_max", xmax},
                     {"n_samples", r.sample_count}, {"seed", r.seed},     {"d", r.d},
                     {"k_max", r.k_max}};
    return j.dump(2);
}

ExponentFit time_exponent_fit(std::span<const double> x, double t, std::span<const double> h_grid,
                              const SecondOrderEngine& eng) {
    const int d = eng.dim();
    if (h_grid.size() < 2) throw ConfigError("time_exponent_fit: need >= 2 increments");
    ExponentFit out;
    SpaceTimePoint base;
    base.t = t;
    for (int j = 0; j < d; ++j) base.x[j] = x[j];
    std::vector<double> lx;
    std::vector<double> ly;
    double hmin = std::numeric_limits<double>::infinity();
    double hmax = 0.0;
    for (double h : h_grid) {
        if (!(h > 0.0)) throw ConfigError("time_exponent_fit: increments must be > 0");
        SpaceTimePoint moved = base;
        moved.t = t + h;
        eng.check_time(moved.t, "time_exponent_fit");
        const double v = eng.increment_norm_sq(moved, base);
        out.grid.push_back(h);
        out.values.push_back(v);
        lx.push_back(std::log(h));
        ly.push_back(std::log(v));
        hmin = std::min(hmin, h);
        hmax = std::max(hmax, h);
    }
    const LineFit f = fit_line(lx, ly);
    out.slope = f.slope;
    out.slope_stderr = f.slope_stderr;
    out.ill_conditioned = hmax / hmin < 10.0;
    return out;
}

SpaceExponentResult space_exponent_fit(double t, std::span<const double> x,
                                       std::span<const double> z_grid, const SecondOrderEngine& eng) {
    const int d = eng.dim();
    if (t == 0.0) throw DomainError("space_exponent_fit: at t = 0 the spatial lower bound is non-informative");
    eng.check_time(t, "space_exponent_fit");
    if (z_grid.size() < 2) throw ConfigError("space_exponent_fit: need >= 2 offsets");
    const double zmax = kPi / (5.0 * std::sqrt(static_cast<double>(d)));
    SpaceExponentResult out;
    SpaceTimePoint base;
    base.t = t;
    for (int j = 0; j < d; ++j) base.x[j] = x[j];
    const double step = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> lx;
    std::vector<double> ly;
    for (double z : z_grid) {
        if (!(z > 0.0) || z > zmax) {
            throw ConfigError("space_exponent_fit: offsets must lie in (0, pi / (5 sqrt d)]");
        }
        SpaceTimePoint moved = base;
        for (int j = 0; j < d; ++j) moved.x[j] = base.x[j] + z * step;
        const double v = eng.increment_norm_sq(moved, base);
        out.z.push_back(z);
        out.values.push_back(v);
        lx.push_back(std::log(z));
        ly.push_back(std::log(v));
        if (d == 2) out.log_ratio.push_back(v / (z * z * std::log(eng.log_constant() / z)));
    }
    if (d == 2) {
        const auto [mn, mx] = std::minmax_element(out.log_ratio.begin(), out.log_ratio.end());
        out.ratio_spread = *mx / *mn;
    } else {
        const LineFit f = fit_line(lx, ly);
        ExponentFit e;
        e.slope = f.slope;
        e.slope_stderr = f.slope_stderr;
        e.grid = out.z;
        e.values = out.values;
        const auto [mn, mx] = std::minmax_element(out.z.begin(), out.z.end());
        e.ill_conditioned = *mx / *mn < 10.0;
        out.fit = e;
    }
    return out;
}

double lemma_a1_ratio(double h, const SecondOrderEngine& eng) {
    if (!(h > 0.0)) throw DomainError("lemma_a1_ratio: h must be > 0");
    const int d = eng.dim();
    KahanSum s;
    for (const auto& w : eng.waves()) {
        if (w.lambda == 0.0) continue;
        const double e = std::expm1(-w.lambda * h);
        s += 0.5 * w.weight * e * e / w.lambda;
    }
    if (eng.exact()) {
        // (1 - e^{-lh})^2 / l = int_0^h e^{-l r} dr - int_h^{2h} e^{-l r} dr
        const std::array<GreenWindow, 2> wins{GreenWindow{0.0, h, 0.5, {}}, GreenWindow{h, 2.0 * h, -0.5, {}}};
        s += eng.short_time_remainder(wins);
    }
    return s.value() / std::pow(h, 1.0 - d / 4.0);
}

double inclusion_exclusion(std::span<const double> p) {
    if (p.empty()) throw DomainError("inclusion_exclusion: need at least one probability");
    std::vector<double> e(p.size() + 1, 0.0);
    e[0] = 1.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (!(p[j] >= 0.0 && p[j] <= 1.0)) throw DomainError("inclusion_exclusion: p_j outside [0, 1]");
        for (std::size_t k = j + 1; k >= 1; --k) e[k] += e[k - 1] * p[j];
    }
    KahanSum s;
    for (std::size_t k = 1; k <= p.size(); ++k) s += (k % 2 == 1 ? 1.0 : -1.0) * e[k];
    return s.value();
}

double one_minus_product(std::span<const double> a) {
    double r = 0.0;
    for (double v : a) r += v * (1.0 - r);
    return r;
}

}  // namespace bhh
