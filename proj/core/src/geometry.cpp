#include "bhh/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bhh/errors.hpp"
#include "bhh/numerics.hpp"
#include "bhh/spectral.hpp"

namespace bhh::geom {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double space_exponent(int d) { return std::min(1.0, (4.0 - d) / 2.0); }

template <class... F>
struct Overloaded : F... {
    using F::operator()...;
};
template <class... F>
Overloaded(F...) -> Overloaded<F...>;

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

std::string join(const Vec& v) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << ']';
    return os.str();
}

}  // namespace

Rational d0(int d) {
    spectral::require_dimension(d);
    switch (d) {
        case 1: return {11, 3};
        case 2: return {6, 1};
        default: return {14, 1};
    }
}

GaugeSpec GaugeSpec::make(int d, double D, double log_c) {
    spectral::require_dimension(d);
    if (!(D > 0.0)) throw ConfigError("gauge: D must be > 0");
    GaugeSpec s;
    s.d = d;
    s.D = D;
    s.log_c = log_c > 0.0 ? log_c : 4.0 * std::numbers::pi * std::sqrt(static_cast<double>(d));
    s.beta = d == 2 ? 1 : 0;
    return s;
}

double q1(const GaugeSpec& s, double tau) {
    if (!(tau > 0.0)) throw DomainError("q1: tau must be > 0");
    return std::pow(tau, (4.0 - s.d) / 8.0);
}

double q2_domain_end(const GaugeSpec& s) {
    return s.beta == 0 ? kInf : s.log_c * std::exp(-0.5 * s.beta);
}

double q2(const GaugeSpec& s, double tau) {
    if (!(tau > 0.0) || tau >= q2_domain_end(s)) {
        throw DomainError("q2: tau outside (0, C e^{-beta/2})");
    }
    const double p = std::pow(tau, space_exponent(s.d));
    if (s.beta == 0) return p;
    return std::pow(std::log(s.log_c / tau), 0.5 * s.beta) * p;
}

double q1_inverse(const GaugeSpec& s, double y) {
    if (!(y > 0.0)) throw DomainError("q1_inverse: argument must be > 0");
    return std::pow(y, 8.0 / (4.0 - s.d));
}

double q2_inverse(const GaugeSpec& s, double y) {
    if (!(y > 0.0)) throw DomainError("q2_inverse: argument must be > 0");
    const double p = space_exponent(s.d);
    if (s.beta == 0) return std::pow(y, 1.0 / p);
    const double end = q2_domain_end(s);
    if (y >= q2(s, end * (1.0 - 1e-15))) throw DomainError("q2_inverse: argument beyond the increasing range");
    // bisection in log tau, then Newton on log q2(tau) = log y
    double lo = std::log(y) - 60.0;
    double hi = std::log(end);
    const double ly = std::log(y);
    const auto lq = [&](double lt) {
        return p * lt + 0.5 * s.beta * std::log(std::log(s.log_c) - lt);
    };
    while (lq(lo) > ly) lo -= 60.0;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (lq(mid) < ly ? lo : hi) = mid;
    }
    double lt = 0.5 * (lo + hi);
    for (int i = 0; i < 20; ++i) {
        const double l = std::log(s.log_c) - lt;
        const double f = lq(lt) - ly;
        const double df = p - 0.5 * s.beta / l;
        const double step = f / df;
        lt -= step;
        if (std::abs(step) < 1e-16 * std::max(1.0, std::abs(lt))) break;
    }
    return std::exp(lt);
}

GaugeValue gauge_eval(const GaugeSpec& s, double tau) {
    if (!(tau > 0.0)) throw DomainError("gauge_eval: tau must be > 0");
    GaugeValue v;
    v.q1 = q1(s, tau);
    if (s.beta == 0) {
        v.q2 = q2(s, tau);
        // closed forms: exponent D - D0
        v.gbar = std::pow(tau, s.D - d0(s.d).value());
        return v;
    }
    const double end = q2_domain_end(s);
    if (tau >= q2(s, end * (1.0 - 1e-15))) throw DomainError("gauge_eval: tau outside the working domain");
    v.q2 = q2(s, tau);
    const double lg = s.D * std::log(tau) - std::log(q1_inverse(s, tau)) - s.d * std::log(q2_inverse(s, tau));
    v.gbar = std::exp(lg);
    return v;
}

double gbar_at_zero(const GaugeSpec& s) {
    const double crit = d0(s.d).value();
    if (std::abs(s.D - crit) < 1e-12) return s.beta == 0 ? 1.0 : kInf;
    return s.D > crit ? 0.0 : kInf;
}

Gauge gbar_gauge(const GaugeSpec& s) {
    std::ostringstream os;
    os << "gbar(d=" << s.d << ",D=" << s.D << ")";
    return {[s](double tau) { return gauge_eval(s, tau).gbar; }, gbar_at_zero(s), os.str()};
}

Gauge power_gauge(double exponent) {
    std::ostringstream os;
    os << "tau^" << exponent;
    return {[exponent](double tau) { return std::pow(tau, exponent); },
            exponent > 0.0 ? 0.0 : (exponent == 0.0 ? 1.0 : kInf), os.str()};
}

Gauge log_power_gauge(double nu, double log_c) {
    std::ostringstream os;
    os << "tau^" << nu << "*log(C/tau)^0.5";
    return {[nu, log_c](double tau) {
                if (!(tau > 0.0) || tau >= log_c) throw DomainError("log_power_gauge: tau outside (0, C)");
                return std::pow(tau, nu) * std::sqrt(std::log(log_c / tau));
            },
            nu > 0.0 ? 0.0 : kInf, os.str()};
}

TargetSet TargetSet::point(Vec z) { return {Point{std::move(z)}}; }
TargetSet TargetSet::ball(Vec center, double radius) { return {Ball{std::move(center), radius}}; }
TargetSet TargetSet::box(Vec corner, Vec sides) { return {Box{std::move(corner), std::move(sides)}}; }
TargetSet TargetSet::finite_union(std::vector<TargetSet> parts) { return {FiniteUnion{std::move(parts)}}; }

int TargetSet::dim() const {
    return std::visit(Overloaded{[](const Point& p) { return static_cast<int>(p.z.size()); },
                                 [](const Ball& b) { return static_cast<int>(b.center.size()); },
                                 [](const Box& b) { return static_cast<int>(b.corner.size()); },
                                 [](const FiniteUnion& u) { return u.parts.empty() ? 0 : u.parts.front().dim(); }},
                      shape);
}

void TargetSet::validate() const {
    const auto finite = [](const Vec& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    std::visit(Overloaded{[&](const Point& p) {
                              if (p.z.empty() || !finite(p.z)) throw DomainError("target: bad point");
                          },
                          [&](const Ball& b) {
                              if (b.center.empty() || !finite(b.center)) throw DomainError("target: bad ball center");
                              if (!(b.radius > 0.0) || !std::isfinite(b.radius)) {
                                  throw DomainError("target: ball radius must be > 0");
                              }
                          },
                          [&](const Box& b) {
                              if (b.corner.empty() || b.corner.size() != b.sides.size() || !finite(b.corner)) {
                                  throw DomainError("target: bad box");
                              }
                              for (double s : b.sides) {
                                  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("target: box sides must be > 0");
                              }
                          },
                          [&](const FiniteUnion& u) {
                              if (u.parts.empty()) throw DomainError("target: empty union");
                              const int D = u.parts.front().dim();
                              for (const auto& p : u.parts) {
                                  p.validate();
                                  if (p.dim() != D) throw DomainError("target: union parts differ in dimension");
                              }
                          }},
               shape);
}

double TargetSet::distance(std::span<const double> y) const {
    return std::visit(
        Overloaded{[&](const Point& p) {
                       double s = 0.0;
                       for (std::size_t j = 0; j < p.z.size(); ++j) s += (y[j] - p.z[j]) * (y[j] - p.z[j]);
                       return std::sqrt(s);
                   },
                   [&](const Ball& b) {
                       double s = 0.0;
                       for (std::size_t j = 0; j < b.center.size(); ++j) {
                           s += (y[j] - b.center[j]) * (y[j] - b.center[j]);
                       }
                       return std::max(0.0, std::sqrt(s) - b.radius);
                   },
                   [&](const Box& b) {
                       double s = 0.0;
                       for (std::size_t j = 0; j < b.corner.size(); ++j) {
                           const double e = std::max({0.0, b.corner[j] - y[j], y[j] - b.corner[j] - b.sides[j]});
                           s += e * e;
                       }
                       return std::sqrt(s);
                   },
                   [&](const FiniteUnion& u) {
                       double best = kInf;
                       for (const auto& p : u.parts) best = std::min(best, p.distance(y));
                       return best;
                   }},
        shape);
}

bool TargetSet::meets_cube(std::span<const double> lo, std::span<const double> hi) const {
    return std::visit(
        Overloaded{[&](const Point& p) {
                       for (std::size_t j = 0; j < p.z.size(); ++j) {
                           if (p.z[j] < lo[j] || p.z[j] > hi[j]) return false;
                       }
                       return true;
                   },
                   [&](const Ball& b) {
                       double s = 0.0;
                       for (std::size_t j = 0; j < b.center.size(); ++j) {
                           const double e = std::max({0.0, lo[j] - b.center[j], b.center[j] - hi[j]});
                           s += e * e;
                       }
                       return s <= b.radius * b.radius;
                   },
                   [&](const Box& b) {
                       for (std::size_t j = 0; j < b.corner.size(); ++j) {
                           if (b.corner[j] > hi[j] || b.corner[j] + b.sides[j] < lo[j]) return false;
                       }
                       return true;
                   },
                   [&](const FiniteUnion& u) {
                       return std::any_of(u.parts.begin(), u.parts.end(),
                                          [&](const TargetSet& p) { return p.meets_cube(lo, hi); });
                   }},
        shape);
}

std::pair<Vec, Vec> TargetSet::bounding_box() const {
    return std::visit(Overloaded{[](const Point& p) { return std::pair{p.z, p.z}; },
                                 [](const Ball& b) {
                                     Vec lo = b.center;
                                     Vec hi = b.center;
                                     for (auto& v : lo) v -= b.radius;
                                     for (auto& v : hi) v += b.radius;
                                     return std::pair{lo, hi};
                                 },
                                 [](const Box& b) {
                                     Vec hi = b.corner;
                                     for (std::size_t j = 0; j < hi.size(); ++j) hi[j] += b.sides[j];
                                     return std::pair{b.corner, hi};
                                 },
                                 [](const FiniteUnion& u) {
                                     auto [lo, hi] = u.parts.front().bounding_box();
                                     for (const auto& p : u.parts) {
                                         const auto [l, h] = p.bounding_box();
                                         for (std::size_t j = 0; j < lo.size(); ++j) {
                                             lo[j] = std::min(lo[j], l[j]);
                                             hi[j] = std::max(hi[j], h[j]);
                                         }
                                     }
                                     return std::pair{lo, hi};
                                 }},
                      shape);
}

std::string TargetSet::describe() const {
    return std::visit(Overloaded{[](const Point& p) { return "point" + join(p.z); },
                                 [](const Ball& b) {
                                     std::ostringstream os;
                                     os << "ball" << join(b.center) << "r" << b.radius;
                                     return os.str();
                                 },
                                 [](const Box& b) { return "box" + join(b.corner) + "x" + join(b.sides); },
                                 [](const FiniteUnion& u) {
                                     std::string s = "union(";
                                     for (std::size_t i = 0; i < u.parts.size(); ++i) {
                                         s += (i ? ";" : "") + u.parts[i].describe();
                                     }
                                     return s + ")";
                                 }},
                      shape);
}

Kernel Kernel::riesz(double a) {
    std::ostringstream os;
    os << "|z|^-" << a;
    if (a == 0.0) return {[](double) { return 1.0; }, 0.0, os.str()};
    return {[a](double r) { return std::pow(r, -a); }, a, os.str()};
}

Vec DiscretizedSet::center(std::size_t i) const {
    if (side == 0.0) return atoms[i];
    Vec c(D);
    for (int j = 0; j < D; ++j) c[j] = origin[j] + (static_cast<double>(keys[i][j]) + 0.5) * side;
    return c;
}

double DiscretizedSet::resolution() const { return side * std::sqrt(static_cast<double>(D)); }

namespace {

bool only_points(const TargetSet& a) {
    if (std::holds_alternative<Point>(a.shape)) return true;
    if (const auto* u = std::get_if<FiniteUnion>(&a.shape)) {
        return std::all_of(u->parts.begin(), u->parts.end(), only_points);
    }
    return false;
}

void collect_points(const TargetSet& a, std::vector<Vec>& out) {
    if (const auto* p = std::get_if<Point>(&a.shape)) {
        if (std::find(out.begin(), out.end(), p->z) == out.end()) out.push_back(p->z);
        return;
    }
    for (const auto& part : std::get<FiniteUnion>(a.shape).parts) collect_points(part, out);
}

// Visits every lattice cube of side h (origin o) meeting the bounding box.
template <class F>
void for_each_cube(const Vec& o, double h, const std::vector<long>& n, F&& f) {
    const int D = static_cast<int>(n.size());
    std::vector<long> key(D, 0);
    Vec lo(D);
    Vec hi(D);
    for (;;) {
        for (int j = 0; j < D; ++j) {
            lo[j] = o[j] + static_cast<double>(key[j]) * h;
            hi[j] = lo[j] + h;
        }
        f(key, lo, hi);
        int j = D - 1;
        while (j >= 0 && ++key[j] == n[j]) key[j--] = 0;
        if (j < 0) break;
    }
}

std::vector<long> cube_counts(const Vec& lo, const Vec& hi, double h, std::size_t max_cells, const char* what) {
    std::vector<long> n(lo.size());
    double total = 1.0;
    for (std::size_t j = 0; j < lo.size(); ++j) {
        n[j] = std::max(1L, static_cast<long>(std::ceil((hi[j] - lo[j]) / h - 1e-9)));
        total *= static_cast<double>(n[j]);
    }
    if (total > static_cast<double>(max_cells)) {
        std::ostringstream os;
        os << what << ": " << total << " lattice cells exceed the budget of " << max_cells;
        throw ResourceError(os.str());
    }
    return n;
}

// Integral over the cube [lo, lo + s]^D (per axis lo[j]) of f by tensor
// Gauss-Legendre of order q.
template <class F>
double tensor_gl(const F& f, const Vec& lo, double s, int q) {
    const int D = static_cast<int>(lo.size());
    const auto& r = gauss_legendre(q);
    std::vector<int> idx(D, 0);
    Vec v(D);
    KahanSum acc;
    for (;;) {
        double w = 1.0;
        for (int j = 0; j < D; ++j) {
            v[j] = lo[j] + 0.5 * s * (1.0 + r.nodes[idx[j]]);
            w *= 0.5 * s * r.weights[idx[j]];
        }
        acc += w * f(v);
        int j = D - 1;
        while (j >= 0 && ++idx[j] == q) idx[j--] = 0;
        if (j < 0) break;
    }
    return acc.value();
}

}  // namespace

DiscretizedSet discretize(const TargetSet& a, double side, std::size_t max_cells) {
    a.validate();
    DiscretizedSet ds;
    ds.D = a.dim();
    if (only_points(a)) {
        ds.side = 0.0;
        collect_points(a, ds.atoms);
        return ds;
    }
    if (!(side > 0.0)) throw DomainError("discretize: cell side must be > 0");
    ds.side = side;
    const auto [lo, hi] = a.bounding_box();
    ds.origin = lo;
    const auto n = cube_counts(lo, hi, side, max_cells, "discretize");
    for_each_cube(lo, side, n, [&](const std::vector<long>& key, const Vec& clo, const Vec& chi) {
        if (a.meets_cube(clo, chi)) ds.keys.push_back(key);
    });
    if (ds.keys.empty()) throw DomainError("discretize: no cell meets the set");
    return ds;
}

double cell_pair_kernel(const Kernel& k, std::span<const long> offset, double side, int D) {
    if (!(side > 0.0)) throw DomainError("cell_pair_kernel: side must be > 0");
    long reach = 0;
    for (long m : offset) reach = std::max(reach, std::abs(m));
    const bool singular = !k.finite_at_zero() && reach <= 1;
    if (singular && k.singular_exponent >= D) return kInf;
    // |z| itself has a conical point at z = 0, so near pairs refine toward it
    // even for bounded kernels
    const bool refine = reach <= 1;

    // difference v of two uniform points in unit cubes has density
    // prod (1 - |v_j|) on [-1, 1]^D; y' - y = side (offset + v)
    const auto f = [&](const Vec& v) {
        double r2 = 0.0;
        double w = 1.0;
        for (int j = 0; j < D; ++j) {
            const double z = static_cast<double>(offset[j]) + v[j];
            r2 += z * z;
            w *= 1.0 - std::abs(v[j]);
        }
        return w * k.phi(side * std::sqrt(r2));
    };
    const int q = reach <= 3 ? 10 : (reach <= 8 ? 6 : 3);
    KahanSum total;
    for (int orth = 0; orth < (1 << D); ++orth) {
        Vec lo(D);
        Vec corner(D);  // the singular point -offset, when it lies on this piece
        bool hits = refine;
        for (int j = 0; j < D; ++j) {
            lo[j] = (orth >> j) & 1 ? 0.0 : -1.0;
            const double c = -static_cast<double>(offset[j]);
            if (c < lo[j] || c > lo[j] + 1.0) hits = false;
            corner[j] = c;
        }
        if (!hits) {
            total += tensor_gl(f, lo, 1.0, q);
            continue;
        }
        // dyadic refinement toward the singular corner; the corner cube's
        // share shrinks geometrically and the tail is extrapolated
        Vec cube_lo = lo;
        double s = 1.0;
        double prev = 0.0;
        double sum = 0.0;
        for (int level = 0; level < 400; ++level) {
            const double h = 0.5 * s;
            double level_sum = 0.0;
            Vec next_lo(D);
            for (int sub = 0; sub < (1 << D); ++sub) {
                Vec slo(D);
                bool has_corner = true;
                for (int j = 0; j < D; ++j) {
                    slo[j] = cube_lo[j] + ((sub >> j) & 1 ? h : 0.0);
                    if (corner[j] < slo[j] || corner[j] > slo[j] + h) has_corner = false;
                }
                if (has_corner) {
                    next_lo = slo;
                } else {
                    level_sum += tensor_gl(f, slo, h, q);
                }
            }
            sum += level_sum;
            cube_lo = next_lo;
            s = h;
            if (level >= 6 && prev > 0.0) {
                const double ratio = level_sum / prev;
                if (ratio > 0.0 && ratio < 1.0 && level_sum < 1e-15 * sum * (1.0 - ratio)) {
                    sum += level_sum * ratio / (1.0 - ratio);
                    break;
                }
            }
            prev = level_sum;
        }
        total += sum;
    }
    return total.value();
}

namespace {

// Dense table of cell_pair_kernel over every offset between cells.
struct OffsetTable {
    std::vector<long> lo;
    std::vector<long> span;
    std::vector<double> values;

    double at(const std::vector<long>& a, const std::vector<long>& b) const {
        std::size_t idx = 0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            idx = idx * static_cast<std::size_t>(span[j]) + static_cast<std::size_t>(b[j] - a[j] - lo[j]);
        }
        return values[idx];
    }
};

OffsetTable offset_table(const DiscretizedSet& ds, const Kernel& k) {
    const int D = ds.D;
    OffsetTable t;
    t.lo.assign(D, 0);
    t.span.assign(D, 1);
    std::vector<long> kmin(D, 0);
    std::vector<long> kmax(D, 0);
    for (int j = 0; j < D; ++j) {
        kmin[j] = kmax[j] = ds.keys.front()[j];
        for (const auto& key : ds.keys) {
            kmin[j] = std::min(kmin[j], key[j]);
            kmax[j] = std::max(kmax[j], key[j]);
        }
        t.lo[j] = kmin[j] - kmax[j];
        t.span[j] = 2 * (kmax[j] - kmin[j]) + 1;
    }
    double total = 1.0;
    for (long s : t.span) total *= static_cast<double>(s);
    if (total > 2e7) throw ResourceError("energy: offset table too large; coarsen the discretization");
    t.values.resize(static_cast<std::size_t>(total));
    const auto n = t.values.size();
    parallel_for(n, 0, [&](std::size_t idx) {
        std::vector<long> off(D);
        std::size_t r = idx;
        for (int j = D - 1; j >= 0; --j) {
            off[j] = t.lo[j] + static_cast<long>(r % static_cast<std::size_t>(t.span[j]));
            r /= static_cast<std::size_t>(t.span[j]);
        }
        t.values[idx] = cell_pair_kernel(k, off, ds.side, D);
    });
    return t;
}

std::vector<double> kernel_matrix(const DiscretizedSet& ds, const Kernel& k) {
    const std::size_t n = ds.size();
    std::vector<double> m(n * n);
    if (ds.side == 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                Vec diff = ds.atoms[i];
                for (std::size_t c = 0; c < diff.size(); ++c) diff[c] -= ds.atoms[j][c];
                const double r = norm(diff);
                m[i * n + j] = r == 0.0 && !k.finite_at_zero() ? kInf : k.phi(r);
            }
        }
        return m;
    }
    const OffsetTable t = offset_table(ds, k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) m[i * n + j] = t.at(ds.keys[i], ds.keys[j]);
    }
    return m;
}

void check_weights(std::span<const double> w, std::size_t n) {
    if (w.size() != n) throw ConfigError("energy: one weight per cell required");
    KahanSum s;
    for (double v : w) {
        if (!(v >= 0.0)) throw DomainError("energy: weights must be nonnegative");
        s += v;
    }
    if (std::abs(s.value() - 1.0) > 1e-9) throw DomainError("energy: weights must sum to 1");
}

}  // namespace

EnergyResult energy(std::span<const double> weights, const DiscretizedSet& ds, const Kernel& k) {
    check_weights(weights, ds.size());
    if (!k.finite_at_zero() && (ds.side == 0.0 || k.singular_exponent >= ds.D)) {
        // atoms, or a kernel not integrable over a cell
        const bool any_mass = std::any_of(weights.begin(), weights.end(), [](double v) { return v > 0.0; });
        if (any_mass) return {kInf, true};
    }
    const std::size_t n = ds.size();
    const auto m = kernel_matrix(ds, k);
    KahanSum e;
    for (std::size_t i = 0; i < n; ++i) {
        if (weights[i] == 0.0) continue;
        KahanSum row;
        for (std::size_t j = 0; j < n; ++j) row += m[i * n + j] * weights[j];
        e += weights[i] * row.value();
    }
    const double v = e.value();
    return {v, !std::isfinite(v)};
}

CapacityReport capacity_estimate(const TargetSet& a, const Kernel& k, double side, int iters, double gap_rel) {
    if (iters < 1) throw ConfigError("capacity_estimate: iters must be >= 1");
    const DiscretizedSet ds = discretize(a, side);
    const std::size_t n = ds.size();
    if (n == 0) throw DomainError("capacity_estimate: empty discretization");
    CapacityReport rep;
    rep.set = a.describe();
    rep.kernel = k.name;
    rep.resolution = ds.resolution();
    if (k.finite_at_zero()) {
        // convention for kernels finite at the origin
        rep.capacity = 1.0;
        rep.weights.assign(n, 1.0 / static_cast<double>(n));
        rep.energy = energy(rep.weights, ds, k).energy;
        return rep;
    }
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    const EnergyResult e0 = energy(w, ds, k);
    if (e0.infinite) {
        rep.energy = kInf;
        rep.capacity = 0.0;
        rep.gap = 0.0;
        rep.weights = w;
        return rep;
    }
    const auto m = kernel_matrix(ds, k);
    std::vector<double> g(n, 0.0);  // K w
    const auto refresh = [&] {
        double e = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            KahanSum row;
            for (std::size_t j = 0; j < n; ++j) row += m[i * n + j] * w[j];
            g[i] = row.value();
        }
        KahanSum s;
        for (std::size_t i = 0; i < n; ++i) s += w[i] * g[i];
        e = s.value();
        return e;
    };
    double en = refresh();
    double gap = 0.0;
    int it = 0;
    for (; it < iters; ++it) {
        std::size_t fw = 0;
        std::size_t away = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (g[i] < g[fw]) fw = i;
            if (w[i] > 0.0 && (away == n || g[i] > g[away])) away = i;
        }
        gap = 2.0 * (en - g[fw]);
        if (gap <= gap_rel * en || fw == away) break;
        const double curv = m[fw * n + fw] + m[away * n + away] - 2.0 * m[fw * n + away];
        const double slope = g[away] - g[fw];  // > 0
        double step = w[away];
        if (curv > 0.0) step = std::min(step, slope / curv);
        if (step <= 0.0) break;
        w[fw] += step;
        w[away] -= step;
        if (w[away] < 1e-300) w[away] = 0.0;
        for (std::size_t i = 0; i < n; ++i) g[i] += step * (m[i * n + fw] - m[i * n + away]);
        en += -2.0 * step * slope + step * step * curv;
        if ((it + 1) % 500 == 0) en = refresh();
        rep.energy_trace.push_back(en);
    }
    en = refresh();
    double gmin = g[0];
    for (double v : g) gmin = std::min(gmin, v);
    rep.iterations = it;
    rep.energy = en;
    rep.gap = 2.0 * (en - gmin);
    rep.capacity = 1.0 / en;
    rep.weights = std::move(w);
    return rep;
}

std::string to_json(const CapacityReport& r) {
    nlohmann::json j{{"set", r.set},           {"kernel", r.kernel}, {"resolution", r.resolution},
                     {"iterations", r.iterations}, {"energy", r.energy}, {"gap", r.gap},
                     {"capacity", r.capacity}, {"seed", r.seed}};
    return j.dump(2);
}

HausdorffReport hausdorff_estimate(const TargetSet& a, const Gauge& g, double eps, std::size_t max_cells) {
    a.validate();
    if (!(eps > 0.0)) throw DomainError("hausdorff_estimate: eps must be > 0");
    HausdorffReport rep;
    rep.radius = eps;
    if (std::isinf(g.at_zero)) {
        rep.estimate = kInf;
        return rep;
    }
    const int D = a.dim();
    const double side = 2.0 * eps / std::sqrt(static_cast<double>(D));
    auto [lo, hi] = a.bounding_box();
    // align the lattice to multiples of side so that nested scales are nested
    Vec origin(D);
    for (int j = 0; j < D; ++j) origin[j] = std::floor(lo[j] / side) * side;
    const auto n = cube_counts(origin, hi, side, max_cells, "hausdorff_estimate");
    std::vector<long> m = n;
    for (int j = 0; j < D; ++j) {
        if (origin[j] + static_cast<double>(m[j]) * side <= hi[j]) ++m[j];
    }
    for_each_cube(origin, side, m, [&](const std::vector<long>&, const Vec& clo, const Vec& chi) {
        if (a.meets_cube(clo, chi)) ++rep.balls;
    });
    rep.estimate = static_cast<double>(rep.balls) * g.g(2.0 * eps);
    return rep;
}

std::string to_json(const HausdorffReport& r, const std::string& set, const std::string& gauge, double eps) {
    nlohmann::json j{{"set", set}, {"gauge", gauge}, {"eps", eps}, {"balls", r.balls}};
    if (std::isinf(r.estimate)) {
        j["estimate"] = "inf";
    } else {
        j["estimate"] = r.estimate;
    }
    return j.dump(2);
}

std::size_t occupied_boxes(const PointCloud& pc, double eps) {
    if (!(eps > 0.0)) throw DomainError("occupied_boxes: eps must be > 0");
    const std::size_t n = pc.size();
    const int D = pc.D;
    if (n == 0) return 0;
    Vec mn(D, kInf);
    Vec mx(D, -kInf);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < D; ++j) {
            mn[j] = std::min(mn[j], pc.xs[i * D + j]);
            mx[j] = std::max(mx[j], pc.xs[i * D + j]);
        }
    }
    int bits = 0;
    std::vector<int> width(D);
    for (int j = 0; j < D; ++j) {
        const double cells = std::floor((mx[j] - mn[j]) / eps) + 1.0;
        width[j] = std::max(1, static_cast<int>(std::ceil(std::log2(cells + 1.0))));
        bits += width[j];
    }
    const auto key_at = [&](std::size_t i, int j) {
        return static_cast<std::uint64_t>(std::floor((pc.xs[i * D + j] - mn[j]) / eps));
    };
    if (bits <= 64) {
        std::vector<std::uint64_t> keys(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t k = 0;
            for (int j = 0; j < D; ++j) k = (width[j] == 64 ? 0 : (k << width[j])) | key_at(i, j);
            keys[i] = k;
        }
        std::sort(keys.begin(), keys.end());
        return static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
    }
    std::vector<std::vector<std::uint64_t>> keys(n, std::vector<std::uint64_t>(D));
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < D; ++j) keys[i][j] = key_at(i, j);
    }
    std::sort(keys.begin(), keys.end());
    return static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

BoxCountResult box_counting_dimension(const PointCloud& pc, std::span<const double> scales) {
    if (pc.D < 1 || pc.xs.size() % static_cast<std::size_t>(pc.D) != 0) throw ConfigError("box counting: malformed cloud");
    if (pc.size() < 1000) throw ConfigError("box counting: need at least 1000 points");
    if (scales.size() < 2) throw ConfigError("box counting: need at least two scales");
    for (std::size_t i = 0; i < scales.size(); ++i) {
        if (!(scales[i] > 0.0)) throw ConfigError("box counting: scales must be > 0");
        if (i > 0 && !(scales[i] < scales[i - 1])) throw ConfigError("box counting: scales must decrease");
    }
    if (std::log10(scales.front() / scales.back()) < 1.5 - 1e-12) {
        throw ConfigError("box counting: scales must span at least 1.5 decades");
    }
    BoxCountResult r;
    const bool degenerate = [&] {
        for (std::size_t i = 1; i < pc.size(); ++i) {
            for (int j = 0; j < pc.D; ++j) {
                if (pc.xs[i * pc.D + j] != pc.xs[j]) return false;
            }
        }
        return true;
    }();
    r.scales.assign(scales.begin(), scales.end());
    if (degenerate) {
        r.counts.assign(scales.size(), 1.0);
        r.dimension = 0.0;
        r.warning = "degenerate cloud: all points coincide";
        return r;
    }
    std::vector<double> lx;
    std::vector<double> ly;
    for (double e : scales) {
        const auto c = static_cast<double>(occupied_boxes(pc, e));
        r.counts.push_back(c);
        lx.push_back(std::log(1.0 / e));
        ly.push_back(std::log(c));
    }
    const LineFit f = fit_line(lx, ly);
    r.dimension = f.slope;
    r.slope_stderr = f.slope_stderr;
    return r;
}

DimensionScan generalized_dimension_scan(const PointCloud& pc, std::span<const double> scales,
                                         std::span<const double> nu_grid, double log_c) {
    DimensionScan out;
    if (nu_grid.empty()) return out;
    if (scales.size() < 2) throw ConfigError("dimension scan: need at least two scales");
    const double diam = std::sqrt(static_cast<double>(pc.D));
    std::vector<double> counts;
    std::vector<double> lx;
    for (double e : scales) {
        counts.push_back(static_cast<double>(occupied_boxes(pc, e)));
        lx.push_back(std::log(1.0 / e));
    }
    for (double nu : nu_grid) {
        const Gauge g = log_power_gauge(nu, log_c);
        DimensionScanRow row;
        row.nu = nu;
        std::vector<double> ly;
        for (std::size_t i = 0; i < scales.size(); ++i) {
            const double s = counts[i] * g.g(scales[i] * diam);
            row.sums.push_back(s);
            ly.push_back(std::log(s));
        }
        row.slope = fit_line(lx, ly).slope;
        out.rows.push_back(std::move(row));
    }
    for (std::size_t i = 1; i < out.rows.size(); ++i) {
        const auto& a = out.rows[i - 1];
        const auto& b = out.rows[i];
        if (a.slope > 0.0 && b.slope <= 0.0) {
            out.transition = a.nu + (b.nu - a.nu) * a.slope / (a.slope - b.slope);
            break;
        }
    }
    return out;
}

}  // namespace bhh::geom
