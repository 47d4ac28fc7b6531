#include "bhh/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bhh/errors.hpp"
#include "bhh/numerics.hpp"

namespace bhh::spectral {

namespace {

constexpr double kPi = std::numbers::pi;

double pi_pow(int d) { return std::pow(kPi, d); }

// Surface measure of the positive orthant of the unit sphere in R^d.
double orthant_sphere(int d) {
    switch (d) {
        case 1: return 1.0;
        case 2: return kPi / 2.0;
        default: return kPi / 2.0;  // 4 pi / 8
    }
}

double radius_sq(const std::array<std::uint32_t, kMaxDim>& k, int d) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += static_cast<double>(k[j]) * k[j];
    return s;
}

template <class F>
void for_each_k(int d, int k_max, F&& f) {
    const double r2 = static_cast<double>(k_max) * k_max;
    std::array<std::uint32_t, kMaxDim> k{};
    const int hi1 = k_max;
    const int hi2 = d >= 2 ? k_max : 0;
    const int hi3 = d >= 3 ? k_max : 0;
    for (int a = 0; a <= hi1; ++a) {
        for (int b = 0; b <= hi2; ++b) {
            if (static_cast<double>(a) * a + static_cast<double>(b) * b > r2) break;
            for (int c = 0; c <= hi3; ++c) {
                k = {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                     static_cast<std::uint32_t>(c)};
                if (radius_sq(k, d) > r2) break;
                f(k);
            }
        }
    }
}

WaveVector make_wavevector(const std::array<std::uint32_t, kMaxDim>& k, int d) {
    WaveVector w;
    w.k = k;
    w.lambda = eigenvalue(std::span<const std::uint32_t>(k.data(), d));
    for (int j = 0; j < d; ++j) w.null_count += (k[j] == 0);
    w.multiplicity = 1 << (d - w.null_count);
    w.weight = 1.0 / (std::ldexp(1.0, w.null_count) * pi_pow(d));
    return w;
}

// sum over K < |k| <= K1 of f(wavevector), k != 0
template <class F>
double shell_sum(int d, int k_lo, int k_hi, F&& f) {
    KahanSum s;
    const double lo2 = static_cast<double>(k_lo) * k_lo;
    for_each_k(d, k_hi, [&](const auto& k) {
        if (radius_sq(k, d) > lo2) s += f(make_wavevector(k, d));
    });
    return s.value();
}

// exp(-k^4 rho) weighted GL nodes for the short-time dual kernel.
struct DualTable {
    std::vector<double> xi;
    std::vector<double> w;  // GL weight * exp(-xi^4) / pi
};

const DualTable& dual_table() {
    static const DualTable table = [] {
        DualTable t;
        const auto& r = gauss_legendre(16);
        constexpr int panels = 96;
        constexpr double upper = 5.3;
        const double h = upper / panels;
        for (int p = 0; p < panels; ++p) {
            const double mid = (p + 0.5) * h;
            for (std::size_t i = 0; i < r.nodes.size(); ++i) {
                const double xi = mid + 0.5 * h * r.nodes[i];
                t.xi.push_back(xi);
                t.w.push_back(0.5 * h * r.weights[i] * std::exp(-std::pow(xi, 4)) / kPi);
            }
        }
        return t;
    }();
    return table;
}

// (1/pi) int_0^inf exp(-xi^4) cos(xi y) dxi
double dual_profile(double y) {
    y = std::abs(y);
    if (y == 0.0) return std::tgamma(1.25) / kPi;
    if (y > 80.0) return 0.0;
    const auto& t = dual_table();
    KahanSum s;
    for (std::size_t i = 0; i < t.xi.size(); ++i) s += t.w[i] * std::cos(t.xi[i] * y);
    return s.value();
}

// (1/pi) int_0^inf exp(-xi^4) (1 - cos(xi y)) dxi
double dual_gap(double y) {
    y = std::abs(y);
    if (y == 0.0) return 0.0;
    if (y > 80.0) return std::tgamma(1.25) / kPi;
    const auto& t = dual_table();
    KahanSum s;
    for (std::size_t i = 0; i < t.xi.size(); ++i) {
        const double h = std::sin(0.5 * t.xi[i] * y);
        s += t.w[i] * 2.0 * h * h;
    }
    return s.value();
}

constexpr int kDirectTerms = 4000;

}  // namespace

void require_dimension(int d) {
    if (d < 1 || d > kMaxDim) throw UnsupportedDimension(d);
}

bool Mode::valid() const noexcept {
    if (dim < 1 || dim > kMaxDim) return false;
    for (int j = 0; j < dim; ++j) {
        if (branch[j] > 1) return false;
        if (branch[j] == 0 && k[j] == 0) return false;
    }
    return true;
}

int Mode::null_count() const noexcept {
    int n = 0;
    for (int j = 0; j < dim; ++j) n += (k[j] == 0);
    return n;
}

double eigenvalue(std::span<const std::uint32_t> k) {
    double s = 0.0;
    for (auto kj : k) {
        const double v = static_cast<double>(kj) * kj;
        s += v * v;
    }
    return s;
}

double eigenvalue(const Mode& m) {
    return eigenvalue(std::span<const std::uint32_t>(m.k.data(), m.dim));
}

std::vector<Mode> enumerate_modes(int d, int k_max) {
    require_dimension(d);
    if (k_max < 0) throw ConfigError("enumerate_modes: k_max must be >= 0");
    std::vector<std::array<std::uint32_t, kMaxDim>> ks;
    for_each_k(d, k_max, [&](const auto& k) { ks.push_back(k); });
    std::sort(ks.begin(), ks.end());
    std::vector<Mode> out;
    for (const auto& k : ks) {
        for (int mask = 0; mask < (1 << d); ++mask) {
            Mode m;
            m.dim = d;
            m.k = k;
            // bit j (from the most significant) is branch of coordinate j,
            // so masks enumerate i lexicographically
            for (int j = 0; j < d; ++j) m.branch[j] = static_cast<std::uint8_t>((mask >> (d - 1 - j)) & 1);
            if (m.valid()) out.push_back(m);
        }
    }
    return out;
}

double basis_eval(const Mode& m, std::span<const double> x) {
    double v = 1.0;
    const double inv_sqrt_pi = 1.0 / std::sqrt(kPi);
    for (int j = 0; j < m.dim; ++j) {
        if (m.k[j] == 0) {
            v *= 1.0 / std::sqrt(2.0 * kPi);
        } else if (m.branch[j] == 0) {
            v *= inv_sqrt_pi * std::sin(m.k[j] * x[j]);
        } else {
            v *= inv_sqrt_pi * std::cos(m.k[j] * x[j]);
        }
    }
    return v;
}

std::size_t count_wavevectors(int d, int k_max) {
    require_dimension(d);
    std::size_t n = 0;
    for_each_k(d, k_max, [&](const auto&) { ++n; });
    return n;
}

std::vector<WaveVector> enumerate_wavevectors(int d, int k_max, std::size_t max_records) {
    require_dimension(d);
    if (k_max < 0) throw ConfigError("enumerate_wavevectors: k_max must be >= 0");
    const std::size_t n = count_wavevectors(d, k_max);
    if (n > max_records) {
        throw ResourceError("enumerate_wavevectors: k_max=" + std::to_string(k_max) + " in d=" +
                            std::to_string(d) + " needs " + std::to_string(n) +
                            " records, budget is " + std::to_string(max_records));
    }
    std::vector<WaveVector> out;
    out.reserve(n);
    for_each_k(d, k_max, [&](const auto& k) { out.push_back(make_wavevector(k, d)); });
    std::sort(out.begin(), out.end(), [](const WaveVector& a, const WaveVector& b) {
        if (a.lambda != b.lambda) return a.lambda > b.lambda;
        return a.k < b.k;
    });
    return out;
}

double inverse_lambda_tail_bound(int d, int k_max) {
    require_dimension(d);
    const double sd = std::sqrt(static_cast<double>(d));
    const int k0 = std::max(k_max, static_cast<int>(std::ceil(2.0 * sd)));
    const double explicit_part =
        k0 > k_max ? shell_sum(d, k_max, k0, [](const WaveVector& w) { return w.weight / w.lambda; })
                   : 0.0;
    // |k| >= |z| - sqrt(d) on the unit cell [k, k+1)^d, lambda >= |k|^4 / d,
    // weight <= pi^{-d}
    const double gamma = k0 / (k0 - sd);
    const double bound = d * orthant_sphere(d) * std::pow(gamma, 4) *
                         std::pow(static_cast<double>(k0), d - 4) / (4.0 - d) / pi_pow(d);
    return explicit_part + bound;
}

Truncation make_truncation(int d, int k_max) {
    if (k_max < 0) throw ConfigError("truncation: k_max must be >= 0");
    return {k_max, inverse_lambda_tail_bound(d, k_max)};
}

Truncation choose_truncation(int d, double tol, int k_cap) {
    require_dimension(d);
    if (!(tol > 0.0)) throw ConfigError("choose_truncation: tolerance must be > 0");
    int lo = 1;
    int hi = std::max(1, k_cap);
    if (inverse_lambda_tail_bound(d, hi) > tol) return make_truncation(d, hi);
    while (lo < hi) {
        const int mid = lo + (hi - lo) / 2;
        if (inverse_lambda_tail_bound(d, mid) <= tol) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return make_truncation(d, lo);
}

GreenValue green(int d, double t, std::span<const double> x, std::span<const double> y,
                 const Truncation& tr) {
    require_dimension(d);
    if (!(t > 0.0)) throw DomainError("green: t must be > 0 (the series diverges at t = 0)");
    const auto waves = enumerate_wavevectors(d, tr.k_max);
    std::array<double, kMaxDim> delta{};
    for (int j = 0; j < d; ++j) delta[j] = x[j] - y[j];
    KahanSum s;
    for (const auto& w : waves) {
        double c = 1.0;
        for (int j = 0; j < d; ++j) c *= std::cos(w.k[j] * delta[j]);
        s += w.weight * std::exp(-w.lambda * t) * c;
    }
    GreenValue out;
    out.value = s.value();

    const double sd = std::sqrt(static_cast<double>(d));
    const int k0 = std::max(tr.k_max, static_cast<int>(std::ceil(2.0 * sd)));
    double tail = k0 > tr.k_max ? shell_sum(d, tr.k_max, k0,
                                            [t](const WaveVector& w) {
                                                return w.weight * std::exp(-w.lambda * t);
                                            })
                                : 0.0;
    const double upper = sd + std::pow(800.0 * d / t, 0.25);
    if (upper > k0) {
        const auto f = [&](double rho) {
            return std::pow(rho, d - 1) * std::exp(-std::pow(rho - sd, 4) * t / d);
        };
        tail += orthant_sphere(d) / pi_pow(d) * integrate_adaptive(f, k0, upper, {.order = 16, .rel_tol = 1e-10});
    }
    out.tail_bound = tail;
    return out;
}

double heat_kernel_1d(double rho, double z) {
    if (!(rho > 0.0)) throw DomainError("heat_kernel_1d: rho must be > 0");
    const double zr = wrap_difference(z, 0.0);
    const double terms = std::ceil(std::pow(46.0 / rho, 0.25));
    if (terms > kDirectTerms) {
        // Poisson dual; periodic images sit at distance >= pi, i.e. thousands
        // of kernel widths away at these times
        const double scale = std::pow(rho, -0.25);
        return scale * dual_profile(zr * scale);
    }
    const int n = static_cast<int>(terms);
    KahanSum s;
    const double c1 = std::cos(zr);
    const double s1 = std::sin(zr);
    double ck = 1.0;
    double sk = 0.0;
    for (int k = 1; k <= n; ++k) {
        if ((k & 63) == 0) {
            ck = std::cos(k * zr);
            sk = std::sin(k * zr);
        } else {
            const double c = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = c;
        }
        const double k2 = static_cast<double>(k) * k;
        s += std::exp(-k2 * k2 * rho) * ck;
    }
    return 1.0 / (2.0 * kPi) + s.value() / kPi;
}

double heat_kernel_gap_1d(double rho, double z) {
    if (!(rho > 0.0)) throw DomainError("heat_kernel_gap_1d: rho must be > 0");
    const double zr = wrap_difference(z, 0.0);
    if (zr == 0.0) return 0.0;
    const double terms = std::ceil(std::pow(46.0 / rho, 0.25));
    if (terms > kDirectTerms) {
        const double scale = std::pow(rho, -0.25);
        return scale * dual_gap(zr * scale);
    }
    const int n = static_cast<int>(terms);
    KahanSum s;
    for (int k = 1; k <= n; ++k) {
        const double k2 = static_cast<double>(k) * k;
        const double h = std::sin(0.5 * k * zr);
        s += std::exp(-k2 * k2 * rho) * h * h;
    }
    return 2.0 * s.value() / kPi;
}

double green_gap(double rho, std::span<const double> delta) {
    // prod g(0) - prod g(delta_j), telescoped one coordinate at a time
    const double g0 = heat_kernel_1d(rho, 0.0);
    double out = 0.0;
    double prefix = 1.0;  // prod_{i<j} g(delta_i)
    for (std::size_t j = 0; j < delta.size(); ++j) {
        const double gap = heat_kernel_gap_1d(rho, delta[j]);
        out += prefix * gap * std::pow(g0, static_cast<double>(delta.size() - j - 1));
        prefix *= g0 - gap;
    }
    return out;
}

double green_full(double rho, std::span<const double> delta) {
    double v = 1.0;
    for (double dj : delta) v *= heat_kernel_1d(rho, dj);
    return v;
}

}  // namespace bhh::spectral
