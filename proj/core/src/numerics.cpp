#include "bhh/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <queue>
#include <thread>

#include "bhh/errors.hpp"

namespace bhh {

namespace {

QuadratureRule build_gauss_legendre(int n) {
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) {
                p1 = x;
                p0 = 1.0;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // recompute derivative at the converged node
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

struct Panel {
    double value = 0.0;
    double magnitude = 0.0;  // integral of |f|, sets the roundoff floor
};

Panel panel_abs(const std::function<double(double)>& f, double a, double b, const QuadratureRule& r) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    KahanSum s;
    double m = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        const double v = r.weights[i] * f(mid + half * r.nodes[i]);
        s += v;
        m += std::abs(v);
    }
    return {half * s.value(), half * m};
}

double panel(const std::function<double(double)>& f, double a, double b, const QuadratureRule& r) {
    return panel_abs(f, a, b, r).value;
}

struct Segment {
    double a = 0.0;
    double b = 0.0;
    double value = 0.0;
    double error = 0.0;
    double magnitude = 0.0;
    Panel halves[2];
    bool operator<(const Segment& o) const { return error < o.error; }
};

Segment make_segment(const std::function<double(double)>& f, double a, double b, const Panel& whole,
                     const QuadratureRule& r) {
    const double mid = 0.5 * (a + b);
    const Panel left = panel_abs(f, a, mid, r);
    const Panel right = panel_abs(f, mid, b, r);
    const double v = left.value + right.value;
    return {a, b, v, std::abs(v - whole.value), left.magnitude + right.magnitude, {left, right}};
}

}  // namespace

const QuadratureRule& gauss_legendre(int n) {
    if (n < 1) throw ConfigError("gauss_legendre: order must be >= 1");
    static std::mutex mu;
    static std::map<int, QuadratureRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, build_gauss_legendre(n)).first;
    return it->second;
}

double integrate_gl(const std::function<double(double)>& f, double a, double b, int order) {
    return panel(f, a, b, gauss_legendre(order));
}

double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          const AdaptiveOptions& opt) {
    if (opt.order < 2) throw ConfigError("integrate_adaptive: quadrature order must be >= 2");
    if (a == b) return 0.0;
    if (b < a) return -integrate_adaptive(f, b, a, opt);
    const auto& r = gauss_legendre(opt.order);
    // globally adaptive: split the segment with the largest error estimate
    // until the summed estimate meets the tolerance or the roundoff floor
    std::priority_queue<Segment> heap;
    heap.push(make_segment(f, a, b, panel_abs(f, a, b, r), r));
    double value = heap.top().value;
    double error = heap.top().error;
    double magnitude = heap.top().magnitude;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (int n = 1; n < opt.max_panels; ++n) {
        const double tol = std::max(opt.abs_tol, opt.rel_tol * std::abs(value));
        if (error <= std::max(tol, 64.0 * eps * magnitude)) break;
        const Segment worst = heap.top();
        const double mid = 0.5 * (worst.a + worst.b);
        if (mid <= worst.a || mid >= worst.b) break;
        heap.pop();
        const Segment l = make_segment(f, worst.a, mid, worst.halves[0], r);
        const Segment rr = make_segment(f, mid, worst.b, worst.halves[1], r);
        value += l.value + rr.value - worst.value;
        error += l.error + rr.error - worst.error;
        magnitude += l.magnitude + rr.magnitude - worst.magnitude;
        heap.push(l);
        heap.push(rr);
    }
    // re-add to drop accumulated update roundoff
    KahanSum total;
    while (!heap.empty()) {
        total += heap.top().value;
        heap.pop();
    }
    return total.value();
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("fit_line: need >= 2 paired points");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw ConfigError("fit_line: abscissae are all equal");
    LineFit fit;
    fit.n = x.size();
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (x.size() > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - fit.intercept - fit.slope * x[i];
            rss += r * r;
        }
        fit.slope_stderr = std::sqrt(rss / (n - 2.0) / sxx);
    }
    return fit;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ConfigError("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double dmax = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        dmax = std::max(dmax, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    const double lam = (ne + 0.12 + 0.11 / ne) * dmax;
    // Q_KS(lam) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lam^2)
    double p = 1.0;
    if (lam > 0.2) {
        double sum = 0.0;
        for (int k = 1; k <= 200; ++k) {
            const double term = std::exp(-2.0 * k * k * lam * lam);
            sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
            if (term < 1e-18) break;
        }
        p = std::clamp(sum, 0.0, 1.0);
    }
    return {dmax, p};
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body) {
    const auto hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t w = std::min<std::size_t>(n, workers <= 0 ? hw : static_cast<std::size_t>(workers));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (std::size_t t = 0; t < w; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += w) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

double wrap_difference(double a, double b) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double d = std::fmod(a - b, two_pi);
    if (d > std::numbers::pi) d -= two_pi;
    if (d < -std::numbers::pi) d += two_pi;
    return d;
}

double periodic_distance(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = wrap_difference(x[j], y[j]);
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace bhh
