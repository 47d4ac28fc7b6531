#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace bhh {

/// Neumaier-compensated accumulator. Mode sums mix terms over many orders of
/// magnitude, so every series in the library goes through this.
class KahanSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    KahanSum& operator+=(double v) noexcept {
        add(v);
        return *this;
    }
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct QuadratureRule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

/// Gauss-Legendre rule with n points (cached per n; thread-safe).
const QuadratureRule& gauss_legendre(int n);

/// Fixed-rule integral of f over [a, b].
double integrate_gl(const std::function<double(double)>& f, double a, double b, int order);

struct AdaptiveOptions {
    int order = 12;        // points per panel
    double rel_tol = 1e-12;
    double abs_tol = 1e-300;
    int max_panels = 2000;
};

/// Globally adaptive Gauss-Legendre. Each segment's error is the difference
/// between its one-panel and two-half-panel estimates; the worst segment is
/// bisected until the total meets the tolerance or max_panels is reached.
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          const AdaptiveOptions& opt = {});

/// Ordinary least squares y = intercept + slope * x.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    std::size_t n = 0;
};

LineFit fit_line(std::span<const double> x, std::span<const double> y);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov
/// distribution (effective-size correction of Stephens).
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Runs body(i) for i in [0, n) on up to `workers` threads. The result must not
/// depend on the schedule; callers write into preallocated per-index slots.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body);

/// Euclidean norm of the componentwise differences, each reduced to [-pi, pi].
double periodic_distance(std::span<const double> x, std::span<const double> y);

/// Signed difference reduced to [-pi, pi].
double wrap_difference(double a, double b);

}  // namespace bhh
