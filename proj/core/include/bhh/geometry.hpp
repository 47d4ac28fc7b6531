#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace bhh::geom {

using Vec = std::vector<double>;

/// Critical number of copies D0 = 8/(4-d) + d / min(1, (4-d)/2) as a fraction.
struct Rational {
    int num = 0;
    int den = 1;
    [[nodiscard]] double value() const { return static_cast<double>(num) / den; }
    friend bool operator==(const Rational&, const Rational&) = default;
};

Rational d0(int d);

struct GaugeSpec {
    int d = 1;
    double D = 4.0;
    double log_c = 0.0;  // C inside log(C/tau); 0 selects 4 pi sqrt(d)
    int beta = 0;        // 1 iff d = 2

    static GaugeSpec make(int d, double D, double log_c = 0.0);
};

struct GaugeValue {
    double q1 = 0.0;
    double q2 = 0.0;
    double gbar = 0.0;
};

/// q1(tau) = tau^{(4-d)/8}.
double q1(const GaugeSpec& s, double tau);
/// q2(tau) = log(C/tau)^{beta/2} tau^{min(1, (4-d)/2)}.
double q2(const GaugeSpec& s, double tau);
/// Upper end of the domain on which q2 is increasing: C e^{-beta/2}
/// (infinite when beta = 0).
double q2_domain_end(const GaugeSpec& s);
/// Inverse of q1.
double q1_inverse(const GaugeSpec& s, double y);
/// Inverse of q2 on (0, q2(domain end)); bisection then Newton when beta = 1.
double q2_inverse(const GaugeSpec& s, double y);
/// q1, q2 and gbar(tau) = tau^D / (q1^{-1}(tau) q2^{-1}(tau)^d). Throws
/// DomainError outside the working domain.
GaugeValue gauge_eval(const GaugeSpec& s, double tau);
/// The limit of gbar at 0: 0 above D0, +inf below, and at D = D0 the value
/// 1 (d = 1, 3) or +inf (d = 2, where a log factor remains).
double gbar_at_zero(const GaugeSpec& s);

/// A gauge function for covering sums: g(tau) for tau > 0 and its limit at 0.
struct Gauge {
    std::function<double(double)> g;
    double at_zero = 0.0;
    std::string name;
};

Gauge gbar_gauge(const GaugeSpec& s);
Gauge power_gauge(double exponent);
/// f_nu(tau) = tau^nu log(C/tau)^{1/2}.
Gauge log_power_gauge(double nu, double log_c);

struct Point { Vec z; };
struct Ball { Vec center; double radius = 0.0; };
struct Box { Vec corner; Vec sides; };
struct TargetSet;
struct FiniteUnion { std::vector<TargetSet> parts; };

/// Bounded Borel set in R^D from a small family of shapes.
struct TargetSet {
    std::variant<Point, Ball, Box, FiniteUnion> shape;

    static TargetSet point(Vec z);
    static TargetSet ball(Vec center, double radius);
    static TargetSet box(Vec corner, Vec sides);
    static TargetSet finite_union(std::vector<TargetSet> parts);

    [[nodiscard]] int dim() const;
    /// Throws DomainError on invariant violations (radius/sides <= 0,
    /// mixed dimensions, non-finite coordinates, empty union).
    void validate() const;
    /// Euclidean distance from y to the set (0 inside).
    [[nodiscard]] double distance(std::span<const double> y) const;
    /// Whether the closed axis-aligned cube [lo, hi] meets the set.
    [[nodiscard]] bool meets_cube(std::span<const double> lo, std::span<const double> hi) const;
    [[nodiscard]] std::pair<Vec, Vec> bounding_box() const;
    [[nodiscard]] std::string describe() const;
};

/// Kernel 𝔤(z) = phi(|z|) with phi(r) ~ r^{-singular_exponent} at 0
/// (exponent <= 0 means bounded at the origin).
struct Kernel {
    std::function<double(double)> phi;
    double singular_exponent = 0.0;
    std::string name;

    /// phi(r) = r^{-a}; a = 0 gives the constant kernel 1.
    static Kernel riesz(double a);
    [[nodiscard]] bool finite_at_zero() const { return singular_exponent <= 0.0; }
};

/// Cubes of one lattice (side h) carrying the set. `keys` are integer lattice
/// coordinates; each cell's mass is spread uniformly over its cube, so the
/// energy of a weight vector is the energy of a piecewise-constant density.
/// Sets made only of points give side-0 cells (atoms) listed in `atoms`.
struct DiscretizedSet {
    int D = 1;
    double side = 0.0;
    Vec origin;
    std::vector<std::vector<long>> keys;
    std::vector<Vec> atoms;

    [[nodiscard]] std::size_t size() const { return side > 0.0 ? keys.size() : atoms.size(); }
    [[nodiscard]] Vec center(std::size_t i) const;
    [[nodiscard]] double resolution() const;  // cell diameter side * sqrt(D)
};

/// Lattice cubes of side `side` meeting A. Throws ResourceError past max_cells.
DiscretizedSet discretize(const TargetSet& a, double side, std::size_t max_cells = 200'000);

/// Mean of phi(|y - y'|) for y, y' uniform in two lattice cubes of side h
/// whose integer keys differ by `offset`.
double cell_pair_kernel(const Kernel& k, std::span<const long> offset, double side, int D);

struct EnergyResult {
    double energy = 0.0;
    bool infinite = false;
};

EnergyResult energy(std::span<const double> weights, const DiscretizedSet& ds, const Kernel& k);

struct CapacityReport {
    std::string set;
    std::string kernel;
    double resolution = 0.0;
    int iterations = 0;
    double energy = 0.0;
    double gap = 0.0;
    double capacity = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> energy_trace;  // best energy after each iteration
    std::vector<double> weights;
};

/// Minimizes the energy over probability vectors on the cells by pairwise
/// Frank-Wolfe with exact line search, starting from uniform weights.
/// Stops after `iters` steps or when the duality gap falls below
/// gap_rel * energy. Capacity is 1 / energy, and 1 for kernels finite at 0.
CapacityReport capacity_estimate(const TargetSet& a, const Kernel& k, double side, int iters,
                                 double gap_rel = 1e-6);

std::string to_json(const CapacityReport& r);

struct HausdorffReport {
    double estimate = 0.0;  // may be +inf
    std::size_t balls = 0;
    double radius = 0.0;
};

/// Covers A with the lattice cubes of side 2 eps / sqrt(D) that meet it; each
/// lies in a ball of radius eps. Returns count * g(2 eps); +inf at once when
/// g(0) is infinite.
HausdorffReport hausdorff_estimate(const TargetSet& a, const Gauge& g, double eps,
                                   std::size_t max_cells = 5'000'000);

std::string to_json(const HausdorffReport& r, const std::string& set, const std::string& gauge, double eps);

/// Points in R^D stored row-major.
struct PointCloud {
    int D = 1;
    std::vector<double> xs;
    [[nodiscard]] std::size_t size() const { return D > 0 ? xs.size() / static_cast<std::size_t>(D) : 0; }
};

struct BoxCountResult {
    double dimension = 0.0;
    double slope_stderr = 0.0;
    std::vector<double> scales;
    std::vector<double> counts;
    std::optional<std::string> warning;
};

/// Number of occupied lattice boxes of side eps.
std::size_t occupied_boxes(const PointCloud& pc, double eps);

/// Least-squares slope of log N(eps) against log(1/eps). Needs >= 1000 points
/// and scales spanning >= 1.5 decades.
BoxCountResult box_counting_dimension(const PointCloud& pc, std::span<const double> scales);

struct DimensionScanRow {
    double nu = 0.0;
    double slope = 0.0;  // of log covering sum against log(1/eps); > 0 diverging
    std::vector<double> sums;
};

struct DimensionScan {
    std::vector<DimensionScanRow> rows;
    std::optional<double> transition;  // nu where the slope changes sign
};

/// Covering sums N(eps) f_nu(eps sqrt(D)) over the box-counting scales for each
/// nu, with the empirical sign change of their trend.
DimensionScan generalized_dimension_scan(const PointCloud& pc, std::span<const double> scales,
                                         std::span<const double> nu_grid, double log_c);

}  // namespace bhh::geom
