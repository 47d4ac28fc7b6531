#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bhh/spectral.hpp"

namespace bhh {

/// (t, x) in [0, T] x T^d; x is reduced mod 2 pi by the evaluators.
struct SpaceTimePoint {
    double t = 0.0;
    std::array<double, spectral::kMaxDim> x{};

    [[nodiscard]] std::span<const double> space(int d) const { return {x.data(), static_cast<std::size_t>(d)}; }
    friend bool operator==(const SpaceTimePoint&, const SpaceTimePoint&) = default;
};

struct EngineConfig {
    int d = 1;
    double horizon = 1.0;  // T
    int k_max = 0;         // 0 selects a per-dimension default
    double log_c = 0.0;    // constant C(d) inside log(C/|x-y|); 0 selects 4 pi sqrt(d)
    /// Add the short-time remainder so that evaluators hold every mode.
    /// false evaluates the truncated field sum_{|k|<=k_max} only.
    bool exact = true;
    int quad_order = 12;
    double quad_rel_tol = 1e-12;
};

/// Default number of retained wavevector radii per dimension.
int default_k_max(int d);

/// Default C(d) = 4 pi sqrt(d), so that log(C/z) >= 1 on the whole torus.
double default_log_constant(int d);

/// One term coef * int_a^b G(rho; delta) d rho of a windowed Green integral.
struct GreenWindow {
    double a = 0.0;
    double b = 0.0;
    double coef = 0.0;
    std::array<double, spectral::kMaxDim> delta{};
};

/// Exact second-order calculus of the solution u of the linear stochastic
/// biharmonic heat equation driven by space-time white noise.
///
/// Every quantity is a time integral of the Green's function. Wavevectors
/// with |k| <= k_max are summed in closed form; when `exact` is set, the part
/// of every window below rho_c = 40 d / k_max^4 is replaced by a quadrature of
/// the factorized kernel, which carries all higher modes. Above rho_c the
/// discarded modes are damped by e^{-40} or more.
class SecondOrderEngine {
public:
    explicit SecondOrderEngine(const EngineConfig& cfg);

    [[nodiscard]] int dim() const noexcept { return cfg_.d; }
    [[nodiscard]] double horizon() const noexcept { return cfg_.horizon; }
    [[nodiscard]] double log_constant() const noexcept { return cfg_.log_c; }
    [[nodiscard]] bool exact() const noexcept { return cfg_.exact; }
    [[nodiscard]] const EngineConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const spectral::Truncation& truncation() const noexcept { return trunc_; }
    [[nodiscard]] std::span<const spectral::WaveVector> waves() const noexcept { return waves_; }
    [[nodiscard]] double short_time_cutoff() const noexcept { return rho_c_; }
    /// Bound on what the remainder neglects per unit window coefficient.
    [[nodiscard]] double neglected_bound() const noexcept { return neglected_; }

    /// E[u(t,x)^2]; independent of x.
    double variance(double t) const;
    double variance(const SpaceTimePoint& p) const { return variance(p.t); }

    /// Squared canonical pseudo-distance E[(u(p) - u(q))^2].
    double increment_norm_sq(const SpaceTimePoint& p, const SpaceTimePoint& q) const;

    double covariance(const SpaceTimePoint& p, const SpaceTimePoint& q) const;

    /// Throws DomainError when either point has zero variance (t = 0).
    double correlation(const SpaceTimePoint& p, const SpaceTimePoint& q) const;

    /// 1 - correlation, computed without the cancellation of 1 - rho.
    double decorrelation(const SpaceTimePoint& p, const SpaceTimePoint& q) const;

    /// Windowed Green integral computed entirely from the retained modes
    /// (closed form per mode).
    double mode_window_sum(std::span<const GreenWindow> windows) const;

    /// Remainder: all-mode integral minus retained-mode integral of the
    /// windows clipped to [0, rho_c]. Zero when !exact().
    double short_time_remainder(std::span<const GreenWindow> windows) const;

    void check_time(double t, const char* what) const;

private:
    EngineConfig cfg_;
    spectral::Truncation trunc_;
    std::vector<spectral::WaveVector> waves_;
    double rho_c_ = 0.0;
    double neglected_ = 0.0;
    double variance_remainder_ = 0.0;  // remainder of window [0, rho_c] with delta = 0
};

/// Wiener-isometry evaluation of E[(u(p) - u(q))^2] by adaptive time
/// quadrature of the r-integrals, using the semigroup property to collapse
/// the z-integrals and the all-mode factorized kernel. Independent of the
/// closed-form mode sums; `quad_order` is the number of Gauss points per panel.
double wiener_isometry_oracle(const SpaceTimePoint& p, const SpaceTimePoint& q,
                              const SecondOrderEngine& eng, int quad_order = 12);

/// |t-s|^{1-d/4} + (log(C/|x-y|))^beta |x-y|^{min(2, 4-d)}, beta = 1 iff d = 2.
double envelope(const SpaceTimePoint& p, const SpaceTimePoint& q, const SecondOrderEngine& eng);

struct ScanRegion {
    double t0 = 0.5;
    double t1 = 1.0;
    std::array<double, spectral::kMaxDim> lo{1.0, 1.0, 1.0};
    std::array<double, spectral::kMaxDim> hi{5.0, 5.0, 5.0};
};

struct EnvelopeReport {
    double ratio_min = 0.0;
    double ratio_max = 0.0;
    std::array<SpaceTimePoint, 2> argmin{};
    std::array<SpaceTimePoint, 2> argmax{};
    std::size_t sample_count = 0;
    std::uint64_t seed = 0;
    int d = 1;
    int k_max = 0;
};

/// Samples n random pairs in region x region and records the extrema of
/// increment_norm_sq / envelope. Pair i draws from its own RNG substream.
EnvelopeReport ratio_scan(const ScanRegion& region, std::size_t n, const SecondOrderEngine& eng,
                          std::uint64_t seed, int workers = 1);

std::string to_csv_header(const EnvelopeReport&);
std::string to_csv_row(const EnvelopeReport& r);
std::string to_json(const EnvelopeReport& r);

struct ExponentFit {
    double slope = 0.0;
    double slope_stderr = 0.0;
    bool ill_conditioned = false;  // abscissae span less than a decade
    std::vector<double> grid;      // h or z
    std::vector<double> values;    // d_u^2 at each grid point
};

/// Least-squares slope of log d_u^2((t+h, x), (t, x)) against log h.
ExponentFit time_exponent_fit(std::span<const double> x, double t, std::span<const double> h_grid,
                              const SecondOrderEngine& eng);

struct SpaceExponentResult {
    std::optional<ExponentFit> fit;  // d = 1, 3
    std::vector<double> z;
    std::vector<double> values;
    std::vector<double> log_ratio;   // d = 2: d_u^2 / (z^2 log(C/z))
    double ratio_spread = 0.0;       // max / min of log_ratio (d = 2)
};

/// Spatial increments at fixed t > 0 along the diagonal direction of the
/// torus, at offsets z. d = 1, 3 report a log-log slope; d = 2 reports the
/// log-corrected ratio table.
SpaceExponentResult space_exponent_fit(double t, std::span<const double> x,
                                       std::span<const double> z_grid, const SecondOrderEngine& eng);

/// sum_{k != 0} (1 - e^{-lambda h})^2 / (2^{n(k)+1} pi^d lambda) divided by
/// h^{1-d/4}; bounded in h.
double lemma_a1_ratio(double h, const SecondOrderEngine& eng);

/// 1 - prod_j (1 - p_j) through the alternating sum of elementary symmetric
/// polynomials.
double inclusion_exclusion(std::span<const double> p);

/// 1 - prod_j (1 - a_j) by the stable recursion r <- r + a_j (1 - r).
double one_minus_product(std::span<const double> a);

}  // namespace bhh
