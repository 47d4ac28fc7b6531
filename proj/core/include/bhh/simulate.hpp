#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bhh/covariance.hpp"
#include "bhh/rng.hpp"
#include "bhh/spectral.hpp"

namespace bhh::sim {

using Site = std::array<double, spectral::kMaxDim>;

struct SimGrid {
    std::vector<double> times;  // strictly increasing, in (0, T]
    std::vector<Site> sites;    // distinct points of [0, 2 pi)^d

    /// Throws ConfigError when the invariants fail.
    void validate(int d, double horizon) const;
};

/// n_times equispaced times on [t0, t1] and a tensor grid of n_side points
/// per axis on [lo, hi]^d (endpoints included; n = 1 puts the point at lo).
SimGrid regular_grid(int d, double t0, double t1, std::size_t n_times, double lo, double hi,
                     std::size_t n_side);

/// D independent copies of the field on a grid, stored (copy, time, site).
struct FieldSample {
    int d = 1;
    int copies = 1;
    int k_max = 0;
    std::uint64_t seed = 0;
    std::string config_digest;
    SimGrid grid;
    std::vector<double> values;

    [[nodiscard]] std::size_t n_times() const noexcept { return grid.times.size(); }
    [[nodiscard]] std::size_t n_sites() const noexcept { return grid.sites.size(); }
    [[nodiscard]] std::size_t index(int copy, std::size_t ti, std::size_t si) const noexcept {
        return (static_cast<std::size_t>(copy) * n_times() + ti) * n_sites() + si;
    }
    [[nodiscard]] double at(int copy, std::size_t ti, std::size_t si) const { return values[index(copy, ti, si)]; }
};

/// Exact discretization of X(t) = int_0^t e^{-lambda (t-r)} dW(r) at the given
/// times. The n-th step consumes normal number n of `rng`.
std::vector<double> ou_mode_path(double lambda, std::span<const double> times, const CounterRng& rng);

/// sum over modes of path_m(t) * eps_m(x) for every (time, site).
/// paths is row-major (mode, time). Result is row-major (time, site).
std::vector<double> synthesize(std::span<const double> paths, const SimGrid& grid,
                               std::span<const spectral::Mode> modes);

struct SimOptions {
    int k_max = 0;    // 0: reuse the engine truncation
    int workers = 1;
    std::size_t max_modes = 2'000'000;
};

/// D independent copies of u on the grid. Copy c, mode m uses the RNG key
/// substream(substream(seed, c), m); the result does not depend on `workers`.
FieldSample simulate(const SecondOrderEngine& eng, const SimGrid& grid, int copies, std::uint64_t seed,
                     const SimOptions& opt = {});

/// Variance the simulator omits at time t by keeping |k| <= k_max:
/// sum_{|k| > k_max} weight_k (1 - e^{-2 lambda t}) / (2 lambda), bounded above.
double variance_deficit(int d, int k_max, double t);

/// n joint samples of u at `points`, by Cholesky factorization of the
/// covariance matrix. Row-major (replicate, point).
std::vector<double> cholesky_oracle(std::span<const SpaceTimePoint> points, const SecondOrderEngine& eng,
                                    std::size_t n, std::uint64_t seed);

/// Initial datum v0, given by Fourier coefficients against the basis, by a
/// function sampled with the periodic trapezoid rule, or both.
struct InitialCondition {
    std::vector<std::pair<spectral::Mode, double>> coefficients;
    std::function<double(std::span<const double>)> function;
    int quad_points = 0;  // per axis, for the quadrature route

    static InitialCondition zero() { return {}; }
    [[nodiscard]] bool is_zero() const { return coefficients.empty() && !function; }
};

/// I0(t, x) = int G(t; x, z) v0(z) dz. Uses coefficients when present and the
/// quadrature route otherwise. At t = 0 with coefficients, the Fourier
/// reconstruction of v0 at x.
double drift_I0(double t, std::span<const double> x, const InitialCondition& ic, const SecondOrderEngine& eng);

/// The quadrature route alone: trapezoid rule on the torus against the
/// all-mode kernel. Requires t > 0 and a function.
double drift_I0_quadrature(double t, std::span<const double> x, const InitialCondition& ic,
                           const SecondOrderEngine& eng);

/// Coefficients of `f` on every mode with |k| <= k_max, by the trapezoid rule
/// with n points per axis.
std::vector<std::pair<spectral::Mode, double>> fourier_coefficients(
    const std::function<double(std::span<const double>)>& f, int d, int k_max, int n);

struct LipschitzEstimate {
    double constant = 0.0;  // max |I0(p) - I0(q)| / (|t-s| + |x-y|) over neighbours
    std::size_t points = 0;
};

/// Space-time Lipschitz constant of I0 sampled on a regular grid of n points
/// per axis over [t0, t1] x [lo, hi]^d: the largest difference quotient between
/// grid neighbours (time steps, spatial steps and spatial diagonals).
LipschitzEstimate drift_lipschitz(const InitialCondition& ic, const SecondOrderEngine& eng, double t0,
                                  double t1, double lo, double hi, std::size_t n);

/// v = I0 + sigma u, copy by copy. sigma = 0 is rejected.
FieldSample solution_field(const FieldSample& u, const InitialCondition& ic, double sigma,
                           const SecondOrderEngine& eng);

struct HolderScan {
    double exponent = 0.0;  // slope / 2 of log mean square increment against log lag
    double exponent_stderr = 0.0;
    std::vector<double> lags;
    std::vector<double> mean_sq;
};

/// Time-direction oscillation exponent of a sample: mean square increment
/// over copies, sites and start times against the lag in time steps
/// 1, 2, 4, ... up to max_lag. Assumes equispaced times.
HolderScan time_holder_scan(const FieldSample& s, std::size_t max_lag);

/// Hex SHA-256 of a string.
std::string sha256_hex(std::string_view data);

/// Binary container: magic "BHHF", u32 version, i32 d, i32 D, u64 n_times,
/// u64 n_sites, u64 seed, i32 k_max, then times, sites (d doubles each) and
/// values, all little-endian. A JSON sidecar at path + ".json" carries
/// `config_json` and the digest.
void write_field_sample(const std::string& path, const FieldSample& s, const std::string& config_json);
FieldSample read_field_sample(const std::string& path);

}  // namespace bhh::sim
