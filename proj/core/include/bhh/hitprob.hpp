#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bhh/covariance.hpp"
#include "bhh/geometry.hpp"
#include "bhh/simulate.hpp"

namespace bhh::hit {

/// Monte Carlo setup for P(V(I x J) meets A) with V = (u_1, ..., u_D) made of
/// independent copies of the noise field, observed on a space-time grid.
struct HitExperiment {
    double t0 = 0.5;   // I = [t0, t1]
    double t1 = 1.0;
    double j_lo = 1.0;  // J = [j_lo, j_hi]^d
    double j_hi = 5.0;
    int D = 2;
    geom::TargetSet target = geom::TargetSet::point({0.0, 0.0});
    std::size_t n_times = 64;
    std::size_t n_side = 64;
    std::size_t replicates = 10000;
    std::optional<double> dilation;  // unset: calibrated from pilot runs
    std::size_t pilot_replicates = 16;
    std::uint64_t seed = 1;
    int k_max = 0;  // 0: engine truncation
    int workers = 1;

    /// Throws ConfigError / DomainError when the invariants fail.
    void validate(const SecondOrderEngine& eng) const;
    [[nodiscard]] sim::SimGrid grid(int d) const;
};

struct WilsonInterval {
    double lo = 0.0;
    double hi = 1.0;
    double halfwidth = 0.5;
};

/// 95% Wilson score interval for hits out of n.
WilsonInterval wilson(std::size_t hits, std::size_t n, double z = 1.959963984540054);

struct HitResult {
    double estimate = 0.0;
    double ci_halfwidth = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::size_t hits = 0;
    std::size_t replicates = 0;
    double dilation = 0.0;
    int k_max = 0;
};

/// Grid surrogate for continuum paths: eta = L (dt^eta1 + dx^eta2) with the
/// Hoelder exponents at 80% of (4-d)/8 and min(1, (4-d)/2).
struct Dilation {
    double eta1 = 0.0;
    double eta2 = 0.0;
    double L = 0.0;
    double dt = 0.0;
    double dx = 0.0;
    double value = 0.0;
};

/// How L is read off the pilot moduli |V(p) - V(q)| / dt^eta1 (time
/// neighbours) and / dx^eta2 (space neighbours). `typical` takes half their
/// mean, matching the expected motion between a point and its nearest grid
/// node; `sup` takes half the per-pilot maximum (a worst-case bound that
/// over-dilates and drifts under refinement).
enum class DilationRule { typical, sup };

Dilation calibrate_dilation(const SecondOrderEngine& eng, const HitExperiment& exp,
                            DilationRule rule = DilationRule::typical);

/// Smallest distance from a grid point's D-vector to A.
double min_distance(const sim::FieldSample& s, const geom::TargetSet& a);

/// Whether some grid point's D-vector lies within `dilation` of A. An empty
/// union is never hit.
bool hit_indicator(const sim::FieldSample& s, const geom::TargetSet& a, double dilation);

/// Per-replicate distances min over the grid of dist(V, A); replicate r uses
/// seed substream(exp.seed, r).
std::vector<double> replicate_distances(const SecondOrderEngine& eng, const HitExperiment& exp,
                                        const geom::TargetSet& a);

HitResult estimate_hit_prob(const SecondOrderEngine& eng, const HitExperiment& exp);

struct PolarityRow {
    double eps = 0.0;
    HitResult result;
    double gauge = 0.0;  // gbar(2 eps)
    double ratio = 0.0;  // estimate / gbar(2 eps)
};

struct PolarityTable {
    std::vector<double> z;
    int d = 1;
    int D = 1;
    std::uint64_t seed = 0;
    double dilation = 0.0;
    std::vector<PolarityRow> rows;
};

/// Hitting probabilities of the balls B_eps(z) over a decreasing eps grid,
/// sharing one set of replicates (replicate distances to z are reused).
PolarityTable polarity_scan(const SecondOrderEngine& eng, const std::vector<double>& z,
                            const std::vector<double>& eps_grid, const HitExperiment& base);

struct ImageDimension {
    geom::BoxCountResult fit;
    std::size_t points = 0;
};

/// The image V(grid) of one replicate (seed exp.seed) as a point cloud in R^D.
geom::PointCloud image_cloud(const SecondOrderEngine& eng, const HitExperiment& exp);

/// Box-counting dimension of the image V(grid) of one replicate. Requires
/// D > D0 and d in {1, 3}.
ImageDimension image_dimension_experiment(const SecondOrderEngine& eng, const HitExperiment& exp,
                                          const std::vector<double>& scales);

/// Ledger CSV: experiment_id,d,D,set,eps,estimate,ci,dilation,replicates,seed,wall_time_s,k_max
std::string ledger_header();
std::string ledger_row(const std::string& experiment_id, int d, int D, const std::string& set, double eps,
                       const HitResult& r, std::uint64_t seed, double wall_time_s);

}  // namespace bhh::hit
