#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace bhh::spectral {

inline constexpr int kMaxDim = 3;

/// Throws UnsupportedDimension unless d is 1, 2 or 3.
void require_dimension(int d);

/// A basis function eps_{i,k} = prod_j eps_{i_j,k_j} of L^2(T^d).
/// branch[j] == 0 selects pi^{-1/2} sin(k_j x), 1 selects pi^{-1/2} cos(k_j x)
/// (the constant (2 pi)^{-1/2} when k_j == 0).
struct Mode {
    int dim = 1;
    std::array<std::uint32_t, kMaxDim> k{};
    std::array<std::uint8_t, kMaxDim> branch{};

    [[nodiscard]] bool valid() const noexcept;
    [[nodiscard]] int null_count() const noexcept;
    friend bool operator==(const Mode&, const Mode&) = default;
};

/// lambda_k = sum_j k_j^4.
double eigenvalue(std::span<const std::uint32_t> k);
double eigenvalue(const Mode& m);

/// Every valid (i, k) with |k| <= k_max, lexicographic in (k, i).
std::vector<Mode> enumerate_modes(int d, int k_max);

double basis_eval(const Mode& m, std::span<const double> x);

/// One wavevector k with all its branches folded together:
/// sum_i eps_{i,k}(x) eps_{i,k}(y) = weight * prod_j cos(k_j (x_j - y_j)).
struct WaveVector {
    std::array<std::uint32_t, kMaxDim> k{};
    double lambda = 0.0;
    int null_count = 0;
    int multiplicity = 0;  // 2^{d - n(k)}
    double weight = 0.0;   // 1 / (2^{n(k)} pi^d)
};

/// Wavevectors with |k| <= k_max (k = 0 included), sorted by decreasing
/// eigenvalue so that compensated sums add small terms first.
/// Throws ResourceError beyond `max_records`.
std::vector<WaveVector> enumerate_wavevectors(int d, int k_max, std::size_t max_records = 60'000'000);

/// Number of wavevectors with |k| <= k_max without materializing them.
std::size_t count_wavevectors(int d, int k_max);

struct Truncation {
    int k_max = 1;
    /// Upper bound on the discarded mass sum_{|k| > k_max} weight_k / lambda_k.
    double tail_estimate = 0.0;
};

/// Integral-comparison bound on sum_{|k|>k_max} weight_k / lambda_k.
double inverse_lambda_tail_bound(int d, int k_max);

Truncation make_truncation(int d, int k_max);

/// Smallest k_max whose 1/lambda tail bound is below tol, or k_cap if none is.
Truncation choose_truncation(int d, double tol, int k_cap);

struct GreenValue {
    double value = 0.0;
    double tail_bound = 0.0;  // bound on sum_{|k|>k_max} weight_k e^{-lambda_k t}
};

/// Truncated Green's function of d/dt + (-Delta)^2 on the torus. t must be > 0.
GreenValue green(int d, double t, std::span<const double> x, std::span<const double> y,
                 const Truncation& tr);

/// The one-dimensional kernel 1/(2 pi) + pi^{-1} sum_{k>=1} e^{-k^4 rho} cos(k z),
/// summed to double precision for any rho > 0 (short times use the Poisson
/// dual of the series).
double heat_kernel_1d(double rho, double z);

/// heat_kernel_1d(rho, 0) - heat_kernel_1d(rho, z) without cancellation.
double heat_kernel_gap_1d(double rho, double z);

/// green_full(rho, 0) - green_full(rho, delta) without cancellation.
double green_gap(double rho, std::span<const double> delta);

/// The full (untruncated) Green's function: the weights factor over
/// coordinates, so G(rho; x, y) is a product of one-dimensional kernels in
/// the coordinate differences.
double green_full(double rho, std::span<const double> delta);

}  // namespace bhh::spectral
