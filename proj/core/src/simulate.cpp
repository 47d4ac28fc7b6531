#include "bhh/simulate.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "bhh/errors.hpp"
#include "bhh/numerics.hpp"

namespace bhh::sim {

namespace {

constexpr double kPi = std::numbers::pi;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-step decay and innovation scale of one OU path on a fixed time grid.
struct OuSteps {
    std::vector<double> decay;
    std::vector<double> scale;
};

OuSteps ou_steps(double lambda, std::span<const double> times) {
    OuSteps s;
    s.decay.resize(times.size());
    s.scale.resize(times.size());
    double prev = 0.0;
    for (std::size_t n = 0; n < times.size(); ++n) {
        const double dt = times[n] - prev;
        prev = times[n];
        if (lambda == 0.0) {
            s.decay[n] = 1.0;
            s.scale[n] = std::sqrt(dt);
        } else {
            s.decay[n] = std::exp(-lambda * dt);
            s.scale[n] = std::sqrt(-std::expm1(-2.0 * lambda * dt) / (2.0 * lambda));
        }
    }
    return s;
}

// X_0 = 0 at time 0, so the first step draws the marginal at times[0] directly
void ou_fill(const OuSteps& st, const CounterRng& rng, double* out) {
    const std::size_t n = st.decay.size();
    double x = 0.0;
    for (std::size_t j = 0; 2 * j < n; ++j) {
        const auto z = rng.normal_pair_at(j);
        for (std::size_t r = 0; r < 2 && 2 * j + r < n; ++r) {
            const std::size_t i = 2 * j + r;
            x = st.decay[i] * x + st.scale[i] * z[r];
            out[i] = x;
        }
    }
}

void check_times(std::span<const double> times) {
    if (times.empty()) throw ConfigError("mode path: empty time grid");
    if (!(times[0] > 0.0)) throw DomainError("mode path: first time must be > 0");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) throw ConfigError("mode path: times must be strictly increasing");
    }
}

RowMatrix basis_matrix(const SimGrid& grid, std::span<const spectral::Mode> modes) {
    RowMatrix b(modes.size(), grid.sites.size());
    for (std::size_t m = 0; m < modes.size(); ++m) {
        const int d = modes[m].dim;
        for (std::size_t s = 0; s < grid.sites.size(); ++s) {
            b(m, s) = spectral::basis_eval(modes[m], std::span<const double>(grid.sites[s].data(), d));
        }
    }
    return b;
}

std::string config_string(const SecondOrderEngine& eng, const SimGrid& grid, int copies, std::uint64_t seed,
                          int k_max) {
    nlohmann::json j{{"d", eng.dim()}, {"T", eng.horizon()}, {"k_max", k_max}, {"copies", copies},
                     {"seed", seed},   {"times", grid.times}};
    nlohmann::json sites = nlohmann::json::array();
    for (const auto& s : grid.sites) sites.push_back(std::vector<double>(s.begin(), s.begin() + eng.dim()));
    j["sites"] = sites;
    return j.dump();
}

template <class T>
void put(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw ConfigError("field sample: truncated file");
    return v;
}

}  // namespace

void SimGrid::validate(int d, double horizon) const {
    spectral::require_dimension(d);
    if (times.empty() || sites.empty()) throw ConfigError("grid: needs at least one time and one site");
    if (!(times.front() > 0.0)) throw ConfigError("grid: times must be > 0");
    if (times.back() > horizon * (1.0 + 1e-12)) throw ConfigError("grid: times must be <= T");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) throw ConfigError("grid: times must be strictly increasing");
    }
    std::set<std::array<double, spectral::kMaxDim>> seen;
    for (const auto& s : sites) {
        std::array<double, spectral::kMaxDim> key{};
        for (int j = 0; j < d; ++j) {
            if (!std::isfinite(s[j])) throw ConfigError("grid: non-finite site");
            key[j] = s[j];
        }
        if (!seen.insert(key).second) throw ConfigError("grid: sites must be distinct");
    }
}

SimGrid regular_grid(int d, double t0, double t1, std::size_t n_times, double lo, double hi,
                     std::size_t n_side) {
    spectral::require_dimension(d);
    if (n_times == 0 || n_side == 0) throw ConfigError("regular_grid: sizes must be >= 1");
    SimGrid g;
    for (std::size_t i = 0; i < n_times; ++i) {
        g.times.push_back(n_times == 1 ? t0 : t0 + (t1 - t0) * static_cast<double>(i) / (n_times - 1));
    }
    std::vector<double> axis(n_side);
    for (std::size_t i = 0; i < n_side; ++i) {
        axis[i] = n_side == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n_side - 1);
    }
    const std::size_t total = static_cast<std::size_t>(std::pow(n_side, d));
    for (std::size_t idx = 0; idx < total; ++idx) {
        Site s{};
        std::size_t r = idx;
        for (int j = d - 1; j >= 0; --j) {
            s[j] = axis[r % n_side];
            r /= n_side;
        }
        g.sites.push_back(s);
    }
    return g;
}

std::vector<double> ou_mode_path(double lambda, std::span<const double> times, const CounterRng& rng) {
    if (!(lambda >= 0.0)) throw DomainError("ou_mode_path: lambda must be >= 0");
    check_times(times);
    std::vector<double> out(times.size());
    ou_fill(ou_steps(lambda, times), rng, out.data());
    return out;
}

std::vector<double> synthesize(std::span<const double> paths, const SimGrid& grid,
                               std::span<const spectral::Mode> modes) {
    const std::size_t nt = grid.times.size();
    if (modes.empty()) throw ConfigError("synthesize: no modes");
    if (paths.size() != modes.size() * nt) {
        throw ConfigError("synthesize: expected one path of length " + std::to_string(nt) + " per mode (" +
                          std::to_string(modes.size()) + " modes)");
    }
    bool has_constant = false;
    for (const auto& m : modes) {
        if (!m.valid()) throw ConfigError("synthesize: invalid mode");
        has_constant = has_constant || m.null_count() == m.dim;
    }
    if (!has_constant) throw ConfigError("synthesize: missing the constant mode path");
    const RowMatrix b = basis_matrix(grid, modes);
    const Eigen::Map<const RowMatrix> p(paths.data(), modes.size(), nt);
    std::vector<double> out(nt * grid.sites.size());
    Eigen::Map<RowMatrix>(out.data(), nt, grid.sites.size()).noalias() = p.transpose() * b;
    return out;
}

FieldSample simulate(const SecondOrderEngine& eng, const SimGrid& grid, int copies, std::uint64_t seed,
                     const SimOptions& opt) {
    const int d = eng.dim();
    if (copies < 1) throw ConfigError("simulate: need D >= 1 copies");
    grid.validate(d, eng.horizon());
    const int k_max = opt.k_max > 0 ? opt.k_max : eng.truncation().k_max;
    const std::size_t n_wave = spectral::count_wavevectors(d, k_max);
    if (n_wave * (std::size_t{1} << d) > opt.max_modes) {
        throw ResourceError("simulate: k_max=" + std::to_string(k_max) + " in d=" + std::to_string(d) +
                            " needs about " + std::to_string(n_wave << d) + " modes, budget is " +
                            std::to_string(opt.max_modes) + "; lower k_max");
    }
    const auto modes = spectral::enumerate_modes(d, k_max);
    const std::size_t nm = modes.size();
    const std::size_t nt = grid.times.size();
    const std::size_t ns = grid.sites.size();

    // steps depend on lambda only; share them between modes of one wavevector
    std::vector<OuSteps> steps;
    std::vector<std::size_t> step_of(nm);
    for (std::size_t m = 0; m < nm; ++m) {
        if (m == 0 || modes[m].k != modes[m - 1].k) steps.push_back(ou_steps(spectral::eigenvalue(modes[m]), grid.times));
        step_of[m] = steps.size() - 1;
    }
    const RowMatrix basis = basis_matrix(grid, modes);

    FieldSample out;
    out.d = d;
    out.copies = copies;
    out.k_max = k_max;
    out.seed = seed;
    out.grid = grid;
    out.config_digest = sha256_hex(config_string(eng, grid, copies, seed, k_max));
    out.values.resize(static_cast<std::size_t>(copies) * nt * ns);

    parallel_for(static_cast<std::size_t>(copies), opt.workers, [&](std::size_t c) {
        const std::uint64_t copy_key = substream(seed, c);
        RowMatrix paths(nm, nt);
        for (std::size_t m = 0; m < nm; ++m) {
            ou_fill(steps[step_of[m]], CounterRng(substream(copy_key, m)), paths.row(m).data());
        }
        Eigen::Map<RowMatrix>(out.values.data() + c * nt * ns, nt, ns).noalias() = paths.transpose() * basis;
    });
    return out;
}

double variance_deficit(int d, int k_max, double t) {
    if (!(t >= 0.0)) throw DomainError("variance_deficit: t must be >= 0");
    if (t == 0.0) return 0.0;
    EngineConfig cfg;
    cfg.d = d;
    cfg.horizon = t;
    cfg.k_max = k_max;
    const SecondOrderEngine eng(cfg);
    const GreenWindow w{0.0, 2.0 * t, 0.5, {}};
    // windows above rho_c lose at most the certified e^{-40} tail
    return eng.short_time_remainder(std::span<const GreenWindow>(&w, 1)) + 0.5 * eng.neglected_bound();
}

std::vector<double> cholesky_oracle(std::span<const SpaceTimePoint> points, const SecondOrderEngine& eng,
                                    std::size_t n, std::uint64_t seed) {
    const std::size_t m = points.size();
    if (m == 0) throw ConfigError("cholesky_oracle: no points");
    if (m > 500) throw ConfigError("cholesky_oracle: at most 500 points");
    Eigen::MatrixXd cov(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            cov(i, j) = cov(j, i) = i == j ? eng.variance(points[i]) : eng.covariance(points[i], points[j]);
        }
    }
    Eigen::MatrixXd lower;
    double jitter = 0.0;
    for (;;) {
        Eigen::MatrixXd a = cov;
        a.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() == Eigen::Success) {
            lower = llt.matrixL();
            break;
        }
        jitter = jitter == 0.0 ? 1e-16 : jitter * 10.0;
        if (jitter > 1e-10) {
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
            std::ostringstream os;
            os << "cholesky_oracle: factorization failed with jitter 1e-10; eigenvalues in ["
               << es.eigenvalues().minCoeff() << ", " << es.eigenvalues().maxCoeff() << "]";
            throw NumericalError(os.str());
        }
    }
    RowMatrix z(n, m);
    for (std::size_t r = 0; r < n; ++r) {
        const CounterRng rng(substream(seed, r));
        for (std::size_t j = 0; j < m; ++j) z(r, j) = rng.normal_at(j);
    }
    std::vector<double> out(n * m);
    Eigen::Map<RowMatrix>(out.data(), n, m).noalias() = z * lower.transpose();
    return out;
}

std::vector<std::pair<spectral::Mode, double>> fourier_coefficients(
    const std::function<double(std::span<const double>)>& f, int d, int k_max, int n) {
    spectral::require_dimension(d);
    if (n <= 2 * k_max) throw ConfigError("fourier_coefficients: need more than 2 k_max points per axis");
    const auto modes = spectral::enumerate_modes(d, k_max);
    const auto total = static_cast<std::size_t>(std::pow(n, d));
    std::vector<double> values(total);
    std::vector<std::array<double, spectral::kMaxDim>> pts(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t r = idx;
        for (int j = d - 1; j >= 0; --j) {
            pts[idx][j] = 2.0 * kPi * static_cast<double>(r % n) / n;
            r /= n;
        }
        values[idx] = f(std::span<const double>(pts[idx].data(), d));
    }
    const double cell = std::pow(2.0 * kPi / n, d);
    std::vector<std::pair<spectral::Mode, double>> out;
    for (const auto& m : modes) {
        KahanSum s;
        for (std::size_t idx = 0; idx < total; ++idx) {
            s += values[idx] * spectral::basis_eval(m, std::span<const double>(pts[idx].data(), d));
        }
        out.emplace_back(m, cell * s.value());
    }
    return out;
}

double drift_I0_quadrature(double t, std::span<const double> x, const InitialCondition& ic,
                           const SecondOrderEngine& eng) {
    const int d = eng.dim();
    if (!ic.function) throw ConfigError("drift_I0: quadrature route needs a function");
    if (t == 0.0) return ic.function(x.first(d));
    if (!(t > 0.0)) throw DomainError("drift_I0: t must be >= 0");
    const int n = ic.quad_points > 0 ? ic.quad_points : 64;
    const auto total = static_cast<std::size_t>(std::pow(n, d));
    const double cell = std::pow(2.0 * kPi / n, d);
    KahanSum s;
    std::array<double, spectral::kMaxDim> z{};
    std::array<double, spectral::kMaxDim> delta{};
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t r = idx;
        for (int j = d - 1; j >= 0; --j) {
            z[j] = 2.0 * kPi * static_cast<double>(r % n) / n;
            delta[j] = x[j] - z[j];
            r /= n;
        }
        s += spectral::green_full(t, std::span<const double>(delta.data(), d)) *
             ic.function(std::span<const double>(z.data(), d));
    }
    return cell * s.value();
}

double drift_I0(double t, std::span<const double> x, const InitialCondition& ic, const SecondOrderEngine& eng) {
    if (!(t >= 0.0)) throw DomainError("drift_I0: t must be >= 0");
    if (ic.coefficients.empty()) {
        if (!ic.function) return 0.0;
        return drift_I0_quadrature(t, x, ic, eng);
    }
    KahanSum s;
    for (const auto& [m, c] : ic.coefficients) {
        if (m.dim != eng.dim()) throw ConfigError("drift_I0: coefficient dimension mismatch");
        s += std::exp(-spectral::eigenvalue(m) * t) * c * spectral::basis_eval(m, x);
    }
    return s.value();
}

LipschitzEstimate drift_lipschitz(const InitialCondition& ic, const SecondOrderEngine& eng, double t0,
                                  double t1, double lo, double hi, std::size_t n) {
    const int d = eng.dim();
    if (n < 2) throw ConfigError("drift_lipschitz: need >= 2 points per axis");
    if (!(t1 > t0) || !(hi > lo)) throw ConfigError("drift_lipschitz: empty region");
    const SimGrid g = regular_grid(d, std::max(t0, 1e-300), t1, n, lo, hi, n);
    const std::size_t nt = g.times.size();
    const std::size_t ns = g.sites.size();
    std::vector<double> v(nt * ns);
    parallel_for(nt * ns, 0, [&](std::size_t i) {
        const auto& s = g.sites[i % ns];
        v[i] = drift_I0(g.times[i / ns], std::span<const double>(s.data(), d), ic, eng);
    });
    const double dt = (t1 - t0) / (n - 1);
    const double dx = (hi - lo) / (n - 1);
    // spatial neighbour offsets in {-1, 0, 1}^d with the first nonzero positive
    std::vector<std::array<int, spectral::kMaxDim>> offs;
    const int total = static_cast<int>(std::pow(3, d));
    for (int c = 0; c < total; ++c) {
        std::array<int, spectral::kMaxDim> o{};
        int r = c;
        for (int j = 0; j < d; ++j) {
            o[j] = r % 3 - 1;
            r /= 3;
        }
        const auto first = std::find_if(o.begin(), o.begin() + d, [](int a) { return a != 0; });
        if (first != o.begin() + d && *first > 0) offs.push_back(o);
    }
    const auto site_index = [&](std::array<long, spectral::kMaxDim> c) -> long {
        long idx = 0;
        for (int j = 0; j < d; ++j) {
            if (c[j] < 0 || c[j] >= static_cast<long>(n)) return -1;
            idx = idx * static_cast<long>(n) + c[j];
        }
        return idx;
    };
    double best = 0.0;
    for (std::size_t ti = 0; ti < nt; ++ti) {
        for (std::size_t si = 0; si < ns; ++si) {
            const double here = v[ti * ns + si];
            if (ti + 1 < nt) best = std::max(best, std::abs(v[(ti + 1) * ns + si] - here) / dt);
            std::array<long, spectral::kMaxDim> c{};
            std::size_t r = si;
            for (int j = d - 1; j >= 0; --j) {
                c[j] = static_cast<long>(r % n);
                r /= n;
            }
            for (const auto& o : offs) {
                auto nb = c;
                int nz = 0;
                for (int j = 0; j < d; ++j) {
                    nb[j] += o[j];
                    nz += o[j] != 0;
                }
                const long k = site_index(nb);
                if (k < 0) continue;
                best = std::max(best, std::abs(v[ti * ns + static_cast<std::size_t>(k)] - here) /
                                          (dx * std::sqrt(static_cast<double>(nz))));
            }
        }
    }
    return {best, nt * ns};
}

FieldSample solution_field(const FieldSample& u, const InitialCondition& ic, double sigma,
                           const SecondOrderEngine& eng) {
    if (sigma == 0.0) throw DomainError("solution_field: sigma = 0 degenerates the noise");
    if (u.d != eng.dim()) throw ConfigError("solution_field: sample and engine dimensions differ");
    const std::size_t nt = u.n_times();
    const std::size_t ns = u.n_sites();
    if (u.values.size() != static_cast<std::size_t>(u.copies) * nt * ns) {
        throw ConfigError("solution_field: sample values do not match its grid");
    }
    std::vector<double> drift(nt * ns, 0.0);
    if (!ic.is_zero()) {
        for (std::size_t ti = 0; ti < nt; ++ti) {
            for (std::size_t si = 0; si < ns; ++si) {
                drift[ti * ns + si] =
                    drift_I0(u.grid.times[ti], std::span<const double>(u.grid.sites[si].data(), u.d), ic, eng);
            }
        }
    }
    FieldSample v = u;
    for (int c = 0; c < u.copies; ++c) {
        for (std::size_t i = 0; i < nt * ns; ++i) {
            const std::size_t k = static_cast<std::size_t>(c) * nt * ns + i;
            v.values[k] = drift[i] + sigma * u.values[k];
        }
    }
    return v;
}

HolderScan time_holder_scan(const FieldSample& s, std::size_t max_lag) {
    const std::size_t nt = s.n_times();
    const std::size_t ns = s.n_sites();
    if (nt < 3 || max_lag < 2 || max_lag >= nt) throw ConfigError("time_holder_scan: need 2 <= max_lag < n_times");
    const double dt = s.grid.times[1] - s.grid.times[0];
    HolderScan out;
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t lag = 1; lag <= max_lag; lag *= 2) {
        KahanSum acc;
        std::size_t count = 0;
        for (int c = 0; c < s.copies; ++c) {
            for (std::size_t ti = 0; ti + lag < nt; ++ti) {
                for (std::size_t si = 0; si < ns; ++si) {
                    const double diff = s.at(c, ti + lag, si) - s.at(c, ti, si);
                    acc += diff * diff;
                    ++count;
                }
            }
        }
        const double ms = acc.value() / static_cast<double>(count);
        out.lags.push_back(static_cast<double>(lag) * dt);
        out.mean_sq.push_back(ms);
        lx.push_back(std::log(static_cast<double>(lag) * dt));
        ly.push_back(std::log(ms));
    }
    if (lx.size() < 2) throw ConfigError("time_holder_scan: need at least two lags");
    const LineFit f = fit_line(lx, ly);
    out.exponent = 0.5 * f.slope;
    out.exponent_stderr = 0.5 * f.slope_stderr;
    return out;
}

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw NumericalError("sha256: digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

void write_field_sample(const std::string& path, const FieldSample& s, const std::string& config_json) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("field sample: cannot open " + path + " for writing");
    os.write("BHHF", 4);
    put<std::uint32_t>(os, 1);
    put<std::int32_t>(os, s.d);
    put<std::int32_t>(os, s.copies);
    put<std::uint64_t>(os, s.n_times());
    put<std::uint64_t>(os, s.n_sites());
    put<std::uint64_t>(os, s.seed);
    put<std::int32_t>(os, s.k_max);
    for (double t : s.grid.times) put(os, t);
    for (const auto& x : s.grid.sites) {
        for (int j = 0; j < s.d; ++j) put(os, x[j]);
    }
    os.write(reinterpret_cast<const char*>(s.values.data()),
             static_cast<std::streamsize>(s.values.size() * sizeof(double)));
    if (!os) throw ConfigError("field sample: write failed for " + path);

    nlohmann::json side;
    side["format"] = "BHHF";
    side["version"] = 1;
    side["config_digest"] = s.config_digest;
    side["config"] = config_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(config_json);
    std::ofstream js(path + ".json");
    js << side.dump(2) << '\n';
}

FieldSample read_field_sample(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("field sample: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "BHHF", 4) != 0) throw ConfigError("field sample: bad magic in " + path);
    if (get<std::uint32_t>(is) != 1) throw ConfigError("field sample: unsupported version");
    FieldSample s;
    s.d = get<std::int32_t>(is);
    spectral::require_dimension(s.d);
    s.copies = get<std::int32_t>(is);
    const auto nt = get<std::uint64_t>(is);
    const auto ns = get<std::uint64_t>(is);
    s.seed = get<std::uint64_t>(is);
    s.k_max = get<std::int32_t>(is);
    s.grid.times.resize(nt);
    for (auto& t : s.grid.times) t = get<double>(is);
    s.grid.sites.resize(ns);
    for (auto& x : s.grid.sites) {
        for (int j = 0; j < s.d; ++j) x[j] = get<double>(is);
    }
    s.values.resize(static_cast<std::size_t>(s.copies) * nt * ns);
    is.read(reinterpret_cast<char*>(s.values.data()), static_cast<std::streamsize>(s.values.size() * sizeof(double)));
    if (!is) throw ConfigError("field sample: truncated values in " + path);
    std::ifstream js(path + ".json");
    if (js) {
        const auto side = nlohmann::json::parse(js, nullptr, false);
        if (!side.is_discarded() && side.contains("config_digest")) s.config_digest = side["config_digest"];
    }
    return s;
}

}  // namespace bhh::sim
