#pragma once

// Conditional moments and exact-transition simulation of the OU storage rate
// and OU log price, plus the spot price driven by a given storage path.

#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "grainbasis/parallel.hpp"

namespace grainbasis {

struct OuMoments {
    double mean;
    double std;
};

struct OuParams {
    double rate;   ///< kappa or alpha
    double level;  ///< nu or mu
    double vol;    ///< zeta or sigma
};

/// Mean and standard deviation of x_T given x_t for dx = a(level - x)dt + vol dW.
inline OuMoments ou_conditional_moments(double x_t, double t, double T, double rate, double level, double vol) {
    if (!(T >= t)) throw std::invalid_argument("ou_conditional_moments: need T >= t");
    if (!(rate > 0.0) || !(vol >= 0.0)) throw std::invalid_argument("ou_conditional_moments: need rate > 0, vol >= 0");
    const double tau = T - t;
    const double decay = std::exp(-rate * tau);
    // -expm1 keeps the variance accurate for tiny rate * tau
    const double var = vol * vol * (-std::expm1(-2.0 * rate * tau)) / (2.0 * rate);
    return {x_t * decay + level * (1.0 - decay), std::sqrt(var)};
}

inline OuMoments ou_conditional_moments(double x_t, double t, double T, const OuParams& p) {
    return ou_conditional_moments(x_t, t, T, p.rate, p.level, p.vol);
}

struct PathGrid {
    double t0 = 0.0;
    double dt = 1.0 / 365.0;
    std::size_t n_steps = 1;
    std::size_t n_paths = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("PathGrid: dt must be positive");
        if (n_steps < 1 || n_paths < 1) throw std::invalid_argument("PathGrid: need n_steps >= 1 and n_paths >= 1");
    }
    double horizon() const { return t0 + dt * static_cast<double>(n_steps); }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Random source for one path. The stream is a pure function of
/// (seed, path index, stream tag), so scheduling never changes a draw.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t path, std::uint64_t stream = 0)
        : eng_(splitmix64(splitmix64(seed) ^ splitmix64(path * 0x632BE59BD9B4E019ULL + stream))) {}
    double normal() { return gauss_(eng_); }
    double uniform() { return std::generate_canonical<double, 53>(eng_); }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    boost::random::normal_distribution<double> gauss_;
};

/// Row-major n_paths x (n_steps + 1) block of simulated values.
struct PathMatrix {
    std::size_t n_paths = 0, n_cols = 0;
    std::vector<double> data;

    PathMatrix() = default;
    PathMatrix(std::size_t paths, std::size_t cols) : n_paths(paths), n_cols(cols), data(paths * cols) {}
    std::span<double> row(std::size_t i) { return {data.data() + i * n_cols, n_cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * n_cols, n_cols}; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * n_cols + j]; }
};

/// One exact OU transition over dt, precomputed.
struct OuStepper {
    double level, decay, sd;
    OuStepper(const OuParams& p, double dt)
        : level(p.level),
          decay(std::exp(-p.rate * dt)),
          sd(p.vol * std::sqrt(-std::expm1(-2.0 * p.rate * dt) / (2.0 * p.rate))) {}
    double operator()(double x, double z) const { return level + (x - level) * decay + sd * z; }
};

inline void simulate_ou_path(double x0, const OuParams& p, const PathGrid& grid, std::size_t path,
                             std::span<double> out) {
    PathRng rng(grid.seed, path, 0);
    const OuStepper step(p, grid.dt);
    out[0] = x0;
    for (std::size_t j = 1; j <= grid.n_steps; ++j) out[j] = step(out[j - 1], rng.normal());
}

/// Exact-transition OU paths, one row per path.
inline PathMatrix simulate_ou(double x0, const OuParams& p, const PathGrid& grid, unsigned threads = 0) {
    grid.validate();
    if (!(p.rate > 0.0) || !(p.vol >= 0.0)) throw std::invalid_argument("simulate_ou: need rate > 0, vol >= 0");
    PathMatrix m(grid.n_paths, grid.n_steps + 1);
    parallel_for(grid.n_paths, [&](std::size_t i) { simulate_ou_path(x0, p, grid, i, m.row(i)); }, threads);
    return m;
}

/// Spot price along a given storage path: dS = (rS + delta)dt + sigma S dW.
/// The GBM part is exact; the storage integral over each step is trapezoidal.
/// Uses stream 1 of the path's generator so it never shares draws with delta.
inline std::vector<double> simulate_spot_martingale(double S0, std::span<const double> delta_path, double r,
                                                    double sigma, const PathGrid& grid, std::size_t path = 0) {
    grid.validate();
    if (!(S0 > 0.0)) throw std::invalid_argument("simulate_spot_martingale: S0 must be positive");
    if (delta_path.size() != grid.n_steps + 1)
        throw std::invalid_argument("simulate_spot_martingale: delta path length must be n_steps + 1");
    PathRng rng(grid.seed, path, 1);
    const double drift = (r - 0.5 * sigma * sigma) * grid.dt, vol = sigma * std::sqrt(grid.dt);
    std::vector<double> s(grid.n_steps + 1);
    s[0] = S0;
    for (std::size_t j = 1; j <= grid.n_steps; ++j) {
        const double g = std::exp(drift + vol * rng.normal());
        s[j] = s[j - 1] * g + 0.5 * grid.dt * (delta_path[j - 1] * g + delta_path[j]);
    }
    return s;
}

inline PathMatrix simulate_spot_martingale(double S0, const PathMatrix& delta, double r, double sigma,
                                          const PathGrid& grid) {
    if (delta.n_paths != grid.n_paths) throw std::invalid_argument("simulate_spot_martingale: path count mismatch");
    PathMatrix m(grid.n_paths, grid.n_steps + 1);
    parallel_for(grid.n_paths, [&](std::size_t i) {
        auto s = simulate_spot_martingale(S0, delta.row(i), r, sigma, grid, i);
        std::copy(s.begin(), s.end(), m.row(i).begin());
    });
    return m;
}

/// M_T = e^{-rT} S_T - int_0^T delta_u e^{-ru} du along one path (trapezoid).
inline double discounted_gain(std::span<const double> spot, std::span<const double> delta, double r,
                              const PathGrid& grid) {
    double integral = 0.0;
    for (std::size_t j = 1; j < spot.size(); ++j) {
        const double t0 = grid.t0 + grid.dt * static_cast<double>(j - 1), t1 = t0 + grid.dt;
        integral += 0.5 * grid.dt * (delta[j - 1] * std::exp(-r * t0) + delta[j] * std::exp(-r * t1));
    }
    return std::exp(-r * (grid.t0 + grid.dt * static_cast<double>(spot.size() - 1))) * spot.back() - integral;
}

}  // namespace grainbasis
