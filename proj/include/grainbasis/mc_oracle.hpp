#pragma once

// Monte-Carlo valuation of threshold policies, independent of the closed
// forms. A policy is two stopping rules: the certificate holder exercises
// (pays c1, starts paying the market storage rate) the first time the state
// leaves the exercise interval, then liquidates (collects spot - c2) the first
// time it leaves the liquidation interval. Hitting is detected at the first
// grid crossing, without bridge correction, so barriers are slightly overshot.
//
// Perpetual problems are truncated at a horizon T_max. Paths still running
// there contribute a per-path tail bound e^{-r T_max} * cap(state) to
// truncation_bound instead of a payoff.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "grainbasis/martingale.hpp"
#include "grainbasis/parallel.hpp"
#include "grainbasis/processes.hpp"
#include "grainbasis/xou.hpp"

namespace grainbasis {

/// Continue while lo < x < hi; stop otherwise.
struct StoppingRule {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    static StoppingRule never() { return {}; }
    static StoppingRule immediately() { return {0.0, 0.0}; }
    /// stop once x <= level
    static StoppingRule at_or_below(double level) { return {level, std::numeric_limits<double>::infinity()}; }
    /// stop once x >= level
    static StoppingRule at_or_above(double level) { return {-std::numeric_limits<double>::infinity(), level}; }
    /// stop once x leaves (lo, hi); an empty interval stops at once
    static StoppingRule outside(double lo, double hi) { return {lo, hi}; }

    bool stops(double x) const { return !(lo < x && x < hi); }
    bool is_never() const { return std::isinf(lo) && lo < 0 && std::isinf(hi) && hi > 0; }
    bool is_immediate() const { return !(lo < hi); }
    void validate() const {
        if (std::isnan(lo) || std::isnan(hi)) throw std::invalid_argument("StoppingRule: NaN threshold");
        if (lo == std::numeric_limits<double>::infinity() || hi == -std::numeric_limits<double>::infinity())
            throw std::invalid_argument("StoppingRule: infinite threshold on the wrong side");
    }
};

struct PolicySpec {
    StoppingRule exercise = StoppingRule::immediately();
    StoppingRule liquidation = StoppingRule::never();
    bool holding_grain = false;  ///< start after exercise, i.e. value the grain rather than the certificate
    double horizon_cap = 0.0;    ///< T_max in years; 0 derives it from tail_tol
    double tail_tol = 1e-4;      ///< relative tail target used when deriving T_max
};

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    double truncation_bound = 0.0;
    double horizon = 0.0;
    std::size_t n_paths = 0;
    double alive_fraction = 0.0;  ///< share of paths still running at the horizon
};

struct GridSearchResult {
    std::vector<double> candidates;
    std::vector<double> values;
    std::vector<double> std_errors;
    std::size_t argmax = 0;
    double best = 0.0;
    double truncation_bound = 0.0;  ///< largest over candidates
    double unimodality_deviation = 0.0;  ///< sup distance to the best unimodal fit, in standard errors
};

constexpr double kOracleMaxStep = 1.0 / 365.0;

namespace detail {

inline void check_oracle_grid(const PathGrid& grid) {
    grid.validate();
    if (grid.dt > kOracleMaxStep * (1.0 + 1e-12))
        throw std::invalid_argument("mc_oracle: dt coarser than 1/365 is rejected for oracle runs");
}

inline double derive_horizon(const PolicySpec& pol, double r, double cap0, double scale) {
    if (pol.horizon_cap > 0.0) return pol.horizon_cap;
    if (!(pol.tail_tol > 0.0)) throw std::invalid_argument("PolicySpec: tail_tol must be positive");
    const double t = std::log(cap0 / (pol.tail_tol * std::max(scale, 1e-12))) / r;
    return std::clamp(t, 1.0, 2000.0);
}

struct PathOutcome {
    double payoff = 0.0;
    double tail = 0.0;  ///< e^{-rT} cap if the path was still running at the horizon
};

inline McEstimate summarize(const std::vector<PathOutcome>& out, double shift, double horizon) {
    McEstimate e;
    e.n_paths = out.size();
    e.horizon = horizon;
    const double n = static_cast<double>(out.size());
    double sum = 0.0, tail = 0.0;
    std::size_t alive = 0;
    for (const auto& o : out) {
        sum += o.payoff;
        tail += o.tail;
        alive += o.tail > 0.0;
    }
    const double mean = sum / n;
    double ss = 0.0;
    bool constant = true;
    for (const auto& o : out) {
        ss += (o.payoff - mean) * (o.payoff - mean);
        constant = constant && o.payoff == out.front().payoff;
    }
    if (constant) ss = 0.0;
    e.estimate = shift + mean;
    e.std_error = out.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    e.truncation_bound = tail / n;
    e.alive_fraction = static_cast<double>(alive) / n;
    return e;
}

// Bound on |E[remaining certificate premium]| from storage state x:
// int E|delta_u - dhat| e^{-ru} du <= |x - nu|/(kappa + r) + (|nu - dhat| + sd_inf)/r.
inline double martingale_cap(const MartingaleParams& p, double x) {
    return std::abs(x - p.nu) / (p.kappa + p.r) + (std::abs(p.nu - p.delta_hat) + p.zeta / std::sqrt(2.0 * p.kappa)) / p.r +
           p.c1 + p.c2;
}

inline double xou_cap(const XouParams& p, const PolicySpec& pol, double u) {
    const double sd = p.sigma / std::sqrt(2.0 * p.alpha);
    double top = std::max(u, p.mu);
    if (!pol.liquidation.is_never() && std::isfinite(pol.liquidation.hi)) top = std::max(top, pol.liquidation.hi);
    const double storage = p.delta_hat + p.beta * (std::abs(u) + std::abs(p.mu) + sd) + std::abs(p.gamma);
    return std::exp(top + 0.5 * sd * sd) + p.c1 + p.c2 + storage / p.r;
}

// Pool-adjacent-violators fit, nondecreasing, unweighted.
inline std::vector<double> isotonic_increasing(const std::vector<double>& y) {
    std::vector<double> level;
    std::vector<std::size_t> width;
    for (double v : y) {
        level.push_back(v);
        width.push_back(1);
        while (level.size() > 1 && level[level.size() - 2] > level.back()) {
            const std::size_t w = width[width.size() - 2] + width.back();
            const double m = (level[level.size() - 2] * width[width.size() - 2] + level.back() * width.back()) / w;
            level.pop_back();
            width.pop_back();
            level.back() = m;
            width.back() = w;
        }
    }
    std::vector<double> fit;
    for (std::size_t i = 0; i < level.size(); ++i) fit.insert(fit.end(), width[i], level[i]);
    return fit;
}

inline double unimodal_deviation(const std::vector<double>& v, std::size_t peak) {
    std::vector<double> left(v.begin(), v.begin() + peak + 1), right(v.begin() + peak, v.end());
    std::reverse(right.begin(), right.end());
    const auto fl = isotonic_increasing(left), fr = isotonic_increasing(right);
    double dev = 0.0;
    for (std::size_t i = 0; i < left.size(); ++i) dev = std::max(dev, std::abs(left[i] - fl[i]));
    for (std::size_t i = 0; i < right.size(); ++i) dev = std::max(dev, std::abs(right[i] - fr[i]));
    return dev;
}

inline GridSearchResult finish_grid(std::vector<double> candidates, const std::vector<double>& pay,
                                    const std::vector<double>& tails, std::size_t n_paths, double shift) {
    const std::size_t k = candidates.size();
    GridSearchResult g;
    g.candidates = std::move(candidates);
    g.values.assign(k, 0.0);
    g.std_errors.assign(k, 0.0);
    const double n = static_cast<double>(n_paths);
    for (std::size_t c = 0; c < k; ++c) {
        double sum = 0.0, tail = 0.0;
        for (std::size_t i = 0; i < n_paths; ++i) {
            sum += pay[i * k + c];
            tail += tails[i * k + c];
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (std::size_t i = 0; i < n_paths; ++i) ss += (pay[i * k + c] - mean) * (pay[i * k + c] - mean);
        g.values[c] = shift + mean;
        g.std_errors[c] = n_paths > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
        g.truncation_bound = std::max(g.truncation_bound, tail / n);
    }
    // ties go to the lowest index
    g.argmax = static_cast<std::size_t>(std::max_element(g.values.begin(), g.values.end()) - g.values.begin());
    g.best = g.candidates[g.argmax];
    const double se = *std::max_element(g.std_errors.begin(), g.std_errors.end());
    const double dev = unimodal_deviation(g.values, g.argmax);
    g.unimodality_deviation = dev == 0.0 ? 0.0 : (se > 0.0 ? dev / se : std::numeric_limits<double>::infinity());
    return g;
}

inline std::vector<std::size_t> order_by(const std::vector<double>& c, bool descending) {
    std::vector<std::size_t> idx(c.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return descending ? c[a] > c[b] : c[a] < c[b]; });
    return idx;
}

}  // namespace detail

/// Martingale model. While the grain is held forever (or sold at exercise),
/// the identity E[e^{-r tau}S_tau - int_0^tau delta e^{-ru}du] = S gives
///     value = S + E[int_0^tau (delta - dhat)e^{-ru}du - c1 e^{-r tau}] (- c2 E[e^{-r tau}] if sold),
/// so only delta is simulated. A finite liquidation threshold switches to
/// simulating the spot as well; a path still holding grain at the horizon is
/// then credited e^{-rT}S_T, which is the optimal continuation value.
inline McEstimate value_policy(const MartingaleState& s, const MartingaleParams& p, const PolicySpec& pol,
                               const PathGrid& grid, unsigned threads = 0) {
    p.validate();
    pol.exercise.validate();
    pol.liquidation.validate();
    detail::check_oracle_grid(grid);
    if (!(s.S > 0.0) || !std::isfinite(s.delta)) throw std::invalid_argument("value_policy: invalid state");

    const bool identity = pol.liquidation.is_never() || pol.liquidation.is_immediate();
    const bool sell_at_exercise = pol.liquidation.is_immediate();
    const double horizon = detail::derive_horizon(pol, p.r, detail::martingale_cap(p, s.delta), s.S);
    const auto n_steps = static_cast<std::size_t>(std::ceil(horizon / grid.dt));
    const OuStepper step(p.storage(), grid.dt);
    const double step_disc = std::exp(-p.r * grid.dt), half = 0.5 * grid.dt;
    const double drift = (p.r - 0.5 * p.sigma * p.sigma) * grid.dt, vol = p.sigma * std::sqrt(grid.dt);

    std::vector<detail::PathOutcome> out(grid.n_paths);
    parallel_for(grid.n_paths, [&](std::size_t i) {
        PathRng rng(grid.seed, i, 0);
        PathRng spot_rng(grid.seed, i, 1);
        double x = s.delta, S = s.S, disc = 1.0, pay = 0.0;
        bool certificate = !pol.holding_grain;
        auto settle = [&]() {  // returns true when the path is finished
            if (certificate && pol.exercise.stops(x)) {
                pay -= p.c1 * disc;
                certificate = false;
                if (identity) {
                    if (sell_at_exercise) pay -= p.c2 * disc;
                    return true;
                }
            }
            if (!certificate && !identity && pol.liquidation.stops(x)) {
                pay += disc * (S - p.c2);
                return true;
            }
            if (!certificate && identity) return true;  // grain held forever: J = S
            return false;
        };
        if (settle()) {
            out[i].payoff = pay;
            return;
        }
        for (std::size_t j = 0; j < n_steps; ++j) {
            const double xn = step(x, rng.normal()), dn = disc * step_disc;
            if (identity) {
                pay += half * (disc * (x - p.delta_hat) + dn * (xn - p.delta_hat));
            } else {
                const double g = std::exp(drift + vol * spot_rng.normal());
                S = S * g + half * (x * g + xn);
                pay -= certificate ? half * p.delta_hat * (disc + dn) : half * (disc * x + dn * xn);
            }
            x = xn;
            disc = dn;
            if (settle()) {
                out[i].payoff = pay;
                return;
            }
        }
        if (identity) {
            out[i].payoff = pay;
            out[i].tail = disc * detail::martingale_cap(p, x);
        } else {
            out[i].payoff = pay + disc * S;
            out[i].tail = disc * (certificate ? detail::martingale_cap(p, x) : p.c2);
        }
    }, threads);
    return detail::summarize(out, identity ? s.S : 0.0, horizon);
}

/// XOU model: pay dhat until exercise, then beta U + gamma until liquidation,
/// collect e^U - c2 at liquidation.
inline McEstimate value_policy(double u0, const XouParams& p, const PolicySpec& pol, const PathGrid& grid,
                               unsigned threads = 0) {
    p.validate();
    pol.exercise.validate();
    pol.liquidation.validate();
    detail::check_oracle_grid(grid);
    if (!std::isfinite(u0)) throw std::invalid_argument("value_policy: invalid state");

    const double horizon = detail::derive_horizon(pol, p.r, detail::xou_cap(p, pol, u0), std::exp(u0));
    const auto n_steps = static_cast<std::size_t>(std::ceil(horizon / grid.dt));
    const OuStepper step(p.log_price(), grid.dt);
    const double step_disc = std::exp(-p.r * grid.dt), half = 0.5 * grid.dt;

    std::vector<detail::PathOutcome> out(grid.n_paths);
    parallel_for(grid.n_paths, [&](std::size_t i) {
        PathRng rng(grid.seed, i, 0);
        double u = u0, disc = 1.0, pay = 0.0;
        bool certificate = !pol.holding_grain;
        auto settle = [&]() {
            if (certificate && pol.exercise.stops(u)) {
                pay -= p.c1 * disc;
                certificate = false;
            }
            if (!certificate && pol.liquidation.stops(u)) {
                pay += disc * (std::exp(u) - p.c2);
                return true;
            }
            return false;
        };
        if (settle()) {
            out[i].payoff = pay;
            return;
        }
        for (std::size_t j = 0; j < n_steps; ++j) {
            const double un = step(u, rng.normal()), dn = disc * step_disc;
            pay -= certificate ? half * p.delta_hat * (disc + dn)
                               : half * (disc * p.storage_rate(u) + dn * p.storage_rate(un));
            u = un;
            disc = dn;
            if (settle()) {
                out[i].payoff = pay;
                return;
            }
        }
        out[i].payoff = pay;
        out[i].tail = disc * detail::xou_cap(p, pol, u);
    }, threads);
    return detail::summarize(out, 0.0, horizon);
}

/// Certificate values of "exercise once delta <= theta, hold the grain forever"
/// for every theta in candidates, all on the same paths.
inline GridSearchResult policy_grid_search(const MartingaleState& s, const MartingaleParams& p,
                                           std::vector<double> candidates, const PathGrid& grid,
                                           double horizon_cap = 0.0, unsigned threads = 0) {
    p.validate();
    detail::check_oracle_grid(grid);
    if (candidates.empty()) throw std::invalid_argument("policy_grid_search: no candidates");
    for (double c : candidates)
        if (!std::isfinite(c)) throw std::invalid_argument("policy_grid_search: non-finite candidate");
    PolicySpec pol;
    pol.horizon_cap = horizon_cap;
    const double horizon = detail::derive_horizon(pol, p.r, detail::martingale_cap(p, s.delta), s.S);
    const auto n_steps = static_cast<std::size_t>(std::ceil(horizon / grid.dt));
    const std::size_t k = candidates.size();
    const auto order = detail::order_by(candidates, true);  // highest threshold is hit first
    const OuStepper step(p.storage(), grid.dt);
    const double step_disc = std::exp(-p.r * grid.dt), half = 0.5 * grid.dt;

    std::vector<double> pay(grid.n_paths * k, 0.0), tails(grid.n_paths * k, 0.0);
    parallel_for(grid.n_paths, [&](std::size_t i) {
        PathRng rng(grid.seed, i, 0);
        double x = s.delta, disc = 1.0, integral = 0.0;
        std::size_t next = 0;
        auto settle = [&]() {
            while (next < k && x <= candidates[order[next]]) pay[i * k + order[next++]] = integral - p.c1 * disc;
        };
        settle();
        for (std::size_t j = 0; j < n_steps && next < k; ++j) {
            const double xn = step(x, rng.normal()), dn = disc * step_disc;
            integral += half * (disc * (x - p.delta_hat) + dn * (xn - p.delta_hat));
            x = xn;
            disc = dn;
            settle();
        }
        for (; next < k; ++next) {
            pay[i * k + order[next]] = integral;
            tails[i * k + order[next]] = disc * detail::martingale_cap(p, x);
        }
    }, threads);
    return detail::finish_grid(std::move(candidates), pay, tails, grid.n_paths, s.S);
}

/// Grain values of "liquidate once U >= theta" for every theta in candidates,
/// all on the same paths.
inline GridSearchResult policy_grid_search(double u0, const XouParams& p, std::vector<double> candidates,
                                           const PathGrid& grid, double horizon_cap = 0.0, unsigned threads = 0) {
    p.validate();
    detail::check_oracle_grid(grid);
    if (candidates.empty()) throw std::invalid_argument("policy_grid_search: no candidates");
    for (double c : candidates)
        if (!std::isfinite(c)) throw std::invalid_argument("policy_grid_search: non-finite candidate");
    PolicySpec pol;
    pol.horizon_cap = horizon_cap;
    pol.liquidation = StoppingRule::at_or_above(*std::max_element(candidates.begin(), candidates.end()));
    const double horizon = detail::derive_horizon(pol, p.r, detail::xou_cap(p, pol, u0), std::exp(u0));
    const auto n_steps = static_cast<std::size_t>(std::ceil(horizon / grid.dt));
    const std::size_t k = candidates.size();
    const auto order = detail::order_by(candidates, false);  // lowest level is hit first
    const OuStepper step(p.log_price(), grid.dt);
    const double step_disc = std::exp(-p.r * grid.dt), half = 0.5 * grid.dt;

    std::vector<double> pay(grid.n_paths * k, 0.0), tails(grid.n_paths * k, 0.0);
    parallel_for(grid.n_paths, [&](std::size_t i) {
        PathRng rng(grid.seed, i, 0);
        double u = u0, disc = 1.0, storage = 0.0;
        std::size_t next = 0;
        auto settle = [&]() {
            while (next < k && u >= candidates[order[next]])
                pay[i * k + order[next++]] = disc * (std::exp(u) - p.c2) - storage;
        };
        settle();
        for (std::size_t j = 0; j < n_steps && next < k; ++j) {
            const double un = step(u, rng.normal()), dn = disc * step_disc;
            storage += half * (disc * p.storage_rate(u) + dn * p.storage_rate(un));
            u = un;
            disc = dn;
            settle();
        }
        for (; next < k; ++next) {
            pay[i * k + order[next]] = -storage;
            tails[i * k + order[next]] = disc * detail::xou_cap(p, pol, u);
        }
    }, threads);
    return detail::finish_grid(std::move(candidates), pay, tails, grid.n_paths, 0.0);
}

/// E[f(X_T)] for an OU state sampled exactly over one step of length tau.
template <class Fn>
McEstimate mc_terminal_expectation(double x0, const OuParams& p, double tau, std::size_t n_paths, std::uint64_t seed,
                                   Fn&& f, unsigned threads = 0) {
    if (!(tau > 0.0) || n_paths < 2) throw std::invalid_argument("mc_terminal_expectation: need tau > 0, n_paths >= 2");
    const OuStepper step(p, tau);
    std::vector<detail::PathOutcome> out(n_paths);
    parallel_for(n_paths, [&](std::size_t i) {
        PathRng rng(seed, i, 0);
        out[i].payoff = f(step(x0, rng.normal()));
    }, threads);
    return detail::summarize(out, 0.0, tau);
}

/// E[V(S_T, delta_T)] with both the storage rate and the spot simulated.
inline McEstimate mc_martingale_futures(const MartingaleState& s, const MartingalePricer& pricer, double tau,
                                        const PathGrid& grid, unsigned threads = 0) {
    detail::check_oracle_grid(grid);
    const auto& p = pricer.params();
    const auto n_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(tau / grid.dt)));
    const double dt = tau / static_cast<double>(n_steps);
    const OuStepper step(p.storage(), dt);
    const double drift = (p.r - 0.5 * p.sigma * p.sigma) * dt, vol = p.sigma * std::sqrt(dt);
    std::vector<detail::PathOutcome> out(grid.n_paths);
    parallel_for(grid.n_paths, [&](std::size_t i) {
        PathRng rng(grid.seed, i, 0), spot_rng(grid.seed, i, 1);
        double x = s.delta, S = s.S;
        for (std::size_t j = 0; j < n_steps; ++j) {
            const double xn = step(x, rng.normal());
            const double g = std::exp(drift + vol * spot_rng.normal());
            S = S * g + 0.5 * dt * (x * g + xn);
            x = xn;
        }
        out[i].payoff = S + pricer.storage_premium(x);
    }, threads);
    return detail::summarize(out, 0.0, tau);
}

}  // namespace grainbasis
