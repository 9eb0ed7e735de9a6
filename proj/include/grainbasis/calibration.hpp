#pragma once

// Least-squares fit of either model to one observed futures curve.
//
// Constraints are removed by a smooth change of variables: box parameters go
// through a logistic map (log-scaled for rates), and the regularity bounds
// zeta^2 <= 2 kappa, sigma < sqrt(2 alpha) are enforced by writing the
// volatility as sqrt(2 * rate) times a logistic factor. Each start runs the
// GSL simplex minimiser with restarts; starts are a Latin hypercube over the
// boxes, optionally led by a user guess.

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grainbasis/martingale.hpp"
#include "grainbasis/parallel.hpp"
#include "grainbasis/xou.hpp"

namespace grainbasis {

/// Observed futures prices against years to maturity, with the spot they are quoted against.
struct FuturesCurve {
    std::string as_of;
    std::vector<double> maturities;
    std::vector<double> prices;
    std::vector<double> weights;  ///< empty means all ones
    double spot = 0.0;

    void validate() const {
        if (!(spot > 0.0) || !std::isfinite(spot)) throw std::invalid_argument("FuturesCurve: spot must be positive");
        if (maturities.size() != prices.size())
            throw std::invalid_argument("FuturesCurve: maturities and prices differ in length");
        if (!weights.empty() && weights.size() != prices.size())
            throw std::invalid_argument("FuturesCurve: weights and prices differ in length");
        for (std::size_t k = 0; k < maturities.size(); ++k) {
            if (!(maturities[k] >= 0.0) || !std::isfinite(maturities[k]))
                throw std::invalid_argument("FuturesCurve: maturities must be finite and non-negative");
            if (!(prices[k] > 0.0) || !std::isfinite(prices[k]))
                throw std::invalid_argument("FuturesCurve: prices must be positive");
            if (!weights.empty() && (!(weights[k] >= 0.0) || !std::isfinite(weights[k])))
                throw std::invalid_argument("FuturesCurve: weights must be non-negative");
            if (k > 0 && maturities[k] == maturities[k - 1]) {
                std::ostringstream os;
                os << "FuturesCurve: duplicate maturity " << maturities[k];
                throw std::invalid_argument(os.str());
            }
            if (k > 0 && maturities[k] < maturities[k - 1])
                throw std::invalid_argument("FuturesCurve: maturities must be increasing");
        }
        if (!maturities.empty() && maturities.front() == 0.0 &&
            std::abs(prices.front() - spot) > 1e-9 * std::max(1.0, spot))
            throw std::invalid_argument("FuturesCurve: the T = 0 price must equal the spot");
    }
    double weight(std::size_t k) const { return weights.empty() ? 1.0 : weights[k]; }
    /// points carrying information beyond the spot itself
    std::size_t informative_points() const {
        return static_cast<std::size_t>(std::count_if(maturities.begin(), maturities.end(), [](double t) { return t > 0.0; }));
    }
};

struct MartingaleExogenous {
    double r = 0.017;
    double sigma = 0.2;  ///< does not enter futures prices
    double delta_hat = 0.55;
    double c1 = 0.0;
    double c2 = 0.0;
};

struct XouExogenous {
    double r = 0.017;
    double delta_hat = 55.0;
    double c1 = 0.0;
    double c2 = 0.0;
};

struct ParamBox {
    double lo, hi;
};

struct CalibrationOptions {
    std::size_t n_starts = 32;
    std::uint64_t seed = 1;
    std::size_t max_evals_per_start = 3000;
    double size_tol = 1e-9;  ///< simplex size in transformed coordinates
    unsigned threads = 0;
    std::optional<std::vector<double>> initial_guess;  ///< natural parameters, projected into the feasible set

    // Default boxes. Price-level parameters are quoted per unit of the curve
    // (cents for the corn curves), so "$5/bu/yr" becomes 500.
    double units_per_dollar = 100.0;
    ParamBox rate{1e-4, 5.0};          ///< kappa, alpha
    std::optional<ParamBox> level;     ///< nu, gamma; default +-5 dollars
    std::optional<ParamBox> slope;     ///< beta; default [0, 5 dollars]
    std::optional<ParamBox> delta0;    ///< start box for delta_0; default as level
    ParamBox log_mean{2.302585092994046, 8.006367567650246};  ///< mu: log 10 to log 3000

    ParamBox level_box() const { return level.value_or(ParamBox{-5.0 * units_per_dollar, 5.0 * units_per_dollar}); }
    ParamBox slope_box() const { return slope.value_or(ParamBox{0.0, 5.0 * units_per_dollar}); }
    ParamBox delta0_box() const { return delta0.value_or(level_box()); }

    void validate() const {
        auto ok = [](ParamBox b) { return std::isfinite(b.lo) && std::isfinite(b.hi) && b.lo < b.hi; };
        if (!ok(rate) || !(rate.lo > 0.0)) throw std::invalid_argument("CalibrationOptions: rate box must be 0 < lo < hi");
        if (!ok(level_box()) || !ok(slope_box()) || !ok(delta0_box()) || !ok(log_mean))
            throw std::invalid_argument("CalibrationOptions: every box needs finite lo < hi");
        if (slope_box().lo < 0.0) throw std::invalid_argument("CalibrationOptions: beta must stay non-negative");
        if (n_starts < 1) throw std::invalid_argument("CalibrationOptions: need at least one start");
        if (!(size_tol > 0.0)) throw std::invalid_argument("CalibrationOptions: size_tol must be positive");
    }
};

struct CalibrationResult {
    std::string model;
    std::vector<std::string> names;
    std::vector<double> fitted;
    double sse = std::numeric_limits<double>::infinity();
    std::size_t n_starts = 0;
    bool converged = false;
    bool under_determined = false;
    std::vector<double> per_point_residuals;  ///< model minus observed
    std::vector<double> start_sse;            ///< objective at each start's initial point
    std::vector<double> final_sse;            ///< objective at each start's end point
    std::vector<std::size_t> start_evaluations;
    std::size_t best_start = 0;
    std::size_t evaluations = 0;
};

// ---- model curves -----------------------------------------------------------

inline std::vector<double> martingale_curve(const MartingaleParams& p, double delta0, double spot,
                                            const std::vector<double>& maturities,
                                            FuturesMethod method = FuturesMethod::truncated_normal) {
    MartingalePricer pr(p);
    std::vector<double> out;
    out.reserve(maturities.size());
    for (double T : maturities) out.push_back(pr.futures_price({spot, delta0}, 0.0, T, method));
    return out;
}

inline std::vector<double> xou_curve(const XouParams& p, const XouThresholds& thr, double u0,
                                     const std::vector<double>& maturities,
                                     FuturesMethod method = FuturesMethod::truncated_normal) {
    XouPricer pr(p, thr);
    std::vector<double> out;
    out.reserve(maturities.size());
    for (double T : maturities) out.push_back(pr.futures_price(u0, 0.0, T, method));
    return out;
}

inline double weighted_sse(const FuturesCurve& c, const std::vector<double>& model) {
    double s = 0.0;
    for (std::size_t k = 0; k < model.size(); ++k) s += c.weight(k) * (model[k] - c.prices[k]) * (model[k] - c.prices[k]);
    return s;
}

inline MartingaleParams martingale_params(const std::vector<double>& x, const MartingaleExogenous& e) {
    MartingaleParams p;
    p.r = e.r;
    p.sigma = e.sigma;
    p.nu = x.at(0);
    p.kappa = x.at(1);
    p.zeta = x.at(2);
    p.delta_hat = e.delta_hat;
    p.c1 = e.c1;
    p.c2 = e.c2;
    return p;
}

inline XouParams xou_params(const std::vector<double>& x, const XouExogenous& e) {
    XouParams p;
    p.r = e.r;
    p.beta = x.at(0);
    p.gamma = x.at(1);
    p.mu = x.at(2);
    p.alpha = x.at(3);
    p.sigma = x.at(4);
    p.delta_hat = e.delta_hat;
    p.c1 = e.c1;
    p.c2 = e.c2;
    return p;
}

/// SSE of the martingale model with natural parameters (nu, kappa, zeta, delta_0).
inline double martingale_sse(const FuturesCurve& c, const std::vector<double>& x, const MartingaleExogenous& e) {
    return weighted_sse(c, martingale_curve(martingale_params(x, e), x.at(3), c.spot, c.maturities));
}

/// SSE of the XOU model with natural parameters (beta, gamma, mu, alpha, sigma).
inline double xou_sse(const FuturesCurve& c, const std::vector<double>& x, const XouExogenous& e) {
    const auto p = xou_params(x, e);
    return weighted_sse(c, xou_curve(p, solve_xou_thresholds(p), std::log(c.spot), c.maturities));
}

// ---- reparameterisation -----------------------------------------------------

namespace detail {

inline double logistic(double t) { return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }
inline double logit(double u) { return std::log(u / (1.0 - u)); }

// keep projected starts strictly inside so logit stays finite
constexpr double kInterior = 1e-9;

inline double clamp_unit(double u) { return std::clamp(u, kInterior, 1.0 - kInterior); }

inline double from_box(double t, ParamBox b) { return b.lo + (b.hi - b.lo) * logistic(t); }
inline double to_box(double x, ParamBox b) { return logit(clamp_unit((x - b.lo) / (b.hi - b.lo))); }
inline double from_log_box(double t, ParamBox b) { return std::exp(std::log(b.lo) + std::log(b.hi / b.lo) * logistic(t)); }
inline double to_log_box(double x, ParamBox b) {
    return logit(clamp_unit((std::log(std::max(x, 1e-300)) - std::log(b.lo)) / std::log(b.hi / b.lo)));
}
// vol = sqrt(2 rate) * factor with factor in (0, 1)
inline double from_vol(double t, double rate) { return std::sqrt(2.0 * rate) * logistic(t); }
inline double to_vol(double vol, double rate) { return logit(clamp_unit(vol / std::sqrt(2.0 * rate))); }

struct Transform {
    std::function<std::vector<double>(const std::vector<double>&)> to_natural;
    std::function<std::vector<double>(const std::vector<double>&)> to_free;
    std::function<std::vector<double>(const std::vector<double>&)> unit_to_natural;  ///< LHS point -> natural
};

inline Transform martingale_transform(const CalibrationOptions& o) {
    const auto lv = o.level_box(), d0 = o.delta0_box();
    const auto rate = o.rate;
    const double d_scale = std::max(1.0, 0.5 * (d0.hi - d0.lo));
    Transform t;
    t.to_natural = [=](const std::vector<double>& f) {
        const double kappa = from_log_box(f[1], rate);
        return std::vector<double>{from_box(f[0], lv), kappa, from_vol(f[2], kappa), f[3] * d_scale};
    };
    t.to_free = [=](const std::vector<double>& x) {
        return std::vector<double>{to_box(x[0], lv), to_log_box(x[1], rate), to_vol(x[2], from_log_box(to_log_box(x[1], rate), rate)),
                                   x[3] / d_scale};
    };
    t.unit_to_natural = [=](const std::vector<double>& u) {
        const double kappa = std::exp(std::log(rate.lo) + std::log(rate.hi / rate.lo) * u[1]);
        return std::vector<double>{lv.lo + (lv.hi - lv.lo) * u[0], kappa, std::sqrt(2.0 * kappa) * clamp_unit(u[2]),
                                   d0.lo + (d0.hi - d0.lo) * u[3]};
    };
    return t;
}

inline Transform xou_transform(const CalibrationOptions& o) {
    const auto sl = o.slope_box(), lv = o.level_box(), mu = o.log_mean, rate = o.rate;
    Transform t;
    t.to_natural = [=](const std::vector<double>& f) {
        const double alpha = from_log_box(f[3], rate);
        return std::vector<double>{from_box(f[0], sl), from_box(f[1], lv), from_box(f[2], mu), alpha, from_vol(f[4], alpha)};
    };
    t.to_free = [=](const std::vector<double>& x) {
        const double fa = to_log_box(x[3], rate);
        return std::vector<double>{to_box(x[0], sl), to_box(x[1], lv), to_box(x[2], mu), fa, to_vol(x[4], from_log_box(fa, rate))};
    };
    t.unit_to_natural = [=](const std::vector<double>& u) {
        const double alpha = std::exp(std::log(rate.lo) + std::log(rate.hi / rate.lo) * u[3]);
        return std::vector<double>{sl.lo + (sl.hi - sl.lo) * u[0], lv.lo + (lv.hi - lv.lo) * u[1],
                                   mu.lo + (mu.hi - mu.lo) * u[2], alpha, std::sqrt(2.0 * alpha) * clamp_unit(u[4])};
    };
    return t;
}

/// n points of a Latin hypercube in [0,1]^dim, one stratum per start in every coordinate.
inline std::vector<std::vector<double>> latin_hypercube(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
    std::vector<std::size_t> perm(n);
    for (std::size_t d = 0; d < dim; ++d) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t i = 0; i < n; ++i) pts[i][d] = (static_cast<double>(perm[i]) + U(rng)) / static_cast<double>(n);
    }
    return pts;
}

struct SimplexOutcome {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
    std::size_t evals = 0;
    bool converged = false;
};

constexpr double kPenalty = 1e30;

/// GSL nmsimplex2, restarted from the incumbent with a smaller simplex while
/// restarts keep improving.
inline SimplexOutcome simplex_minimize(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& x0, std::size_t max_evals, double size_tol,
                                       double f_floor = 0.0) {
    const std::size_t n = x0.size();
    struct Ctx {
        const std::function<double(const std::vector<double>&)>* f;
        std::vector<double> buf;
        std::size_t evals = 0;
    } ctx{&f, std::vector<double>(n), 0};
    auto call = [](const gsl_vector* v, void* params) {
        auto* c = static_cast<Ctx*>(params);
        for (std::size_t i = 0; i < c->buf.size(); ++i) c->buf[i] = gsl_vector_get(v, i);
        ++c->evals;
        const double y = (*c->f)(c->buf);
        return std::isfinite(y) ? std::min(y, kPenalty) : kPenalty;
    };
    gsl_multimin_function fn{call, n, &ctx};

    SimplexOutcome out;
    out.x = x0;
    {
        ++ctx.evals;
        const double y = f(x0);
        out.f = std::isfinite(y) ? std::min(y, kPenalty) : kPenalty;
    }
    gsl_vector* x = gsl_vector_alloc(n);
    gsl_vector* step = gsl_vector_alloc(n);
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
    double step_size = 1.0;
    for (int round = 0; round < 8 && ctx.evals < max_evals; ++round, step_size *= 0.3) {
        for (std::size_t i = 0; i < n; ++i) {
            gsl_vector_set(x, i, out.x[i]);
            gsl_vector_set(step, i, step_size);
        }
        if (gsl_multimin_fminimizer_set(s, &fn, x, step) != GSL_SUCCESS) break;
        bool done = false;
        // flat directions (e.g. beta, gamma once the band collapses) never
        // shrink the simplex, so stagnation of the best value also ends a round
        const std::size_t patience = 30 * n;
        double mark = s->fval;
        std::size_t since = 0;
        while (ctx.evals < max_evals) {
            if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
            if (s->fval <= f_floor || gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), size_tol) == GSL_SUCCESS) {
                done = true;
                break;
            }
            if (mark - s->fval > 1e-10 * (std::abs(s->fval) + f_floor)) {
                mark = s->fval;
                since = 0;
            } else if (++since >= patience) {
                done = true;
                break;
            }
        }
        const double before = out.f;
        if (s->fval < out.f) {
            out.f = s->fval;
            for (std::size_t i = 0; i < n; ++i) out.x[i] = gsl_vector_get(s->x, i);
        }
        out.converged = done;
        if (!done || out.f <= f_floor || before - out.f <= 1e-10 * (1.0 + out.f)) break;
    }
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(step);
    gsl_vector_free(x);
    out.evals = ctx.evals;
    return out;
}

using Objective = std::function<double(const std::vector<double>&)>;

// make_objective() hands each start its own (possibly caching) objective on
// natural parameters; exact_sse recomputes the winner from scratch.
inline CalibrationResult run_calibration(std::string model, std::vector<std::string> names, const FuturesCurve& curve,
                                         const CalibrationOptions& o, const Transform& tr,
                                         const std::function<Objective()>& make_objective,
                                         const std::function<std::vector<double>(const std::vector<double>&)>& model_curve) {
    curve.validate();
    if (curve.prices.empty()) throw std::invalid_argument("calibrate: empty curve");
    o.validate();
    gsl_set_error_handler_off();
    const std::size_t dim = names.size();

    auto pts = latin_hypercube(o.n_starts, dim, o.seed);
    std::vector<std::vector<double>> starts(o.n_starts);
    for (std::size_t i = 0; i < o.n_starts; ++i) starts[i] = tr.to_free(tr.unit_to_natural(pts[i]));
    if (o.initial_guess) {
        if (o.initial_guess->size() != dim) throw std::invalid_argument("calibrate: initial guess has the wrong size");
        for (double v : *o.initial_guess)
            if (!std::isfinite(v)) throw std::invalid_argument("calibrate: non-finite initial guess");
        starts[0] = tr.to_free(*o.initial_guess);
    }

    // an exact fit, to about 1e-12 relative per point, ends a start early
    double f_floor = 0.0;
    for (std::size_t k = 0; k < curve.prices.size(); ++k) f_floor += curve.weight(k) * curve.prices[k] * curve.prices[k];
    f_floor *= 1e-24;

    std::vector<SimplexOutcome> runs(o.n_starts);
    std::vector<double> start_sse(o.n_starts);
    parallel_for(o.n_starts, [&](std::size_t i) {
        auto obj = make_objective();
        auto free_obj = [&](const std::vector<double>& t) {
            try {
                return obj(tr.to_natural(t));
            } catch (const std::exception&) {
                return kPenalty;
            }
        };
        start_sse[i] = free_obj(starts[i]);
        runs[i] = simplex_minimize(free_obj, starts[i], o.max_evals_per_start, o.size_tol, f_floor);
    }, o.threads);

    CalibrationResult res;
    res.model = std::move(model);
    res.names = std::move(names);
    res.n_starts = o.n_starts;
    res.start_sse = start_sse;
    res.under_determined = curve.informative_points() < dim;
    for (const auto& r : runs) {
        res.final_sse.push_back(r.f);
        res.start_evaluations.push_back(r.evals);
        res.evaluations += r.evals;
    }
    // best first, ties to the lowest start index
    std::vector<std::size_t> order(o.n_starts);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return runs[a].f < runs[b].f; });
    for (std::size_t i : order) {
        if (!(runs[i].f < kPenalty)) break;
        const auto x = tr.to_natural(runs[i].x);
        try {
            const auto fitted = model_curve(x);
            res.per_point_residuals.clear();
            for (std::size_t k = 0; k < fitted.size(); ++k) res.per_point_residuals.push_back(fitted[k] - curve.prices[k]);
            res.sse = weighted_sse(curve, fitted);
        } catch (const std::exception&) {
            continue;
        }
        res.fitted = x;
        res.best_start = i;
        res.converged = runs[i].converged && std::isfinite(res.sse);
        return res;
    }
    throw SolverError("calibrate: every start failed", 0.0, 0.0);
}

}  // namespace detail

/// Fit (nu, kappa, zeta, delta_0) of the martingale model.
inline CalibrationResult calibrate_martingale(const FuturesCurve& curve, const MartingaleExogenous& exo,
                                              const CalibrationOptions& o = {}) {
    MartingaleParams check = martingale_params({0.0, 1.0, 0.1, 0.0}, exo);
    check.validate();
    auto model_curve = [&](const std::vector<double>& x) {
        return martingale_curve(martingale_params(x, exo), x[3], curve.spot, curve.maturities);
    };
    auto make = [&]() -> detail::Objective {
        return [&](const std::vector<double>& x) { return weighted_sse(curve, model_curve(x)); };
    };
    return detail::run_calibration("martingale", {"nu", "kappa", "zeta", "delta0"}, curve, o,
                                   detail::martingale_transform(o), make, model_curve);
}

/// Fit (beta, gamma, mu, alpha, sigma) of the XOU model; U_0 = log spot.
inline CalibrationResult calibrate_xou(const FuturesCurve& curve, const XouExogenous& exo,
                                       const CalibrationOptions& o = {}) {
    XouParams check = xou_params({0.1, 0.0, 3.0, 0.1, 0.1}, exo);
    check.validate();
    const double u0 = std::log(curve.spot);
    auto model_curve = [&, u0](const std::vector<double>& x) {
        const auto p = xou_params(x, exo);
        return xou_curve(p, solve_xou_thresholds(p), u0, curve.maturities);
    };
    auto make = [&, u0]() -> detail::Objective {
        // the band of the previous evaluation seeds the next solve
        auto last = std::make_shared<std::optional<XouThresholds>>();
        return [&, u0, last](const std::vector<double>& x) {
            const auto p = xou_params(x, exo);
            const auto thr = solve_xou_thresholds(p, last->has_value() ? &**last : nullptr);
            if (!thr.degenerate) *last = thr;
            return weighted_sse(curve, xou_curve(p, thr, u0, curve.maturities));
        };
    };
    return detail::run_calibration("xou", {"beta", "gamma", "mu", "alpha", "sigma"}, curve, o, detail::xou_transform(o),
                                   make, model_curve);
}

}  // namespace grainbasis
