#pragma once

// XOU model: log spot dU = alpha(mu - U)dt + sigma dW, market storage rate
// delta = beta U + gamma. Grain is liquidated the first time U reaches u*;
// the certificate is exercised when U leaves [u_low, u_high].
//
//   J(u) = A H(u) - K(u)                 u < u*
//        = e^u - c2                      u >= u*
//   K(u) = (beta u + gamma + alpha(beta mu + gamma)/r)/(alpha + r)
//   V(u) = J(u) - c1                     u < u_low
//        = B H(u) + C G(u) - dhat/r      u_low <= u <= u_high
//        = e^u - c1 - c2                 u > u_high
//
// The band is found by shooting upward: for a trial lower edge l, B and C
// are fixed by matching V and V' to J - c1 at l, and the minimum gap between
// that band solution and the exercise-and-liquidate payoff just above u* is
// a sign-changing function of l whose root is u_low; the minimiser is u_high.
// A Newton polish on the two value-matching equations (with B, C from smooth
// pasting at both ends) finishes the job.

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "grainbasis/futures_method.hpp"
#include "grainbasis/numerics.hpp"
#include "grainbasis/processes.hpp"
#include "grainbasis/special_functions.hpp"

namespace grainbasis {

struct XouParams {
    double r = 0.03;
    double alpha = 0.1;
    double mu = 3.4011973816621555;  // log 30
    double sigma = 0.2;
    double beta = 0.08;
    double gamma = 0.0;
    double delta_hat = 0.2;
    double c1 = 0.0;
    double c2 = 0.0;

    void validate() const {
        const double all[] = {r, alpha, mu, sigma, beta, gamma, delta_hat, c1, c2};
        for (double v : all)
            if (!std::isfinite(v)) throw std::invalid_argument("XouParams: non-finite field");
        if (!(r > 0.0)) throw std::invalid_argument("XouParams: r must be positive");
        if (!(alpha > 0.0)) throw std::invalid_argument("XouParams: alpha must be positive");
        if (!(sigma > 0.0)) throw std::invalid_argument("XouParams: sigma must be positive");
        if (!(sigma < std::sqrt(2.0 * alpha)))
            throw std::invalid_argument("XouParams: regularity sigma < sqrt(2 alpha) violated");
        if (!(beta >= 0.0)) throw std::invalid_argument("XouParams: beta must be non-negative");
        if (!(delta_hat > 0.0)) throw std::invalid_argument("XouParams: delta_hat must be positive");
        if (!(c1 >= 0.0) || !(c2 >= 0.0)) throw std::invalid_argument("XouParams: costs must be non-negative");
    }
    OdeParams ode() const { return {alpha, mu, sigma, r}; }
    OuParams log_price() const { return {alpha, mu, sigma}; }
    double k1() const { return beta / (alpha + r); }
    double k0() const { return gamma / (alpha + r) + alpha * (beta * mu + gamma) / (r * (alpha + r)); }
    /// K(u), present value of storing at the market rate forever
    double K(double u) const { return k1() * u + k0(); }
    double storage_rate(double u) const { return beta * u + gamma; }
};

struct XouThresholds {
    double u_star = 0.0;
    double u_low = 0.0;
    double u_high = 0.0;
    double A = 0.0;
    double B = 0.0;
    double C = 0.0;
    bool degenerate = false;  ///< empty band: exercise immediately everywhere
    double liquidation_residual = 0.0;
    double high_residual = 0.0;
    double low_residual = 0.0;
};

struct LiquidationThreshold {
    double u_star;
    double A;
};

namespace detail {

// f(u) = (e^u + k1) H/H'(u) - K(u) - e^u + c2, strictly decreasing; and f'(u)
inline std::pair<double, double> liquidation_equation(const XouParams& p, const FundamentalSolutions& fs, double u) {
    const double l0 = fs.log_H(u), l1 = fs.log_H(u, 1), l2 = fs.log_H(u, 2);
    const double ratio = std::exp(l0 - l1), curv = std::exp(l0 + l2 - 2.0 * l1);
    const double eu = std::exp(u), k1 = p.k1();
    const double f = (eu + k1) * ratio - p.K(u) - eu + p.c2;
    const double df = eu * ratio + (eu + k1) * (1.0 - curv) - k1 - eu;
    return {f, df};
}

}  // namespace detail

/// Liquidation level u* and coefficient A = (e^{u*} + beta/(alpha+r))/H'(u*).
/// f is negative for large u and changes sign at most once; when it never
/// turns positive down to mu - 60 (1 + sd), selling on receipt is optimal
/// and u* = -inf, A = 0 is returned.
inline LiquidationThreshold solve_u_star(const XouParams& p) {
    p.validate();
    const FundamentalSolutions fs(p.ode());
    auto f = [&](double u) { return detail::liquidation_equation(p, fs, u).first; };
    const double sd = p.sigma / std::sqrt(2.0 * p.alpha);
    const double w = std::max(0.25, sd);

    double hi = p.mu + w, step = w;
    double fhi = f(hi);
    for (int i = 0; !(fhi < 0.0); ++i) {
        if (std::isnan(fhi) || i > 12) throw SolverError("solve_u_star: residual never turns negative", p.mu, hi);
        step *= 2.0;
        hi += step;
        fhi = f(hi);
    }
    const double floor = p.mu - 60.0 * (1.0 + sd);
    double lo = hi;
    step = w;
    for (;;) {
        lo = std::max(hi - step, floor);
        const double flo = f(lo);
        if (std::isnan(flo)) throw SolverError("solve_u_star: residual is not a number", lo, hi);
        if (flo > 0.0) break;
        if (flo == 0.0) return {lo, (std::exp(lo) + p.k1()) * std::exp(-fs.log_H(lo, 1))};
        if (lo == floor) return {-std::numeric_limits<double>::infinity(), 0.0};
        hi = lo;
        step *= 2.0;
    }
    const double u = numerics::safeguarded_newton([&](double x) { return detail::liquidation_equation(p, fs, x); }, lo,
                                                  hi, 1e-12 * std::max(1.0, std::exp(p.mu)));
    return {u, (std::exp(u) + p.k1()) * std::exp(-fs.log_H(u, 1))};
}

inline double xou_liquidation_residual(const XouParams& p, double u) {
    return detail::liquidation_equation(p, FundamentalSolutions(p.ode()), u).first;
}

/// Closed-form pricing given solved thresholds.
class XouPricer {
public:
    XouPricer(const XouParams& p, const XouThresholds& thr) : p_(p), fs_((p.validate(), p.ode())), thr_(thr) {}

    const XouParams& params() const { return p_; }
    const XouThresholds& thresholds() const { return thr_; }
    const FundamentalSolutions& solutions() const { return fs_; }

    double liquidation_value(double u) const {
        if (u >= thr_.u_star) return std::exp(u) - p_.c2;
        return thr_.A * fs_.H(u) - p_.K(u);
    }
    double liquidation_slope(double u) const {
        if (u >= thr_.u_star) return std::exp(u);
        return thr_.A * fs_.H(u, 1) - p_.k1();
    }
    double certificate_price(double u) const {
        if (u > thr_.u_high) return std::exp(u) - p_.c1 - p_.c2;
        if (u >= thr_.u_low && !thr_.degenerate) return band_value(u);
        return liquidation_value(u) - p_.c1;
    }
    double certificate_slope(double u) const {
        if (u > thr_.u_high) return std::exp(u);
        if (u >= thr_.u_low && !thr_.degenerate) return thr_.B * fs_.H(u, 1) + thr_.C * fs_.G(u, 1);
        return liquidation_slope(u);
    }
    double basis(double u) const { return certificate_price(u) - std::exp(u); }

    /// Phi((u_high - mu_bar)/sigma_bar); defined for c1 = c2 = 0.
    double prob_positive_basis(double u_t, double t, double T) const {
        if (!(T >= t)) throw std::invalid_argument("prob_positive_basis_xou: need T >= t");
        if (p_.c1 != 0.0 || p_.c2 != 0.0)
            throw std::domain_error("prob_positive_basis_xou: formula holds for c1 = c2 = 0 only");
        const auto m = ou_conditional_moments(u_t, t, T, p_.log_price());
        if (m.std == 0.0) return m.mean < thr_.u_high ? 1.0 : 0.0;
        return numerics::normal_cdf((thr_.u_high - m.mean) / m.std);
    }

    /// F = E[V(U_T) | U_t].
    double futures_price(double u_t, double t, double T, FuturesMethod method = FuturesMethod::expectation) const;

    /// E[H(X) 1{lo < X < hi}] (decreasing = false) or the same for G, X ~ N(m).
    /// Returned as a log; lo may be -inf and hi +inf.
    double log_truncated_solution(const OuMoments& m, double lo, double hi, bool decreasing) const {
        const double s = fs_.scale(), e = fs_.params().order() - 1.0;
        const double w = s * m.std, quad = 1.0 - w * w;
        const double zlo = (lo - m.mean) / m.std, zhi = (hi - m.mean) / m.std;
        const double lin = decreasing ? s * (p_.mu - m.mean) : s * (m.mean - p_.mu);
        const double shift = decreasing ? w : -w;
        auto body = [=](double v) {
            return lin * v - 0.5 * quad * v * v + numerics::log_normal_interval(zlo + shift * v, zhi + shift * v);
        };
        return log_halfline_integral(e, body);
    }

private:
    double band_value(double u) const { return thr_.B * fs_.H(u) + thr_.C * fs_.G(u) - p_.delta_hat / p_.r; }

    double futures_by_quadrature(const OuMoments& m) const;
    double futures_closed_form(const OuMoments& m, bool printed) const;

    XouParams p_;
    FundamentalSolutions fs_;
    XouThresholds thr_;
};

namespace detail {

struct BandState {
    const XouParams& p;
    const FundamentalSolutions& fs;
    double u_star, A;

    double J(double u) const { return A * fs.H(u) - p.K(u); }
    double Jp(double u) const { return A * fs.H(u, 1) - p.k1(); }

    // B, C matching V = J - c1 and V' = J' at l
    std::pair<double, double> shoot(double l) const {
        const double h = fs.H(l), h1 = fs.H(l, 1), g = fs.G(l), g1 = fs.G(l, 1);
        const double y0 = J(l) - p.c1 + p.delta_hat / p.r, y1 = Jp(l);
        const double w = h * g1 - h1 * g;
        return {(y0 * g1 - y1 * g) / w, (y1 * h - y0 * h1) / w};
    }
    double gap(double B, double C, double u) const {
        return B * fs.H(u) + C * fs.G(u) - p.delta_hat / p.r - (std::exp(u) - p.c1 - p.c2);
    }
    // H, G on the scan grid of min_gap; they do not depend on l
    static constexpr int kScan = 48;
    mutable double scan_span = std::numeric_limits<double>::quiet_NaN();
    mutable std::vector<double> scan_h{}, scan_g{};

    // smallest gap over [u*, u* + span] and where it occurs
    std::pair<double, double> min_gap(double l, double span) const {
        auto [B, C] = shoot(l);
        constexpr int n = kScan;
        if (!(span == scan_span)) {
            scan_h.resize(n + 1);
            scan_g.resize(n + 1);
            for (int i = 0; i <= n; ++i) {
                scan_h[i] = fs.H(u_star + span * i / n);
                scan_g[i] = fs.G(u_star + span * i / n);
            }
            scan_span = span;
        }
        int best = 0;
        double best_val = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= n; ++i) {
            const double u = u_star + span * i / n;
            const double v = B * scan_h[i] + C * scan_g[i] - p.delta_hat / p.r - (std::exp(u) - p.c1 - p.c2);
            if (v < best_val) {
                best_val = v;
                best = i;
            }
        }
        const double a = u_star + span * std::max(0, best - 1) / n, b = u_star + span * std::min(n, best + 1) / n;
        auto res = boost::math::tools::brent_find_minima([&](double u) { return gap(B, C, u); }, a, b, 40);
        return res.second < best_val ? std::pair{res.second, res.first}
                                     : std::pair{best_val, u_star + span * best / n};
    }
    // B, C from smooth pasting at both ends (closed form in the two thresholds)
    std::pair<double, double> paste(double lo, double hi) const {
        const double hp_hi = fs.H(hi, 1), gp_hi = fs.G(hi, 1), hp_lo = fs.H(lo, 1), gp_lo = fs.G(lo, 1);
        const double det = hp_hi * gp_lo - hp_lo * gp_hi;
        const double eh = std::exp(hi), jl = Jp(lo);
        return {(eh * gp_lo - jl * gp_hi) / det, (eh * hp_lo - jl * hp_hi) / (-det)};
    }
    // value-matching residuals at both ends
    std::pair<double, double> residuals(double lo, double hi) const {
        auto [B, C] = paste(lo, hi);
        const double r_hi = B * fs.H(hi) + C * fs.G(hi) - p.delta_hat / p.r - (std::exp(hi) - p.c1 - p.c2);
        const double r_lo = B * fs.H(lo) + C * fs.G(lo) - p.delta_hat / p.r - (J(lo) - p.c1);
        return {r_hi, r_lo};
    }
};

}  // namespace detail

namespace detail {

// Damped Newton on the value-matching pair with a finite-difference Jacobian,
// kept inside lo < u* <= hi. Returns the final residual pair.
inline std::pair<double, double> polish_band(const BandState& st, double& lo, double& hi, double target) {
    auto norm = [](std::pair<double, double> r) { return std::max(std::abs(r.first), std::abs(r.second)); };
    // a trial point whose solutions overflow counts as a rejected step
    auto safe = [&](double l, double h) {
        try {
            return st.residuals(l, h);
        } catch (const NumericalError&) {
            const double inf = std::numeric_limits<double>::infinity();
            return std::pair{inf, inf};
        }
    };
    auto res = st.residuals(lo, hi);
    for (int it = 0; it < 20 && norm(res) > target; ++it) {
        const double h = 1e-7;
        auto rl = safe(lo + h, hi), rh = safe(lo, hi + h);
        const double j11 = (rh.first - res.first) / h, j12 = (rl.first - res.first) / h;
        const double j21 = (rh.second - res.second) / h, j22 = (rl.second - res.second) / h;
        const double det = j11 * j22 - j12 * j21;
        if (!(std::abs(det) > 0.0)) break;
        const double dh = (res.first * j22 - j12 * res.second) / det;
        const double dl = (j11 * res.second - j21 * res.first) / det;
        double step = 1.0;
        bool improved = false;
        for (int k = 0; k < 8; ++k, step *= 0.5) {
            const double nl = lo - step * dl, nh = hi - step * dh;
            if (!(nl < st.u_star && nh >= st.u_star)) continue;
            auto nr = safe(nl, nh);
            if (norm(nr) < norm(res)) {
                lo = nl;
                hi = nh;
                res = nr;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }
    return res;
}

}  // namespace detail

namespace detail {

// Exercising and selling at once pays e^u - c1 - c2, so a certificate that is
// never exercised at low prices solves a pure exit problem with running cost
// delta_hat: the grain problem itself with (beta, gamma, c2) -> (0,
// delta_hat, c1 + c2). Its continuation region (-inf, u_bar) is the band,
// with B = A' and C = 0. Returns u_bar = -inf when selling at once wins.
inline XouThresholds exit_band(const XouParams& p) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    XouThresholds thr;
    XouParams q = p;
    q.beta = 0.0;
    q.gamma = p.delta_hat;
    q.c1 = 0.0;
    q.c2 = p.c1 + p.c2;
    const auto exit = solve_u_star(q);
    if (exit.u_star == -inf) {
        thr.u_low = thr.u_high = -inf;
        thr.degenerate = true;
        return thr;
    }
    thr.u_low = -inf;
    thr.u_high = exit.u_star;
    thr.B = exit.A;
    thr.high_residual = liquidation_equation(q, FundamentalSolutions(q.ode()), exit.u_star).first;
    return thr;
}

// Grain is sold on receipt (u* = -inf), so J = e^u - c2 everywhere.
inline XouThresholds band_after_immediate_sale(const XouParams& p) {
    auto thr = exit_band(p);
    thr.u_star = -std::numeric_limits<double>::infinity();
    thr.A = 0.0;
    return thr;
}

}  // namespace detail

/// Solve (u_low, u_high) for given (u*, A). A degenerate band (immediate
/// exercise everywhere) is reported with u_low = u_high = u*. When guess holds
/// a band for nearby parameters, Newton is started from it and the bracketing
/// search only runs if that fails.
inline XouThresholds solve_exercise_band(const XouParams& p, double u_star, double A,
                                         const XouThresholds* guess = nullptr) {
    p.validate();
    if (u_star == -std::numeric_limits<double>::infinity()) return detail::band_after_immediate_sale(p);
    const FundamentalSolutions fs(p.ode());
    const detail::BandState st{p, fs, u_star, A};
    XouThresholds thr;
    thr.u_star = u_star;
    thr.A = A;
    thr.liquidation_residual = detail::liquidation_equation(p, fs, u_star).first;

    // Holding the certificate at u* is only worth anything if storing at the
    // market rate there costs more than the certificate rate plus carry of c1.
    if (p.delta_hat - p.storage_rate(u_star) - p.r * p.c1 >= 0.0) {
        thr.u_low = thr.u_high = u_star;
        thr.degenerate = true;
        return thr;
    }
    const double target = 1e-12 * std::max(1.0, std::exp(u_star));
    auto accept = [&](double lo, double hi, std::pair<double, double> res) {
        thr.u_low = lo;
        thr.u_high = hi;
        std::tie(thr.B, thr.C) = st.paste(lo, hi);
        thr.high_residual = res.first;
        thr.low_residual = res.second;
        return thr;
    };

    if (guess && !guess->degenerate && std::isfinite(guess->u_low) && std::isfinite(guess->u_high)) {
        double lo = std::min(guess->u_low, u_star - 1e-6), hi = std::max(guess->u_high, u_star);
        try {
            const auto res = detail::polish_band(st, lo, hi, target);
            const double scale = std::max(1.0, std::exp(hi));
            if (std::max(std::abs(res.first), std::abs(res.second)) <= 1e-11 * scale && lo < u_star - 1e-9 &&
                hi >= u_star)
                return accept(lo, hi, res);
        } catch (const std::exception&) {
            // fall through to the bracketing search
        }
    }

    const double sd = p.sigma / std::sqrt(2.0 * p.alpha);
    const double span = std::max(0.5, 2.0 * sd);
    auto m = [&](double l) { return st.min_gap(l, span).first; };

    // No lower edge: the band runs down to -inf. That is the exit band,
    // provided it reaches past u* and dominates J - c1 below u*.
    auto one_sided = [&]() {
        auto ex = detail::exit_band(p);
        if (ex.degenerate || ex.u_high < u_star)
            throw SolverError("solve_exercise_band: lower edge not bracketed", -HUGE_VAL, u_star);
        for (int i = 0; i <= 200; ++i) {
            const double u = u_star - 60.0 * (1.0 + sd) * i / 200.0;
            const double w = ex.B * fs.H(u) - p.delta_hat / p.r, j = st.J(u) - p.c1;
            if (w < j - 1e-9 * std::max(1.0, std::abs(j)))
                throw SolverError("solve_exercise_band: lower edge not bracketed", u, u_star);
        }
        ex.u_star = u_star;
        ex.A = A;
        ex.liquidation_residual = thr.liquidation_residual;
        return ex;
    };

    double l_hi = std::numeric_limits<double>::quiet_NaN();
    for (double d : {1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) {
        if (m(u_star - d) < 0.0) {
            l_hi = u_star - d;
            break;
        }
    }
    if (std::isnan(l_hi)) throw SolverError("solve_exercise_band: no negative gap next to u*", u_star - 0.1, u_star);
    double d = std::max(0.05, 0.25 * sd), l_lo = l_hi - d;
    for (;;) {
        double v;
        try {
            v = m(l_lo);
        } catch (const NumericalError&) {
            return one_sided();
        }
        if (v > 0.0) break;
        l_hi = l_lo;
        d *= 2.0;
        l_lo = u_star - d;
        if (d > 60.0 * sd + 60.0) return one_sided();
    }
    std::uintmax_t iters = 200;
    auto tol = [](double a, double b) { return std::abs(a - b) <= 1e-13 * std::max(1.0, std::abs(a)); };
    auto [a, b] = boost::math::tools::toms748_solve(m, l_lo, l_hi, tol, iters);
    double lo = 0.5 * (a + b);
    double hi = std::max(u_star, st.min_gap(lo, span).second);
    const auto res = detail::polish_band(st, lo, hi, target);
    if (!(lo <= u_star && u_star <= hi)) throw SolverError("solve_exercise_band: ordering violated", lo, hi);
    return accept(lo, hi, res);
}

/// All three thresholds and the coefficients.
inline XouThresholds solve_xou_thresholds(const XouParams& p, const XouThresholds* guess = nullptr) {
    const auto liq = solve_u_star(p);
    return solve_exercise_band(p, liq.u_star, liq.A, guess);
}

inline double liquidation_value_xou(double u, const XouParams& p, const XouThresholds& thr) {
    return XouPricer(p, thr).liquidation_value(u);
}
inline double certificate_price_xou(double u, const XouParams& p, const XouThresholds& thr) {
    return XouPricer(p, thr).certificate_price(u);
}
inline double prob_positive_basis_xou(double u_t, const XouParams& p, const XouThresholds& thr, double t, double T) {
    return XouPricer(p, thr).prob_positive_basis(u_t, t, T);
}

/// Which moment of e^{U_T} to use for the no-certificate price.
enum class PsiForm {
    lognormal,  ///< exp(mu_bar + sigma_bar^2/2), variance term sigma^2/(4 alpha)
    printed     ///< variance term sigma^2/(4 mu)
};

inline double no_certificate_futures_xou(double u_t, const XouParams& p, double t, double T,
                                         PsiForm form = PsiForm::lognormal) {
    if (!(T >= t)) throw std::invalid_argument("no_certificate_futures_xou: need T >= t");
    const double tau = T - t, decay = std::exp(-p.alpha * tau), var_factor = -std::expm1(-2.0 * p.alpha * tau);
    const double denom = form == PsiForm::lognormal ? 4.0 * p.alpha : 4.0 * p.mu;
    return std::exp(decay * u_t + p.mu * (1.0 - decay) + p.sigma * p.sigma / denom * var_factor);
}

inline double XouPricer::futures_price(double u_t, double t, double T, FuturesMethod method) const {
    if (!(T >= t)) throw std::invalid_argument("futures_price_xou: need T >= t");
    if (!std::isfinite(u_t)) throw std::invalid_argument("futures_price_xou: non-finite state");
    if (T == t) return certificate_price(u_t);
    const auto m = ou_conditional_moments(u_t, t, T, p_.log_price());
    switch (method) {
        case FuturesMethod::expectation: return futures_by_quadrature(m);
        case FuturesMethod::truncated_normal: return futures_closed_form(m, false);
        case FuturesMethod::printed: return futures_closed_form(m, true);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

inline double XouPricer::futures_by_quadrature(const OuMoments& m) const {
    constexpr double kEdge = 38.0;
    const double zlo = std::clamp((thr_.u_low - m.mean) / m.std, -kEdge, kEdge);
    const double zhi = std::clamp((thr_.u_high - m.mean) / m.std, -kEdge, kEdge);
    const double scale = std::max(1.0, std::abs(certificate_price(m.mean)));
    const double abs_tol = 1e-14 * scale, rel_tol = 1e-13;
    auto piece = [&](double a, double b, auto&& value) {
        if (!(b > a)) return 0.0;
        return numerics::integrate_or_throw([&](double x) { return value(m.mean + m.std * x) * numerics::normal_pdf(x); },
                                            a, b, abs_tol, rel_tol, "futures_price_xou");
    };
    double out = 0.0;
    out += piece(-kEdge, zlo, [&](double u) { return liquidation_value(std::min(u, thr_.u_low)) - p_.c1; });
    if (!thr_.degenerate) out += piece(zlo, zhi, [&](double u) { return band_value(std::clamp(u, thr_.u_low, thr_.u_high)); });
    // the exponential branch's integrand peaks at x = sigma_bar; stretch the upper edge accordingly
    out += piece(zhi, kEdge + m.std, [&](double u) { return std::exp(u) - p_.c1 - p_.c2; });
    return out;
}

inline double XouPricer::futures_closed_form(const OuMoments& m, bool printed) const {
    using numerics::normal_cdf;
    using numerics::normal_pdf;
    const double zhi = (thr_.u_high - m.mean) / m.std, zlo = (thr_.u_low - m.mean) / m.std;
    const double Phi_hi = normal_cdf(zhi), Phi_lo = normal_cdf(zlo), Q_hi = numerics::normal_sf(zhi);
    const double lognormal_mean = std::exp(m.mean + 0.5 * m.std * m.std);
    constexpr double inf = std::numeric_limits<double>::infinity();

    // exercise-and-liquidate region
    double top = printed ? lognormal_mean * normal_cdf(m.std - zhi) / Q_hi : lognormal_mean * normal_cdf(m.std - zhi);
    top -= (p_.c1 + p_.c2) * Q_hi;

    // band
    double band = 0.0;
    if (!thr_.degenerate && thr_.u_high > thr_.u_low) {
        auto signed_term = [&](double coef, double log_e) {
            return coef == 0.0 ? 0.0 : std::copysign(std::exp(std::log(std::abs(coef)) + log_e), coef);
        };
        band += signed_term(thr_.B, log_truncated_solution(m, thr_.u_low, thr_.u_high, false));
        band += signed_term(thr_.C, log_truncated_solution(m, thr_.u_low, thr_.u_high, true));
        band -= p_.delta_hat / p_.r * (Phi_hi - Phi_lo);
    }

    // exercise-and-store region
    double bottom = 0.0;
    if (Phi_lo > 0.0) {
        bottom += thr_.A * std::exp(log_truncated_solution(m, -inf, thr_.u_low, false));
        const double trunc_u = printed ? m.mean - normal_pdf(zlo) / Phi_lo * m.std : m.mean * Phi_lo - m.std * normal_pdf(zlo);
        bottom -= p_.k1() * trunc_u;
        bottom -= (p_.k0() + p_.c1) * Phi_lo;
    }
    return top + band + bottom;
}

inline double futures_price_xou(double u_t, const XouParams& p, const XouThresholds& thr, double t, double T,
                                FuturesMethod method = FuturesMethod::expectation) {
    return XouPricer(p, thr).futures_price(u_t, t, T, method);
}

}  // namespace grainbasis
