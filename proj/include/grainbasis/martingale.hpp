#pragma once

// Martingale model: spot dS = (rS + delta)dt + sigma S dW, storage rate
// d delta = kappa(nu - delta)dt + zeta dW~ (independent). The holder of grain
// never liquidates early (J = S); the certificate holder exercises the first
// time delta falls to delta*.
//
// The continuation region {delta > delta*} is unbounded above, so the bounded
// homogeneous solution there is the decreasing G. With
//     k0 = kappa(nu - delta_hat)/r - delta_hat,
// value matching and smooth pasting give
//     delta* = G(delta*)/G'(delta*) - c1(kappa + r) - k0,
//     V(S, delta) = S + P(delta),
//     P(delta) = (delta - G(delta)/G'(delta*) + k0)/(kappa + r)   delta >= delta*
//              = -c1                                               otherwise.
// solve_delta_star_as_printed() keeps the increasing-H variant of the
// threshold equation for comparison; it breaks V >= S just above its root.
//
// E[S_T] follows from d E[S] = (r E[S] + E[delta]) dt with
// E[delta_u] = nu + (delta - nu)e^{-kappa u}; integrating the linear ODE,
//     psi = e^{r tau}[S + nu/r (1 - e^{-r tau}) + (delta - nu)/(kappa + r) (1 - e^{-(kappa + r) tau})].

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "grainbasis/futures_method.hpp"
#include "grainbasis/numerics.hpp"
#include "grainbasis/processes.hpp"
#include "grainbasis/special_functions.hpp"

namespace grainbasis {

struct MartingaleParams {
    double r = 0.03;
    double sigma = 0.2;
    double kappa = 0.3;
    double nu = 0.07;
    double zeta = 0.2;
    double delta_hat = 0.06;
    double c1 = 0.0;
    double c2 = 0.0;

    void validate() const {
        const double all[] = {r, sigma, kappa, nu, zeta, delta_hat, c1, c2};
        for (double v : all)
            if (!std::isfinite(v)) throw std::invalid_argument("MartingaleParams: non-finite field");
        if (!(r > 0.0)) throw std::invalid_argument("MartingaleParams: r must be positive");
        if (!(sigma >= 0.0)) throw std::invalid_argument("MartingaleParams: sigma must be non-negative");
        if (!(kappa > 0.0)) throw std::invalid_argument("MartingaleParams: kappa must be positive");
        if (!(zeta > 0.0)) throw std::invalid_argument("MartingaleParams: zeta must be positive");
        if (!(delta_hat > 0.0)) throw std::invalid_argument("MartingaleParams: delta_hat must be positive");
        if (!(c1 >= 0.0) || !(c2 >= 0.0)) throw std::invalid_argument("MartingaleParams: costs must be non-negative");
        if (!(zeta * zeta <= 2.0 * kappa))
            throw std::invalid_argument("MartingaleParams: regularity zeta^2 <= 2 kappa violated");
    }
    OdeParams ode() const { return {kappa, nu, zeta, r}; }
    OuParams storage() const { return {kappa, nu, zeta}; }
    /// kappa(nu - delta_hat)/r - delta_hat
    double k0() const { return kappa * (nu - delta_hat) / r - delta_hat; }
};

struct MartingaleState {
    double S;
    double delta;
};

struct ThresholdSensitivities {
    double d_delta_hat;  ///< h (1 + kappa/r)
    double d_nu;         ///< exact total derivative, -h kappa/r + (1 - h)
    double d_c1;         ///< -h (kappa + r)
    double h;            ///< G'^2 / (G G'') at delta*
    double d_nu_explicit_only;  ///< -h kappa/r, the part through the explicit nu only
};

namespace detail {

// f(delta) = delta - G/G'(delta) + c1(kappa + r) + k0 and f'(delta) = G G''/G'^2
inline std::pair<double, double> threshold_equation(const MartingaleParams& p, const FundamentalSolutions& fs,
                                                    double delta) {
    const double l0 = fs.log_G(delta), l1 = fs.log_G(delta, 1), l2 = fs.log_G(delta, 2);
    const double g_over_gp = -std::exp(l0 - l1);
    return {delta - g_over_gp + p.c1 * (p.kappa + p.r) + p.k0(), std::exp(l0 + l2 - 2.0 * l1)};
}

inline std::pair<double, double> threshold_equation_printed(const MartingaleParams& p, const FundamentalSolutions& fs,
                                                            double delta) {
    const double l0 = fs.log_H(delta), l1 = fs.log_H(delta, 1), l2 = fs.log_H(delta, 2);
    return {delta - std::exp(l0 - l1) + p.c1 * (p.kappa + p.r) + p.k0(), std::exp(l0 + l2 - 2.0 * l1)};
}

template <class Eq>
double solve_threshold(const MartingaleParams& p, Eq eq) {
    p.validate();
    const FundamentalSolutions fs(p.ode());
    auto f = [&](double d) { return eq(p, fs, d).first; };
    const double x0 = p.delta_hat - p.c1 * p.r;
    const double w = std::max(0.05, 0.5 * p.zeta / std::sqrt(2.0 * p.kappa));
    auto [lo, hi] = numerics::expand_bracket(f, x0, w, 40);
    return numerics::safeguarded_newton([&](double d) { return eq(p, fs, d); }, lo, hi, 1e-12);
}

}  // namespace detail

/// Optimal exercise level delta*, the unique root of the threshold equation.
inline double solve_delta_star(const MartingaleParams& p) { return detail::solve_threshold(p, detail::threshold_equation); }

/// Root of the threshold equation with H in place of G, kept for comparison only.
inline double solve_delta_star_as_printed(const MartingaleParams& p) {
    return detail::solve_threshold(p, detail::threshold_equation_printed);
}

/// f(delta) of the threshold equation; zero at delta*, strictly increasing.
inline double delta_star_residual(const MartingaleParams& p, double delta) {
    return detail::threshold_equation(p, FundamentalSolutions(p.ode()), delta).first;
}

/// Never liquidating is optimal, so the liquidation value is the spot price.
inline double liquidation_value(const MartingaleState& s, const MartingaleParams& p) {
    p.validate();
    if (!(s.S > 0.0)) throw std::invalid_argument("liquidation_value: S must be positive");
    return s.S;
}

/// psi = E[S_T | F_t], the futures price if grain rather than a certificate were delivered.
inline double no_certificate_futures(const MartingaleState& s, const MartingaleParams& p, double t, double T) {
    if (!(T >= t)) throw std::invalid_argument("no_certificate_futures: need T >= t");
    const double tau = T - t;
    const double a = -std::expm1(-p.r * tau), b = -std::expm1(-(p.kappa + p.r) * tau);
    return std::exp(p.r * tau) * (s.S + p.nu / p.r * a + (s.delta - p.nu) / (p.kappa + p.r) * b);
}

/// Pricing bundle for one parameter set with its solved threshold.
class MartingalePricer {
public:
    explicit MartingalePricer(const MartingaleParams& p) : MartingalePricer(p, solve_delta_star(p), false) {}

    /// Use a previously solved delta*; rejected unless it solves the threshold equation.
    MartingalePricer(const MartingaleParams& p, double delta_star) : MartingalePricer(p, delta_star, true) {}

    const MartingaleParams& params() const { return p_; }
    double delta_star() const { return delta_star_; }
    const FundamentalSolutions& solutions() const { return fs_; }

    /// P(delta) = V - S
    double storage_premium(double delta) const {
        if (delta < delta_star_) return -p_.c1;
        return (delta + std::exp(fs_.log_G(delta) - log_gp_star_) + p_.k0()) / (p_.kappa + p_.r);
    }
    /// dP/d delta, zero below delta*
    double storage_premium_slope(double delta) const {
        if (delta < delta_star_) return 0.0;
        return (1.0 - std::exp(fs_.log_G(delta, 1) - log_gp_star_)) / (p_.kappa + p_.r);
    }

    double certificate_price(const MartingaleState& s) const {
        check_state(s);
        return s.S + storage_premium(s.delta);
    }
    double basis(const MartingaleState& s) const { return certificate_price(s) - s.S; }

    /// Q(basis at T > 0 | F_t) = 1 - Phi(z*), defined for c1 = 0 only.
    double prob_positive_basis(const MartingaleState& s, double t, double T) const {
        if (!(T >= t)) throw std::invalid_argument("prob_positive_basis: need T >= t");
        if (p_.c1 != 0.0) throw std::domain_error("prob_positive_basis: formula holds for c1 = 0 only");
        const auto m = ou_conditional_moments(s.delta, t, T, p_.storage());
        if (m.std == 0.0) return m.mean > delta_star_ ? 1.0 : 0.0;
        return numerics::normal_sf((delta_star_ - m.mean) / m.std);
    }

    double no_certificate_futures(const MartingaleState& s, double t, double T) const {
        return grainbasis::no_certificate_futures(s, p_, t, T);
    }

    /// F = E[V(S_T, delta_T) | F_t] = psi + E[P(delta_T)].
    double futures_price(const MartingaleState& s, double t, double T,
                         FuturesMethod method = FuturesMethod::expectation) const {
        check_state(s);
        if (!(T >= t)) throw std::invalid_argument("futures_price: need T >= t");
        if (T == t) return certificate_price(s);
        const auto m = ou_conditional_moments(s.delta, t, T, p_.storage());
        return no_certificate_futures(s, t, T) + expected_premium(m, method);
    }

    /// E[P(X)] for X ~ N(m.mean, m.std^2).
    double expected_premium(const OuMoments& m, FuturesMethod method = FuturesMethod::expectation) const {
        if (m.std == 0.0) return storage_premium(m.mean);
        const double z = (delta_star_ - m.mean) / m.std;
        switch (method) {
            case FuturesMethod::expectation: return premium_by_quadrature(m, z);
            case FuturesMethod::truncated_normal: return premium_closed_form(m, z, false);
            case FuturesMethod::printed: return premium_closed_form(m, z, true);
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    /// E[G(X) 1{X >= d}] / |G'(delta*)| via the swapped-order integral
    ///     int_0^inf v^{p-1} exp(s(b - m)v - (1 - s^2 sd^2) v^2/2) Q(z + s sd v) dv.
    double truncated_g_ratio(const OuMoments& m, double d) const {
        const double s = fs_.scale(), e = fs_.params().order() - 1.0;
        const double z = (d - m.mean) / m.std, w = s * m.std;
        const double lin = s * (p_.nu - m.mean), quad = 1.0 - w * w;
        auto body = [=](double v) { return lin * v - 0.5 * quad * v * v + numerics::log_normal_sf(z + w * v); };
        return std::exp(log_halfline_integral(e, body) - log_gp_star_);
    }

    ThresholdSensitivities sensitivities() const {
        const double l0 = fs_.log_G(delta_star_), l1 = fs_.log_G(delta_star_, 1), l2 = fs_.log_G(delta_star_, 2);
        const double h = std::exp(2.0 * l1 - l0 - l2);
        const double kr = p_.kappa / p_.r;
        return {h * (1.0 + kr), -h * kr + (1.0 - h), -h * (p_.kappa + p_.r), h, -h * kr};
    }

private:
    MartingalePricer(const MartingaleParams& p, double delta_star, bool guard) : p_(p), fs_((p.validate(), p.ode())) {
        delta_star_ = delta_star;
        if (guard) {
            const double f = std::isfinite(delta_star) ? detail::threshold_equation(p_, fs_, delta_star).first
                                                       : std::numeric_limits<double>::quiet_NaN();
            if (!(std::abs(f) <= 1e-8 * std::max(1.0, std::abs(delta_star)))) {
                std::ostringstream os;
                os << "MartingalePricer: delta* = " << delta_star << " does not solve the threshold equation (f = " << f
                   << ")";
                throw std::invalid_argument(os.str());
            }
        }
        log_gp_star_ = fs_.log_G(delta_star_, 1);
    }

    static void check_state(const MartingaleState& s) {
        if (!(s.S > 0.0) || !std::isfinite(s.delta)) throw std::invalid_argument("MartingaleState: need S > 0, finite delta");
    }

    double premium_by_quadrature(const OuMoments& m, double z) const {
        constexpr double kEdge = 38.0;  // phi(38) underflows
        const double scale = std::max({1.0, p_.c1, std::abs(storage_premium(m.mean + 5.0 * m.std))});
        const double abs_tol = 1e-14 * scale, rel_tol = 1e-13;
        double out = 0.0;
        const double zc = std::clamp(z, -kEdge, kEdge);
        if (zc > -kEdge && p_.c1 != 0.0)
            out += numerics::integrate_or_throw([&](double u) { return -p_.c1 * numerics::normal_pdf(u); }, -kEdge, zc,
                                                abs_tol, rel_tol, "futures_price (exercise side)");
        if (zc < kEdge)
            out += numerics::integrate_or_throw(
                [&](double u) { return storage_premium(std::max(delta_star_, m.mean + m.std * u)) * numerics::normal_pdf(u); },
                zc, kEdge, abs_tol, rel_tol, "futures_price (continuation side)");
        return out;
    }

    double premium_closed_form(const OuMoments& m, double z, bool printed) const {
        const double Q = numerics::normal_sf(z), phi = numerics::normal_pdf(z), Phi = numerics::normal_cdf(z);
        // E[delta 1{delta >= delta*}]; the printed variant uses the conditional mean
        const double trunc_mean = printed ? m.mean + (Q > 0.0 ? phi / Q : 0.0) * m.std : m.mean * Q + m.std * phi;
        const double g_part = Q > 0.0 ? truncated_g_ratio(m, delta_star_) : 0.0;
        return (trunc_mean + g_part + p_.k0() * Q) / (p_.kappa + p_.r) - p_.c1 * Phi;
    }

    MartingaleParams p_;
    FundamentalSolutions fs_;
    double delta_star_ = 0.0;
    double log_gp_star_ = 0.0;
};

// Free-function surface. Each call that takes delta* re-checks it against p.

inline double certificate_price(const MartingaleState& s, const MartingaleParams& p, double delta_star) {
    return MartingalePricer(p, delta_star).certificate_price(s);
}
inline double basis(const MartingaleState& s, const MartingaleParams& p, double delta_star) {
    return MartingalePricer(p, delta_star).basis(s);
}
inline ThresholdSensitivities threshold_sensitivities(const MartingaleParams& p, double delta_star) {
    return MartingalePricer(p, delta_star).sensitivities();
}
inline double prob_positive_basis(const MartingaleState& s, const MartingaleParams& p, double delta_star, double t,
                                  double T) {
    return MartingalePricer(p, delta_star).prob_positive_basis(s, t, T);
}
inline double futures_price(const MartingaleState& s, const MartingaleParams& p, double delta_star, double t, double T,
                            FuturesMethod method = FuturesMethod::expectation) {
    return MartingalePricer(p, delta_star).futures_price(s, t, T, method);
}

}  // namespace grainbasis
