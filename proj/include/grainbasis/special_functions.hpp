#pragma once

// Fundamental solutions of the OU pricing ODE
//     a(b - x) f'(x) + c^2/2 f''(x) - r f(x) = 0,
//     H(x) = int_0^inf v^{r/a-1} exp( s(x-b)v - v^2/2 ) dv,   s = sqrt(2a)/c,
//     G(x) = H(2b - x).
// Everything is evaluated through log I_e(z) = log int_0^inf v^e e^{zv - v^2/2} dv
// so that large |x-b|/c neither overflows nor loses digits. Derivatives come
// from differentiating under the integral: H^(k)(x) = s^k I_{r/a-1+k}(s(x-b)).
// The Weber/parabolic-cylinder form of the same functions is not used.

#include <boost/math/tools/minima.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "grainbasis/numerics.hpp"

namespace grainbasis {

struct OdeParams {
    double a;  ///< mean-reversion rate, per year
    double b;  ///< long-run level
    double c;  ///< volatility
    double r;  ///< discount rate

    void validate() const {
        if (!(a > 0.0) || !(c > 0.0) || !(r > 0.0) || !std::isfinite(a) || !std::isfinite(b) ||
            !std::isfinite(c) || !std::isfinite(r))
            throw std::invalid_argument("OdeParams: need a > 0, c > 0, r > 0 and finite b");
    }
    double scale() const { return std::sqrt(2.0 * a) / c; }
    double order() const { return r / a; }
    /// c^2 <= 2a, the regularity condition under which the ratio bounds are stated
    bool regular() const { return c * c <= 2.0 * a; }
};

namespace detail {

inline double log_power(double e, double v) { return e == 0.0 ? 0.0 : e * std::log(v); }

// Locate the maximiser of e*log v + body(v) on v > 0 by a dyadic scan and a
// Brent polish. body must be concave and dominated by -v^2/2 at infinity.
template <class Body>
double find_log_mode(double e, Body& body) {
    auto phi = [&](double v) { return log_power(e, v) + body(v); };
    int best = -10;
    double best_val = phi(std::ldexp(1.0, best));
    for (int j = -9; j <= 14; ++j) {
        const double val = phi(std::ldexp(1.0, j));
        if (val > best_val) {
            best_val = val;
            best = j;
        } else if (val < best_val - 60.0) {
            break;
        }
    }
    const double lo = best == -10 ? 0.0 : std::ldexp(1.0, best - 1);
    const double hi = std::ldexp(1.0, best + 1);
    auto neg = [&](double v) { return v <= 0.0 ? std::numeric_limits<double>::max() : -phi(v); };
    auto res = boost::math::tools::brent_find_minima(neg, lo, hi, 40);
    return res.first;
}

}  // namespace detail

/// log int_0^inf v^e exp(body(v)) dv for e > -1 and concave body with
/// Gaussian decay. mode_hint, when >= 0, is the known maximiser of
/// e*log v + body(v) (0 meaning "no interior maximum").
template <class Body>
double log_halfline_integral(double e, Body&& body, double mode_hint = -1.0, double rel_tol = 1e-13) {
    if (!(e > -1.0)) throw std::domain_error("log_halfline_integral: exponent must exceed -1");
    auto phi = [&](double v) { return detail::log_power(e, v) + body(v); };
    const double v_pk = mode_hint >= 0.0 ? mode_hint : detail::find_log_mode(e, body);

    double L = v_pk > 0.0 ? phi(v_pk) : body(0.0);
    if (e < 0.0) L = std::max(L, body(0.0));
    if (!std::isfinite(L)) throw NumericalError("log_halfline_integral: non-finite log scale");

    constexpr double kDrop = 50.0;  // e^-50 ~ 2e-22 below the peak
    double step0 = std::max(0.5, 0.25 * v_pk);
    // sharply peaked mass (typically hugging v = 0): shrink to the decay scale
    while (step0 > 1e-300 && phi(v_pk + 0.5 * step0) < L - kDrop) step0 *= 0.5;
    double d = step0, v_hi = v_pk + d;
    while (phi(v_hi) > L - kDrop) {
        d *= 2.0;
        v_hi = v_pk + d;
        if (d > 1e8) throw NumericalError("log_halfline_integral: upper cutoff not found");
    }
    double v_lo = 0.0;
    if (e >= 0.0 && v_pk > 0.0) {
        d = step0;
        while (v_pk - d > 0.0 && phi(v_pk - d) > L - kDrop) d *= 2.0;
        v_lo = std::max(0.0, v_pk - d);
    }

    auto scaled = [&](double v) { return v <= 0.0 ? (e == 0.0 ? std::exp(body(0.0) - L) : 0.0) : std::exp(phi(v) - L); };
    constexpr double abs_tol = 1e-15;
    // phi(v) - L carries roundoff of order eps*|L|; asking for more is futile
    rel_tol = std::max(rel_tol, 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(L)));
    double sum = 0.0;
    if (e < 0.0) {
        const double v1 = std::min(1.0, v_hi);
        const double inv = 1.0 / (e + 1.0);
        auto sub = [&](double w) { return std::exp(body(std::pow(w, inv)) - L) * inv; };
        sum += numerics::integrate_or_throw(sub, 0.0, std::pow(v1, e + 1.0), abs_tol, rel_tol, "H/G singular part");
        if (v_pk > v1 && v_pk < v_hi) {
            sum += numerics::integrate_or_throw(scaled, v1, v_pk, abs_tol, rel_tol, "H/G");
            sum += numerics::integrate_or_throw(scaled, v_pk, v_hi, abs_tol, rel_tol, "H/G");
        } else {
            sum += numerics::integrate_or_throw(scaled, v1, v_hi, abs_tol, rel_tol, "H/G");
        }
    } else {
        if (v_pk > v_lo) sum += numerics::integrate_or_throw(scaled, v_lo, v_pk, abs_tol, rel_tol, "H/G");
        sum += numerics::integrate_or_throw(scaled, v_pk, v_hi, abs_tol, rel_tol, "H/G");
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) throw NumericalError("log_halfline_integral: non-positive integral");
    return L + std::log(sum);
}

/// log I_e(z) = log int_0^inf v^e exp(z v - v^2/2) dv, e > -1.
inline double log_moment(double e, double z) {
    if (!std::isfinite(z)) throw std::domain_error("log_moment: non-finite argument");
    // stationary points of e log v + z v - v^2/2 solve v^2 - z v - e = 0
    const double disc = z * z + 4.0 * e;
    double mode = 0.0;
    if (disc >= 0.0) {
        const double root = 0.5 * (z + std::sqrt(disc));
        if (root > 0.0) mode = root;
    }
    auto body = [z](double v) { return z * v - 0.5 * v * v; };
    return log_halfline_integral(e, body, mode);
}

/// H, G and their derivatives for one parameter set.
class FundamentalSolutions {
public:
    explicit FundamentalSolutions(const OdeParams& p) : p_(p) {
        p_.validate();
        s_ = p_.scale();
        e0_ = p_.order() - 1.0;
        log_s_ = std::log(s_);
    }

    const OdeParams& params() const { return p_; }
    double scale() const { return s_; }

    /// log |H^(k)(x)|, k in {0,1,2,...}; every derivative is positive
    double log_H(double x, int k = 0) const { return k * log_s_ + log_moment(e0_ + k, s_ * (x - p_.b)); }
    /// log |G^(k)(x)|; sign of G^(k) is (-1)^k
    double log_G(double x, int k = 0) const { return k * log_s_ + log_moment(e0_ + k, s_ * (p_.b - x)); }

    double H(double x, int k = 0) const { return checked_exp(log_H(check(x), k)); }
    double G(double x, int k = 0) const {
        const double v = checked_exp(log_G(check(x), k));
        return (k % 2 == 0) ? v : -v;
    }

private:
    static double check(double x) {
        if (!std::isfinite(x)) throw std::domain_error("fundamental solutions: non-finite argument");
        return x;
    }
    static double checked_exp(double l) {
        if (l > 709.0) {
            std::ostringstream os;
            os << "fundamental solutions: value overflows double (log = " << l << ")";
            throw NumericalError(os.str());
        }
        return std::exp(l);
    }

    OdeParams p_;
    double s_, e0_, log_s_;
};

inline double eval_H(double x, const OdeParams& p) { return FundamentalSolutions(p).H(x); }
inline double eval_G(double x, const OdeParams& p) { return FundamentalSolutions(p).G(x); }
inline double eval_H_prime(double x, const OdeParams& p) { return FundamentalSolutions(p).H(x, 1); }
inline double eval_H_second(double x, const OdeParams& p) { return FundamentalSolutions(p).H(x, 2); }
inline double eval_G_prime(double x, const OdeParams& p) { return FundamentalSolutions(p).G(x, 1); }
inline double eval_G_second(double x, const OdeParams& p) { return FundamentalSolutions(p).G(x, 2); }

/// a(b-x)f' + c^2/2 f'' - r f, relative to the largest of its three terms
inline double ode_relative_residual(const OdeParams& p, double x, double f, double f1, double f2) {
    const double t1 = p.a * (p.b - x) * f1, t2 = 0.5 * p.c * p.c * f2, t3 = p.r * f;
    const double mag = std::max({std::abs(t1), std::abs(t2), std::abs(t3)});
    return mag == 0.0 ? 0.0 : std::abs(t1 + t2 - t3) / mag;
}

}  // namespace grainbasis
