#pragma once

// Small numerical toolkit shared by the pricing modules: Gaussian helpers in
// log space, an adaptive Gauss-Kronrod integrator and a safeguarded Newton.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace grainbasis {

/// Quadrature or special-function evaluation that did not reach tolerance.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, double achieved_error = std::numeric_limits<double>::quiet_NaN())
        : std::runtime_error(what), achieved_error_(achieved_error) {}
    double achieved_error() const noexcept { return achieved_error_; }

private:
    double achieved_error_;
};

/// Root or band solver failure. Carries the last bracket tried.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double lo = std::numeric_limits<double>::quiet_NaN(),
                double hi = std::numeric_limits<double>::quiet_NaN())
        : std::runtime_error(what), lo_(lo), hi_(hi) {}
    double bracket_lo() const noexcept { return lo_; }
    double bracket_hi() const noexcept { return hi_; }

private:
    double lo_, hi_;
};

namespace numerics {

inline constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// log Phi(x), accurate in the far left tail.
inline double log_normal_cdf(double x) {
    if (x > 0.0) return std::log1p(-normal_sf(x));
    if (x > -20.0) return std::log(normal_cdf(x));
    // Mills-ratio series, eight terms are below 1e-14 for x <= -20
    const double x2 = x * x;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k <= 8; ++k) {
        term *= -(2.0 * k - 1.0) / x2;
        sum += term;
    }
    return -0.5 * x2 - kLogSqrt2Pi - std::log(-x) + std::log(sum);
}

inline double log_normal_sf(double x) { return log_normal_cdf(-x); }

/// log(Phi(b) - Phi(a)) for a < b, without cancellation in either tail.
inline double log_normal_interval(double a, double b) {
    if (!(a < b)) return -std::numeric_limits<double>::infinity();
    if (b <= 0.0) {
        const double lb = log_normal_cdf(b);
        return lb + std::log1p(-std::exp(log_normal_cdf(a) - lb));
    }
    if (a >= 0.0) {
        const double la = log_normal_sf(a);
        return la + std::log1p(-std::exp(log_normal_sf(b) - la));
    }
    return std::log1p(-(normal_cdf(a) + normal_sf(b)));
}

inline double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    int panels = 0;
    bool converged = false;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15 table).
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a, b, value, error;
    bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    const double fc = f(c);
    double kron = fc * kWgk[7];
    double gauss = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        const double s = f(c - dx) + f(c + dx);
        kron += kWgk[j] * s;
        if (j % 2 == 1) gauss += kWg[j / 2] * s;
    }
    kron *= h;
    gauss *= h;
    return {a, b, kron, std::abs(kron - gauss)};
}

}  // namespace detail

inline const std::array<double, 8>& kronrod15_abscissae() { return detail::kXgk; }
inline const std::array<double, 8>& kronrod15_weights() { return detail::kWgk; }

/// Globally adaptive G7K15 on a finite interval. Stops when the summed error
/// estimate is below max(abs_tol, rel_tol*|I|). Never throws; check converged.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, double abs_tol, double rel_tol, int max_panels = 4000) {
    QuadratureResult out;
    if (a == b) {
        out.converged = true;
        return out;
    }
    std::priority_queue<detail::Panel> heap;
    auto first = detail::gk15(f, a, b);
    double total = first.value, err = first.error;
    heap.push(first);
    int n = 1;
    while (err > std::max(abs_tol, rel_tol * std::abs(total)) && n < max_panels) {
        auto worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            heap.push(worst);
            break;  // interval exhausted at double resolution
        }
        auto left = detail::gk15(f, worst.a, mid);
        auto right = detail::gk15(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++n;
    }
    // resum to shed the drift of the running updates
    total = 0.0;
    err = 0.0;
    while (!heap.empty()) {
        total += heap.top().value;
        err += heap.top().error;
        heap.pop();
    }
    out.value = total;
    out.error = err;
    out.panels = n;
    out.converged = std::isfinite(total) && err <= std::max(abs_tol, rel_tol * std::abs(total));
    return out;
}

/// integrate() that throws NumericalError on non-convergence.
template <class F>
double integrate_or_throw(F&& f, double a, double b, double abs_tol, double rel_tol, const char* who,
                          int max_panels = 4000) {
    auto q = integrate(std::forward<F>(f), a, b, abs_tol, rel_tol, max_panels);
    if (!q.converged) {
        std::ostringstream os;
        os << who << ": quadrature did not converge on [" << a << ", " << b << "], value " << q.value
           << ", error estimate " << q.error;
        throw NumericalError(os.str(), q.error);
    }
    return q.value;
}

/// Newton iteration kept inside a sign-change bracket, bisecting whenever a
/// step leaves it or stalls. fdf(x) returns {f(x), f'(x)}.
template <class FDF>
double safeguarded_newton(FDF&& fdf, double lo, double hi, double ftol, double xtol = 1e-15,
                          int max_iter = 200) {
    auto [flo, dlo] = fdf(lo);
    auto [fhi, dhi] = fdf(hi);
    (void)dlo;
    (void)dhi;
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0) == (fhi > 0)) throw SolverError("safeguarded_newton: no sign change in bracket", lo, hi);
    if (flo > 0) std::swap(lo, hi);  // keep f(lo) < 0
    double x = 0.5 * (lo + hi);
    double dx_old = std::abs(hi - lo), dx = dx_old;
    auto [fx, dfx] = fdf(x);
    for (int it = 0; it < max_iter; ++it) {
        if (std::abs(fx) <= ftol) return x;
        const bool newton_ok = dfx != 0.0 && std::isfinite(dfx) &&
                               ((x - hi) * dfx - fx) * ((x - lo) * dfx - fx) < 0.0 &&
                               std::abs(2.0 * fx) < std::abs(dx_old * dfx);
        dx_old = dx;
        if (newton_ok) {
            dx = fx / dfx;
            x -= dx;
        } else {
            dx = 0.5 * (hi - lo);
            x = lo + dx;
        }
        // bracket collapsed to double resolution, f cannot be resolved further
        if (std::abs(dx) <= xtol * std::max(1.0, std::abs(x))) return x;
        std::tie(fx, dfx) = fdf(x);
        if (fx < 0) lo = x;
        else hi = x;
    }
    throw SolverError("safeguarded_newton: iteration limit", std::min(lo, hi), std::max(lo, hi));
}

/// Grow [x0 - w, x0 + w] geometrically until f changes sign. Returns the bracket.
template <class F>
std::pair<double, double> expand_bracket(F&& f, double x0, double w, int max_doublings = 60) {
    double lo = x0 - w, hi = x0 + w;
    double flo = f(lo), fhi = f(hi);
    for (int i = 0; i < max_doublings; ++i) {
        if (std::isfinite(flo) && std::isfinite(fhi) && (flo > 0) != (fhi > 0)) return {lo, hi};
        w *= 2.0;
        lo = x0 - w;
        hi = x0 + w;
        flo = f(lo);
        fhi = f(hi);
    }
    throw SolverError("expand_bracket: no sign change found", lo, hi);
}

}  // namespace numerics
}  // namespace grainbasis
