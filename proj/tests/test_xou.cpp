#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "grainbasis/mc_oracle.hpp"
#include "grainbasis/xou.hpp"

using namespace grainbasis;

namespace {

XouParams base_xou() { return {}; }

// band set: beta = 0.08 with dhat = 0.17
XouParams band_set() {
    XouParams p;
    p.delta_hat = 0.17;
    return p;
}

// fitted corn parameters with an upward-sloping curve; all in cents
XouParams corn_up() {
    XouParams p;
    p.r = 0.017;
    p.delta_hat = 55.0;
    p.beta = 10.75;
    p.gamma = 15.10;
    p.mu = 5.52;
    p.alpha = 0.10;
    p.sigma = 0.12;
    return p;
}

// second-order one-sided differences
double slope_left(auto&& f, double x, double h) { return (3.0 * f(x) - 4.0 * f(x - h) + f(x - 2 * h)) / (2.0 * h); }
double slope_right(auto&& f, double x, double h) { return (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2 * h)) / (2.0 * h); }

}  // namespace

TEST(XouLiquidation, ThresholdAndCoefficient) {
    const auto liq = solve_u_star(band_set());
    EXPECT_NEAR(liq.u_star, 3.485, 0.005);
    EXPECT_LE(std::abs(xou_liquidation_residual(band_set(), liq.u_star)), 1e-10);
    EXPECT_GT(xou_liquidation_residual(band_set(), liq.u_star - 1.0), 0.0);
    EXPECT_LT(xou_liquidation_residual(band_set(), liq.u_star + 1.0), 0.0);
    EXPECT_GT(liq.A, 0.0);
    const FundamentalSolutions fs(band_set().ode());
    EXPECT_NEAR(liq.A * fs.H(liq.u_star, 1) - band_set().k1(), std::exp(liq.u_star), 1e-9);
    // u* does not involve dhat
    EXPECT_EQ(solve_u_star(base_xou()).u_star, liq.u_star);
}

TEST(XouLiquidation, ResidualCrossesOnce) {
    for (const auto& p : {base_xou(), corn_up()}) {
        const double u_star = solve_u_star(p).u_star;
        int changes = 0;
        double prev = xou_liquidation_residual(p, -6.0);
        EXPECT_GT(prev, 0.0);
        for (double u = -5.98; u <= 8.0; u += 0.02) {
            const double f = xou_liquidation_residual(p, u);
            changes += (f < 0.0) != (prev < 0.0);
            prev = f;
        }
        EXPECT_EQ(changes, 1);
        // decreasing through the root
        const double h = 1e-4;
        EXPECT_GT(xou_liquidation_residual(p, u_star - h), 0.0);
        EXPECT_LT(xou_liquidation_residual(p, u_star + h), 0.0);
    }
}

TEST(XouLiquidation, ValueFunction) {
    const auto p = band_set();
    const auto thr = solve_xou_thresholds(p);
    XouPricer pr(p, thr);
    const double u = thr.u_star;
    EXPECT_NEAR(pr.liquidation_value(u - 1e-12), std::exp(u) - p.c2, 1e-9);
    EXPECT_EQ(pr.liquidation_value(u + 0.3), std::exp(u + 0.3) - p.c2);
    EXPECT_NEAR(slope_left([&](double x) { return pr.liquidation_value(x); }, u, 1e-5), std::exp(u), 1e-6);
    for (double x = -2.0; x <= 5.0; x += 0.01) EXPECT_GE(pr.liquidation_value(x), std::exp(x) - p.c2 - 1e-9);
}

TEST(XouBand, RegressionValues) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto a = solve_xou_thresholds(base_xou());
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
    EXPECT_NEAR(a.u_low, 1.478998, 1e-5);
    EXPECT_NEAR(a.u_star, 3.485135, 1e-5);
    EXPECT_NEAR(a.u_high, 3.516078, 1e-5);

    const auto b = solve_xou_thresholds(band_set());
    EXPECT_NEAR(b.u_low, 0.337, 0.005);
    EXPECT_NEAR(b.u_star, 3.485, 0.005);
    EXPECT_NEAR(b.u_high, 3.534, 0.005);
    for (const auto& t : {a, b}) {
        EXPECT_FALSE(t.degenerate);
        EXPECT_LE(std::abs(t.high_residual), 1e-9);
        EXPECT_LE(std::abs(t.low_residual), 1e-9);
        EXPECT_LE(std::abs(t.liquidation_residual), 1e-10);
        EXPECT_GT(t.A, 0.0);
    }
}

TEST(XouBand, SteeperSlopeMovesLowerEdge) {
    // with beta = 0.10 the lower edge sits far from 0.337
    auto p = band_set();
    p.beta = 0.10;
    const auto t = solve_xou_thresholds(p);
    EXPECT_GT(std::abs(t.u_low - 0.337), 1.0);
}

TEST(XouBand, BoundaryConditions) {
    for (auto p : {base_xou(), band_set()}) {
        for (double c : {0.0, 0.05}) {
            p.c1 = c;
            p.c2 = 0.5 * c;
            const auto thr = solve_xou_thresholds(p);
            XouPricer pr(p, thr);
            auto V = [&](double u) { return pr.certificate_price(u); };
            auto band = [&](double u) { return thr.B * pr.solutions().H(u) + thr.C * pr.solutions().G(u) - p.delta_hat / p.r; };
            auto J = [&](double u) { return pr.liquidation_value(u) - p.c1; };
            auto top = [&](double u) { return std::exp(u) - p.c1 - p.c2; };
            const double scale = std::max(1.0, std::exp(thr.u_high));
            EXPECT_NEAR(band(thr.u_high), top(thr.u_high), 1e-9 * scale);
            EXPECT_NEAR(band(thr.u_low), J(thr.u_low), 1e-9 * scale);
            EXPECT_NEAR(V(thr.u_high), V(thr.u_high + 1e-13), 1e-9 * scale);
            const double h = 1e-5 * std::max(1.0, std::abs(thr.u_high));
            EXPECT_NEAR(slope_left(band, thr.u_high, h), slope_right(top, thr.u_high, h), 1e-6 * scale);
            EXPECT_NEAR(slope_right(band, thr.u_low, h), slope_left(J, thr.u_low, h), 1e-6 * scale);
        }
    }
}

TEST(XouBand, CornFitExercisesAtOnce) {
    // storing at beta U + gamma costs far more than the expected drift earns, so
    // grain is sold at once and the certificate is worth the grain itself
    const auto p = corn_up();
    const auto t = solve_xou_thresholds(p);
    EXPECT_TRUE(t.degenerate);
    EXPECT_LT(t.u_star, 0.0);
    XouPricer pr(p, t);
    const double u0 = std::log(167.0);
    EXPECT_NEAR(pr.certificate_price(u0), 167.0, 1e-9);
    EXPECT_NEAR(pr.futures_price(u0, 0.0, 1.0), no_certificate_futures_xou(u0, p, 0.0, 1.0), 1e-8);
}

TEST(XouBand, DominanceChain) {
    for (auto p : {base_xou(), band_set()}) {
        p.c1 = 0.1;
        p.c2 = 0.05;
        const auto thr = solve_xou_thresholds(p);
        XouPricer pr(p, thr);
        for (double u = -3.0; u <= 5.0; u += 0.005) {
            const double v = pr.certificate_price(u), j = pr.liquidation_value(u);
            EXPECT_GE(v, j - p.c1 - 1e-9);
            EXPECT_GE(j, std::exp(u) - p.c2 - 1e-9);
            EXPECT_GE(v, std::exp(u) - p.c1 - p.c2 - 1e-9);
        }
    }
}

TEST(XouBand, CertificateBeatsLiquidationWithoutCosts) {
    const auto p = base_xou();
    const auto thr = solve_xou_thresholds(p);
    XouPricer pr(p, thr);
    double best = 0.0;
    for (double u = -3.0; u <= 5.0; u += 0.001) {
        EXPECT_GE(pr.certificate_price(u), pr.liquidation_value(u) - 1e-9);
        best = std::max(best, (pr.certificate_price(u) - pr.liquidation_value(u)) / pr.liquidation_value(u));
    }
    EXPECT_NEAR(best, 0.0169, 5e-4);  // regression
}

TEST(XouBand, ComparativeStatics) {
    auto width = [](const XouParams& p) {
        const auto t = solve_xou_thresholds(p);
        return t.u_high - t.u_low;
    };
    auto b10 = base_xou();
    b10.beta = 0.10;
    EXPECT_GT(width(b10), width(base_xou()));

    // a richer certificate rate shrinks the band
    double prev = 1e9;
    for (double dh : {0.15, 0.17, 0.2, 0.25}) {
        auto p = base_xou();
        p.delta_hat = dh;
        const double w = width(p);
        EXPECT_LT(w, prev) << "dhat = " << dh;
        prev = w;
    }
}

TEST(XouBand, CollapsesAsSlopeVanishes) {
    auto p = base_xou();
    p.beta = 1e-4;
    const auto t = solve_xou_thresholds(p);
    EXPECT_TRUE(t.degenerate);
    EXPECT_LE(std::abs(t.u_high - t.u_low), 1e-2);
    EXPECT_LE(std::abs(t.u_star - t.u_low), 1e-2);
    XouPricer pr(p, t);
    for (double u = 0.0; u <= 5.0; u += 0.25) EXPECT_EQ(pr.certificate_price(u), pr.liquidation_value(u) - p.c1);

    // flat market storage at the certificate rate: nothing to gain by waiting
    p.beta = 0.0;
    p.gamma = p.delta_hat;
    EXPECT_TRUE(solve_xou_thresholds(p).degenerate);
}

TEST(XouBand, OrderingOverRandomBoxes) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    int bands = 0;
    for (int k = 0; k < 24; ++k) {
        auto p = base_xou();
        p.beta = 0.02 + 0.13 * U(rng);
        p.gamma = -0.1 + 0.2 * U(rng);
        p.delta_hat = 0.1 + 0.3 * U(rng);
        const auto t = solve_xou_thresholds(p);
        EXPECT_LE(t.u_low, t.u_star) << "draw " << k;
        EXPECT_LE(t.u_star, t.u_high) << "draw " << k;
        if (!t.degenerate) {
            ++bands;
            const double scale = std::exp(t.u_high);
            EXPECT_LE(std::abs(t.high_residual), 1e-9 * scale) << "draw " << k;
            EXPECT_LE(std::abs(t.low_residual), 1e-9 * scale) << "draw " << k;
        }
    }
    EXPECT_GT(bands, 5);
}

TEST(XouBand, RegularityEnforced) {
    XouParams p;
    p.beta = 16.12;
    p.gamma = 15.08;
    p.mu = 4.62;
    p.alpha = 0.058;
    p.sigma = 0.40;  // sqrt(2 alpha) = 0.34
    EXPECT_THROW(solve_xou_thresholds(p), std::invalid_argument);
    EXPECT_NO_THROW(solve_xou_thresholds(corn_up()));
    p = base_xou();
    p.beta = -0.01;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(XouProbability, FormulaProperties) {
    const auto p = band_set();
    const auto thr = solve_xou_thresholds(p);
    XouPricer pr(p, thr);
    const double tau = 0.5, e = std::exp(-p.alpha * tau);
    const double u_med = (thr.u_high - p.mu * (1.0 - e)) / e;
    EXPECT_NEAR(pr.prob_positive_basis(u_med, 0.0, tau), 0.5, 1e-12);
    EXPECT_EQ(pr.prob_positive_basis(thr.u_high - 0.1, 2.0, 2.0), 1.0);
    EXPECT_EQ(pr.prob_positive_basis(thr.u_high + 0.1, 2.0, 2.0), 0.0);
    // depends on u_t only through the conditional mean
    for (double u : {0.5, 1.6, 3.0, 4.0}) {
        const auto m = ou_conditional_moments(u, 0.0, tau, p.log_price());
        EXPECT_NEAR(pr.prob_positive_basis(u, 0.0, tau), numerics::normal_cdf((thr.u_high - m.mean) / m.std), 1e-15);
    }
    auto q = p;
    q.c2 = 0.01;
    EXPECT_THROW(XouPricer(q, solve_xou_thresholds(q)).prob_positive_basis(1.0, 0.0, 1.0), std::domain_error);
}

TEST(XouProbability, MatchesSampledFrequency) {
    const auto p = band_set();
    const auto thr = solve_xou_thresholds(p);
    const double u0 = std::log(5.0);
    for (double tau : {0.5, 10.0}) {
        const double prob = prob_positive_basis_xou(u0, p, thr, 0.0, tau);
        const auto mc = mc_terminal_expectation(u0, p.log_price(), tau, 100000, 31,
                                                [&](double u) { return u < thr.u_high ? 1.0 : 0.0; });
        const double se = std::sqrt(std::max(prob * (1.0 - prob), 1e-12) / 100000.0);
        EXPECT_LE(std::abs(mc.estimate - prob), 3.0 * se + 1e-12) << "tau = " << tau;
    }
}

TEST(XouFutures, RoutesAgree) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int k = 0; k < 8; ++k) {
        auto p = base_xou();
        p.beta = 0.04 + 0.08 * U(rng);
        p.delta_hat = 0.15 + 0.1 * U(rng);
        p.alpha = 0.05 + 0.2 * U(rng);
        p.sigma = std::sqrt(2.0 * p.alpha) * (0.2 + 0.6 * U(rng));
        p.c1 = k % 2 ? 0.05 * U(rng) : 0.0;
        const auto thr = solve_xou_thresholds(p);
        XouPricer pr(p, thr);
        const double u = 0.5 + 3.5 * U(rng), T = 0.05 + 3.0 * U(rng);
        EXPECT_NEAR(pr.futures_price(u, 0.0, T), pr.futures_price(u, 0.0, T, FuturesMethod::truncated_normal), 1e-8)
            << "draw " << k;
    }
}

TEST(XouFutures, BoundaryAndDominance) {
    const auto p = band_set();
    const auto thr = solve_xou_thresholds(p);
    XouPricer pr(p, thr);
    for (auto m : {FuturesMethod::expectation, FuturesMethod::truncated_normal, FuturesMethod::printed})
        EXPECT_EQ(pr.futures_price(1.0, 3.0, 3.0, m), pr.certificate_price(1.0));
    EXPECT_EQ(no_certificate_futures_xou(1.0, p, 3.0, 3.0), std::exp(1.0));
    for (double u : {0.5, std::log(5.0), 3.0, 3.6})
        for (double T : {0.1, 0.5, 1.0, 3.0, 10.0})
            EXPECT_GE(pr.futures_price(u, 0.0, T), no_certificate_futures_xou(u, p, 0.0, T)) << u << " " << T;
    EXPECT_THROW(pr.futures_price(1.0, 1.0, 0.5), std::invalid_argument);
    const double u = std::log(20.0);
    EXPECT_GT(std::abs(pr.futures_price(u, 0.0, 1.0, FuturesMethod::printed) - pr.futures_price(u, 0.0, 1.0)), 1.0);
}

TEST(XouFutures, MatchesSampledExpectation) {
    const auto p = band_set();
    const auto thr = solve_xou_thresholds(p);
    XouPricer pr(p, thr);
    const double u = std::log(20.0);
    const auto mc = mc_terminal_expectation(u, p.log_price(), 1.0, 100000, 41,
                                            [&](double x) { return pr.certificate_price(x); });
    EXPECT_LT(std::abs(mc.estimate - pr.futures_price(u, 0.0, 1.0)), 3.0 * mc.std_error);
}

TEST(XouFutures, NoCertificateVarianceTerm) {
    const auto p = band_set();
    const double u = std::log(20.0), T = 2.0;
    auto q = p;
    q.sigma = 0.0;
    const auto m = ou_conditional_moments(u, 0.0, T, q.alpha, q.mu, 0.0);
    EXPECT_NEAR(no_certificate_futures_xou(u, q, 0.0, T), std::exp(m.mean), 1e-12);

    const auto mc = mc_terminal_expectation(u, p.log_price(), T, 100000, 51, [](double x) { return std::exp(x); });
    const double lognormal = no_certificate_futures_xou(u, p, 0.0, T, PsiForm::lognormal);
    const double printed = no_certificate_futures_xou(u, p, 0.0, T, PsiForm::printed);
    EXPECT_LT(std::abs(mc.estimate - lognormal), 3.0 * mc.std_error);
    EXPECT_GT(std::abs(mc.estimate - printed), 10.0 * mc.std_error);
}

TEST(XouFutures, CornCurveSlopesUp) {
    const auto p = corn_up();
    const auto thr = solve_xou_thresholds(p);
    XouPricer pr(p, thr);
    const double u0 = std::log(167.0);
    double prev = pr.futures_price(u0, 0.0, 0.0);
    for (double T = 0.25; T <= 2.0; T += 0.25) {
        const double f = pr.futures_price(u0, 0.0, T);
        EXPECT_GT(f, prev) << "T = " << T;
        prev = f;
    }
}

TEST(XouBand, ImmediateSaleLeavesAnExitProblem) {
    // flat market storage above the certificate rate: grain is never worth
    // holding, yet waiting with the certificate is
    auto p = band_set();
    p.beta = 0.0;
    p.gamma = 1.0;
    const auto thr = solve_xou_thresholds(p);
    EXPECT_EQ(thr.u_star, -std::numeric_limits<double>::infinity());
    EXPECT_EQ(thr.u_low, -std::numeric_limits<double>::infinity());
    ASSERT_FALSE(thr.degenerate);
    ASSERT_TRUE(std::isfinite(thr.u_high));
    XouPricer pr(p, thr);
    for (double u = -2.0; u <= 5.0; u += 0.5) {
        EXPECT_EQ(pr.liquidation_value(u), std::exp(u) - p.c2);
        EXPECT_GE(pr.certificate_price(u), std::exp(u) - p.c1 - p.c2 - 1e-12) << u;
    }
    const double uh = thr.u_high, h = 1e-4;
    auto V = [&](double u) { return pr.certificate_price(u); };
    EXPECT_LE(std::abs(thr.B * pr.solutions().H(uh) - p.delta_hat / p.r - (std::exp(uh) - p.c1 - p.c2)), 1e-9);
    EXPECT_LE(std::abs(slope_left(V, uh, h) - slope_right(V, uh, h)), 1e-6 * std::exp(uh) + 1e-6);

    PolicySpec pol;
    pol.liquidation = StoppingRule::immediately();
    pol.exercise = StoppingRule::at_or_above(uh);
    PathGrid g;
    g.n_paths = 10000;
    g.seed = 41;
    const auto mc = value_policy(3.0, p, pol, g);
    EXPECT_LT(std::abs(mc.estimate - pr.certificate_price(3.0)), 3.0 * mc.std_error);

    for (double T : {0.3, 2.0})
        EXPECT_NEAR(pr.futures_price(3.0, 0.0, T), pr.futures_price(3.0, 0.0, T, FuturesMethod::truncated_normal), 1e-8);
}

TEST(XouBand, OneSidedBandWithoutLowerEdge) {
    // grain is held below u*, but storing it always costs more than the
    // certificate, so there is no reason to exercise at low prices
    auto p = band_set();
    p.beta = 0.0;
    p.gamma = 0.3;
    const auto thr = solve_xou_thresholds(p);
    ASSERT_TRUE(std::isfinite(thr.u_star));
    EXPECT_EQ(thr.u_low, -std::numeric_limits<double>::infinity());
    EXPECT_GE(thr.u_high, thr.u_star);
    XouPricer pr(p, thr);
    for (double u = -4.0; u <= thr.u_star; u += 0.25)
        EXPECT_GE(pr.certificate_price(u), pr.liquidation_value(u) - p.c1 - 1e-12) << u;

    PolicySpec pol;
    pol.liquidation = StoppingRule::at_or_above(thr.u_star);
    pol.exercise = StoppingRule::at_or_above(thr.u_high);
    PathGrid g;
    g.n_paths = 10000;
    g.seed = 43;
    const auto mc = value_policy(2.5, p, pol, g);
    EXPECT_LT(std::abs(mc.estimate - pr.certificate_price(2.5)), 3.0 * mc.std_error);
}
