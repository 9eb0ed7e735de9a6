#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "grainbasis/calibration.hpp"

using namespace grainbasis;

namespace {

std::vector<double> months(std::initializer_list<int> m) {
    std::vector<double> out;
    for (int k : m) out.push_back(k / 12.0);
    return out;
}

// corn, cents: fitted values quoted with the martingale curve fit
const std::vector<double> kMartTruth{-0.48, 0.0015, 0.0161, 1.2532};
const std::vector<double> kXouRight{10.75, 15.10, 5.52, 0.10, 0.12};

MartingaleExogenous mart_exo() {
    MartingaleExogenous e;
    e.delta_hat = 0.55;
    return e;
}

FuturesCurve martingale_synthetic(const std::vector<double>& mats) {
    FuturesCurve c;
    c.spot = 282.0;
    c.maturities = mats;
    c.prices = martingale_curve(martingale_params(kMartTruth, mart_exo()), kMartTruth[3], c.spot, mats);
    return c;
}

FuturesCurve xou_synthetic(const std::vector<double>& truth, double spot, const std::vector<double>& mats) {
    const auto p = xou_params(truth, XouExogenous{});
    FuturesCurve c;
    c.spot = spot;
    c.maturities = mats;
    c.prices = xou_curve(p, solve_xou_thresholds(p), std::log(spot), mats);
    return c;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

void expect_martingale_feasible(const CalibrationResult& r) {
    ASSERT_EQ(r.fitted.size(), 4u);
    EXPECT_GT(r.fitted[1], 0.0);
    EXPECT_GT(r.fitted[2], 0.0);
    EXPECT_LE(r.fitted[2] * r.fitted[2], 2.0 * r.fitted[1]);
    EXPECT_GE(r.sse, 0.0);
}

void expect_xou_feasible(const CalibrationResult& r) {
    ASSERT_EQ(r.fitted.size(), 5u);
    EXPECT_GE(r.fitted[0], 0.0);
    EXPECT_GT(r.fitted[3], 0.0);
    EXPECT_GT(r.fitted[4], 0.0);
    EXPECT_LT(r.fitted[4], std::sqrt(2.0 * r.fitted[3]));
    EXPECT_GE(r.sse, 0.0);
}

}  // namespace

TEST(Calibration, MartingaleTruthStart) {
    const auto c = martingale_synthetic(months({1, 3, 5, 8, 12, 15, 19, 24}));
    CalibrationOptions o;
    o.n_starts = 1;
    o.initial_guess = kMartTruth;
    const auto r = calibrate_martingale(c, mart_exo(), o);
    EXPECT_LE(r.start_sse[0], 1e-12);
    EXPECT_LE(r.sse, 1e-12);
    EXPECT_TRUE(r.converged);
    expect_martingale_feasible(r);
}

TEST(Calibration, MartingaleRandomStartsRecoverCurve) {
    const auto c = martingale_synthetic(months({1, 3, 5, 8, 12, 15, 19, 24}));
    CalibrationOptions o;
    o.n_starts = 8;
    const auto r = calibrate_martingale(c, mart_exo(), o);
    EXPECT_LE(max_abs(r.per_point_residuals), 0.1);
    expect_martingale_feasible(r);
    // the fit need not find the generating parameters, only the curve
    const auto refit = martingale_curve(martingale_params(r.fitted, mart_exo()), r.fitted[3], c.spot, c.maturities);
    for (std::size_t k = 0; k < refit.size(); ++k) EXPECT_NEAR(refit[k], c.prices[k], 0.1);
}

TEST(Calibration, MartingaleNoisyCurveReachesNoiseFloor) {
    auto c = martingale_synthetic(months({1, 2, 3, 4, 6, 7, 9, 10, 12, 13, 15, 16, 18, 19, 21, 24}));
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> noise(0.0, 1.0);
    double floor_sse = 0.0;
    for (double& f : c.prices) {
        const double e = noise(rng);
        f += e;
        floor_sse += e * e;
    }
    CalibrationOptions o;
    o.n_starts = 8;
    const auto r = calibrate_martingale(c, mart_exo(), o);
    const double n = static_cast<double>(c.prices.size());
    EXPECT_LE(r.sse, 2.0 * n);
    // the generating parameters are one candidate, so the fit must beat them
    EXPECT_LE(r.sse, floor_sse * (1.0 + 1e-9));
}

TEST(Calibration, XouTruthStart) {
    for (const auto& truth : {kXouRight, std::vector<double>{16.12, 15.08, 4.62, 0.058, 0.3}}) {
        const auto c = xou_synthetic(truth, 167.0, months({1, 3, 5, 8, 12, 15, 19, 24}));
        CalibrationOptions o;
        o.n_starts = 1;
        o.initial_guess = truth;
        const auto r = calibrate_xou(c, XouExogenous{}, o);
        EXPECT_LE(r.start_sse[0], 1e-12);
        EXPECT_LE(r.sse, 1e-12);
        expect_xou_feasible(r);
    }
}

TEST(Calibration, XouRandomStartsRecoverCurve) {
    const auto c = xou_synthetic(kXouRight, 167.0, months({1, 3, 5, 8, 12, 15, 19, 24}));
    CalibrationOptions o;
    o.n_starts = 4;
    const auto r = calibrate_xou(c, XouExogenous{}, o);
    EXPECT_LE(max_abs(r.per_point_residuals), 0.1);
    expect_xou_feasible(r);
    EXPECT_NEAR(r.sse, xou_sse(c, r.fitted, XouExogenous{}), 1e-12);
}

TEST(Calibration, InfeasibleGuessIsProjected) {
    const auto c = xou_synthetic(kXouRight, 167.0, months({3, 12}));
    CalibrationOptions o;
    o.n_starts = 1;
    o.max_evals_per_start = 50;
    // sigma above sqrt(2 alpha), and beta below its box
    o.initial_guess = std::vector<double>{-1.0, 15.08, 4.62, 0.058, 0.40};
    const auto r = calibrate_xou(c, XouExogenous{}, o);
    EXPECT_LT(r.start_sse[0], detail::kPenalty);
    expect_xou_feasible(r);

    const auto tr = detail::xou_transform(o);
    const auto x = tr.to_natural(tr.to_free(*o.initial_guess));
    EXPECT_GE(x[0], 0.0);
    EXPECT_LT(x[4], std::sqrt(2.0 * x[3]));

    const auto mc = martingale_synthetic(months({3, 12}));
    o.initial_guess = std::vector<double>{-0.48, -0.1, 0.5, 1.0};  // kappa < 0, zeta^2 > 2 kappa
    const auto rm = calibrate_martingale(mc, mart_exo(), o);
    EXPECT_LT(rm.start_sse[0], detail::kPenalty);
    expect_martingale_feasible(rm);
}

TEST(Calibration, CurveValidation) {
    FuturesCurve c;
    c.spot = 282.0;
    c.maturities = {0.25, 0.5, 0.5};
    c.prices = {290.0, 291.0, 292.0};
    try {
        c.validate();
        FAIL() << "duplicate maturity accepted";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("duplicate maturity 0.5"), std::string::npos);
    }
    c.maturities = {0.0, 0.5};
    c.prices = {283.0, 291.0};
    EXPECT_THROW(c.validate(), std::invalid_argument);  // F_0 must be the spot
    c.prices = {282.0, -1.0};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.maturities = {0.5, 0.25};
    c.prices = {282.0, 282.0};
    EXPECT_THROW(c.validate(), std::invalid_argument);

    FuturesCurve empty;
    empty.spot = 282.0;
    EXPECT_THROW(calibrate_martingale(empty, mart_exo()), std::invalid_argument);

    CalibrationOptions bad;
    bad.rate = {0.0, 5.0};
    EXPECT_THROW(calibrate_martingale(martingale_synthetic({0.5}), mart_exo(), bad), std::invalid_argument);
    MartingaleExogenous neg = mart_exo();
    neg.r = -0.01;
    EXPECT_THROW(calibrate_martingale(martingale_synthetic({0.5}), neg), std::invalid_argument);
}

TEST(Calibration, SpotOnlyCurveIsUnderDetermined) {
    FuturesCurve c;
    c.spot = 282.0;
    c.maturities = {0.0};
    c.prices = {282.0};
    CalibrationOptions o;
    o.n_starts = 2;
    const auto r = calibrate_martingale(c, mart_exo(), o);
    EXPECT_TRUE(r.under_determined);
    EXPECT_LE(r.sse, 1e-12);
    const auto rx = calibrate_xou(c, XouExogenous{}, o);
    EXPECT_TRUE(rx.under_determined);
    EXPECT_LE(rx.sse, 1e-12);

    const auto full = martingale_synthetic(months({3, 6, 9, 12, 18}));
    o.n_starts = 1;
    o.initial_guess = kMartTruth;
    EXPECT_FALSE(calibrate_martingale(full, mart_exo(), o).under_determined);
}

TEST(Calibration, ReportedSseIsRecomputedAndNoWorseThanAnyStart) {
    const auto c = martingale_synthetic(months({2, 6, 10, 14, 18, 22}));
    auto noisy = c;
    noisy.prices[2] += 0.7;
    noisy.prices[4] -= 0.4;
    CalibrationOptions o;
    o.n_starts = 6;
    const auto r = calibrate_martingale(noisy, mart_exo(), o);
    EXPECT_NEAR(r.sse, martingale_sse(noisy, r.fitted, mart_exo()), 1e-12);
    ASSERT_EQ(r.start_sse.size(), 6u);
    for (double s : r.start_sse) EXPECT_LE(r.sse, s);
    for (std::size_t i = 0; i < r.final_sse.size(); ++i) EXPECT_LE(r.final_sse[r.best_start], r.final_sse[i]);
    double resid = 0.0;
    for (double e : r.per_point_residuals) resid += e * e;
    EXPECT_NEAR(resid, r.sse, 1e-12);
}

TEST(Calibration, Reproducible) {
    const auto c = martingale_synthetic(months({2, 6, 10, 14, 18, 22}));
    CalibrationOptions o;
    o.n_starts = 4;
    o.seed = 99;
    o.max_evals_per_start = 600;
    o.threads = 1;
    const auto a = calibrate_martingale(c, mart_exo(), o);
    o.threads = 3;
    const auto b = calibrate_martingale(c, mart_exo(), o);
    EXPECT_EQ(a.fitted, b.fitted);
    EXPECT_EQ(a.sse, b.sse);
    EXPECT_EQ(a.start_sse, b.start_sse);
    EXPECT_EQ(a.best_start, b.best_start);
    o.seed = 100;
    const auto d = calibrate_martingale(c, mart_exo(), o);
    EXPECT_NE(a.start_sse, d.start_sse);
}

TEST(Calibration, WeightsEnterTheObjective) {
    auto c = martingale_synthetic(months({3, 9, 15}));
    const std::vector<double> model{c.prices[0] + 1.0, c.prices[1] + 2.0, c.prices[2]};
    EXPECT_DOUBLE_EQ(weighted_sse(c, model), 5.0);
    c.weights = {2.0, 0.5, 1.0};
    EXPECT_DOUBLE_EQ(weighted_sse(c, model), 4.0);
}

TEST(Calibration, LatinHypercubeStratifies) {
    const auto pts = detail::latin_hypercube(10, 3, 5);
    for (std::size_t d = 0; d < 3; ++d) {
        std::vector<int> seen(10, 0);
        for (const auto& p : pts) {
            ASSERT_GE(p[d], 0.0);
            ASSERT_LT(p[d], 1.0);
            ++seen[static_cast<std::size_t>(p[d] * 10.0)];
        }
        for (int s : seen) EXPECT_EQ(s, 1);
    }
}
