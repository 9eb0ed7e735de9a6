#pragma once

// The `grainbasis` command-line tool. run_cli parses, dispatches and maps
// failures to exit codes: 0 ok, 2 solver failure / calibration not converged /
// oracle mismatch, 64 usage or invalid configuration, 65 malformed data file.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "grainbasis/calibration.hpp"
#include "grainbasis/io.hpp"
#include "grainbasis/martingale.hpp"
#include "grainbasis/mc_oracle.hpp"
#include "grainbasis/xou.hpp"

namespace grainbasis::cli {

enum ExitCode : int { exit_ok = 0, exit_failure = 2, exit_usage = 64, exit_data = 65 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "model.type",   "model.nu",     "model.kappa",  "model.zeta",   "model.sigma",
        "model.alpha",  "model.mu",     "model.beta",   "model.gamma",  "exo.r",
        "exo.cert_rate", "exo.cert_rate_monthly", "exo.cert_rate_annual", "exo.price_unit",
        "exo.c1",       "exo.c2",       "exo.spot",     "exo.delta",    "exo.u",
        "solver.seed",  "solver.threads", "solver.starts", "solver.max_evals", "solver.paths",
        "solver.method", "solver.guess"};
    return keys;
}

inline const std::set<std::string> kMartingaleOnly{"model.nu", "model.kappa", "model.zeta", "exo.delta"};
inline const std::set<std::string> kXouOnly{"model.alpha", "model.mu", "model.beta", "model.gamma", "exo.u"};

/// Merged run configuration: config file, then --set, then dedicated flags.
class Settings {
public:
    explicit Settings(io::Config kv) : kv_(std::move(kv)) {
        for (const auto& [k, v] : kv_)
            if (!known_keys().count(k)) throw UsageError("unknown configuration key '" + k + "'");
        model_ = text("model.type").value_or("martingale");
        if (model_ != "martingale" && model_ != "xou") throw UsageError("model must be martingale or xou, not '" + model_ + "'");
        const auto& foreign = model_ == "martingale" ? kXouOnly : kMartingaleOnly;
        for (const auto& [k, v] : kv_)
            if (foreign.count(k)) throw UsageError("'" + k + "' does not apply to the " + model_ + " model");
        const auto unit = text("exo.price_unit").value_or("cents");
        if (unit != "cents" && unit != "dollars") throw UsageError("price unit must be cents or dollars");
        per_dollar_ = unit == "cents" ? 100.0 : 1.0;
        unit_ = unit;
    }

    const std::string& model() const { return model_; }
    bool is_xou() const { return model_ == "xou"; }
    const std::string& unit() const { return unit_; }
    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::optional<std::string> text(const std::string& key) const {
        const auto it = kv_.find(key);
        if (it == kv_.end()) return std::nullopt;
        return it->second;
    }
    std::optional<double> number(const std::string& key) const {
        const auto t = text(key);
        if (!t) return std::nullopt;
        const auto v = io::parse_double(*t);
        if (!v || !std::isfinite(*v)) throw UsageError("bad number '" + *t + "' for " + key);
        return v;
    }
    std::optional<std::uint64_t> count(const std::string& key) const {
        const auto t = text(key);
        if (!t) return std::nullopt;
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(t->data(), t->data() + t->size(), v);
        if (ec != std::errc() || ptr != t->data() + t->size())
            throw UsageError("bad non-negative integer '" + *t + "' for " + key);
        return v;
    }
    std::optional<std::vector<double>> grid(const std::string& key) const {
        const auto t = text(key);
        if (!t) return std::nullopt;
        try {
            return io::parse_grid(*t);
        } catch (const std::invalid_argument& e) {
            throw UsageError(std::string(e.what()) + " for " + key);
        }
    }
    double scalar(const std::string& key, const char* flag) const {
        const auto g = grid(key);
        if (!g) throw UsageError(std::string("missing required ") + flag);
        if (g->size() != 1) throw UsageError(std::string(flag) + " takes a single value for this command");
        return g->front();
    }

    /// Certificate storage rate in price units per year, if given.
    std::optional<double> cert_rate() const {
        const int given = has("exo.cert_rate") + has("exo.cert_rate_monthly") + has("exo.cert_rate_annual");
        if (given > 1) throw UsageError("give the certificate rate once, in one unit");
        if (auto v = number("exo.cert_rate")) return v;
        if (auto v = number("exo.cert_rate_monthly")) return *v * 12.0 / 100.0 * per_dollar_;  // cents/bu/month
        if (auto v = number("exo.cert_rate_annual")) return *v * per_dollar_;                  // $/bu/yr
        return std::nullopt;
    }

    std::uint64_t seed() const { return count("solver.seed").value_or(1); }
    unsigned threads() const { return static_cast<unsigned>(count("solver.threads").value_or(0)); }

    FuturesMethod method() const {
        const auto m = text("solver.method").value_or("truncated-normal");
        if (m == "truncated-normal") return FuturesMethod::truncated_normal;
        if (m == "expectation") return FuturesMethod::expectation;
        if (m == "printed") return FuturesMethod::printed;
        throw UsageError("method must be truncated-normal, expectation or printed");
    }

    MartingaleParams martingale() const {
        MartingaleParams p;
        p.r = number("exo.r").value_or(p.r);
        p.sigma = number("model.sigma").value_or(p.sigma);
        p.kappa = number("model.kappa").value_or(p.kappa);
        p.nu = number("model.nu").value_or(p.nu);
        p.zeta = number("model.zeta").value_or(p.zeta);
        p.delta_hat = cert_rate().value_or(p.delta_hat);
        p.c1 = number("exo.c1").value_or(p.c1);
        p.c2 = number("exo.c2").value_or(p.c2);
        p.validate();
        return p;
    }

    XouParams xou() const {
        XouParams p;
        p.r = number("exo.r").value_or(p.r);
        p.alpha = number("model.alpha").value_or(p.alpha);
        p.mu = number("model.mu").value_or(p.mu);
        p.sigma = number("model.sigma").value_or(p.sigma);
        p.beta = number("model.beta").value_or(p.beta);
        p.gamma = number("model.gamma").value_or(p.gamma);
        p.delta_hat = cert_rate().value_or(p.delta_hat);
        p.c1 = number("exo.c1").value_or(p.c1);
        p.c2 = number("exo.c2").value_or(p.c2);
        p.validate();
        return p;
    }

    /// XOU log prices from --u, or the log of --spot.
    std::vector<double> log_prices() const {
        if (has("exo.u") && has("exo.spot")) throw UsageError("give either --u or --spot, not both");
        if (auto u = grid("exo.u")) return *u;
        auto s = grid("exo.spot");
        if (!s) throw UsageError("missing required --spot or --u");
        for (double& x : *s) {
            if (!(x > 0.0)) throw UsageError("--spot must be positive");
            x = std::log(x);
        }
        return *s;
    }
    std::vector<double> spots() const {
        auto s = grid("exo.spot");
        if (!s) throw UsageError("missing required --spot");
        for (double x : *s)
            if (!(x > 0.0)) throw UsageError("--spot must be positive");
        return *s;
    }
    std::vector<double> deltas() const {
        auto d = grid("exo.delta");
        if (!d) throw UsageError("missing required --delta");
        return *d;
    }

private:
    io::Config kv_;
    std::string model_;
    std::string unit_;
    double per_dollar_ = 100.0;
};

inline std::string price_column(const Settings& s) { return "price_" + s.unit(); }

inline io::Table curve_table(const Settings& s) {
    return io::Table{{"maturity_years", price_column(s), "psi_no_certificate", "premium"}, {}};
}

// ---- commands -----------------------------------------------------------------

inline io::Table cmd_thresholds(const Settings& s) {
    if (!s.is_xou()) {
        const auto p = s.martingale();
        const double d = solve_delta_star(p);
        io::Table t{{"model", "delta_star", "residual"}, {}};
        t.add({std::string("martingale"), d, delta_star_residual(p, d)});
        return t;
    }
    const auto p = s.xou();
    const auto th = solve_xou_thresholds(p);
    io::Table t{{"model", "u_low", "u_star", "u_high", "A", "B", "C", "degenerate", "liquidation_residual",
                 "low_residual", "high_residual"},
                {}};
    t.add({std::string("xou"), th.u_low, th.u_star, th.u_high, th.A, th.B, th.C, th.degenerate,
           th.liquidation_residual, th.low_residual, th.high_residual});
    return t;
}

inline io::Table cmd_price(const Settings& s, std::optional<double> horizon) {
    if (horizon && !(*horizon >= 0.0)) throw UsageError("--horizon must be non-negative");
    const auto method = s.method();
    if (!s.is_xou()) {
        const MartingalePricer pr(s.martingale());
        io::Table t{{"spot", "delta", "certificate_value", "liquidation_value", "basis"}, {}};
        if (horizon) t.columns.insert(t.columns.end(), {"horizon", "futures", "psi_no_certificate"});
        for (double d : s.deltas())
            for (double S : s.spots()) {
                const MartingaleState st{S, d};
                std::vector<io::Cell> row{S, d, pr.certificate_price(st), liquidation_value(st, pr.params()), pr.basis(st)};
                if (horizon) {
                    row.push_back(*horizon);
                    row.push_back(pr.futures_price(st, 0.0, *horizon, method));
                    row.push_back(pr.no_certificate_futures(st, 0.0, *horizon));
                }
                t.add(std::move(row));
            }
        return t;
    }
    const auto p = s.xou();
    const XouPricer pr(p, solve_xou_thresholds(p));
    io::Table t{{"log_price", "spot", "certificate_value", "liquidation_value", "basis"}, {}};
    if (horizon) t.columns.insert(t.columns.end(), {"horizon", "futures", "psi_no_certificate"});
    for (double u : s.log_prices()) {
        std::vector<io::Cell> row{u, std::exp(u), pr.certificate_price(u), pr.liquidation_value(u), pr.basis(u)};
        if (horizon) {
            row.push_back(*horizon);
            row.push_back(pr.futures_price(u, 0.0, *horizon, method));
            row.push_back(no_certificate_futures_xou(u, p, 0.0, *horizon));
        }
        t.add(std::move(row));
    }
    return t;
}

inline void check_maturities(const std::vector<double>& mats, const char* flag) {
    if (mats.empty()) throw UsageError(std::string(flag) + " is empty");
    for (double m : mats)
        if (!(m >= 0.0)) throw UsageError(std::string(flag) + " must be non-negative");
}

inline io::Table cmd_curve(const Settings& s, const std::vector<double>& mats) {
    check_maturities(mats, "--maturities");
    const auto method = s.method();
    io::Table t = curve_table(s);
    if (!s.is_xou()) {
        const MartingalePricer pr(s.martingale());
        const MartingaleState st{s.scalar("exo.spot", "--spot"), s.scalar("exo.delta", "--delta")};
        if (!(st.S > 0.0)) throw UsageError("--spot must be positive");
        for (double T : mats) {
            const double f = pr.futures_price(st, 0.0, T, method), psi = pr.no_certificate_futures(st, 0.0, T);
            t.add({T, f, psi, f - psi});
        }
        return t;
    }
    const auto p = s.xou();
    const XouPricer pr(p, solve_xou_thresholds(p));
    const auto us = s.log_prices();
    if (us.size() != 1) throw UsageError("--spot takes a single value for this command");
    for (double T : mats) {
        const double f = pr.futures_price(us[0], 0.0, T, method), psi = no_certificate_futures_xou(us[0], p, 0.0, T);
        t.add({T, f, psi, f - psi});
    }
    return t;
}

inline io::Table cmd_prob_basis(const Settings& s, const std::vector<double>& horizons) {
    check_maturities(horizons, "--horizons");
    io::Table t{{"horizon", "prob_positive_basis"}, {}};
    if (!s.is_xou()) {
        const MartingalePricer pr(s.martingale());
        // the probability does not depend on the spot
        const double S = s.has("exo.spot") ? s.scalar("exo.spot", "--spot") : 1.0;
        const MartingaleState st{S, s.scalar("exo.delta", "--delta")};
        for (double h : horizons) t.add({h, pr.prob_positive_basis(st, 0.0, h)});
        return t;
    }
    const auto p = s.xou();
    const XouPricer pr(p, solve_xou_thresholds(p));
    const auto us = s.log_prices();
    if (us.size() != 1) throw UsageError("--spot takes a single value for this command");
    for (double h : horizons) t.add({h, pr.prob_positive_basis(us[0], 0.0, h)});
    return t;
}

struct CalibrateOutput {
    io::Table result;
    io::Table curve;
    bool converged = false;
};

inline CalibrateOutput cmd_calibrate(const Settings& s, const FuturesCurve& curve, std::size_t starts,
                                     std::size_t max_evals) {
    CalibrationOptions o;
    o.seed = s.seed();
    o.threads = s.threads();
    if (starts) o.n_starts = starts;
    if (max_evals) o.max_evals_per_start = max_evals;
    if (s.unit() == "dollars") o.units_per_dollar = 1.0;

    const std::vector<std::string> fitted_keys =
        s.is_xou() ? std::vector<std::string>{"model.beta", "model.gamma", "model.mu", "model.alpha", "model.sigma"}
                   : std::vector<std::string>{"model.nu", "model.kappa", "model.zeta", "exo.delta"};
    if (auto g = s.grid("solver.guess")) {
        if (g->size() != fitted_keys.size())
            throw UsageError("--guess needs " + std::to_string(fitted_keys.size()) + " values");
        o.initial_guess = *g;
    } else {
        // a complete parameter set in the configuration serves as the first start
        std::vector<double> guess;
        for (const auto& k : fitted_keys)
            if (auto v = s.number(k)) guess.push_back(*v);
        if (guess.size() == fitted_keys.size()) o.initial_guess = guess;
        else if (!guess.empty())
            throw UsageError("calibrate fits every model parameter; give all of them as a start or none");
    }

    CalibrationResult r;
    io::Table fitted = curve_table(s);
    fitted.columns.insert(fitted.columns.end(), {"observed", "residual"});
    std::vector<double> model, psi;
    if (!s.is_xou()) {
        MartingaleExogenous e;
        e.r = s.number("exo.r").value_or(e.r);
        e.sigma = s.number("model.sigma").value_or(e.sigma);
        e.delta_hat = s.cert_rate().value_or(e.delta_hat);
        e.c1 = s.number("exo.c1").value_or(e.c1);
        e.c2 = s.number("exo.c2").value_or(e.c2);
        r = calibrate_martingale(curve, e, o);
        const auto p = martingale_params(r.fitted, e);
        model = martingale_curve(p, r.fitted[3], curve.spot, curve.maturities);
        for (double T : curve.maturities) psi.push_back(no_certificate_futures(MartingaleState{curve.spot, r.fitted[3]}, p, 0.0, T));
    } else {
        XouExogenous e;
        e.r = s.number("exo.r").value_or(e.r);
        e.delta_hat = s.cert_rate().value_or(e.delta_hat);
        e.c1 = s.number("exo.c1").value_or(e.c1);
        e.c2 = s.number("exo.c2").value_or(e.c2);
        r = calibrate_xou(curve, e, o);
        const auto p = xou_params(r.fitted, e);
        model = xou_curve(p, solve_xou_thresholds(p), std::log(curve.spot), curve.maturities);
        for (double T : curve.maturities) psi.push_back(no_certificate_futures_xou(std::log(curve.spot), p, 0.0, T));
    }
    for (std::size_t k = 0; k < model.size(); ++k)
        fitted.add({curve.maturities[k], model[k], psi[k], model[k] - psi[k], curve.prices[k], model[k] - curve.prices[k]});

    io::Table res{{"key", "value"}, {}};
    res.add({std::string("model"), r.model});
    for (std::size_t i = 0; i < r.names.size(); ++i) res.add({r.names[i], r.fitted[i]});
    res.add({std::string("sse"), r.sse});
    res.add({std::string("converged"), r.converged});
    res.add({std::string("under_determined"), r.under_determined});
    res.add({std::string("n_starts"), static_cast<long long>(r.n_starts)});
    res.add({std::string("best_start"), static_cast<long long>(r.best_start)});
    res.add({std::string("evaluations"), static_cast<long long>(r.evaluations)});
    res.add({std::string("seed"), static_cast<long long>(o.seed)});
    return {std::move(res), std::move(fitted), r.converged};
}

struct OracleRow {
    std::string quantity;
    double closed_form, mc, std_error, truncation_bound;
};

inline bool oracle_pass(const OracleRow& r) {
    const double scale = std::max(1.0, std::abs(r.closed_form));
    const bool close = r.std_error > 0.0 ? std::abs(r.closed_form - r.mc) <= 3.0 * r.std_error
                                         : std::abs(r.closed_form - r.mc) <= 1e-9 * scale;
    return close && r.truncation_bound < 1e-3 * scale;
}

inline io::Table cmd_oracle(const Settings& s, std::size_t paths, double horizon, bool& all_pass) {
    if (paths < 2) throw UsageError("--paths must be at least 2");
    if (!(horizon > 0.0)) throw UsageError("--horizon must be positive");
    PathGrid grid;
    grid.n_paths = paths;
    grid.seed = s.seed();
    const unsigned threads = s.threads();
    std::vector<OracleRow> rows;
    auto add = [&](std::string q, double closed, const McEstimate& e) {
        rows.push_back({std::move(q), closed, e.estimate, e.std_error, e.truncation_bound});
    };
    if (!s.is_xou()) {
        const MartingalePricer pr(s.martingale());
        const MartingaleState st{s.scalar("exo.spot", "--spot"), s.scalar("exo.delta", "--delta")};
        if (!(st.S > 0.0)) throw UsageError("--spot must be positive");
        PolicySpec optimal;
        optimal.exercise = StoppingRule::at_or_below(pr.delta_star());
        add("certificate_value", pr.certificate_price(st), value_policy(st, pr.params(), optimal, grid, threads));
        PolicySpec now;
        add("exercise_now_value", st.S - pr.params().c1, value_policy(st, pr.params(), now, grid, threads));
        add("futures", pr.futures_price(st, 0.0, horizon), mc_martingale_futures(st, pr, horizon, grid, threads));
    } else {
        const auto p = s.xou();
        const XouPricer pr(p, solve_xou_thresholds(p));
        const auto& th = pr.thresholds();
        const auto us = s.log_prices();
        if (us.size() != 1) throw UsageError("--spot takes a single value for this command");
        const double u = us[0];
        const auto sell = std::isinf(th.u_star) ? StoppingRule::immediately() : StoppingRule::at_or_above(th.u_star);
        PolicySpec grain;
        grain.holding_grain = true;
        grain.liquidation = sell;
        add("liquidation_value", pr.liquidation_value(u), value_policy(u, p, grain, grid, threads));
        PolicySpec cert;
        cert.exercise = th.degenerate ? StoppingRule::immediately() : StoppingRule::outside(th.u_low, th.u_high);
        cert.liquidation = sell;
        add("certificate_value", pr.certificate_price(u), value_policy(u, p, cert, grid, threads));
        add("futures", pr.futures_price(u, 0.0, horizon),
            mc_terminal_expectation(u, p.log_price(), horizon, paths, grid.seed,
                                    [&](double x) { return pr.certificate_price(x); }, threads));
    }
    io::Table t{{"quantity", "closed_form", "monte_carlo", "std_error", "z", "truncation_bound", "pass"}, {}};
    all_pass = true;
    for (const auto& r : rows) {
        const bool ok = oracle_pass(r);
        all_pass = all_pass && ok;
        const double z = r.std_error > 0.0 ? (r.mc - r.closed_form) / r.std_error : 0.0;
        t.add({r.quantity, r.closed_form, r.mc, r.std_error, z, r.truncation_bound, ok});
    }
    return t;
}

inline io::Format parse_format(const std::string& f) {
    if (f == "tsv") return io::Format::tsv;
    if (f == "json-lines") return io::Format::json_lines;
    return io::Format::csv;
}

inline void write_result(const io::Table& t, io::Format f, std::ostream& out) {
    if (f != io::Format::json_lines) return io::write_table(t, f, out);
    // one object for the whole key/value result
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (const auto& row : t.rows) obj[io::cell_text(row[0])] = io::cell_json(row[1]);
    out << obj.dump() << '\n';
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Shipping-certificate pricing, futures curves and calibration for grain storage models", "grainbasis"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::map<std::string, std::string> flags;
    std::vector<std::string> sets;
    std::string config_path, format = "csv";
    auto flag = [&](const std::string& name, const std::string& key, const std::string& help) {
        return app.add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
    };
    app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", sets, "override one configuration entry, KEY=VALUE (repeatable)")->allow_extra_args(false);
    app.add_option("--format", format, "output format")->check(CLI::IsMember({"csv", "tsv", "json-lines"}));
    flag("--model", "model.type", "martingale or xou")->check(CLI::IsMember({"martingale", "xou"}));
    flag("--price-unit", "exo.price_unit", "unit of prices and rates: cents (default) or dollars")
        ->check(CLI::IsMember({"cents", "dollars"}));
    auto* cr = flag("--cert-rate", "exo.cert_rate", "certificate storage rate, price units per bushel per year");
    auto* crm = flag("--cert-rate-monthly", "exo.cert_rate_monthly", "certificate storage rate, cents per bushel per month");
    auto* cra = flag("--cert-rate-annual", "exo.cert_rate_annual", "certificate storage rate, dollars per bushel per year");
    cr->excludes(crm)->excludes(cra);
    crm->excludes(cra);
    flag("--r", "exo.r", "interest rate");
    flag("--c1", "exo.c1", "cost of exercising the certificate");
    flag("--c2", "exo.c2", "cost of selling the grain");
    flag("--sigma", "model.sigma", "spot volatility (martingale) or log-price volatility (xou)");
    flag("--nu", "model.nu", "martingale: long-run storage rate");
    flag("--kappa", "model.kappa", "martingale: storage-rate mean reversion");
    flag("--zeta", "model.zeta", "martingale: storage-rate volatility");
    flag("--alpha", "model.alpha", "xou: log-price mean reversion");
    flag("--mu", "model.mu", "xou: long-run log price");
    flag("--beta", "model.beta", "xou: storage-rate slope in the log price");
    flag("--gamma", "model.gamma", "xou: storage-rate intercept");
    flag("--spot", "exo.spot", "spot price, or a list a,b,c / range lo:hi:step where the command takes a grid");
    flag("--delta", "exo.delta", "martingale: current storage rate (list or range for price)");
    flag("--u", "exo.u", "xou: current log price instead of --spot (list or range for price)");
    flag("--seed", "solver.seed", "seed of every randomized step");
    flag("--threads", "solver.threads", "worker threads, 0 for all (GRAINBASIS_THREADS caps)");
    flag("--method", "solver.method", "futures evaluation: truncated-normal (default), expectation or printed")
        ->check(CLI::IsMember({"truncated-normal", "expectation", "printed"}));

    auto* thresholds = app.add_subcommand("thresholds", "solve the exercise and liquidation thresholds");
    auto* price = app.add_subcommand("price", "certificate value, liquidation value and basis over a state grid");
    std::optional<double> horizon;
    price->add_option("--horizon", horizon, "also price the futures contract maturing after this many years");
    auto* curve = app.add_subcommand("curve", "model futures curve as plot-ready CSV");
    std::string maturities;
    curve->add_option("--maturities", maturities, "maturities in years, list or lo:hi:step")->required();
    auto* calibrate = app.add_subcommand("calibrate", "fit the model to a futures curve");
    std::string curve_path, curve_out;
    std::size_t starts = 0, max_evals = 0;
    calibrate->add_option("--curve", curve_path, "CSV with maturity_years,price_cents[,weight]")->required();
    calibrate->add_option("--curve-out", curve_out, "write the fitted curve here instead of after the result");
    calibrate->add_option("--starts", starts, "number of multistart points");
    calibrate->add_option("--max-evals", max_evals, "objective evaluations per start");
    calibrate->add_option_function<std::string>("--guess", [&](const std::string& v) { flags["solver.guess"] = v; },
                                                "first start, fitted parameters in reported order");
    auto* prob = app.add_subcommand("prob-basis", "probability of a positive basis at each horizon");
    std::string horizons;
    prob->add_option("--horizons", horizons, "horizons in years, list or lo:hi:step")->required();
    auto* oracle = app.add_subcommand("oracle", "compare closed forms against Monte Carlo");
    std::size_t paths = 20000;
    double oracle_horizon = 1.0;
    oracle->add_option("--paths", paths, "simulated paths per quantity");
    oracle->add_option("--horizon", oracle_horizon, "futures maturity for the futures check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        io::Config kv;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw UsageError("cannot open " + config_path);
            kv = io::read_config(in, config_path);
        }
        for (const auto& kvs : sets) {
            const auto eq = kvs.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + kvs + "'");
            kv[std::string(io::trim(std::string_view(kvs).substr(0, eq)))] =
                std::string(io::trim(std::string_view(kvs).substr(eq + 1)));
        }
        for (const auto& [k, v] : flags) kv[k] = v;
        const detail::Settings s(std::move(kv));
        const auto fmt = detail::parse_format(format);

        if (thresholds->parsed()) {
            io::write_table(detail::cmd_thresholds(s), fmt, out);
        } else if (price->parsed()) {
            io::write_table(detail::cmd_price(s, horizon), fmt, out);
        } else if (curve->parsed()) {
            io::write_table(detail::cmd_curve(s, io::parse_grid(maturities)), fmt, out);
        } else if (prob->parsed()) {
            io::write_table(detail::cmd_prob_basis(s, io::parse_grid(horizons)), fmt, out);
        } else if (calibrate->parsed()) {
            std::ifstream in(curve_path);
            if (!in) throw UsageError("cannot open " + curve_path);
            std::optional<double> spot;
            if (s.has("exo.spot")) spot = s.scalar("exo.spot", "--spot");
            const auto data = io::read_curve_csv(in, curve_path, spot);
            const auto res = detail::cmd_calibrate(s, data, starts, max_evals);
            detail::write_result(res.result, fmt, out);
            if (curve_out.empty()) {
                out << '\n';
                io::write_table(res.curve, fmt, out);
            } else {
                std::ofstream co(curve_out);
                if (!co) throw UsageError("cannot write " + curve_out);
                io::write_table(res.curve, fmt, co);
            }
            if (!res.converged) {
                err << "grainbasis: calibration did not converge within the evaluation budget\n";
                return exit_failure;
            }
        } else if (oracle->parsed()) {
            bool pass = false;
            io::write_table(detail::cmd_oracle(s, paths, oracle_horizon, pass), fmt, out);
            if (!pass) {
                err << "grainbasis: closed form and Monte Carlo disagree\n";
                return exit_failure;
            }
        }
        return exit_ok;
    } catch (const io::FormatError& e) {
        err << "grainbasis: " << e.what() << '\n';
        return exit_data;
    } catch (const UsageError& e) {
        err << "grainbasis: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::invalid_argument& e) {
        err << "grainbasis: invalid configuration: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::domain_error& e) {
        err << "grainbasis: invalid configuration: " << e.what() << '\n';
        return exit_usage;
    } catch (const SolverError& e) {
        err << "grainbasis: solver failure: " << e.what() << '\n';
        return exit_failure;
    } catch (const NumericalError& e) {
        err << "grainbasis: numerical failure: " << e.what() << '\n';
        return exit_failure;
    } catch (const std::exception& e) {
        err << "grainbasis: " << e.what() << '\n';
        return exit_failure;
    }
}

}  // namespace grainbasis::cli
