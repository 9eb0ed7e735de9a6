#pragma once

// Text formats of the command-line tool: the futures-curve CSV, the flat
// key=value run configuration and the result tables.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "grainbasis/calibration.hpp"

namespace grainbasis::io {

/// Malformed input file; line is 1-based, 0 when not tied to a line.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Strict decimal parse: the whole field must be consumed.
inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

/// Shortest text that reads back to the same double.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

// ---- futures curve CSV ------------------------------------------------------
//
// Header `maturity_years,price_cents` with an optional `weight` column; other
// columns are ignored, so a `curve` table reads back. Blank lines and lines
// starting with '#' are skipped. Rows may come in any order.

inline FuturesCurve read_curve_csv(std::istream& in, const std::string& source,
                                   std::optional<double> spot = std::nullopt) {
    std::string line;
    std::size_t lineno = 0;
    std::optional<std::size_t> col_t, col_f, col_w;
    std::size_t n_cols = 0;
    struct Row {
        double t, f, w;
        std::size_t line;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto fields = split(body, ',');
        if (n_cols == 0) {
            n_cols = fields.size();
            for (std::size_t i = 0; i < fields.size(); ++i) {
                std::optional<std::size_t>* slot = fields[i] == "maturity_years" ? &col_t
                                                   : fields[i] == "price_cents"  ? &col_f
                                                   : fields[i] == "weight"       ? &col_w
                                                                                 : nullptr;
                if (!slot) continue;
                if (slot->has_value()) throw FormatError(source, lineno, "repeated column " + std::string(fields[i]));
                *slot = i;
            }
            if (!col_t || !col_f) throw FormatError(source, lineno, "header must name maturity_years and price_cents");
            continue;
        }
        if (fields.size() != n_cols)
            throw FormatError(source, lineno,
                              "expected " + std::to_string(n_cols) + " fields, found " + std::to_string(fields.size()));
        auto number = [&](std::size_t col, const char* what) {
            const auto v = parse_double(fields[col]);
            if (!v || !std::isfinite(*v))
                throw FormatError(source, lineno, std::string("bad ") + what + " '" + std::string(fields[col]) + "'");
            return *v;
        };
        Row r{number(*col_t, "maturity"), number(*col_f, "price"), col_w ? number(*col_w, "weight") : 1.0, lineno};
        if (r.t < 0.0) throw FormatError(source, lineno, "negative maturity");
        if (!(r.f > 0.0)) throw FormatError(source, lineno, "price must be positive");
        if (r.w < 0.0) throw FormatError(source, lineno, "negative weight");
        rows.push_back(r);
    }
    if (n_cols == 0) throw FormatError(source, lineno, "empty file");
    if (rows.empty()) throw FormatError(source, lineno, "no data rows");
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    for (std::size_t k = 1; k < rows.size(); ++k)
        if (rows[k].t == rows[k - 1].t)
            throw FormatError(source, std::max(rows[k].line, rows[k - 1].line),
                              "duplicate maturity " + format_number(rows[k].t) + " (also on line " +
                                  std::to_string(std::min(rows[k].line, rows[k - 1].line)) + ")");

    FuturesCurve c;
    if (rows.front().t == 0.0) {
        if (spot && std::abs(*spot - rows.front().f) > 1e-9 * std::max(1.0, *spot))
            throw FormatError(source, rows.front().line, "T = 0 price " + format_number(rows.front().f) +
                                                             " differs from the spot " + format_number(*spot));
        c.spot = rows.front().f;
    } else if (spot) {
        c.spot = *spot;
    } else {
        throw std::invalid_argument("the curve has no T = 0 row; give the spot explicitly");
    }
    for (const auto& r : rows) {
        c.maturities.push_back(r.t);
        c.prices.push_back(r.f);
        if (col_w) c.weights.push_back(r.w);
    }
    c.validate();
    return c;
}

// ---- run configuration ------------------------------------------------------
//
// `key = value` lines, '#' comments. Keys carry a section prefix: model.,
// exo. or solver.

using Config = std::map<std::string, std::string>;

inline Config read_config(std::istream& in, const std::string& source) {
    Config cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto body = trim(line);
        if (const auto hash = body.find('#'); hash != std::string_view::npos) body = trim(body.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw FormatError(source, lineno, "expected key = value");
        const std::string key(trim(body.substr(0, eq)));
        const std::string value(trim(body.substr(eq + 1)));
        if (!(key.starts_with("model.") || key.starts_with("exo.") || key.starts_with("solver.")))
            throw FormatError(source, lineno, "key '" + key + "' lacks a model., exo. or solver. prefix");
        if (value.empty()) throw FormatError(source, lineno, "empty value for " + key);
        if (!cfg.emplace(key, value).second) throw FormatError(source, lineno, "repeated key " + key);
    }
    return cfg;
}

/// A number list: `a`, `a,b,c` or the inclusive range `lo:hi:step`.
inline std::vector<double> parse_grid(const std::string& spec) {
    auto fail = [&]() { return std::invalid_argument("bad number list '" + spec + "'"); };
    if (spec.find(':') != std::string::npos) {
        const auto parts = split(spec, ':');
        if (parts.size() != 3) throw fail();
        const auto lo = parse_double(parts[0]), hi = parse_double(parts[1]), step = parse_double(parts[2]);
        if (!lo || !hi || !step || !(*step > 0.0) || !(*hi >= *lo) || !std::isfinite(*hi)) throw fail();
        const double n = std::floor((*hi - *lo) / *step + 1e-9);
        if (n > 1e6) throw fail();
        std::vector<double> out;
        for (int i = 0; i <= static_cast<int>(n); ++i) out.push_back(*lo + i * *step);
        return out;
    }
    std::vector<double> out;
    for (auto f : split(spec, ',')) {
        const auto v = parse_double(f);
        if (!v || !std::isfinite(*v)) throw fail();
        out.push_back(*v);
    }
    return out;
}

// ---- result tables ----------------------------------------------------------

enum class Format { csv, tsv, json_lines };

using Cell = std::variant<double, long long, bool, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row) {
        if (row.size() != columns.size()) throw std::logic_error("Table: row width differs from header");
        rows.push_back(std::move(row));
    }
};

inline std::string cell_text(const Cell& c) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) return format_number(v);
            else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
            else if constexpr (std::is_same_v<T, long long>) return std::to_string(v);
            else return v;
        },
        c);
}

inline nlohmann::json cell_json(const Cell& c) {
    return std::visit(
        [](const auto& v) -> nlohmann::json {
            using T = std::decay_t<decltype(v)>;
            // JSON has no inf or nan; spell them as strings
            if constexpr (std::is_same_v<T, double>) return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(format_number(v));
            else return nlohmann::json(v);
        },
        c);
}

inline void write_table(const Table& t, Format f, std::ostream& out) {
    if (f == Format::json_lines) {
        for (const auto& row : t.rows) {
            nlohmann::ordered_json obj = nlohmann::ordered_json::object();
            for (std::size_t i = 0; i < row.size(); ++i) obj[t.columns[i]] = cell_json(row[i]);
            out << obj.dump() << '\n';
        }
        return;
    }
    const char sep = f == Format::csv ? ',' : '\t';
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? std::string(1, sep) : "") << t.columns[i];
    out << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? std::string(1, sep) : "") << cell_text(row[i]);
        out << '\n';
    }
}

}  // namespace grainbasis::io
