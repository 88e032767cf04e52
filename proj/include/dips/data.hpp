#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dips/errors.hpp"

namespace dips {

/// Observed data Z_i = (Y_i, T_i, X_i), i = 1..n. Immutable once validated.
struct Dataset {
    Eigen::VectorXd y;
    Eigen::VectorXi t;
    Eigen::MatrixXd x;
    std::vector<std::string> names;
    std::string outcome_name = "Y";
    std::string treatment_name = "T";

    Eigen::Index n() const { return x.rows(); }
    Eigen::Index p() const { return x.cols(); }

    Eigen::Index arm_size(int k) const { return (t.array() == k).count(); }

    /// Throws DataError if shapes disagree, t is not 0/1, or x is non-finite.
    void validate() const {
        if (y.size() != x.rows() || t.size() != x.rows())
            throw DataError("dataset shape mismatch: y, t and x must have the same row count");
        if (static_cast<Eigen::Index>(names.size()) != x.cols())
            throw DataError("dataset has " + std::to_string(x.cols()) + " covariates but " +
                            std::to_string(names.size()) + " names");
        if (n() < 2) throw DataError("dataset needs at least 2 rows");
        if (p() < 1) throw DataError("dataset needs at least 1 covariate");
        for (Eigen::Index i = 0; i < n(); ++i)
            if (t[i] != 0 && t[i] != 1)
                throw DataError("treatment value " + std::to_string(t[i]) + " at row " +
                                std::to_string(i + 1) + " is outside {0,1}");
        if (!x.allFinite()) throw DataError("covariate matrix contains non-finite values");
        if (!y.allFinite()) throw DataError("outcome contains non-finite values");
    }

    /// Entry check for estimators: both arms must be populated.
    void require_both_arms() const {
        if (arm_size(0) == 0 || arm_size(1) == 0)
            throw EstimationError("treatment arm " + std::string(arm_size(0) == 0 ? "0" : "1") +
                                  " is empty");
    }
};

/// Column transform applied before penalization. `kept` indexes the retained
/// columns of the original design; dropped columns had zero variance.
struct Standardization {
    Eigen::VectorXd means;
    Eigen::VectorXd sds;
    std::vector<Eigen::Index> kept;
    std::vector<std::string> dropped;
    std::vector<std::string> warnings;

    /// Maps slopes on the standardized scale back to the original scale.
    /// Returns (intercept shift, slopes for every original column).
    std::pair<double, Eigen::VectorXd> to_original_scale(const Eigen::VectorXd& coef,
                                                         Eigen::Index original_p) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(original_p);
        double shift = 0;
        for (std::size_t j = 0; j < kept.size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            out[kept[j]] = coef[jj] / sds[jj];
            shift -= coef[jj] * means[jj] / sds[jj];
        }
        return {shift, out};
    }
};

struct StandardizedData {
    Dataset data;
    Standardization transform;
};

/// Centers each covariate and scales to unit sample SD (divisor n - 1).
/// Zero-variance columns are dropped and reported in `transform.warnings`.
inline StandardizedData standardize(const Dataset& d) {
    const Eigen::Index n = d.n();
    Standardization tr;
    std::vector<Eigen::VectorXd> cols;
    std::vector<double> means, sds;
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < d.p(); ++j) {
        const double m = d.x.col(j).mean();
        const double sd =
            std::sqrt((d.x.col(j).array() - m).square().sum() / static_cast<double>(n - 1));
        if (!(sd > 0) || sd <= 1e-12 * std::max(1.0, std::abs(m))) {
            tr.dropped.push_back(d.names[j]);
            tr.warnings.push_back("covariate '" + d.names[j] + "' has zero variance; dropped");
            continue;
        }
        tr.kept.push_back(j);
        means.push_back(m);
        sds.push_back(sd);
        names.push_back(d.names[j]);
    }
    if (tr.kept.empty()) throw DataError("degenerate design: every covariate has zero variance");

    const auto q = static_cast<Eigen::Index>(tr.kept.size());
    tr.means = Eigen::Map<Eigen::VectorXd>(means.data(), q);
    tr.sds = Eigen::Map<Eigen::VectorXd>(sds.data(), q);

    Dataset out;
    out.y = d.y;
    out.t = d.t;
    out.outcome_name = d.outcome_name;
    out.treatment_name = d.treatment_name;
    out.names = std::move(names);
    out.x.resize(n, q);
    for (Eigen::Index j = 0; j < q; ++j)
        out.x.col(j) = (d.x.col(tr.kept[j]).array() - tr.means[j]) / tr.sds[j];
    return {std::move(out), std::move(tr)};
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Parses a finite decimal; empty / NA / NaN / inf yield nullopt.
inline std::optional<double> parse_number(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Reads a comma-separated file with a mandatory header row. `covariates`
/// empty means every column other than outcome and treatment, in file order.
inline Dataset load_csv(const std::string& path, const std::string& outcome,
                        const std::string& treatment,
                        const std::vector<std::string>& covariates = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path + "' is empty; header row required");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    std::vector<std::string> header;
    for (auto cell : detail::split_commas(line)) {
        if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"')
            cell = cell.substr(1, cell.size() - 2);
        header.emplace_back(cell);
    }

    auto find_col = [&](const std::string& name) -> std::size_t {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return c;
        throw DataError("schema error: column '" + name + "' not found in '" + path + "'");
    };
    const std::size_t y_col = find_col(outcome);
    const std::size_t t_col = find_col(treatment);
    std::vector<std::size_t> x_cols;
    if (covariates.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (c != y_col && c != t_col) x_cols.push_back(c);
    } else {
        for (const auto& name : covariates) x_cols.push_back(find_col(name));
    }
    if (x_cols.empty()) throw DataError("schema error: no covariate columns selected");

    std::vector<double> ys, xs;
    std::vector<int> ts;
    std::vector<std::string> bad_cells;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_commas(line);
        if (cells.size() != header.size())
            throw DataError("parse error: row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " fields, header has " +
                            std::to_string(header.size()));
        auto get = [&](std::size_t c) -> double {
            const auto v = detail::parse_number(cells[c]);
            if (!v) {
                bad_cells.push_back("row " + std::to_string(row) + " column '" + header[c] +
                                    "' ('" + std::string(cells[c]) + "')");
                return 0.0;
            }
            return *v;
        };
        ys.push_back(get(y_col));
        const double tv = get(t_col);
        if (bad_cells.empty() && tv != 0.0 && tv != 1.0)
            throw DataError("domain error: treatment value " + std::string(cells[t_col]) +
                            " at row " + std::to_string(row) + " is outside {0,1}");
        ts.push_back(tv == 1.0 ? 1 : 0);
        for (auto c : x_cols) xs.push_back(get(c));
    }
    if (!bad_cells.empty()) {
        std::string msg = "parse error: " + std::to_string(bad_cells.size()) +
                          " missing or non-numeric cell(s):";
        for (std::size_t i = 0; i < bad_cells.size() && i < 20; ++i) msg += "\n  " + bad_cells[i];
        if (bad_cells.size() > 20) msg += "\n  ...";
        throw DataError(msg);
    }

    const auto n = static_cast<Eigen::Index>(row);
    const auto p = static_cast<Eigen::Index>(x_cols.size());
    Dataset d;
    d.outcome_name = outcome;
    d.treatment_name = treatment;
    d.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
    d.t = Eigen::Map<Eigen::VectorXi>(ts.data(), n);
    d.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        xs.data(), n, p);
    for (auto c : x_cols) d.names.push_back(header[c]);
    d.validate();
    return d;
}

/// Writes outcome, treatment, then covariates. Numbers use the shortest
/// representation that round-trips exactly.
inline void write_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << d.outcome_name << ',' << d.treatment_name;
    for (const auto& name : d.names) out << ',' << name;
    out << '\n';
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        out << detail::format_number(d.y[i]) << ',' << d.t[i];
        for (Eigen::Index j = 0; j < d.p(); ++j) out << ',' << detail::format_number(d.x(i, j));
        out << '\n';
    }
    if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace dips
