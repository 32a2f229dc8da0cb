/*
   Copyright 2026 The resi Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "resi/ci.hpp"
#include "resi/distributions.hpp"
#include "resi/errors.hpp"
#include "resi/linmodels.hpp"
#include "resi/resi_core.hpp"

namespace resi::anoes {

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cell += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cell);
            cell.clear();
        } else if (ch != '\r') {
            cell += ch;
        }
    }
    out.push_back(cell);
    for (auto& c : out) {
        const auto b = c.find_first_not_of(" \t");
        const auto e = c.find_last_not_of(" \t");
        c = b == std::string::npos ? "" : c.substr(b, e - b + 1);
    }
    return out;
}

inline std::optional<double> parse_number(const std::string& s)
{
    if (s.empty())
        return std::nullopt;
    std::size_t pos = 0;
    try {
        const double v = std::stod(s, &pos);
        if (pos == s.size() && std::isfinite(v))
            return v;
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

inline bool is_missing(const std::string& s)
{
    return s.empty() || s == "NA" || s == "NaN" || s == "nan";
}

} // namespace detail

inline CsvTable read_csv(std::istream& in)
{
    CsvTable t;
    std::string line;
    if (!std::getline(in, line))
        throw IngestError("CSV input is empty");
    t.header = detail::split_csv_line(line);
    std::set<std::string> seen;
    for (const auto& h : t.header) {
        if (h.empty())
            throw IngestError("CSV header has an empty column name");
        if (!seen.insert(h).second)
            throw IngestError("duplicate column name '" + h + "'");
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto row = detail::split_csv_line(line);
        if (row.size() != t.header.size())
            throw IngestError("line " + std::to_string(lineno) + " has " + std::to_string(row.size())
                              + " fields, expected " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// A named model term and the design columns that encode it.
struct Factor {
    std::string name;
    IndexSet columns;
};

struct LoadedData {
    Dataset data;
    std::vector<Factor> factors;
};

/// Builds an intercept-plus-factors design from a CSV table. Numeric columns
/// enter as-is; any other column is dummy coded against its first level in
/// sorted order.
inline LoadedData load_table(const CsvTable& table, const std::string& outcome,
                             const std::vector<std::string>& factor_columns, Family family)
{
    auto column_of = [&](const std::string& name) {
        auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end())
            throw IngestError("missing column '" + name + "'");
        return static_cast<std::size_t>(it - table.header.begin());
    };
    if (factor_columns.empty())
        throw IngestError("at least one factor column is required");
    {
        std::set<std::string> uniq(factor_columns.begin(), factor_columns.end());
        if (uniq.size() != factor_columns.size())
            throw IngestError("a factor column is listed twice");
        if (uniq.count(outcome))
            throw IngestError("the outcome cannot also be a factor");
    }

    const std::size_t y_col = column_of(outcome);
    std::vector<std::size_t> f_cols;
    for (const auto& f : factor_columns)
        f_cols.push_back(column_of(f));

    std::vector<std::size_t> bad_rows;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        bool missing = detail::is_missing(table.rows[r][y_col]);
        for (auto c : f_cols)
            missing = missing || detail::is_missing(table.rows[r][c]);
        if (missing)
            bad_rows.push_back(r + 2);
    }
    if (!bad_rows.empty()) {
        std::string msg = "rows with missing values (file line numbers):";
        for (auto r : bad_rows)
            msg += " " + std::to_string(r);
        throw IngestError(msg);
    }

    const auto n = static_cast<Index>(table.rows.size());
    LoadedData out;
    out.data.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        const auto& cell = table.rows[static_cast<std::size_t>(i)][y_col];
        const auto v = detail::parse_number(cell);
        if (!v)
            throw IngestError("outcome '" + outcome + "' is not numeric at line " + std::to_string(i + 2));
        out.data.y(i) = *v;
    }
    if (family == Family::binomial && ((out.data.y.array() < 0.0).any() || (out.data.y.array() > 1.0).any()))
        throw IngestError("binomial outcomes must lie in [0, 1]");

    std::vector<Eigen::VectorXd> cols{Eigen::VectorXd::Ones(n)};
    out.data.column_names = {"(Intercept)"};
    for (std::size_t k = 0; k < f_cols.size(); ++k) {
        const auto c = f_cols[k];
        Factor factor{factor_columns[k], {}};
        bool numeric = true;
        Eigen::VectorXd values(n);
        for (Index i = 0; i < n; ++i) {
            const auto v = detail::parse_number(table.rows[static_cast<std::size_t>(i)][c]);
            if (!v) {
                numeric = false;
                break;
            }
            values(i) = *v;
        }
        if (numeric) {
            factor.columns.push_back(static_cast<Index>(cols.size()));
            cols.push_back(values);
            out.data.column_names.push_back(factor.name);
        } else {
            std::set<std::string> levels;
            for (const auto& row : table.rows)
                levels.insert(row[c]);
            if (levels.size() < 2)
                throw IngestError("factor '" + factor.name + "' has a single level");
            for (auto it = std::next(levels.begin()); it != levels.end(); ++it) {
                Eigen::VectorXd ind(n);
                for (Index i = 0; i < n; ++i)
                    ind(i) = table.rows[static_cast<std::size_t>(i)][c] == *it ? 1.0 : 0.0;
                factor.columns.push_back(static_cast<Index>(cols.size()));
                cols.push_back(ind);
                out.data.column_names.push_back(factor.name + "[" + *it + "]");
            }
        }
        out.factors.push_back(std::move(factor));
    }

    out.data.X.resize(n, static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
        out.data.X.col(static_cast<Index>(j)) = cols[j];
    for (Index j = 1; j < out.data.m(); ++j)
        out.data.tested.push_back(j);
    if (n <= out.data.m())
        throw IngestError("need more rows than model columns");
    return out;
}

inline LoadedData load_csv(const std::string& path, const std::string& outcome,
                           const std::vector<std::string>& factor_columns, Family family)
{
    std::ifstream in(path);
    if (!in)
        throw IngestError("cannot open '" + path + "'");
    return load_table(read_csv(in), outcome, factor_columns, family);
}

// ---------------------------------------------------------------------------
// ANOES table

struct CiChoice {
    enum class Kind { chisq, f, bootstrap } kind = Kind::bootstrap;
    BootstrapProcedure procedure{};

    std::string name() const
    {
        if (kind == Kind::chisq) return "chisq";
        if (kind == Kind::f) return "f";
        return procedure.name();
    }

    static CiChoice parse(const std::string& text)
    {
        if (text == "chisq") return {Kind::chisq, {}};
        if (text == "f") return {Kind::f, {}};
        return {Kind::bootstrap, parse_procedure(text)};
    }
};

struct AnoesOptions {
    CovKind cov = CovKind::robust;
    CiChoice ci{};
    int boot = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 1213;
    unsigned workers = 1;
};

struct AnoesRow {
    std::string factor;
    std::optional<double> estimate;
    std::optional<double> se;
    double chi_squared = 0.0;
    int df = 0;
    double p_value = 1.0;
    double resi = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
};

struct AnoesTable {
    std::vector<AnoesRow> rows;
    /// "Overall" in the full-model table, "Tested" in reduced mode.
    AnoesRow overall;
    int residual_df = 0;
    bool reduced_mode = false;

    Family family = Family::gaussian;
    CovKind cov = CovKind::robust;
    std::string ci_method;
    int boot = 0;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    int boot_failures = 0;
    Index n = 0;
};

namespace detail {

inline IndexSet columns_of(const std::vector<Factor>& factors, const std::vector<std::string>& names)
{
    IndexSet out;
    for (const auto& name : names) {
        auto it = std::find_if(factors.begin(), factors.end(), [&](const Factor& f) { return f.name == name; });
        if (it == factors.end())
            throw NestingError("reduced-model factor '" + name + "' is not in the full model");
        out.insert(out.end(), it->columns.begin(), it->columns.end());
    }
    return out;
}

inline Dataset subset_columns(const Dataset& d, IndexSet keep)
{
    std::sort(keep.begin(), keep.end());
    Dataset out;
    out.y = d.y;
    out.X.resize(d.n(), static_cast<Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        out.X.col(static_cast<Index>(j)) = d.X.col(keep[j]);
        out.column_names.push_back(d.column_name(keep[j]));
    }
    return out;
}

} // namespace detail

/// Per-factor joint Wald tests with RESI and intervals, an overall row over
/// all non-intercept columns and the residual degrees of freedom.
///
/// With `reduced` set (factor names of a nested model) the table instead has
/// a single "Tested" row for the columns the full model adds. Bootstrap
/// intervals for every row come from one shared set of replicates.
inline AnoesTable anoes_table(const LoadedData& loaded, Family family, const AnoesOptions& opt,
                              const std::optional<std::vector<std::string>>& reduced = std::nullopt)
{
    if (opt.cov == CovKind::oracle)
        throw InvalidArgument("ANOES supports model and robust covariance only");
    const Dataset& data = loaded.data;
    const FitResult full = fit(data, family);
    const CovEstimate cov = covariance(full, opt.cov);
    const Index n = data.n();

    struct Term {
        std::string name;
        IndexSet columns;
        bool single_estimate;
    };
    std::vector<Term> terms;
    AnoesTable table;
    table.family = family;
    table.cov = opt.cov;
    table.ci_method = opt.ci.name();
    table.boot = opt.ci.kind == CiChoice::Kind::bootstrap ? opt.boot : 0;
    table.alpha = opt.alpha;
    table.seed = opt.seed;
    table.n = n;
    table.residual_df = static_cast<int>(n - data.m());

    IndexSet overall_cols;
    std::optional<WaldResult> reduced_wald;
    if (reduced) {
        table.reduced_mode = true;
        IndexSet keep = detail::columns_of(loaded.factors, *reduced);
        keep.insert(keep.begin(), 0);
        const FitResult small = fit(detail::subset_columns(data, keep), family);
        overall_cols = extra_columns(full, small);
        reduced_wald = resi_full_vs_reduced(full, small, opt.cov).source;
    } else {
        for (const auto& f : loaded.factors)
            terms.push_back({f.name, f.columns, f.columns.size() == 1});
        for (Index j = 1; j < data.m(); ++j)
            overall_cols.push_back(j);
    }
    terms.push_back({reduced ? "Tested" : "Overall", overall_cols, false});

    std::vector<AnoesRow> rows;
    for (const auto& t : terms) {
        const WaldResult w = (reduced && &t == &terms.back()) ? *reduced_wald : wald_stat(full, cov, t.columns);
        AnoesRow row;
        row.factor = t.name;
        if (t.single_estimate) {
            const Index j = t.columns.front();
            row.estimate = full.coefficients(j);
            row.se = std::sqrt(cov.matrix(j, j) / static_cast<double>(n));
        }
        row.chi_squared = w.t2;
        row.df = w.m1;
        row.p_value = chisq_sf(w.t2, w.m1);
        row.resi = resi_point(w).s_hat;
        if (opt.ci.kind == CiChoice::Kind::chisq) {
            const auto iv = ci_ncp_chisq(w.t2, w.m1, opt.alpha, n).resi;
            row.ci_lower = iv.lower;
            row.ci_upper = iv.upper;
        } else if (opt.ci.kind == CiChoice::Kind::f) {
            const auto iv = ci_ncp_f(w.t2, w.m1, table.residual_df, opt.alpha, n).resi;
            row.ci_lower = iv.lower;
            row.ci_upper = iv.upper;
        }
        rows.push_back(row);
    }

    if (opt.ci.kind == CiChoice::Kind::bootstrap) {
        BootstrapSpec spec;
        spec.scheme = opt.ci.procedure.scheme;
        spec.multiplier = opt.ci.procedure.multiplier;
        spec.replicates = opt.boot;
        spec.stream = RngStream(opt.seed);
        std::vector<BootstrapTarget> targets;
        for (const auto& t : terms)
            targets.push_back({t.columns, opt.cov, {}});
        const auto dist = bootstrap_distribution(data, family, targets, spec, opt.workers);
        table.boot_failures = dist.failures;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto iv = percentile_interval(dist.s_hat[k], opt.alpha);
            rows[k].ci_lower = iv.lower;
            rows[k].ci_upper = iv.upper;
        }
    }

    table.overall = rows.back();
    rows.pop_back();
    table.rows = std::move(rows);
    return table;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::string fixed(double v, int digits)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string p_text(double p)
{
    if (p < 0.001)
        return "<0.001";
    return fixed(p, 3);
}

inline std::string num(double v)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string opt_num(const std::optional<double>& v)
{
    return v ? num(*v) : "";
}

} // namespace detail

inline void write_text(std::ostream& os, const AnoesTable& t)
{
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header = {"factor", "estimate", "se", "Chi-squared", "df", "p-value", "RESI", "LL", "UL"};
    cells.push_back(header);
    auto add = [&](const AnoesRow& r) {
        cells.push_back({r.factor, r.estimate ? detail::fixed(*r.estimate, 4) : "",
                         r.se ? detail::fixed(*r.se, 4) : "", detail::fixed(r.chi_squared, 2),
                         std::to_string(r.df), detail::p_text(r.p_value), detail::fixed(r.resi, 3),
                         detail::fixed(r.ci_lower, 3), detail::fixed(r.ci_upper, 3)});
    };
    for (const auto& r : t.rows)
        add(r);
    add(t.overall);
    cells.push_back({"Residual", "", "", "", std::to_string(t.residual_df), "", "", "", ""});

    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c)
            width[c] = std::max(width[c], row[c].size());
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c == 0)
                os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
            else
                os << "  " << std::right << std::setw(static_cast<int>(width[c])) << row[c];
        }
        os << '\n';
    }
    os << "\nfamily=" << to_string(t.family) << " cov=" << to_string(t.cov) << " ci=" << t.ci_method;
    if (t.boot > 0)
        os << " boot=" << t.boot << " seed=" << t.seed << " failed_refits=" << t.boot_failures;
    os << " alpha=" << detail::num(t.alpha) << " n=" << t.n << '\n';
}

inline void write_csv(std::ostream& os, const AnoesTable& t)
{
    os << "factor,estimate,se,chi_squared,df,p_value,resi,ci_lower,ci_upper\n";
    auto add = [&](const AnoesRow& r) {
        os << r.factor << ',' << detail::opt_num(r.estimate) << ',' << detail::opt_num(r.se) << ','
           << detail::num(r.chi_squared) << ',' << r.df << ',' << detail::num(r.p_value) << ','
           << detail::num(r.resi) << ',' << detail::num(r.ci_lower) << ',' << detail::num(r.ci_upper) << '\n';
    };
    for (const auto& r : t.rows)
        add(r);
    add(t.overall);
    os << "Residual,,,," << t.residual_df << ",,,,\n";
}

inline nlohmann::json to_json(const AnoesTable& t)
{
    auto row_json = [](const AnoesRow& r) {
        nlohmann::json j;
        j["factor"] = r.factor;
        j["estimate"] = r.estimate ? nlohmann::json(*r.estimate) : nlohmann::json(nullptr);
        j["se"] = r.se ? nlohmann::json(*r.se) : nlohmann::json(nullptr);
        j["chi_squared"] = r.chi_squared;
        j["df"] = r.df;
        j["p_value"] = r.p_value;
        j["resi"] = r.resi;
        j["ci"] = {r.ci_lower, r.ci_upper};
        return j;
    };
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : t.rows)
        j["rows"].push_back(row_json(r));
    j[t.reduced_mode ? "tested" : "overall"] = row_json(t.overall);
    j["residual_df"] = t.residual_df;
    j["metadata"] = {{"family", to_string(t.family)}, {"cov", to_string(t.cov)}, {"ci_method", t.ci_method},
                     {"boot", t.boot},   {"alpha", t.alpha},  {"seed", t.seed},
                     {"n", t.n},         {"boot_failures", t.boot_failures}};
    return j;
}

} // namespace resi::anoes
