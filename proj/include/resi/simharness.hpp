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
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resi/ci.hpp"
#include "resi/distributions.hpp"
#include "resi/errors.hpp"
#include "resi/linmodels.hpp"
#include "resi/parallel.hpp"
#include "resi/resi_core.hpp"
#include "resi/rng.hpp"

namespace resi::sim {

enum class Skedasticity { homo, hetero };
enum class CovariateMode { fixed, random };

inline const char* to_string(Skedasticity s) noexcept { return s == Skedasticity::homo ? "homo" : "hetero"; }
inline const char* to_string(CovariateMode c) noexcept { return c == CovariateMode::fixed ? "fixed" : "random"; }

/// One cell of the simulation design: y = b1 x + e with binary x and the
/// intercept fitted as a nuisance parameter.
struct ScenarioSpec {
    int n = 100;
    double s_true = 0.0;
    ErrorDistSpec errors{};
    Skedasticity skedasticity = Skedasticity::homo;
    CovariateMode covariate = CovariateMode::fixed;
    double pi = 0.3;

    /// Homoskedastic cells use unit sd; heteroskedastic cells use 0.5 and 1.5.
    static ScenarioSpec make(int n, double s_true, ErrorFamily family, Skedasticity sked, CovariateMode mode)
    {
        ScenarioSpec sc;
        sc.n = n;
        sc.s_true = s_true;
        sc.errors.family = family;
        sc.skedasticity = sked;
        sc.covariate = mode;
        if (sked == Skedasticity::hetero) {
            sc.errors.sd0 = 0.5;
            sc.errors.sd1 = 1.5;
        }
        return sc;
    }

    void validate() const
    {
        errors.validate();
        if (n < 3)
            throw InvalidArgument("scenario needs n >= 3");
        if (!(s_true >= 0.0) || !std::isfinite(s_true))
            throw InvalidArgument("true effect size must be finite and nonnegative");
        if (!(pi > 0.0 && pi < 1.0))
            throw InvalidArgument("covariate probability must lie in (0, 1)");
        if (skedasticity == Skedasticity::homo && errors.sd0 != errors.sd1)
            throw InvalidArgument("homoskedastic scenario requires sd0 == sd1");
    }

    std::string label() const
    {
        std::ostringstream os;
        os << "n=" << n << " S=" << s_true << ' ' << resi::to_string(errors.family) << ' '
           << to_string(skedasticity) << ' ' << to_string(covariate);
        return os.str();
    }
};

/// Var(sqrt(n) b1_hat) of the data-generating process: sd1^2/pi + sd0^2/(1 - pi).
inline double slope_variance(const ScenarioSpec& sc)
{
    return sc.errors.sd1 * sc.errors.sd1 / sc.pi + sc.errors.sd0 * sc.errors.sd0 / (1.0 - sc.pi);
}

/// Slope giving RESI s_true: b1 = S sqrt(Var(sqrt(n) b1_hat)).
inline double calibrate_beta1(const ScenarioSpec& sc)
{
    sc.validate();
    return sc.s_true * std::sqrt(slope_variance(sc));
}

/// True covariance of sqrt(n) (intercept_hat, b1_hat), computed from pi rather
/// than the realized covariate proportion.
inline CovEstimate oracle_cov(const ScenarioSpec& sc)
{
    sc.validate();
    const double a = sc.errors.sd0 * sc.errors.sd0 / (1.0 - sc.pi);
    CovEstimate cov;
    cov.kind = CovKind::oracle;
    cov.matrix.resize(2, 2);
    cov.matrix << a, -a, -a, slope_variance(sc);
    return cov;
}

inline Dataset gen_scenario(const ScenarioSpec& sc, RngStream& rng)
{
    sc.validate();
    const double beta1 = calibrate_beta1(sc);
    Dataset d;
    d.X.resize(sc.n, 2);
    d.y.resize(sc.n);
    d.tested = {1};
    d.column_names = {"(Intercept)", "x"};

    const auto ones = static_cast<int>(std::ceil(sc.n * sc.pi - 1e-9));
    for (int i = 0; i < sc.n; ++i) {
        double x;
        if (sc.covariate == CovariateMode::fixed)
            x = i < ones ? 1.0 : 0.0;
        else
            x = rng.uniform() < sc.pi ? 1.0 : 0.0;
        d.X(i, 0) = 1.0;
        d.X(i, 1) = x;
    }
    for (int i = 0; i < sc.n; ++i) {
        const double x = d.X(i, 1);
        d.y(i) = beta1 * x + draw_one(sc.errors.sampler_for(x), rng);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Interval methods used by the coverage study

struct CiMethod {
    enum class Kind { chisq, f, bootstrap } kind = Kind::chisq;
    BootstrapProcedure procedure{};

    std::string name() const
    {
        switch (kind) {
        case Kind::chisq: return "chisq";
        case Kind::f: return "f";
        case Kind::bootstrap: return procedure.name();
        }
        return "?";
    }
};

inline CiMethod parse_ci_method(const std::string& text)
{
    if (text == "chisq")
        return {CiMethod::Kind::chisq, {}};
    if (text == "f")
        return {CiMethod::Kind::f, {}};
    return {CiMethod::Kind::bootstrap, parse_procedure(text)};
}

inline const std::array<CovKind, 3> all_estimators{CovKind::oracle, CovKind::model, CovKind::robust};

// ---------------------------------------------------------------------------
// Per-replicate evaluation

struct ReplicateOutcome {
    bool ok = false;
    std::array<double, 3> t2{};
    std::array<double, 3> s_hat{};
    /// covered[method][estimator]
    std::vector<std::array<char, 3>> covered;
};

struct ReplicateOptions {
    std::vector<CiMethod> ci_methods;
    int boot_replicates = 1000;
    double alpha = 0.05;
};

inline std::size_t estimator_slot(CovKind k) noexcept
{
    return k == CovKind::oracle ? 0 : k == CovKind::model ? 1 : 2;
}

/// Generates one dataset and evaluates all three estimators and every
/// requested interval. Data come from rng.substream(0); interval method k
/// draws its bootstrap from rng.substream(k + 1).
inline ReplicateOutcome run_replicate(const ScenarioSpec& sc, const ReplicateOptions& opt, const RngStream& rng)
{
    ReplicateOutcome out;
    RngStream data_rng = rng.substream(0);
    const Dataset data = gen_scenario(sc, data_rng);
    const CovEstimate oracle = oracle_cov(sc);
    try {
        const FitResult f = fit_ols(data);
        const std::array<CovEstimate, 3> covs{oracle, cov_model(f), cov_robust(f)};
        for (std::size_t k = 0; k < 3; ++k) {
            out.t2[k] = wald_stat(f, covs[k], data.tested).t2;
            out.s_hat[k] = resi_point(out.t2[k], 1, data.n());
        }
    } catch (const Error&) {
        return out;
    }

    const int df2 = sc.n - 2;
    out.covered.resize(opt.ci_methods.size());
    for (std::size_t mth = 0; mth < opt.ci_methods.size(); ++mth) {
        const CiMethod& method = opt.ci_methods[mth];
        if (method.kind == CiMethod::Kind::bootstrap) {
            BootstrapSpec spec;
            spec.scheme = method.procedure.scheme;
            spec.multiplier = method.procedure.multiplier;
            spec.replicates = opt.boot_replicates;
            spec.stream = rng.substream(mth + 1);
            std::vector<BootstrapTarget> targets;
            for (CovKind k : all_estimators)
                targets.push_back({data.tested, k, k == CovKind::oracle ? oracle.matrix : Eigen::MatrixXd{}});
            try {
                const auto dist = bootstrap_distribution(data, Family::gaussian, targets, spec, 1);
                for (std::size_t k = 0; k < 3; ++k)
                    out.covered[mth][k] = percentile_interval(dist.s_hat[k], opt.alpha).contains(sc.s_true);
            } catch (const BootstrapFailure&) {
                return out;
            }
        } else {
            for (std::size_t k = 0; k < 3; ++k) {
                const auto iv = method.kind == CiMethod::Kind::chisq
                                    ? ci_ncp_chisq(out.t2[k], 1, opt.alpha, sc.n)
                                    : ci_ncp_f(out.t2[k], 1, df2, opt.alpha, sc.n);
                out.covered[mth][k] = iv.resi.contains(sc.s_true);
            }
        }
    }
    out.ok = true;
    return out;
}

// ---------------------------------------------------------------------------
// Studies

/// Monte Carlo summary for one (cell, estimator, interval method).
struct StudyResult {
    std::string study;
    ScenarioSpec scenario;
    std::string estimator;
    std::string ci_method = "none";
    int replicates = 0;
    int failures = 0;
    double mean_s_hat = NAN;
    double bias = NAN;
    double sd_s_hat = NAN;
    double coverage = NAN;
    double var_t2 = NAN;
    double var_t2_se = NAN;
    double theory_var = NAN;
    /// MC standard error of the headline quantity (bias, coverage or variance).
    double mc_se = NAN;
};

struct StudyOptions {
    int sims = 1000;
    std::uint64_t seed = 1;
    unsigned workers = 0;
    int boot_replicates = 1000;
    double alpha = 0.05;
};

namespace detail {

inline std::vector<ReplicateOutcome> run_cell(const ScenarioSpec& sc, std::size_t cell_id,
                                              const ReplicateOptions& ropt, const StudyOptions& opt)
{
    if (opt.sims < 1)
        throw InvalidArgument("a study needs at least one simulation");
    const RngStream cell_rng = RngStream(opt.seed).substream(cell_id);
    std::vector<ReplicateOutcome> reps(static_cast<std::size_t>(opt.sims));
    parallel_for(reps.size(), opt.workers,
                 [&](std::size_t r) { reps[r] = run_replicate(sc, ropt, cell_rng.substream(r)); });
    return reps;
}

struct Summary {
    int count = 0;
    double mean = NAN;
    double var = NAN;     // unbiased sample variance
    double var_se = NAN;  // standard error of the sample variance
};

inline Summary summarize(const std::vector<double>& v)
{
    Summary s;
    s.count = static_cast<int>(v.size());
    if (v.empty())
        return s;
    double sum = 0.0;
    for (double x : v)
        sum += x;
    s.mean = sum / s.count;
    double m2 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = (x - s.mean) * (x - s.mean);
        m2 += d;
        m4 += d * d;
    }
    if (s.count > 1) {
        s.var = m2 / (s.count - 1);
        const double pm2 = m2 / s.count;
        const double pm4 = m4 / s.count;
        s.var_se = std::sqrt(std::max(0.0, pm4 - pm2 * pm2) / s.count);
    }
    return s;
}

} // namespace detail

/// Mean RESI estimate and bias per cell and estimator.
inline std::vector<StudyResult> run_bias_study(const std::vector<ScenarioSpec>& grid, const StudyOptions& opt)
{
    std::vector<StudyResult> rows;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const auto reps = detail::run_cell(grid[c], c, {}, opt);
        for (CovKind k : all_estimators) {
            std::vector<double> s;
            for (const auto& r : reps)
                if (r.ok)
                    s.push_back(r.s_hat[estimator_slot(k)]);
            const auto sum = detail::summarize(s);
            StudyResult row;
            row.study = "bias";
            row.scenario = grid[c];
            row.estimator = resi::to_string(k);
            row.replicates = sum.count;
            row.failures = opt.sims - sum.count;
            row.mean_s_hat = sum.mean;
            row.bias = sum.mean - grid[c].s_true;
            row.sd_s_hat = std::sqrt(sum.var);
            row.mc_se = row.sd_s_hat / std::sqrt(static_cast<double>(std::max(sum.count, 1)));
            rows.push_back(row);
        }
    }
    return rows;
}

/// Coverage of every interval method for every estimator, with the binomial
/// Monte Carlo standard error sqrt(c (1 - c) / sims).
inline std::vector<StudyResult> run_coverage_study(const std::vector<ScenarioSpec>& grid,
                                                   const std::vector<CiMethod>& methods, const StudyOptions& opt)
{
    ReplicateOptions ropt{methods, opt.boot_replicates, opt.alpha};
    std::vector<StudyResult> rows;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const auto reps = detail::run_cell(grid[c], c, ropt, opt);
        for (std::size_t mth = 0; mth < methods.size(); ++mth) {
            for (CovKind k : all_estimators) {
                int ok = 0, hit = 0;
                std::vector<double> s;
                for (const auto& r : reps) {
                    if (!r.ok)
                        continue;
                    ++ok;
                    hit += r.covered[mth][estimator_slot(k)];
                    s.push_back(r.s_hat[estimator_slot(k)]);
                }
                StudyResult row;
                row.study = "coverage";
                row.scenario = grid[c];
                row.estimator = resi::to_string(k);
                row.ci_method = methods[mth].name();
                row.replicates = ok;
                row.failures = opt.sims - ok;
                const auto sum = detail::summarize(s);
                row.mean_s_hat = sum.mean;
                row.bias = sum.mean - grid[c].s_true;
                row.coverage = ok > 0 ? static_cast<double>(hit) / ok : NAN;
                row.mc_se = std::sqrt(row.coverage * (1.0 - row.coverage) / std::max(ok, 1));
                rows.push_back(row);
            }
        }
    }
    return rows;
}

/// Simulated Var(T^2) per estimator next to the chi-squared and F variance
/// formulas, homoskedastic normal errors.
inline std::vector<StudyResult> run_variance_study(const std::vector<int>& n_grid, double s_true,
                                                   CovariateMode mode, const StudyOptions& opt)
{
    std::vector<StudyResult> rows;
    for (std::size_t c = 0; c < n_grid.size(); ++c) {
        const auto sc = ScenarioSpec::make(n_grid[c], s_true, ErrorFamily::normal, Skedasticity::homo, mode);
        const auto reps = detail::run_cell(sc, c, {}, opt);
        const double ncp = sc.n * s_true * s_true;
        const double chisq_var = theoretical_moments(NoncentralChiSq(1, ncp)).variance;
        const double f_var = sc.n - 2 > 4 ? theoretical_moments(NoncentralF(1, sc.n - 2, ncp)).variance : NAN;
        for (CovKind k : all_estimators) {
            std::vector<double> t;
            for (const auto& r : reps)
                if (r.ok)
                    t.push_back(r.t2[estimator_slot(k)]);
            const auto sum = detail::summarize(t);
            StudyResult row;
            row.study = "variance";
            row.scenario = sc;
            row.estimator = resi::to_string(k);
            row.replicates = sum.count;
            row.failures = opt.sims - sum.count;
            row.var_t2 = sum.var;
            row.var_t2_se = sum.var_se;
            row.mc_se = sum.var_se;
            row.theory_var = k == CovKind::oracle ? chisq_var : k == CovKind::model ? f_var : NAN;
            rows.push_back(row);
        }
        for (const auto& [name, value] : {std::pair{"theory_chisq", chisq_var}, std::pair{"theory_f", f_var}}) {
            StudyResult row;
            row.study = "variance";
            row.scenario = sc;
            row.estimator = name;
            row.theory_var = value;
            rows.push_back(row);
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// CSV output

inline constexpr const char* csv_header =
    "study,n,s_true,errors,skedasticity,covariate,pi,estimator,ci_method,statistic,value,mc_se,replicates,failures";

namespace detail {

inline std::string fmt_number(double v)
{
    if (std::isnan(v))
        return "NA";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline void emit(std::ostream& os, const StudyResult& r, const char* statistic, double value, double se)
{
    const auto& sc = r.scenario;
    os << r.study << ',' << sc.n << ',' << fmt_number(sc.s_true) << ',' << resi::to_string(sc.errors.family) << ','
       << to_string(sc.skedasticity) << ',' << to_string(sc.covariate) << ',' << fmt_number(sc.pi) << ','
       << r.estimator << ',' << r.ci_method << ',' << statistic << ',' << fmt_number(value) << ','
       << fmt_number(se) << ',' << r.replicates << ',' << r.failures << '\n';
}

} // namespace detail

/// Long-format CSV, one row per (cell, estimator, interval method, statistic).
///
///   bias:     statistic = mean_s_hat | bias            (mc_se = sd / sqrt(reps))
///   coverage: statistic = coverage                     (mc_se = sqrt(c (1 - c) / reps))
///   variance: statistic = var_t2 per estimator         (mc_se = SE of the sample variance)
///             statistic = theoretical_var for estimators theory_chisq and theory_f
inline void write_csv(std::ostream& os, const std::vector<StudyResult>& rows)
{
    os << csv_header << '\n';
    for (const auto& r : rows) {
        if (r.study == "bias") {
            detail::emit(os, r, "mean_s_hat", r.mean_s_hat, r.mc_se);
            detail::emit(os, r, "bias", r.bias, r.mc_se);
        } else if (r.study == "coverage") {
            detail::emit(os, r, "coverage", r.coverage, r.mc_se);
        } else if (r.estimator.rfind("theory_", 0) == 0) {
            detail::emit(os, r, "theoretical_var", r.theory_var, NAN);
        } else {
            detail::emit(os, r, "var_t2", r.var_t2, r.mc_se);
        }
    }
}

// ---------------------------------------------------------------------------
// Grid configuration

/// Study grid read from `key = value` lines; lists are written `[a, b, c]`
/// and `#` starts a comment.
struct GridConfig {
    std::vector<int> n{50, 100, 250, 500};
    std::vector<double> s{0.0, 0.33, 0.66, 1.0};
    std::vector<ErrorFamily> errors{ErrorFamily::normal, ErrorFamily::shifted_gamma};
    std::vector<Skedasticity> skedasticity{Skedasticity::homo, Skedasticity::hetero};
    std::vector<CovariateMode> covariate{CovariateMode::fixed, CovariateMode::random};
    std::vector<std::string> ci{"chisq", "f", "nonparametric"};
    int boot = 1000;
    double alpha = 0.05;
    int sims = 1000;
    /// S used by the variance study.
    double variance_s = 1.0;

    std::vector<ScenarioSpec> cells() const
    {
        std::vector<ScenarioSpec> out;
        for (auto fam : errors)
            for (auto sk : skedasticity)
                for (auto cv : covariate)
                    for (int nn : n)
                        for (double ss : s)
                            out.push_back(ScenarioSpec::make(nn, ss, fam, sk, cv));
        return out;
    }

    std::vector<CiMethod> ci_methods() const
    {
        std::vector<CiMethod> out;
        for (const auto& c : ci)
            out.push_back(parse_ci_method(c));
        return out;
    }

    /// n in {50, 500}, S in {0, 1}, normal errors only.
    static GridConfig reduced()
    {
        GridConfig g;
        g.n = {50, 500};
        g.s = {0.0, 1.0};
        g.errors = {ErrorFamily::normal};
        return g;
    }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\"'");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r\"'");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& raw)
{
    std::string v = trim(raw);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']')
            throw InvalidArgument("unterminated list '" + raw + "'");
        v = v.substr(1, v.size() - 2);
    }
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

inline double to_double(const std::string& s)
{
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size())
        throw InvalidArgument("expected a number, got '" + s + "'");
    return v;
}

inline int to_int(const std::string& s)
{
    const double v = to_double(s);
    if (v != std::floor(v))
        throw InvalidArgument("expected an integer, got '" + s + "'");
    return static_cast<int>(v);
}

} // namespace detail

inline GridConfig parse_grid_config(std::istream& in)
{
    GridConfig g;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        if (detail::trim(line).empty() || (detail::trim(line).front() == '[' && line.find('=') == std::string::npos))
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const auto items = detail::split_list(line.substr(eq + 1));
        if (items.empty())
            throw InvalidArgument("config line " + std::to_string(lineno) + ": empty value");
        if (key == "n") {
            g.n.clear();
            for (const auto& v : items) g.n.push_back(detail::to_int(v));
        } else if (key == "s") {
            g.s.clear();
            for (const auto& v : items) g.s.push_back(detail::to_double(v));
        } else if (key == "errors") {
            g.errors.clear();
            for (const auto& v : items) {
                if (v == "normal") g.errors.push_back(ErrorFamily::normal);
                else if (v == "gamma") g.errors.push_back(ErrorFamily::shifted_gamma);
                else throw InvalidArgument("unknown error family '" + v + "'");
            }
        } else if (key == "skedasticity") {
            g.skedasticity.clear();
            for (const auto& v : items) {
                if (v == "homo") g.skedasticity.push_back(Skedasticity::homo);
                else if (v == "hetero") g.skedasticity.push_back(Skedasticity::hetero);
                else throw InvalidArgument("unknown skedasticity '" + v + "'");
            }
        } else if (key == "covariate") {
            g.covariate.clear();
            for (const auto& v : items) {
                if (v == "fixed") g.covariate.push_back(CovariateMode::fixed);
                else if (v == "random") g.covariate.push_back(CovariateMode::random);
                else throw InvalidArgument("unknown covariate mode '" + v + "'");
            }
        } else if (key == "ci") {
            g.ci = items;
            (void)g.ci_methods();
        } else if (key == "boot") {
            g.boot = detail::to_int(items.front());
        } else if (key == "alpha") {
            g.alpha = detail::to_double(items.front());
        } else if (key == "sims") {
            g.sims = detail::to_int(items.front());
        } else if (key == "variance_s") {
            g.variance_s = detail::to_double(items.front());
        } else {
            throw InvalidArgument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    return g;
}

} // namespace resi::sim
