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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "resi/distributions.hpp"
#include "resi/errors.hpp"
#include "resi/linmodels.hpp"
#include "resi/parallel.hpp"
#include "resi/resi_core.hpp"
#include "resi/rng.hpp"

namespace resi {

enum class IntervalScale { ncp, resi };

struct NcpInterval {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;
    IntervalScale scale = IntervalScale::ncp;

    bool contains(double v) const noexcept { return lower <= v && v <= upper; }
};

/// An interval for the non-centrality parameter and its image on the RESI
/// scale, sqrt(ncp / n).
struct InversionInterval {
    NcpInterval ncp;
    NcpInterval resi;
};

namespace detail {

inline constexpr double ncp_tol = 1e-8;

inline void check_alpha(double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw InvalidArgument("alpha must lie in (0, 1)");
}

// Smallest lambda >= 0 with cdf(lambda) <= target, for cdf strictly
// decreasing in lambda. Returns 0 when cdf(0) is already at or below target.
template <class Cdf>
double invert_ncp(Cdf&& cdf, double t2, double target)
{
    if (cdf(0.0) <= target)
        return 0.0;
    double lo = 0.0;
    double hi = t2 + 4.0 * std::sqrt(2.0 * t2) + 10.0;
    for (int doublings = 0; cdf(hi) > target; ++doublings) {
        if (doublings > 60)
            throw NumericalFailure("could not bracket the non-centrality parameter");
        lo = hi;
        hi *= 2.0;
    }
    for (int iter = 0; iter < 400 && hi - lo >= ncp_tol; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi)
            break;
        if (cdf(mid) > target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline InversionInterval make_inversion(double lower, double upper, double alpha, Index n)
{
    InversionInterval out;
    out.ncp = {lower, upper, 1.0 - alpha, IntervalScale::ncp};
    const auto nn = static_cast<double>(n);
    out.resi = {std::sqrt(lower / nn), std::sqrt(upper / nn), 1.0 - alpha, IntervalScale::resi};
    return out;
}

inline void check_inversion_args(double t2_obs, int m1, Index n)
{
    if (!std::isfinite(t2_obs) || t2_obs < 0.0)
        throw InvalidArgument("observed statistic must be finite and nonnegative");
    if (m1 < 1 || n < 1)
        throw InvalidArgument("m1 and n must be positive");
}

} // namespace detail

/// Central interval for the non-centrality of a chi-squared statistic with m1
/// degrees of freedom: the bounds solve F(t2; m1, l) = 1 - alpha/2 and
/// F(t2; m1, u) = alpha/2, each clamped to zero when no nonnegative root exists.
inline InversionInterval ci_ncp_chisq(double t2_obs, int m1, double alpha, Index n)
{
    detail::check_alpha(alpha);
    detail::check_inversion_args(t2_obs, m1, n);
    auto cdf = [&](double ncp) { return ncx2_cdf(t2_obs, m1, ncp); };
    const double lower = detail::invert_ncp(cdf, t2_obs, 1.0 - alpha / 2.0);
    const double upper = detail::invert_ncp(cdf, t2_obs, alpha / 2.0);
    return detail::make_inversion(lower, upper, alpha, n);
}

/// Same construction with the F(m1, df2) distribution of t2 / m1.
inline InversionInterval ci_ncp_f(double t2_obs, int m1, int df2, double alpha, Index n)
{
    detail::check_alpha(alpha);
    detail::check_inversion_args(t2_obs, m1, n);
    if (df2 < 1)
        throw InvalidArgument("df2 must be positive");
    const double f_obs = t2_obs / m1;
    auto cdf = [&](double ncp) { return ncf_cdf(f_obs, m1, df2, ncp); };
    const double lower = detail::invert_ncp(cdf, t2_obs, 1.0 - alpha / 2.0);
    const double upper = detail::invert_ncp(cdf, t2_obs, alpha / 2.0);
    return detail::make_inversion(lower, upper, alpha, n);
}

// ---------------------------------------------------------------------------
// Bootstrap

enum class BootScheme { nonparametric, wild_original, wild_joint_resample, wild_fixed_x, wild_independent };
enum class Multiplier { none, rademacher, normal };

inline const char* to_string(BootScheme s) noexcept
{
    switch (s) {
    case BootScheme::nonparametric: return "nonparametric";
    case BootScheme::wild_original: return "original";
    case BootScheme::wild_joint_resample: return "joint";
    case BootScheme::wild_fixed_x: return "fixed-x";
    case BootScheme::wild_independent: return "independent";
    }
    return "?";
}

inline const char* to_string(Multiplier m) noexcept
{
    switch (m) {
    case Multiplier::none: return "none";
    case Multiplier::rademacher: return "rademacher";
    case Multiplier::normal: return "normal";
    }
    return "?";
}

/// The original wild bootstrap without multipliers reproduces y exactly, and
/// the nonparametric bootstrap takes no multipliers.
inline bool is_admissible(BootScheme scheme, Multiplier multiplier) noexcept
{
    if (scheme == BootScheme::nonparametric)
        return multiplier == Multiplier::none;
    if (scheme == BootScheme::wild_original)
        return multiplier != Multiplier::none;
    return true;
}

struct BootstrapProcedure {
    BootScheme scheme = BootScheme::nonparametric;
    Multiplier multiplier = Multiplier::none;

    std::string name() const
    {
        if (scheme == BootScheme::nonparametric)
            return "nonparametric";
        return std::string("wild:") + to_string(scheme) + ":" + to_string(multiplier);
    }

    friend bool operator==(const BootstrapProcedure&, const BootstrapProcedure&) = default;
};

/// Every admissible scheme/multiplier pair: the nonparametric bootstrap first,
/// then the eleven wild variants.
inline std::vector<BootstrapProcedure> admissible_procedures()
{
    std::vector<BootstrapProcedure> out;
    for (auto s : {BootScheme::nonparametric, BootScheme::wild_original, BootScheme::wild_joint_resample,
                   BootScheme::wild_fixed_x, BootScheme::wild_independent})
        for (auto m : {Multiplier::none, Multiplier::rademacher, Multiplier::normal})
            if (is_admissible(s, m))
                out.push_back({s, m});
    return out;
}

/// Parses "nonparametric" or "wild:<original|joint|fixed-x|independent>:<none|rademacher|normal>".
inline BootstrapProcedure parse_procedure(const std::string& text)
{
    if (text == "nonparametric")
        return {};
    const auto first = text.find(':');
    const auto second = text.find(':', first == std::string::npos ? first : first + 1);
    if (text.rfind("wild:", 0) != 0 || second == std::string::npos)
        throw InvalidSpec("unknown bootstrap procedure '" + text + "'");
    const std::string scheme = text.substr(first + 1, second - first - 1);
    const std::string mult = text.substr(second + 1);
    BootstrapProcedure p;
    if (scheme == "original") p.scheme = BootScheme::wild_original;
    else if (scheme == "joint") p.scheme = BootScheme::wild_joint_resample;
    else if (scheme == "fixed-x") p.scheme = BootScheme::wild_fixed_x;
    else if (scheme == "independent") p.scheme = BootScheme::wild_independent;
    else throw InvalidSpec("unknown wild bootstrap scheme '" + scheme + "'");
    if (mult == "none") p.multiplier = Multiplier::none;
    else if (mult == "rademacher") p.multiplier = Multiplier::rademacher;
    else if (mult == "normal") p.multiplier = Multiplier::normal;
    else throw InvalidSpec("unknown multiplier '" + mult + "'");
    if (!is_admissible(p.scheme, p.multiplier))
        throw InvalidSpec("inadmissible bootstrap procedure '" + text + "'");
    return p;
}

struct BootstrapSpec {
    BootScheme scheme = BootScheme::nonparametric;
    Multiplier multiplier = Multiplier::none;
    int replicates = 1000;
    RngStream stream{};

    BootstrapProcedure procedure() const { return {scheme, multiplier}; }
};

namespace detail {

inline std::vector<Index> draw_rows(Index n, RngStream& rng)
{
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (auto& i : idx)
        i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    return idx;
}

inline double draw_multiplier(Multiplier m, RngStream& rng)
{
    switch (m) {
    case Multiplier::none: return 1.0;
    case Multiplier::rademacher: return rng.rademacher();
    case Multiplier::normal: return rng.normal();
    }
    return 1.0;
}

} // namespace detail

/// One bootstrap dataset. Row-resampling operators are index multisets;
/// multipliers are drawn after the indices.
inline Dataset resample(const Dataset& data, const FitResult& fit, BootstrapProcedure proc, RngStream& rng)
{
    if (!is_admissible(proc.scheme, proc.multiplier))
        throw InvalidSpec("inadmissible bootstrap procedure " + proc.name());
    if (proc.scheme != BootScheme::nonparametric && fit.family != Family::gaussian)
        throw InvalidSpec("wild bootstrap schemes require a gaussian fit");
    if (fit.n() != data.n())
        throw InvalidArgument("fit does not match the dataset");

    const Index n = data.n();
    Dataset out;
    out.tested = data.tested;
    out.column_names = data.column_names;

    auto take_rows = [&](const std::vector<Index>& idx) {
        Eigen::MatrixXd X(n, data.m());
        for (Index i = 0; i < n; ++i)
            X.row(i) = data.X.row(idx[static_cast<std::size_t>(i)]);
        return X;
    };

    if (proc.scheme == BootScheme::nonparametric) {
        const auto idx = detail::draw_rows(n, rng);
        out.X = take_rows(idx);
        out.y.resize(n);
        for (Index i = 0; i < n; ++i)
            out.y(i) = data.y(idx[static_cast<std::size_t>(i)]);
        return out;
    }

    std::vector<Index> covariate_rows(static_cast<std::size_t>(n));
    std::vector<Index> residual_rows(static_cast<std::size_t>(n));
    switch (proc.scheme) {
    case BootScheme::wild_original:
        for (Index i = 0; i < n; ++i)
            covariate_rows[static_cast<std::size_t>(i)] = residual_rows[static_cast<std::size_t>(i)] = i;
        break;
    case BootScheme::wild_joint_resample:
        covariate_rows = detail::draw_rows(n, rng);
        residual_rows = covariate_rows;
        break;
    case BootScheme::wild_fixed_x:
        for (Index i = 0; i < n; ++i)
            covariate_rows[static_cast<std::size_t>(i)] = i;
        residual_rows = detail::draw_rows(n, rng);
        break;
    case BootScheme::wild_independent:
        covariate_rows = detail::draw_rows(n, rng);
        residual_rows = detail::draw_rows(n, rng);
        break;
    case BootScheme::nonparametric: break;
    }

    out.X = proc.scheme == BootScheme::wild_original || proc.scheme == BootScheme::wild_fixed_x
                ? data.X
                : take_rows(covariate_rows);
    out.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        const auto c = covariate_rows[static_cast<std::size_t>(i)];
        const auto r = residual_rows[static_cast<std::size_t>(i)];
        out.y(i) = fit.fitted(c) + fit.residuals(r) * detail::draw_multiplier(proc.multiplier, rng);
    }
    return out;
}

inline Dataset resample(const Dataset& data, const FitResult& fit, const BootstrapSpec& spec)
{
    RngStream rng = spec.stream;
    return resample(data, fit, spec.procedure(), rng);
}

/// A statistic recomputed on every replicate: the RESI of `tested` under
/// `kind`. Oracle targets carry the fixed covariance they plug in.
struct BootstrapTarget {
    IndexSet tested;
    CovKind kind = CovKind::robust;
    Eigen::MatrixXd oracle;
};

struct BootstrapDistribution {
    /// Per target, the RESI of each successful replicate in replicate order.
    std::vector<std::vector<double>> s_hat;
    int replicates = 0;
    int failures = 0;
};

namespace detail {

inline std::vector<double> replicate_resi(const Dataset& boot, Family family,
                                          const std::vector<BootstrapTarget>& targets)
{
    const FitResult f = fit(boot, family);
    std::optional<CovEstimate> model, robust;
    std::vector<double> out;
    out.reserve(targets.size());
    for (const auto& t : targets) {
        const CovEstimate* cov = nullptr;
        CovEstimate oracle;
        switch (t.kind) {
        case CovKind::model:
            if (!model) model = cov_model(f);
            cov = &*model;
            break;
        case CovKind::robust:
            if (!robust) robust = cov_robust(f);
            cov = &*robust;
            break;
        case CovKind::oracle:
            oracle.kind = CovKind::oracle;
            oracle.matrix = t.oracle;
            cov = &oracle;
            break;
        }
        out.push_back(resi_point(wald_stat(f, *cov, t.tested)).s_hat);
    }
    return out;
}

} // namespace detail

/// Refits every replicate and collects the RESI of each target. Replicate b
/// draws from spec.stream.substream(b). Replicates whose refit fails are
/// dropped; more than 1% failures is an error.
inline BootstrapDistribution bootstrap_distribution(const Dataset& data, Family family,
                                                    const std::vector<BootstrapTarget>& targets,
                                                    const BootstrapSpec& spec, unsigned workers = 1)
{
    if (spec.replicates < 1)
        throw InvalidSpec("bootstrap needs at least one replicate");
    if (!is_admissible(spec.scheme, spec.multiplier))
        throw InvalidSpec("inadmissible bootstrap procedure " + spec.procedure().name());
    const FitResult base = fit(data, family);

    const auto reps = static_cast<std::size_t>(spec.replicates);
    std::vector<std::vector<double>> values(reps);
    std::vector<char> ok(reps, 0);
    parallel_for(reps, workers, [&](std::size_t b) {
        RngStream rng = spec.stream.substream(b);
        try {
            const Dataset boot = resample(data, base, spec.procedure(), rng);
            values[b] = detail::replicate_resi(boot, family, targets);
            ok[b] = 1;
        } catch (const InvalidSpec&) {
            throw;
        } catch (const Error&) {
            ok[b] = 0;
        }
    });

    BootstrapDistribution out;
    out.replicates = spec.replicates;
    out.s_hat.assign(targets.size(), {});
    for (std::size_t b = 0; b < reps; ++b) {
        if (!ok[b]) {
            ++out.failures;
            continue;
        }
        for (std::size_t t = 0; t < targets.size(); ++t)
            out.s_hat[t].push_back(values[b][t]);
    }
    if (out.failures * 100 > out.replicates)
        throw BootstrapFailure(std::to_string(out.failures) + " of " + std::to_string(out.replicates)
                               + " bootstrap refits failed");
    return out;
}

/// Percentile interval: order statistics at ranks ceil(alpha/2 R) and ceil((1 - alpha/2) R).
inline NcpInterval percentile_interval(std::vector<double> values, double alpha)
{
    detail::check_alpha(alpha);
    if (values.empty())
        throw InvalidArgument("percentile interval of an empty sample");
    std::sort(values.begin(), values.end());
    const auto r = static_cast<double>(values.size());
    auto rank = [&](double p) {
        const double k = std::ceil(p * r - 1e-9);
        return static_cast<std::size_t>(std::clamp(k, 1.0, r)) - 1;
    };
    return {values[rank(alpha / 2.0)], values[rank(1.0 - alpha / 2.0)], 1.0 - alpha, IntervalScale::resi};
}

/// Percentile bootstrap interval for the RESI of `tested` on the RESI scale.
inline NcpInterval bootstrap_ci(const Dataset& data, Family family, const IndexSet& tested, CovKind kind,
                                const BootstrapSpec& spec, double alpha,
                                const Eigen::MatrixXd& oracle = {}, unsigned workers = 1)
{
    detail::check_alpha(alpha);
    if (kind == CovKind::oracle && oracle.size() == 0)
        throw InvalidArgument("oracle bootstrap needs the oracle covariance");
    const auto dist = bootstrap_distribution(data, family, {BootstrapTarget{tested, kind, oracle}}, spec, workers);
    return percentile_interval(dist.s_hat.front(), alpha);
}

} // namespace resi
