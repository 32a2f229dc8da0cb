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

#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "resi/detail/special.hpp"
#include "resi/errors.hpp"
#include "resi/rng.hpp"

namespace resi {

namespace detail {

inline constexpr double mixture_abs_tol = 1e-12;
inline constexpr long mixture_max_terms = 100000;

inline void require_finite(double v, const char* what)
{
    if (!std::isfinite(v))
        throw InvalidArgument(std::string(what) + " must be finite");
}

// Sum_j Pois(j; mu) * term(j) where term(j) lies in [0, 1] and is nonincreasing in j.
//
// Summation starts at the Poisson mode and walks outward. Past the mode the
// Poisson weights shrink geometrically, so each unvisited tail is bounded by
// the current weight times r / (1 - r); the walk stops once both tails are
// below half the absolute tolerance.
template <class Term>
double poisson_mixture(double mu, Term&& term)
{
    const long mode = static_cast<long>(std::floor(mu));
    const double w_mode = std::exp(mode * std::log(mu) - mu - std::lgamma(mode + 1.0));
    const double half_tol = 0.5 * mixture_abs_tol;

    double sum = w_mode * term(mode);
    long evaluated = 1;

    double w = w_mode;
    for (long j = mode + 1;; ++j) {
        if (++evaluated > mixture_max_terms)
            throw NumericalFailure("Poisson mixture exceeded the term cap");
        w *= mu / static_cast<double>(j);
        const double t = term(j);
        sum += w * t;
        const double r = mu / static_cast<double>(j + 1);
        if (r < 1.0 && w * t * r / (1.0 - r) < half_tol)
            break;
    }

    w = w_mode;
    for (long j = mode - 1; j >= 0; --j) {
        if (++evaluated > mixture_max_terms)
            throw NumericalFailure("Poisson mixture exceeded the term cap");
        w *= static_cast<double>(j + 1) / mu;
        sum += w * term(j);
        const double r = static_cast<double>(j) / mu;
        if (w * r / (1.0 - r) < half_tol)
            break;
    }
    return std::fmin(1.0, std::fmax(0.0, sum));
}

} // namespace detail

/// CDF of the non-central chi-squared distribution.
inline double ncx2_cdf(double x, int df, double ncp)
{
    detail::require_finite(x, "x");
    detail::require_finite(ncp, "ncp");
    if (x < 0.0 || df < 1 || ncp < 0.0)
        throw InvalidArgument("ncx2_cdf requires x >= 0, df >= 1, ncp >= 0");
    if (x == 0.0)
        return 0.0;
    const double a = 0.5 * df;
    const double half_x = 0.5 * x;
    if (ncp == 0.0)
        return special::gamma_p(a, half_x);
    return detail::poisson_mixture(0.5 * ncp, [&](long j) { return special::gamma_p(a + j, half_x); });
}

/// CDF of the non-central F distribution (numerator carries the non-centrality).
inline double ncf_cdf(double x, int df1, int df2, double ncp)
{
    detail::require_finite(x, "x");
    detail::require_finite(ncp, "ncp");
    if (x < 0.0 || df1 < 1 || df2 < 1 || ncp < 0.0)
        throw InvalidArgument("ncf_cdf requires x >= 0, df1, df2 >= 1, ncp >= 0");
    if (x == 0.0)
        return 0.0;
    const double a = 0.5 * df1;
    const double b = 0.5 * df2;
    const double y = df1 * x / (df1 * x + static_cast<double>(df2));
    if (ncp == 0.0)
        return special::beta_inc(a, b, y);
    return detail::poisson_mixture(0.5 * ncp, [&](long j) { return special::beta_inc(a + j, b, y); });
}

/// Upper tail of the central chi-squared distribution, used for p-values.
inline double chisq_sf(double x, int df)
{
    detail::require_finite(x, "x");
    if (df < 1)
        throw InvalidArgument("chisq_sf requires df >= 1");
    if (x <= 0.0)
        return 1.0;
    return special::gamma_q(0.5 * df, 0.5 * x);
}

struct NoncentralChiSq {
    int df = 1;
    double ncp = 0.0;

    NoncentralChiSq(int df_, double ncp_) : df(df_), ncp(ncp_)
    {
        if (df < 1 || !(ncp >= 0.0) || !std::isfinite(ncp))
            throw InvalidArgument("NoncentralChiSq requires df >= 1 and finite ncp >= 0");
    }

    double cdf(double x) const { return ncx2_cdf(x, df, ncp); }
};

struct NoncentralF {
    int df1 = 1;
    int df2 = 1;
    double ncp = 0.0;

    NoncentralF(int df1_, int df2_, double ncp_) : df1(df1_), df2(df2_), ncp(ncp_)
    {
        if (df1 < 1 || df2 < 1 || !(ncp >= 0.0) || !std::isfinite(ncp))
            throw InvalidArgument("NoncentralF requires df1, df2 >= 1 and finite ncp >= 0");
    }

    double cdf(double x) const { return ncf_cdf(x, df1, df2, ncp); }
};

struct Moments {
    double mean;
    double variance;
};

inline Moments theoretical_moments(const NoncentralChiSq& d)
{
    return {d.df + d.ncp, 2.0 * (d.df + 2.0 * d.ncp)};
}

/// Moments of the Wald-type statistic df1 * F, F ~ F(df1, df2; ncp).
/// Requires df2 > 4 so that the variance is finite.
inline Moments theoretical_moments(const NoncentralF& d)
{
    if (d.df2 <= 4)
        throw DomainError("F variance requires df2 > 4");
    const double m1 = d.df1;
    const double nu = d.df2;
    const double a = m1 + d.ncp;
    const double mean = nu * a / (nu - 2.0);
    const double variance =
        2.0 * (a * a + (m1 + 2.0 * d.ncp) * (nu - 2.0)) / ((nu - 2.0) * (nu - 2.0) * (nu - 4.0)) * nu * nu;
    return {mean, variance};
}

// ---------------------------------------------------------------------------
// Samplers

struct NormalSampler {
    double mean = 0.0;
    double sd = 1.0;
};

/// G - shape / rate with G ~ Gamma(shape, rate) and rate = sqrt(shape) / sd:
/// mean zero, standard deviation sd, skewness 2 / sqrt(shape).
struct ShiftedGammaSampler {
    double shape = 0.1;
    double sd = 1.0;
};

struct BernoulliSampler {
    double p = 0.5;
};

struct RademacherSampler {};

struct ConstantOneSampler {};

using SamplerSpec =
    std::variant<NormalSampler, ShiftedGammaSampler, BernoulliSampler, RademacherSampler, ConstantOneSampler>;

/// Gamma(shape, 1) by Marsaglia and Tsang; shape < 1 is boosted through U^(1/shape).
inline double standard_gamma(double shape, RngStream& rng)
{
    if (!(shape > 0.0))
        throw InvalidArgument("gamma shape must be positive");
    if (shape < 1.0) {
        const double boost = std::pow(rng.uniform(), 1.0 / shape);
        return standard_gamma(shape + 1.0, rng) * boost;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double z, v;
        do {
            z = rng.normal();
            v = 1.0 + c * z;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * z * z * z * z)
            return d * v;
        if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v)))
            return d * v;
    }
}

inline void validate(const SamplerSpec& spec)
{
    std::visit(
        [](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, NormalSampler>) {
                if (!(s.sd > 0.0) || !std::isfinite(s.mean))
                    throw InvalidArgument("normal sampler requires sd > 0");
            } else if constexpr (std::is_same_v<T, ShiftedGammaSampler>) {
                if (!(s.shape > 0.0) || !(s.sd > 0.0))
                    throw InvalidArgument("shifted-gamma sampler requires shape > 0 and sd > 0");
            } else if constexpr (std::is_same_v<T, BernoulliSampler>) {
                if (!(s.p > 0.0 && s.p < 1.0))
                    throw InvalidArgument("bernoulli sampler requires 0 < p < 1");
            }
        },
        spec);
}

/// One draw; `spec` is assumed valid.
inline double draw_one(const SamplerSpec& spec, RngStream& rng)
{
    return std::visit(
        [&rng](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, NormalSampler>) {
                return s.mean + s.sd * rng.normal();
            } else if constexpr (std::is_same_v<T, ShiftedGammaSampler>) {
                const double rate = std::sqrt(s.shape) / s.sd;
                return standard_gamma(s.shape, rng) / rate - s.shape / rate;
            } else if constexpr (std::is_same_v<T, BernoulliSampler>) {
                return rng.uniform() < s.p ? 1.0 : 0.0;
            } else if constexpr (std::is_same_v<T, RademacherSampler>) {
                return rng.rademacher();
            } else {
                return 1.0;
            }
        },
        spec);
}

inline std::vector<double> draw(const SamplerSpec& spec, std::size_t count, RngStream& rng)
{
    if (count < 1)
        throw InvalidArgument("draw requires count >= 1");
    validate(spec);
    std::vector<double> out(count);
    for (auto& v : out)
        v = draw_one(spec, rng);
    return out;
}

// ---------------------------------------------------------------------------
// Error distributions of the simulation design

enum class ErrorFamily { normal, shifted_gamma };

struct ErrorDistSpec {
    ErrorFamily family = ErrorFamily::normal;
    double sd0 = 1.0;          // sd when the binary covariate is 0
    double sd1 = 1.0;          // sd when the binary covariate is 1
    double gamma_shape = 0.1;

    void validate() const
    {
        if (!(sd0 > 0.0) || !(sd1 > 0.0) || !(gamma_shape > 0.0))
            throw InvalidArgument("error distribution requires positive sds and shape");
    }

    SamplerSpec sampler_for(double x) const
    {
        const double sd = x != 0.0 ? sd1 : sd0;
        if (family == ErrorFamily::normal)
            return NormalSampler{0.0, sd};
        return ShiftedGammaSampler{gamma_shape, sd};
    }
};

inline const char* to_string(ErrorFamily f) noexcept
{
    return f == ErrorFamily::normal ? "normal" : "gamma";
}

} // namespace resi
