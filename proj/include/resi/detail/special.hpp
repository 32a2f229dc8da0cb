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

// Regularized incomplete gamma and beta functions.

#include <cmath>
#include <limits>

#include "resi/errors.hpp"

namespace resi::special {

namespace detail {

inline constexpr double rel_tol = 1e-14;
inline constexpr int max_iterations = 200000;
inline constexpr double tiny = 1e-300;

inline double gamma_prefactor(double a, double x)
{
    return std::exp(a * std::log(x) - x - std::lgamma(a));
}

// Series for P(a, x), used when x < a + 1.
inline double gamma_p_series(double a, double x)
{
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int i = 0; i < max_iterations; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * rel_tol)
            return sum * gamma_prefactor(a, x);
    }
    throw NumericalFailure("incomplete gamma series did not converge");
}

// Lentz continued fraction for Q(a, x), used when x >= a + 1.
inline double gamma_q_fraction(double a, double x)
{
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < max_iterations; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny)
            d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < rel_tol)
            return h * gamma_prefactor(a, x);
    }
    throw NumericalFailure("incomplete gamma continued fraction did not converge");
}

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_fraction(double a, double b, double x)
{
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny)
        d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m < max_iterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < rel_tol)
            return h;
    }
    throw NumericalFailure("incomplete beta continued fraction did not converge");
}

} // namespace detail

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
inline double gamma_p(double a, double x)
{
    if (!(a > 0.0) || !(x >= 0.0) || !std::isfinite(a))
        throw InvalidArgument("gamma_p requires a > 0 and x >= 0");
    if (x == 0.0)
        return 0.0;
    if (std::isinf(x))
        return 1.0;
    if (x < a + 1.0)
        return detail::gamma_p_series(a, x);
    return 1.0 - detail::gamma_q_fraction(a, x);
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), accurate in the far tail.
inline double gamma_q(double a, double x)
{
    if (!(a > 0.0) || !(x >= 0.0) || !std::isfinite(a))
        throw InvalidArgument("gamma_q requires a > 0 and x >= 0");
    if (x == 0.0)
        return 1.0;
    if (std::isinf(x))
        return 0.0;
    if (x < a + 1.0)
        return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_fraction(a, x);
}

/// Regularized incomplete beta I_x(a, b), a, b > 0, x in [0, 1].
inline double beta_inc(double a, double b, double x)
{
    if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0))
        throw InvalidArgument("beta_inc requires a, b > 0 and 0 <= x <= 1");
    if (x == 0.0)
        return 0.0;
    if (x == 1.0)
        return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b)
                             + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::beta_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_fraction(b, a, 1.0 - x) / b;
}

} // namespace resi::special
