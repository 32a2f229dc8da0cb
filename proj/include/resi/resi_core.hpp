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
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resi/errors.hpp"
#include "resi/linmodels.hpp"

namespace resi {

struct WaldResult {
    double t2 = 0.0;
    int m1 = 1;
    Index n = 0;
    CovKind kind = CovKind::model;
    Eigen::VectorXd beta0;
};

struct ResiEstimate {
    double s_hat = 0.0;
    WaldResult source;
};

/// T^2 = n (b - b0)' Sigma_b^-1 (b - b0) over the tested block.
///
/// A tested covariance block that is exactly zero (an exact fit) yields
/// T^2 = 0 when the estimate sits on b0 up to rounding, and is an error
/// otherwise.
inline WaldResult wald_stat(const FitResult& fit, const CovEstimate& cov, const IndexSet& tested,
                            const Eigen::VectorXd& beta0 = {})
{
    if (tested.empty())
        throw InvalidArgument("tested index set is empty");
    const auto m1 = static_cast<Index>(tested.size());
    for (Index j : tested)
        if (j < 0 || j >= fit.m())
            throw InvalidArgument("tested index out of range");
    if (beta0.size() != 0 && beta0.size() != m1)
        throw InvalidArgument("beta0 length does not match the tested set");

    WaldResult out;
    out.m1 = static_cast<int>(m1);
    out.n = fit.n();
    out.kind = cov.kind;
    out.beta0 = beta0.size() == 0 ? Eigen::VectorXd::Zero(m1) : beta0;

    Eigen::VectorXd diff(m1);
    for (Index a = 0; a < m1; ++a)
        diff(a) = fit.coefficients(tested[static_cast<std::size_t>(a)]) - out.beta0(a);

    const Eigen::MatrixXd block = cov.block(tested);
    const double scale = block.cwiseAbs().maxCoeff();
    if (scale == 0.0) {
        const double noise = 64.0 * std::numeric_limits<double>::epsilon()
                             * std::max(1.0, fit.coefficients.lpNorm<Eigen::Infinity>());
        if (diff.lpNorm<Eigen::Infinity>() <= noise) {
            out.t2 = 0.0;
            return out;
        }
        throw SingularCovariance("tested covariance block is zero");
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(block);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()
        || ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().maxCoeff())
        throw SingularCovariance("tested covariance block is singular");
    out.t2 = static_cast<double>(out.n) * diff.dot(ldlt.solve(diff));
    out.t2 = std::max(0.0, out.t2);
    return out;
}

/// S_hat = sqrt(max(0, (T^2 - m1) / n)).
inline ResiEstimate resi_point(const WaldResult& w)
{
    ResiEstimate out;
    out.source = w;
    out.s_hat = std::sqrt(std::max(0.0, (w.t2 - w.m1) / static_cast<double>(w.n)));
    return out;
}

/// Convenience overload for a bare statistic.
inline double resi_point(double t2, int m1, Index n)
{
    return std::sqrt(std::max(0.0, (t2 - m1) / static_cast<double>(n)));
}

inline CovEstimate covariance(const FitResult& fit, CovKind kind)
{
    switch (kind) {
    case CovKind::model: return cov_model(fit);
    case CovKind::robust: return cov_robust(fit);
    case CovKind::oracle: break;
    }
    throw InvalidArgument("oracle covariance cannot be estimated from a fit");
}

/// Columns of `full` that are absent from `reduced`, after checking that the
/// reduced model is nested in the full one (same outcome, identical shared columns).
inline IndexSet extra_columns(const FitResult& full, const FitResult& reduced)
{
    if (full.n() != reduced.n() || full.y != reduced.y)
        throw NestingError("models were fit to different outcomes");
    if (full.column_names.size() != static_cast<std::size_t>(full.m())
        || reduced.column_names.size() != static_cast<std::size_t>(reduced.m()))
        throw NestingError("nesting check requires named columns");

    std::vector<bool> shared(static_cast<std::size_t>(full.m()), false);
    for (Index r = 0; r < reduced.m(); ++r) {
        const auto& name = reduced.column_names[static_cast<std::size_t>(r)];
        auto it = std::find(full.column_names.begin(), full.column_names.end(), name);
        if (it == full.column_names.end())
            throw NestingError("reduced column '" + name + "' is not in the full model");
        const auto f = static_cast<Index>(it - full.column_names.begin());
        if (full.X.col(f) != reduced.X.col(r))
            throw NestingError("column '" + name + "' differs between the models");
        shared[static_cast<std::size_t>(f)] = true;
    }
    IndexSet extra;
    for (Index j = 0; j < full.m(); ++j)
        if (!shared[static_cast<std::size_t>(j)])
            extra.push_back(j);
    if (extra.empty())
        throw NestingError("reduced model has the same columns as the full model");
    return extra;
}

/// RESI of the coefficients the full model adds to the reduced one.
inline ResiEstimate resi_full_vs_reduced(const FitResult& full, const FitResult& reduced, CovKind kind)
{
    const IndexSet extra = extra_columns(full, reduced);
    return resi_point(wald_stat(full, covariance(full, kind), extra));
}

} // namespace resi
