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
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "resi/errors.hpp"

namespace resi {

using Index = Eigen::Index;
using IndexSet = std::vector<Index>;

enum class Family { gaussian, binomial };

inline const char* to_string(Family f) noexcept
{
    return f == Family::gaussian ? "gaussian" : "binomial";
}

/// Outcome, dense design and the split of design columns into tested and
/// nuisance sets. Column 0 is the intercept by convention.
struct Dataset {
    Eigen::VectorXd y;
    Eigen::MatrixXd X;
    IndexSet tested;
    std::vector<std::string> column_names;

    Index n() const noexcept { return X.rows(); }
    Index m() const noexcept { return X.cols(); }

    IndexSet nuisance() const
    {
        IndexSet out;
        for (Index j = 0; j < m(); ++j)
            if (std::find(tested.begin(), tested.end(), j) == tested.end())
                out.push_back(j);
        return out;
    }

    std::string column_name(Index j) const
    {
        if (static_cast<std::size_t>(j) < column_names.size())
            return column_names[static_cast<std::size_t>(j)];
        return "column " + std::to_string(j);
    }

    void validate() const
    {
        if (y.size() != X.rows())
            throw InvalidArgument("outcome length does not match design rows");
        if (X.rows() <= X.cols())
            throw InvalidArgument("dataset requires n > m");
        if (!column_names.empty() && static_cast<Index>(column_names.size()) != m())
            throw InvalidArgument("column name count does not match design columns");
        IndexSet sorted = tested;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw InvalidArgument("tested index set has duplicates");
        for (Index j : sorted)
            if (j < 0 || j >= m())
                throw InvalidArgument("tested index out of range");
        if (!y.allFinite() || !X.allFinite())
            throw InvalidArgument("dataset contains non-finite values");
    }
};

struct FitResult {
    Family family = Family::gaussian;
    Eigen::VectorXd coefficients;
    Eigen::VectorXd residuals;
    Eigen::VectorXd hat;
    Eigen::VectorXd fitted;
    /// IRLS working weights mu(1 - mu); all ones for gaussian fits.
    Eigen::VectorXd weights;
    double sigma2 = 0.0;
    bool converged = false;
    int iterations = 0;

    // The fitted data travels with the fit so covariance estimators need nothing else.
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::string> column_names;

    Index n() const noexcept { return X.rows(); }
    Index m() const noexcept { return X.cols(); }
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate, int iterations)
        : Error(what), last_(std::move(last_iterate)), iterations_(iterations) {}

    const Eigen::VectorXd& last_iterate() const noexcept { return last_; }
    int iterations() const noexcept { return iterations_; }

private:
    Eigen::VectorXd last_;
    int iterations_;
};

enum class CovKind { oracle, model, robust };

inline const char* to_string(CovKind k) noexcept
{
    switch (k) {
    case CovKind::oracle: return "oracle";
    case CovKind::model: return "parametric";
    case CovKind::robust: return "robust";
    }
    return "?";
}

/// Covariance of sqrt(n) (theta_hat - theta).
///
/// `bread` is the unit-dispersion information n^-1 X'WX and `meat` the score
/// outer-product average (robust only), so a robust estimate satisfies
/// matrix = bread^-1 meat bread^-1.
struct CovEstimate {
    CovKind kind = CovKind::model;
    Eigen::MatrixXd matrix;
    Eigen::MatrixXd bread;
    Eigen::MatrixXd meat;

    Eigen::MatrixXd block(const IndexSet& idx) const
    {
        const auto k = static_cast<Index>(idx.size());
        Eigen::MatrixXd out(k, k);
        for (Index a = 0; a < k; ++a)
            for (Index b = 0; b < k; ++b)
                out(a, b) = matrix(idx[a], idx[b]);
        return out;
    }
};

namespace detail {

inline constexpr double rank_tol = 1e-10;

// First column that is linearly dependent on the columns before it.
inline Index first_dependent_column(const Eigen::MatrixXd& X)
{
    for (Index k = 1; k <= X.cols(); ++k) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X.leftCols(k));
        qr.setThreshold(rank_tol);
        if (qr.rank() < k)
            return k - 1;
    }
    return -1;
}

inline void check_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& names)
{
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(rank_tol);
    if (qr.rank() == X.cols())
        return;
    const Index col = first_dependent_column(X);
    std::string name = (col >= 0 && static_cast<std::size_t>(col) < names.size())
                           ? names[static_cast<std::size_t>(col)]
                           : "column " + std::to_string(col);
    throw SingularDesign("design matrix is rank deficient at " + name, col);
}

// Hat diagonals h_i = w_i x_i (X'WX)^-1 x_i' given the Cholesky factor of X'WX.
inline Eigen::VectorXd hat_diagonal(const Eigen::MatrixXd& X, const Eigen::VectorXd& w,
                                    const Eigen::LLT<Eigen::MatrixXd>& info)
{
    Eigen::MatrixXd scaled = X.transpose();
    info.matrixL().solveInPlace(scaled);
    return scaled.colwise().squaredNorm().transpose().cwiseProduct(w);
}

inline Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& A, const char* what)
{
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
        throw SingularDesign(std::string(what) + " is not positive definite", -1);
    return llt.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
}

inline double logistic(double eta) noexcept
{
    return eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

} // namespace detail

/// Ordinary least squares with residuals, hat diagonals and sigma2 = SSE / (n - m).
inline FitResult fit_ols(const Dataset& data)
{
    data.validate();
    detail::check_full_rank(data.X, data.column_names);

    const Index n = data.n();
    const Index m = data.m();
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(m, m);
    xtx.selfadjointView<Eigen::Lower>().rankUpdate(data.X.transpose());
    Eigen::LLT<Eigen::MatrixXd> info(xtx.selfadjointView<Eigen::Lower>());
    if (info.info() != Eigen::Success)
        throw SingularDesign("X'X is not positive definite", -1);

    FitResult fit;
    fit.family = Family::gaussian;
    fit.coefficients = info.solve(data.X.transpose() * data.y);
    fit.fitted = data.X * fit.coefficients;
    fit.residuals = data.y - fit.fitted;
    // Exact fits leave rounding-level residuals; report them as zero.
    if (fit.residuals.lpNorm<Eigen::Infinity>()
        <= 64.0 * std::numeric_limits<double>::epsilon() * data.y.lpNorm<Eigen::Infinity>())
        fit.residuals.setZero();
    fit.weights = Eigen::VectorXd::Ones(n);
    fit.hat = detail::hat_diagonal(data.X, fit.weights, info);
    fit.sigma2 = fit.residuals.squaredNorm() / static_cast<double>(n - m);
    fit.converged = true;
    fit.iterations = 1;
    fit.X = data.X;
    fit.y = data.y;
    fit.column_names = data.column_names;
    return fit;
}

struct GlmControl {
    double score_tol = 1e-8;
    int max_iterations = 25;
    double divergence_bound = 30.0;
};

/// Logistic regression by iteratively reweighted least squares. Outcomes may
/// be proportions in [0, 1].
inline FitResult fit_glm_binomial(const Dataset& data, const GlmControl& control = {})
{
    data.validate();
    if ((data.y.array() < 0.0).any() || (data.y.array() > 1.0).any())
        throw InvalidArgument("binomial outcomes must lie in [0, 1]");
    detail::check_full_rank(data.X, data.column_names);

    const Index n = data.n();
    const Index m = data.m();

    // Same starting values as the usual glm implementation: mu = (y + 1/2) / 2.
    Eigen::VectorXd mu = (data.y.array() + 0.5) / 2.0;
    Eigen::VectorXd eta = (mu.array() / (1.0 - mu.array())).log();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd w(n);

    for (int iter = 1; iter <= control.max_iterations; ++iter) {
        w = mu.array() * (1.0 - mu.array());
        const Eigen::VectorXd z = eta.array() + (data.y - mu).array() / w.array();
        const Eigen::MatrixXd xtwx = data.X.transpose() * w.asDiagonal() * data.X;
        Eigen::LLT<Eigen::MatrixXd> info(xtwx);
        if (info.info() != Eigen::Success)
            throw ConvergenceError("weighted information matrix became singular", beta, iter);
        beta = info.solve(data.X.transpose() * w.cwiseProduct(z));
        if (!beta.allFinite() || beta.lpNorm<Eigen::Infinity>() > control.divergence_bound)
            throw ConvergenceError("coefficients diverged; the outcome may be separated", beta, iter);

        eta = data.X * beta;
        mu = eta.unaryExpr(&detail::logistic);
        if ((mu.array() <= 0.0).any() || (mu.array() >= 1.0).any())
            throw ConvergenceError("fitted probabilities reached 0 or 1", beta, iter);

        const double score = (data.X.transpose() * (data.y - mu)).lpNorm<Eigen::Infinity>();
        if (score < control.score_tol) {
            FitResult fit;
            fit.family = Family::binomial;
            fit.coefficients = beta;
            fit.fitted = mu;
            fit.residuals = data.y - mu;
            fit.weights = mu.array() * (1.0 - mu.array());
            Eigen::LLT<Eigen::MatrixXd> final_info(data.X.transpose() * fit.weights.asDiagonal() * data.X);
            fit.hat = detail::hat_diagonal(data.X, fit.weights, final_info);
            fit.sigma2 = 1.0;
            fit.converged = true;
            fit.iterations = iter;
            fit.X = data.X;
            fit.y = data.y;
            fit.column_names = data.column_names;
            return fit;
        }
    }
    throw ConvergenceError("IRLS did not converge", beta, control.max_iterations);
}

inline FitResult fit(const Dataset& data, Family family)
{
    return family == Family::gaussian ? fit_ols(data) : fit_glm_binomial(data);
}

namespace detail {

inline Eigen::MatrixXd unit_information(const FitResult& fit)
{
    const auto n = static_cast<double>(fit.n());
    return fit.X.transpose() * fit.weights.asDiagonal() * fit.X / n;
}

} // namespace detail

/// Inverse-information covariance: sigma2 (n^-1 X'X)^-1, or (n^-1 X'WX)^-1 for binomial fits.
inline CovEstimate cov_model(const FitResult& fit)
{
    if (!fit.converged)
        throw InvalidArgument("covariance requested for an unconverged fit");
    CovEstimate cov;
    cov.kind = CovKind::model;
    cov.bread = detail::unit_information(fit);
    cov.matrix = fit.sigma2 * detail::inverse_spd(cov.bread, "information matrix");
    cov.matrix = (0.5 * (cov.matrix + cov.matrix.transpose())).eval();
    return cov;
}

/// Sandwich covariance bread^-1 meat bread^-1.
///
/// Gaussian fits weight each score outer product by e_i^2 / (1 - h_i)^2, the
/// jackknife-type correction; binomial fits use the plain score sandwich with
/// meat n^-1 sum x_i x_i' (y_i - mu_i)^2.
inline CovEstimate cov_robust(const FitResult& fit)
{
    if (!fit.converged)
        throw InvalidArgument("covariance requested for an unconverged fit");
    const auto n = static_cast<double>(fit.n());

    Eigen::VectorXd g(fit.n());
    if (fit.family == Family::gaussian) {
        for (Index i = 0; i < fit.n(); ++i) {
            const double one_minus_h = 1.0 - fit.hat(i);
            if (!(one_minus_h > 1e-12))
                throw DegenerateLeverage("observation " + std::to_string(i) + " has leverage one");
            g(i) = fit.residuals(i) * fit.residuals(i) / (one_minus_h * one_minus_h);
        }
    } else {
        g = fit.residuals.array().square();
    }

    CovEstimate cov;
    cov.kind = CovKind::robust;
    cov.bread = detail::unit_information(fit);
    cov.meat = fit.X.transpose() * g.asDiagonal() * fit.X / n;
    const Eigen::MatrixXd bread_inv = detail::inverse_spd(cov.bread, "information matrix");
    cov.matrix = bread_inv * cov.meat * bread_inv;
    cov.matrix = (0.5 * (cov.matrix + cov.matrix.transpose())).eval();
    return cov;
}

} // namespace resi
