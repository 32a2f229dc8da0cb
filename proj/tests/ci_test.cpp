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

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "resi/ci.hpp"

namespace {

resi::Dataset linear_data(int n, double slope, std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    resi::Dataset d;
    d.X.resize(n, 2);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        d.X(i, 0) = 1.0;
        d.X(i, 1) = z(gen);
        d.y(i) = slope * d.X(i, 1) + z(gen);
    }
    d.tested = {1};
    d.column_names = {"(Intercept)", "x"};
    return d;
}

} // namespace

TEST(CiNcpChisq, ClampsLowerBoundWhenCentralCdfIsSmall)
{
    // Central CDF at 0.5 with 1 df is about 0.52 < 0.975.
    const auto ci = resi::ci_ncp_chisq(0.5, 1, 0.05, 100);
    EXPECT_EQ(ci.ncp.lower, 0.0);
    EXPECT_GT(ci.ncp.upper, 0.0);
    EXPECT_NEAR(resi::ncx2_cdf(0.5, 1, ci.ncp.upper), 0.025, 1e-6);
}

TEST(CiNcpChisq, ZeroStatisticGivesZeroInterval)
{
    const auto ci = resi::ci_ncp_chisq(0.0, 2, 0.05, 100);
    EXPECT_EQ(ci.ncp.lower, 0.0);
    EXPECT_EQ(ci.ncp.upper, 0.0);
    EXPECT_EQ(ci.resi.upper, 0.0);
}

TEST(CiNcpChisq, InteriorBoundsAreFixedPoints)
{
    const double t2 = 18.92;
    const auto ci = resi::ci_ncp_chisq(t2, 1, 0.05, 98);
    ASSERT_GT(ci.ncp.lower, 0.0);
    EXPECT_NEAR(resi::ncx2_cdf(t2, 1, ci.ncp.lower), 0.975, 1e-6);
    EXPECT_NEAR(resi::ncx2_cdf(t2, 1, ci.ncp.upper), 0.025, 1e-6);
    EXPECT_LT(ci.ncp.lower, ci.ncp.upper);
}

TEST(CiNcpChisq, ResiScaleIsSquareRootOfNcpOverN)
{
    const auto ci = resi::ci_ncp_chisq(42.0, 3, 0.1, 77);
    EXPECT_EQ(ci.resi.lower, std::sqrt(ci.ncp.lower / 77.0));
    EXPECT_EQ(ci.resi.upper, std::sqrt(ci.ncp.upper / 77.0));
    EXPECT_EQ(ci.resi.scale, resi::IntervalScale::resi);
    EXPECT_DOUBLE_EQ(ci.ncp.level, 0.9);
}

TEST(CiNcpChisq, BoundsStraddleTargets)
{
    const double t2 = 9.0;
    const auto ci = resi::ci_ncp_chisq(t2, 2, 0.05, 50);
    ASSERT_GT(ci.ncp.lower, 1e-6);
    EXPECT_GE(resi::ncx2_cdf(t2, 2, ci.ncp.lower - 1e-7), 0.975);
    EXPECT_LE(resi::ncx2_cdf(t2, 2, ci.ncp.lower + 1e-7), 0.975);
    EXPECT_GE(resi::ncx2_cdf(t2, 2, ci.ncp.upper - 1e-7), 0.025);
    EXPECT_LE(resi::ncx2_cdf(t2, 2, ci.ncp.upper + 1e-7), 0.025);
}

TEST(CiNcpChisq, InvalidAlpha)
{
    EXPECT_THROW(resi::ci_ncp_chisq(3.0, 1, 0.0, 10), resi::InvalidArgument);
    EXPECT_THROW(resi::ci_ncp_chisq(3.0, 1, 1.0, 10), resi::InvalidArgument);
    EXPECT_THROW(resi::ci_ncp_f(3.0, 1, 8, 1.5, 10), resi::InvalidArgument);
}

TEST(CiNcpF, ZeroStatisticGivesZeroInterval)
{
    const auto ci = resi::ci_ncp_f(0.0, 1, 20, 0.05, 22);
    EXPECT_EQ(ci.ncp.lower, 0.0);
    EXPECT_EQ(ci.ncp.upper, 0.0);
}

TEST(CiNcpF, InteriorBoundsAreFixedPoints)
{
    const double t2 = 24.0;
    const auto ci = resi::ci_ncp_f(t2, 2, 40, 0.05, 43);
    ASSERT_GT(ci.ncp.lower, 0.0);
    EXPECT_NEAR(resi::ncf_cdf(t2 / 2, 2, 40, ci.ncp.lower), 0.975, 1e-6);
    EXPECT_NEAR(resi::ncf_cdf(t2 / 2, 2, 40, ci.ncp.upper), 0.025, 1e-6);
}

TEST(CiNcpF, LargeDenominatorMatchesChiSquare)
{
    for (double t2 : {5.0, 20.0, 60.0}) {
        const auto f = resi::ci_ncp_f(t2, 1, 1'000'000, 0.05, 500);
        const auto c = resi::ci_ncp_chisq(t2, 1, 0.05, 500);
        EXPECT_NEAR(f.ncp.lower, c.ncp.lower, 1e-3 * std::max(1.0, c.ncp.lower)) << t2;
        EXPECT_NEAR(f.ncp.upper, c.ncp.upper, 1e-3 * std::max(1.0, c.ncp.upper)) << t2;
    }
}

TEST(CiNcpF, WiderThanChiSquareForSmallDf2)
{
    const auto f = resi::ci_ncp_f(30.0, 1, 10, 0.05, 12);
    const auto c = resi::ci_ncp_chisq(30.0, 1, 0.05, 12);
    EXPECT_GT(f.ncp.upper - f.ncp.lower, c.ncp.upper - c.ncp.lower);
}

TEST(Procedures, TwelveAdmissible)
{
    const auto all = resi::admissible_procedures();
    EXPECT_EQ(all.size(), 12u);
    EXPECT_EQ(std::count_if(all.begin(), all.end(),
                            [](const auto& p) { return p.scheme != resi::BootScheme::nonparametric; }),
              11);
    std::set<std::string> names;
    for (const auto& p : all) {
        names.insert(p.name());
        EXPECT_EQ(resi::parse_procedure(p.name()), p);
    }
    EXPECT_EQ(names.size(), 12u);
}

TEST(Procedures, WildOriginalWithoutMultiplierIsRejected)
{
    EXPECT_FALSE(resi::is_admissible(resi::BootScheme::wild_original, resi::Multiplier::none));
    EXPECT_THROW(resi::parse_procedure("wild:original:none"), resi::InvalidSpec);
    EXPECT_THROW(resi::parse_procedure("wild:sideways:normal"), resi::InvalidSpec);
    const auto d = linear_data(30, 0.5, 1);
    const auto fit = resi::fit_ols(d);
    resi::BootstrapSpec spec;
    spec.scheme = resi::BootScheme::wild_original;
    EXPECT_THROW(resi::resample(d, fit, spec), resi::InvalidSpec);
    EXPECT_THROW(resi::bootstrap_ci(d, resi::Family::gaussian, {1}, resi::CovKind::robust, spec, 0.05),
                 resi::InvalidSpec);
}

TEST(Resample, WildOriginalPositiveMultipliersReproduceY)
{
    const auto d = linear_data(40, 0.5, 2);
    const auto fit = resi::fit_ols(d);
    resi::RngStream rng(3);
    const auto boot = resi::resample(d, fit, {resi::BootScheme::wild_original, resi::Multiplier::rademacher}, rng);
    EXPECT_EQ(boot.X, d.X);
    int kept = 0;
    for (int i = 0; i < 40; ++i) {
        const bool same = std::fabs(boot.y(i) - d.y(i)) < 1e-12;
        const bool flipped = std::fabs(boot.y(i) - (2.0 * fit.fitted(i) - d.y(i))) < 1e-12;
        EXPECT_TRUE(same || flipped) << i;
        kept += same;
    }
    EXPECT_GT(kept, 0);
    EXPECT_LT(kept, 40);
}

TEST(Resample, WildFixedXNoMultiplierAddsResampledResiduals)
{
    const auto d = linear_data(40, 0.5, 4);
    const auto fit = resi::fit_ols(d);
    resi::RngStream rng(5);
    const auto boot = resi::resample(d, fit, {resi::BootScheme::wild_fixed_x, resi::Multiplier::none}, rng);
    EXPECT_EQ(boot.X, d.X);
    const Eigen::VectorXd added = boot.y - fit.fitted;
    for (int i = 0; i < 40; ++i) {
        bool found = false;
        for (int j = 0; j < 40 && !found; ++j)
            found = std::fabs(added(i) - fit.residuals(j)) < 1e-12;
        EXPECT_TRUE(found) << i;
    }
}

TEST(Resample, NonparametricRowsAreOriginalPairs)
{
    const auto d = linear_data(30, 0.5, 6);
    const auto fit = resi::fit_ols(d);
    resi::RngStream rng(7);
    const auto boot = resi::resample(d, fit, {}, rng);
    int distinct = 0;
    std::set<int> seen;
    for (int i = 0; i < 30; ++i) {
        int match = -1;
        for (int j = 0; j < 30; ++j)
            if (boot.y(i) == d.y(j) && boot.X.row(i) == d.X.row(j))
                match = j;
        ASSERT_GE(match, 0) << i;
        distinct += seen.insert(match).second;
    }
    EXPECT_LT(distinct, 30);
}

TEST(Resample, JointSharesRowsAcrossMeanAndResidual)
{
    const auto d = linear_data(30, 0.5, 8);
    const auto fit = resi::fit_ols(d);
    resi::RngStream rng(9);
    const auto boot = resi::resample(d, fit, {resi::BootScheme::wild_joint_resample, resi::Multiplier::none}, rng);
    // Without multipliers each row is exactly an original observation.
    for (int i = 0; i < 30; ++i) {
        bool found = false;
        for (int j = 0; j < 30 && !found; ++j)
            found = boot.X.row(i) == d.X.row(j) && std::fabs(boot.y(i) - d.y(j)) < 1e-12;
        EXPECT_TRUE(found) << i;
    }
}

TEST(Resample, WildRequiresGaussianFit)
{
    resi::Dataset d = linear_data(60, 0.5, 10);
    for (int i = 0; i < 60; ++i)
        d.y(i) = d.X(i, 1) + 0.3 * std::sin(7.0 * i) > 0.0 ? 1.0 : 0.0;
    const auto fit = resi::fit_glm_binomial(d);
    resi::RngStream rng(11);
    EXPECT_THROW(resi::resample(d, fit, {resi::BootScheme::wild_fixed_x, resi::Multiplier::normal}, rng),
                 resi::InvalidSpec);
    EXPECT_NO_THROW(resi::resample(d, fit, {}, rng));
}

TEST(PercentileInterval, OrderStatisticRanks)
{
    std::vector<double> v(1000);
    for (int i = 0; i < 1000; ++i)
        v[static_cast<std::size_t>(i)] = 1000 - i;
    std::mt19937_64 gen(12);
    std::shuffle(v.begin(), v.end(), gen);
    const auto ci = resi::percentile_interval(v, 0.05);
    EXPECT_EQ(ci.lower, 25.0);
    EXPECT_EQ(ci.upper, 975.0);
    const auto ci10 = resi::percentile_interval(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.2);
    EXPECT_EQ(ci10.lower, 1.0);
    EXPECT_EQ(ci10.upper, 9.0);
}

TEST(BootstrapCi, ConstantOutcomeGivesZeroInterval)
{
    auto d = linear_data(50, 0.0, 13);
    d.y.setConstant(2.5);
    resi::BootstrapSpec spec;
    spec.replicates = 200;
    spec.stream = resi::RngStream(14);
    for (auto kind : {resi::CovKind::model, resi::CovKind::robust}) {
        const auto ci = resi::bootstrap_ci(d, resi::Family::gaussian, {1}, kind, spec, 0.05);
        EXPECT_EQ(ci.lower, 0.0);
        EXPECT_EQ(ci.upper, 0.0);
    }
}

TEST(BootstrapCi, DeterministicAcrossWorkerCounts)
{
    const auto d = linear_data(80, 0.4, 15);
    resi::BootstrapSpec spec;
    spec.replicates = 300;
    spec.stream = resi::RngStream(16);
    for (const auto& proc : resi::admissible_procedures()) {
        spec.scheme = proc.scheme;
        spec.multiplier = proc.multiplier;
        const auto one = resi::bootstrap_ci(d, resi::Family::gaussian, {1}, resi::CovKind::robust, spec, 0.05, {}, 1);
        const auto four = resi::bootstrap_ci(d, resi::Family::gaussian, {1}, resi::CovKind::robust, spec, 0.05, {}, 4);
        EXPECT_EQ(one.lower, four.lower) << proc.name();
        EXPECT_EQ(one.upper, four.upper) << proc.name();
        EXPECT_LE(one.lower, one.upper);
    }
}

TEST(BootstrapCi, CoversTruthOnSimpleData)
{
    const auto d = linear_data(400, 0.5, 17);
    resi::BootstrapSpec spec;
    spec.replicates = 500;
    spec.stream = resi::RngStream(18);
    const auto ci = resi::bootstrap_ci(d, resi::Family::gaussian, {1}, resi::CovKind::robust, spec, 0.05);
    // x ~ N(0,1), unit noise: S = 0.5.
    EXPECT_TRUE(ci.contains(0.5)) << ci.lower << ' ' << ci.upper;
}

TEST(BootstrapDistribution, OracleTargetUsesFixedMatrix)
{
    const auto d = linear_data(60, 0.4, 19);
    resi::BootstrapSpec spec;
    spec.replicates = 50;
    spec.stream = resi::RngStream(20);
    const Eigen::Matrix2d oracle = Eigen::Matrix2d::Identity();
    const auto dist = resi::bootstrap_distribution(
        d, resi::Family::gaussian, {{{1}, resi::CovKind::oracle, oracle}, {{1}, resi::CovKind::model, {}}}, spec);
    ASSERT_EQ(dist.s_hat.size(), 2u);
    for (int b = 0; b < 50; ++b) {
        resi::RngStream rng = spec.stream.substream(static_cast<std::uint64_t>(b));
        const auto boot = resi::resample(d, resi::fit_ols(d), {}, rng);
        const double beta = resi::fit_ols(boot).coefficients(1);
        EXPECT_NEAR(dist.s_hat[0][static_cast<std::size_t>(b)], resi::resi_point(60.0 * beta * beta, 1, 60), 1e-12);
    }
}
