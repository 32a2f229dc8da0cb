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

#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "resi/anoes.hpp"

namespace an = resi::anoes;

namespace {

// 60 cases and 38 controls with age, gender and an accuracy proportion.
std::string study_csv(std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    std::ostringstream os;
    os << "id,group,age,gender,accuracy\n";
    for (int i = 0; i < 98; ++i) {
        const bool sz = i < 60;
        const double age = 35.0 + 10.0 * z(gen);
        const bool male = u(gen) < 0.55;
        const double eta = 0.8 - (sz ? 0.6 : 0.0) - 0.01 * (age - 35.0) + (male ? 0.1 : 0.0) + 0.4 * z(gen);
        os << i + 1 << ',' << (sz ? "SZ" : "HC") << ',' << age << ',' << (male ? "M" : "F") << ','
           << 1.0 / (1.0 + std::exp(-eta)) << '\n';
    }
    return os.str();
}

an::LoadedData load(const std::string& text, const std::vector<std::string>& factors, resi::Family family)
{
    std::istringstream in(text);
    return an::load_table(an::read_csv(in), "accuracy", factors, family);
}

an::AnoesOptions options(const std::string& ci, int boot = 200)
{
    an::AnoesOptions opt;
    opt.ci = an::CiChoice::parse(ci);
    opt.boot = boot;
    return opt;
}

} // namespace

TEST(ReadCsv, DuplicateColumnNames)
{
    std::istringstream in("a,b,a\n1,2,3\n");
    EXPECT_THROW(an::read_csv(in), resi::IngestError);
}

TEST(ReadCsv, QuotedFieldsAndRaggedRows)
{
    std::istringstream ok("name,v\n\"Smith, J\",1\n\"say \"\"hi\"\"\",2\n");
    const auto t = an::read_csv(ok);
    EXPECT_EQ(t.rows[0][0], "Smith, J");
    EXPECT_EQ(t.rows[1][0], "say \"hi\"");
    std::istringstream bad("a,b\n1,2\n3\n");
    EXPECT_THROW(an::read_csv(bad), resi::IngestError);
}

TEST(LoadTable, ThreeLevelFactorGivesTwoIndicators)
{
    const std::string text = "y,site,x\n1,b,0.1\n2,a,0.5\n3,c,0.2\n4,a,0.9\n5,b,0.3\n6,c,0.7\n";
    const auto loaded = [&] {
        std::istringstream in(text);
        return an::load_table(an::read_csv(in), "y", {"site", "x"}, resi::Family::gaussian);
    }();
    ASSERT_EQ(loaded.factors.size(), 2u);
    EXPECT_EQ(loaded.factors[0].columns, (resi::IndexSet{1, 2}));
    EXPECT_EQ(loaded.factors[1].columns, (resi::IndexSet{3}));
    EXPECT_EQ(loaded.data.column_names,
              (std::vector<std::string>{"(Intercept)", "site[b]", "site[c]", "x"}));
    EXPECT_EQ(loaded.data.X.col(1), Eigen::VectorXd((Eigen::VectorXd(6) << 1, 0, 0, 0, 1, 0).finished()));
    EXPECT_EQ(loaded.data.tested, (resi::IndexSet{1, 2, 3}));
}

TEST(LoadTable, MissingValuesReportLineNumbers)
{
    std::istringstream in("y,x\n1,2\n,3\n4,NA\n5,6\n");
    try {
        an::load_table(an::read_csv(in), "y", {"x"}, resi::Family::gaussian);
        FAIL() << "expected IngestError";
    } catch (const resi::IngestError& e) {
        EXPECT_NE(std::string(e.what()).find(" 3 4"), std::string::npos) << e.what();
    }
}

TEST(LoadTable, InputErrors)
{
    auto attempt = [](const std::string& text, const std::vector<std::string>& factors) {
        std::istringstream in(text);
        return an::load_table(an::read_csv(in), "y", factors, resi::Family::gaussian);
    };
    EXPECT_THROW(attempt("y,x\n1,2\n2,3\n3,5\n", {"z"}), resi::IngestError);
    EXPECT_THROW(attempt("y,x\nlow,2\nhigh,3\nmid,5\n", {"x"}), resi::IngestError);
    EXPECT_THROW(attempt("y,x\n1,a\n2,a\n3,a\n", {"x"}), resi::IngestError);
    EXPECT_THROW(attempt("y,x\n1,2\n2,3\n3,5\n", {"x", "x"}), resi::IngestError);
}

TEST(LoadTable, StudyShape)
{
    const auto loaded = load(study_csv(1), {"group", "age", "gender"}, resi::Family::binomial);
    EXPECT_EQ(loaded.data.n(), 98);
    EXPECT_EQ(loaded.data.m(), 4);
    EXPECT_EQ(loaded.data.X.col(1).sum(), 60.0);
}

TEST(AnoesTable, Invariants)
{
    const auto loaded = load(study_csv(2), {"group", "age", "gender"}, resi::Family::binomial);
    const auto t = an::anoes_table(loaded, resi::Family::binomial, options("nonparametric"));
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.residual_df, 94);
    EXPECT_EQ(t.overall.df, 3);
    EXPECT_EQ(t.overall.factor, "Overall");

    const auto full = resi::fit_glm_binomial(loaded.data);
    const auto cov = resi::cov_robust(full);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& r = t.rows[k];
        const auto w = resi::wald_stat(full, cov, loaded.factors[k].columns);
        EXPECT_EQ(r.chi_squared, w.t2);
        EXPECT_EQ(r.resi, resi::resi_point(w).s_hat);
        EXPECT_GE(r.p_value, 0.0);
        EXPECT_LE(r.p_value, 1.0);
        EXPECT_LE(r.ci_lower, r.ci_upper);
        ASSERT_TRUE(r.estimate && r.se);
        const auto j = loaded.factors[k].columns.front();
        EXPECT_EQ(*r.estimate, full.coefficients(j));
        EXPECT_DOUBLE_EQ(*r.se, std::sqrt(cov.matrix(j, j) / 98.0));
        EXPECT_NEAR(r.chi_squared, std::pow(*r.estimate / *r.se, 2), 1e-9 * r.chi_squared);
    }
    EXPECT_EQ(t.overall.chi_squared, resi::wald_stat(full, cov, {1, 2, 3}).t2);
}

TEST(AnoesTable, TruncatedFactorHasZeroLowerBound)
{
    // Each outcome appears once in each group, so the slope is exactly zero.
    const std::string text = [] {
        std::mt19937_64 gen(3);
        std::normal_distribution<double> z;
        std::ostringstream os;
        os << "y,noise\n";
        for (int i = 0; i < 30; ++i) {
            const double v = z(gen);
            os << v << ",0\n" << v << ",1\n";
        }
        return os.str();
    }();
    std::istringstream in(text);
    const auto loaded = an::load_table(an::read_csv(in), "y", {"noise"}, resi::Family::gaussian);
    const auto t = an::anoes_table(loaded, resi::Family::gaussian, options("nonparametric"));
    ASSERT_LT(t.rows[0].chi_squared, 1.0);
    EXPECT_EQ(t.rows[0].resi, 0.0);
    EXPECT_EQ(t.rows[0].ci_lower, 0.0);
}

TEST(AnoesTable, MultiLevelFactorHasNoEstimate)
{
    std::mt19937_64 gen(4);
    std::normal_distribution<double> z;
    std::ostringstream os;
    os << "y,site\n";
    const char* sites[] = {"north", "south", "east"};
    for (int i = 0; i < 90; ++i)
        os << z(gen) + (i % 3) * 0.5 << ',' << sites[i % 3] << '\n';
    std::istringstream in(os.str());
    const auto loaded = an::load_table(an::read_csv(in), "y", {"site"}, resi::Family::gaussian);
    const auto t = an::anoes_table(loaded, resi::Family::gaussian, options("chisq"));
    EXPECT_EQ(t.rows[0].df, 2);
    EXPECT_FALSE(t.rows[0].estimate);
    EXPECT_FALSE(t.rows[0].se);
}

TEST(AnoesTable, InversionMethodsMatchCiModule)
{
    const auto loaded = load(study_csv(5), {"group", "age", "gender"}, resi::Family::gaussian);
    for (const char* m : {"chisq", "f"}) {
        const auto t = an::anoes_table(loaded, resi::Family::gaussian, options(m));
        for (const auto* r : {&t.rows[0], &t.rows[1], &t.rows[2], &t.overall}) {
            const auto iv = std::string(m) == "chisq" ? resi::ci_ncp_chisq(r->chi_squared, r->df, 0.05, 98)
                                                      : resi::ci_ncp_f(r->chi_squared, r->df, 94, 0.05, 98);
            EXPECT_EQ(r->ci_lower, iv.resi.lower) << m << ' ' << r->factor;
            EXPECT_EQ(r->ci_upper, iv.resi.upper) << m << ' ' << r->factor;
        }
    }
}

TEST(AnoesTable, ReducedModeShape)
{
    const auto loaded = load(study_csv(6), {"group", "age", "gender"}, resi::Family::binomial);
    const auto t = an::anoes_table(loaded, resi::Family::binomial, options("nonparametric"),
                                   std::vector<std::string>{"gender"});
    EXPECT_TRUE(t.reduced_mode);
    EXPECT_TRUE(t.rows.empty());
    EXPECT_EQ(t.overall.factor, "Tested");
    EXPECT_EQ(t.overall.df, 2);
    EXPECT_EQ(t.residual_df, 94);

    const auto full = resi::fit_glm_binomial(loaded.data);
    EXPECT_NEAR(t.overall.chi_squared, resi::wald_stat(full, resi::cov_robust(full), {1, 2}).t2, 1e-12);

    std::ostringstream os;
    an::write_text(os, t);
    const std::string text = os.str();
    EXPECT_NE(text.find("Tested"), std::string::npos);
    EXPECT_NE(text.find("Residual"), std::string::npos);
    EXPECT_EQ(an::to_json(t).count("tested"), 1u);
}

TEST(AnoesTable, SameSeedSameOutput)
{
    const auto loaded = load(study_csv(7), {"group", "age", "gender"}, resi::Family::binomial);
    auto render = [&](unsigned workers) {
        auto opt = options("nonparametric", 300);
        opt.workers = workers;
        std::ostringstream os;
        an::write_csv(os, an::anoes_table(loaded, resi::Family::binomial, opt));
        return os.str();
    };
    const auto a = render(1);
    EXPECT_EQ(a, render(1));
    EXPECT_EQ(a, render(3));
    auto other = options("nonparametric", 300);
    other.seed = 99;
    std::ostringstream os;
    an::write_csv(os, an::anoes_table(loaded, resi::Family::binomial, other));
    EXPECT_NE(a, os.str());
}

TEST(AnoesTable, CsvAndJsonOutput)
{
    const auto loaded = load(study_csv(8), {"group", "age", "gender"}, resi::Family::gaussian);
    const auto t = an::anoes_table(loaded, resi::Family::gaussian, options("wild:fixed-x:rademacher"));
    std::ostringstream os;
    an::write_csv(os, t);
    std::istringstream is(os.str());
    std::string line;
    int count = 0;
    while (std::getline(is, line)) {
        ++count;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8) << line;
    }
    EXPECT_EQ(count, 6);
    const auto j = an::to_json(t);
    EXPECT_EQ(j["rows"].size(), 3u);
    EXPECT_EQ(j["residual_df"], 94);
    EXPECT_EQ(j["metadata"]["ci_method"], "wild:fixed-x:rademacher");
    EXPECT_TRUE(j["rows"][0]["estimate"].is_number());
}

TEST(AnoesTable, WildBootstrapRejectedForBinomial)
{
    const auto loaded = load(study_csv(9), {"group"}, resi::Family::binomial);
    EXPECT_THROW(an::anoes_table(loaded, resi::Family::binomial, options("wild:joint:normal")), resi::InvalidSpec);
}
