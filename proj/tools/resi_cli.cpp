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

// Command-line front end: ANOES tables, simulation studies and NCP intervals.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "resi/resi.hpp"

namespace {

std::vector<std::string> split_columns(const std::vector<std::string>& raw)
{
    std::vector<std::string> out;
    for (const auto& item : raw) {
        std::stringstream ss(item);
        std::string part;
        while (std::getline(ss, part, ','))
            if (!part.empty())
                out.push_back(part);
    }
    return out;
}

resi::sim::GridConfig load_grid(const std::string& grid)
{
    if (grid == "reduced")
        return resi::sim::GridConfig::reduced();
    if (grid == "full")
        return {};
    std::ifstream in(grid);
    if (!in)
        throw resi::InvalidArgument("cannot open grid config '" + grid + "'");
    return resi::sim::parse_grid_config(in);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Robust effect size index: ANOES tables, simulation studies and confidence intervals"};
    app.require_subcommand(1);

    // anoes ------------------------------------------------------------------
    auto* anoes = app.add_subcommand("anoes", "Analysis of effect sizes table from a CSV file");
    std::string data_path, outcome, family_name = "gaussian", cov_name = "robust", ci_name = "nonparametric";
    std::string format = "text";
    std::vector<std::string> factor_args, reduced_args;
    int boot = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 1213;
    unsigned workers = 0;
    anoes->add_option("--data", data_path, "CSV file with a header row")->required();
    anoes->add_option("--outcome", outcome, "Outcome column")->required();
    anoes->add_option("--factors", factor_args, "Factor columns (comma separated)")->required();
    anoes->add_option("--family", family_name, "gaussian or binomial")
        ->check(CLI::IsMember({"gaussian", "binomial"}));
    anoes->add_option("--reduced", reduced_args, "Factors of a nested reduced model");
    anoes->add_option("--cov", cov_name, "robust or model")->check(CLI::IsMember({"robust", "model"}));
    anoes->add_option("--ci", ci_name, "chisq, f, nonparametric or wild:<scheme>:<multiplier>");
    anoes->add_option("--boot", boot, "Bootstrap replicates")->check(CLI::PositiveNumber);
    anoes->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
    anoes->add_option("--seed", seed, "Random seed");
    anoes->add_option("--format", format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));
    anoes->add_option("--workers", workers, "Worker threads (0 = all cores)");

    // sim --------------------------------------------------------------------
    auto* sim = app.add_subcommand("sim", "Run a simulation study and write its CSV");
    std::string study, grid = "reduced", out_dir = ".";
    std::optional<int> sims, sim_boot;
    std::uint64_t sim_seed = 1;
    unsigned sim_workers = 0;
    sim->add_option("study", study, "bias, coverage or variance")
        ->required()
        ->check(CLI::IsMember({"bias", "coverage", "variance"}));
    sim->add_option("--grid", grid, "Grid config file, or the presets 'reduced' / 'full'");
    sim->add_option("--sims", sims, "Simulations per cell (overrides the config)");
    sim->add_option("--boot", sim_boot, "Bootstrap replicates per interval (overrides the config)");
    sim->add_option("--seed", sim_seed, "Master seed");
    sim->add_option("--out", out_dir, "Output directory");
    sim->add_option("--workers", sim_workers, "Worker threads (0 = all cores)");

    // ci ---------------------------------------------------------------------
    auto* ci = app.add_subcommand("ci", "Interval for a non-centrality parameter by CDF inversion");
    double t2 = 0.0, ci_alpha = 0.05;
    int m1 = 1;
    long n = 0;
    std::optional<int> df2;
    std::string method = "chisq";
    ci->add_option("--t2", t2, "Observed Wald statistic")->required();
    ci->add_option("--m1", m1, "Tested degrees of freedom")->required();
    ci->add_option("--n", n, "Sample size")->required();
    ci->add_option("--df2", df2, "Denominator degrees of freedom (n - m) for the F method");
    ci->add_option("--method", method, "chisq or f")->check(CLI::IsMember({"chisq", "f"}));
    ci->add_option("--alpha", ci_alpha, "Significance level");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*anoes) {
            const auto family = family_name == "binomial" ? resi::Family::binomial : resi::Family::gaussian;
            const auto loaded = resi::anoes::load_csv(data_path, outcome, split_columns(factor_args), family);
            resi::anoes::AnoesOptions opt;
            opt.cov = cov_name == "model" ? resi::CovKind::model : resi::CovKind::robust;
            opt.ci = resi::anoes::CiChoice::parse(ci_name);
            opt.boot = boot;
            opt.alpha = alpha;
            opt.seed = seed;
            opt.workers = workers;
            std::optional<std::vector<std::string>> reduced;
            if (!reduced_args.empty())
                reduced = split_columns(reduced_args);
            const auto table = resi::anoes::anoes_table(loaded, family, opt, reduced);
            if (format == "csv")
                resi::anoes::write_csv(std::cout, table);
            else if (format == "json")
                std::cout << resi::anoes::to_json(table).dump(2) << '\n';
            else
                resi::anoes::write_text(std::cout, table);
        } else if (*sim) {
            auto cfg = load_grid(grid);
            resi::sim::StudyOptions opt;
            opt.sims = sims.value_or(cfg.sims);
            opt.seed = sim_seed;
            opt.workers = sim_workers;
            opt.boot_replicates = sim_boot.value_or(cfg.boot);
            opt.alpha = cfg.alpha;

            std::vector<resi::sim::StudyResult> rows;
            if (study == "bias") {
                rows = resi::sim::run_bias_study(cfg.cells(), opt);
            } else if (study == "coverage") {
                rows = resi::sim::run_coverage_study(cfg.cells(), cfg.ci_methods(), opt);
            } else {
                for (std::size_t k = 0; k < cfg.covariate.size(); ++k) {
                    auto sub = opt;
                    sub.seed = resi::RngStream(opt.seed).substream(k).key();
                    auto part = resi::sim::run_variance_study(cfg.n, cfg.variance_s, cfg.covariate[k], sub);
                    rows.insert(rows.end(), part.begin(), part.end());
                }
            }
            std::filesystem::create_directories(out_dir);
            const auto path = std::filesystem::path(out_dir) / (study + ".csv");
            std::ofstream out(path);
            if (!out)
                throw resi::InvalidArgument("cannot write '" + path.string() + "'");
            resi::sim::write_csv(out, rows);
            std::cerr << "wrote " << rows.size() << " summaries to " << path.string() << '\n';
        } else if (*ci) {
            if (n < 1)
                throw resi::InvalidArgument("--n must be positive");
            resi::InversionInterval iv;
            if (method == "f") {
                if (!df2)
                    throw resi::InvalidArgument("--df2 is required for the F method");
                iv = resi::ci_ncp_f(t2, m1, *df2, ci_alpha, n);
            } else {
                iv = resi::ci_ncp_chisq(t2, m1, ci_alpha, n);
            }
            std::cout << "method,t2,m1,n,level,ncp_lower,ncp_upper,resi,resi_lower,resi_upper\n";
            std::cout.precision(10);
            std::cout << method << ',' << t2 << ',' << m1 << ',' << n << ',' << iv.ncp.level << ','
                      << iv.ncp.lower << ',' << iv.ncp.upper << ',' << resi::resi_point(t2, m1, n) << ','
                      << iv.resi.lower << ',' << iv.resi.upper << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
