#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hteguard/data.hpp"
#include "hteguard/errors.hpp"
#include "hteguard/mht.hpp"
#include "hteguard/pipelines.hpp"
#include "hteguard/report_io.hpp"
#include "hteguard/sim.hpp"

namespace fs = std::filesystem;
using namespace hteguard;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitData = 2;

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir + "': " + ec.message());
}

std::string out_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

pipelines::DfMode parse_df_mode(const std::string& s) {
    return s == "per-group" ? pipelines::DfMode::PerGroup : pipelines::DfMode::Pooled;
}

struct AnalyzeSubgroupsCmd {
    std::string input;
    std::string column;
    std::string method = "bh";
    std::string df_mode = "pooled";
    double q = 0.2;
    std::uint64_t seed = 0;
    std::optional<double> assignment_probability;
    std::string out_dir;

    int run() const {
        const data::ExperimentDataset ds = data::load_csv(input, assignment_probability);
        const pipelines::SubgroupReport rep = pipelines::analyze_subgroups(
            ds, column, q, mht::method_from_name(method), parse_df_mode(df_mode), seed);
        std::cout << report_io::subgroup_report_text(rep);
        if (!out_dir.empty()) {
            ensure_out_dir(out_dir);
            report_io::write_file(out_path(out_dir, "subgroup_report.txt"),
                                  report_io::subgroup_report_text(rep));
            report_io::write_file(out_path(out_dir, "subgroup_report.csv"),
                                  report_io::subgroup_report_csv(rep));
            report_io::write_file(out_path(out_dir, "subgroup_report.json"),
                                  report_io::to_json(rep).dump(2) + "\n");
            std::cout << "\nwrote subgroup_report.{txt,csv,json} under " << out_dir << "\n";
        }
        return kExitOk;
    }
};

struct AnalyzeFactorsCmd {
    std::string input;
    std::vector<std::string> categorical;
    std::vector<std::string> continuous;
    std::optional<std::string> reference;
    double q = 0.2;
    std::uint64_t seed = 0;
    std::optional<double> assignment_probability;
    std::string out_dir;

    int run() const {
        const data::ExperimentDataset ds = data::load_csv(input, assignment_probability);
        const pipelines::FactorReport rep =
            pipelines::hte_knockoff(ds, categorical, continuous, q, seed, reference);
        std::cout << report_io::factor_report_text(rep);
        if (!out_dir.empty()) {
            ensure_out_dir(out_dir);
            report_io::write_file(out_path(out_dir, "factor_report.txt"),
                                  report_io::factor_report_text(rep));
            report_io::write_file(out_path(out_dir, "factor_report.csv"),
                                  report_io::factor_report_csv(rep));
            report_io::write_file(out_path(out_dir, "factor_report.json"),
                                  report_io::to_json(rep).dump(2) + "\n");
            std::cout << "\nwrote factor_report.{txt,csv,json} under " << out_dir << "\n";
        }
        return kExitOk;
    }
};

struct SimulateCmd {
    std::string regime = "all";
    int replicates = 100;
    double q = 0.2;
    std::uint64_t seed = 0;
    Index n = 3000;
    Index vars = 30;
    Index signals = 10;
    double rho = 0.5;
    std::string out_dir = ".";

    int run() const {
        std::vector<sim::Regime> regimes;
        if (regime == "all") {
            regimes = {sim::Regime::OrthogonalGaussian, sim::Regime::NonGaussianTO,
                       sim::Regime::NonOrthogonal};
        } else {
            regimes = {sim::regime_from_name(regime)};
        }
        const std::vector<mht::Method> methods = {mht::Method::Naive, mht::Method::Bonferroni,
                                                  mht::Method::BH, mht::Method::Knockoff};
        ensure_out_dir(out_dir);
        for (const auto r : regimes) {
            const auto sweep = sim::default_sweep(r, seed, n, vars, signals, rho);
            const auto curves = sim::evaluate(sweep, methods, replicates, q);
            const std::string path = out_path(out_dir, "fdr_power_" + sim::regime_name(r) + ".csv");
            report_io::write_file(path, report_io::fdr_power_csv(curves));
            std::cout << "wrote " << path << " (" << replicates << " replicates, q=" << q
                      << ")\n";
        }
        return kExitOk;
    }
};

// Side-by-side demonstration of the multiple-testing trap: many null
// subgroups, uncorrected per-subgroup t-tests vs BH.
struct DemoNaiveCmd {
    double alpha = 0.05;
    double q = 0.05;
    int replicates = 1000;
    int groups = 30;
    Index n = 3000;
    std::uint64_t seed = 0;
    std::string out_dir;

    int run() const {
        sim::Scenario scenario;
        scenario.regime = sim::Regime::OrthogonalGaussian;
        scenario.n_units = n;
        scenario.n_vars = groups;
        scenario.n_signals = 0;
        scenario.amplitude = 0.0;
        scenario.seed = seed;
        scenario.validate();

        int naive_total = 0, naive_any = 0, bh_any = 0;
        std::ostringstream csv;
        csv << "replicate,naive_selected,bh_selected\n";
        for (int rep = 0; rep < replicates; ++rep) {
            auto [ds, gt] = sim::generate(scenario, rep);
            const pipelines::SubgroupPValues stats =
                pipelines::subgroup_two_sample_pvalues(ds, "group");
            const auto naive = mht::naive_select(stats.pvalues, alpha);
            const auto bh = mht::bh_select(stats.pvalues, q);
            const auto naive_count = static_cast<int>(naive.selected_count());
            const auto bh_count = static_cast<int>(bh.selected_count());
            naive_total += naive_count;
            naive_any += naive_count > 0 ? 1 : 0;
            bh_any += bh_count > 0 ? 1 : 0;
            csv << rep << ',' << naive_count << ',' << bh_count << "\n";

            if (rep == 0) {
                std::cout << "first replicate, " << groups
                          << " subgroups with no real heterogeneity:\n"
                          << "  label | p-value | naive(alpha=" << alpha << ") | bh(q=" << q
                          << ")\n";
                for (std::size_t g = 0; g < stats.pvalues.labels.size(); ++g) {
                    std::cout << "  " << stats.pvalues.labels[g] << " | "
                              << stats.pvalues.pvalues(static_cast<Index>(g)) << " | "
                              << (naive.selected[g] ? "select" : "-") << " | "
                              << (bh.selected[g] ? "select" : "-") << "\n";
                }
                std::cout << "\n";
            }
        }
        const double reps = replicates;
        std::cout << "across " << replicates << " replicates (all subgroups null):\n"
                  << "  naive: mean selections " << naive_total / reps << " (analytic "
                  << groups * alpha << "), P(>=1 selection) " << naive_any / reps
                  << " (analytic " << 1.0 - std::pow(1.0 - alpha, groups) << ")\n"
                  << "  bh:    P(>=1 selection) " << bh_any / reps
                  << " (FDR-controlled at q=" << q << ")\n";
        if (!out_dir.empty()) {
            ensure_out_dir(out_dir);
            report_io::write_file(out_path(out_dir, "demo_naive.csv"), csv.str());
            std::cout << "wrote " << out_path(out_dir, "demo_naive.csv") << "\n";
        }
        return kExitOk;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hteguard: FDR-controlled detection of heterogeneous treatment effects "
                 "in randomized experiments"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file; command-line flags win");

    AnalyzeSubgroupsCmd subgroups_cmd;
    AnalyzeFactorsCmd factors_cmd;
    SimulateCmd simulate_cmd;
    DemoNaiveCmd demo_cmd;
    std::function<int()> run;

    const auto prob_range = CLI::Range(1e-12, 1.0 - 1e-12);

    CLI::App* sub = app.add_subcommand("analyze-subgroups",
                                       "detect subgroups whose effect differs from the ATE");
    sub->add_option("--input", subgroups_cmd.input, "input CSV (unit_id,treatment,outcome,...)")
        ->required();
    sub->add_option("--column", subgroups_cmd.column, "categorical column defining the subgroups")
        ->required();
    sub->add_option("--method", subgroups_cmd.method, "selection rule")
        ->check(CLI::IsMember({"naive", "bonferroni", "bh", "knockoff"}))
        ->capture_default_str();
    sub->add_option("--df", subgroups_cmd.df_mode, "t-test degrees of freedom")
        ->check(CLI::IsMember({"pooled", "per-group"}))
        ->capture_default_str();
    sub->add_option("--q", subgroups_cmd.q, "target FDR level")->check(prob_range)
        ->capture_default_str();
    sub->add_option("--alpha", subgroups_cmd.q,
                    "alias of --q for the naive/bonferroni per-test level");
    sub->add_option("--p", subgroups_cmd.assignment_probability,
                    "assignment probability override (default: empirical treated fraction)")
        ->check(prob_range);
    sub->add_option("--seed", subgroups_cmd.seed, "RNG seed (knockoff construction)");
    sub->add_option("--out-dir", subgroups_cmd.out_dir, "directory for report artifacts");
    sub->callback([&]() { run = [&]() { return subgroups_cmd.run(); }; });

    CLI::App* fac = app.add_subcommand(
        "analyze-factors",
        "detect variables contributing to effect heterogeneity (knockoff filter)");
    fac->add_option("--input", factors_cmd.input, "input CSV (unit_id,treatment,outcome,...)")
        ->required();
    fac->add_option("--categorical", factors_cmd.categorical,
                    "categorical column (at most one is valid)");
    fac->add_option("--continuous", factors_cmd.continuous, "continuous column (repeatable)");
    fac->add_option("--reference", factors_cmd.reference,
                    "reference level of the categorical (default: most frequent)");
    fac->add_option("--q", factors_cmd.q, "target FDR level")->check(prob_range)
        ->capture_default_str();
    fac->add_option("--p", factors_cmd.assignment_probability,
                    "assignment probability override (default: empirical treated fraction)")
        ->check(prob_range);
    fac->add_option("--seed", factors_cmd.seed, "RNG seed (knockoff construction)");
    fac->add_option("--out-dir", factors_cmd.out_dir, "directory for report artifacts");
    fac->callback([&]() { run = [&]() { return factors_cmd.run(); }; });

    CLI::App* simc =
        app.add_subcommand("simulate", "Monte-Carlo FDR/power curves for all methods");
    simc->add_option("--regime", simulate_cmd.regime,
                     "orthogonal-gaussian|non-gaussian-to|non-orthogonal|all")
        ->check(CLI::IsMember(
            {"orthogonal-gaussian", "non-gaussian-to", "non-orthogonal", "all"}))
        ->capture_default_str();
    simc->add_option("--replicates", simulate_cmd.replicates, "replicates per grid point")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    simc->add_option("--q", simulate_cmd.q, "target FDR level")->check(prob_range)
        ->capture_default_str();
    simc->add_option("--seed", simulate_cmd.seed, "base RNG seed");
    simc->add_option("--n", simulate_cmd.n, "units per replicate")->check(CLI::PositiveNumber)
        ->capture_default_str();
    simc->add_option("--vars", simulate_cmd.vars, "subgroups or variables")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    simc->add_option("--signals", simulate_cmd.signals, "true heterogeneous subgroups/variables")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    simc->add_option("--rho", simulate_cmd.rho, "AR(1) correlation (non-orthogonal regime)")
        ->check(CLI::Range(0.0, 0.999))
        ->capture_default_str();
    simc->add_option("--out-dir", simulate_cmd.out_dir, "directory for the curve CSVs")
        ->capture_default_str();
    simc->callback([&]() { run = [&]() { return simulate_cmd.run(); }; });

    CLI::App* demo = app.add_subcommand("demo-naive",
                                        "uncorrected selection vs BH on all-null subgroups");
    demo->add_option("--alpha", demo_cmd.alpha, "per-test level for the uncorrected rule")
        ->check(prob_range)
        ->capture_default_str();
    demo->add_option("--q", demo_cmd.q, "BH target FDR level")->check(prob_range)
        ->capture_default_str();
    demo->add_option("--replicates", demo_cmd.replicates, "Monte-Carlo replicates")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    demo->add_option("--groups", demo_cmd.groups, "number of null subgroups")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    demo->add_option("--n", demo_cmd.n, "units per replicate")->check(CLI::PositiveNumber)
        ->capture_default_str();
    demo->add_option("--seed", demo_cmd.seed, "base RNG seed");
    demo->add_option("--out-dir", demo_cmd.out_dir, "directory for the per-replicate CSV");
    demo->callback([&]() { run = [&]() { return demo_cmd.run(); }; });

    try {
        app.parse(argc, argv);
        if (!run) return kExitValidation;
        return run();
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        app.exit(e);
        return kExitValidation;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
