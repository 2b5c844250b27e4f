#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hteguard/data.hpp"
#include "hteguard/knockoff.hpp"
#include "hteguard/mht.hpp"
#include "hteguard/types.hpp"

namespace hteguard::pipelines {

// Degrees of freedom for the subgroup t-statistics: pooled residual variance
// with df = n - p (the linear-regression route), or per-group variance with
// df = n_j - 1 (the independent one-sample t-test route).
enum class DfMode { Pooled, PerGroup };

struct SubgroupPValues {
    mht::PValueSet pvalues;        // labels sorted lexicographically
    std::vector<Index> n_units;    // per label
    Vector effects;                // centered transformed-outcome means per label
    Vector t_stats;
    Vector dfs;                    // df actually used per label
    double ate = 0.0;
    bool zero_variance_warning = false;
    std::vector<std::string> warnings;
};

// Transformed-outcome regression p-values on the one-hot subgroup design:
// coefficient_j is the subgroup mean of the ATE-centered transformed outcome;
// t_j = coefficient_j / (sigma_hat * sqrt(1/n_j)).
SubgroupPValues subgroup_pvalues(const data::ExperimentDataset& ds,
                                 const std::string& column,
                                 DfMode df_mode = DfMode::Pooled);

// Per-subgroup two-sample t-tests of treated vs control observed outcomes
// (the uncorrected "compare every cohort" recipe); effects are per-subgroup
// treated-minus-control differences and ate is the global estimate.
SubgroupPValues subgroup_two_sample_pvalues(const data::ExperimentDataset& ds,
                                            const std::string& column);

struct RegressionPValues {
    mht::PValueSet pvalues; // labels in design order
    Vector effects;         // OLS coefficients
    Vector t_stats;
    double df = 0.0;
};

// OLS t-test p-values for every design column; works for any full-rank
// design, orthogonal or not.
RegressionPValues ols_pvalues(const data::DesignMatrix& x, const Vector& y);

struct SubgroupRow {
    std::string label;
    Index n_units = 0;
    double effect = 0.0;
    double t_statistic = 0.0;
    double p_value = 0.0;
    double w = 0.0; // knockoff statistic; meaningful only for Method::Knockoff
    bool selected = false;
};

struct SubgroupReport {
    mht::Method method = mht::Method::BH;
    std::string column;
    double ate = 0.0;
    std::vector<SubgroupRow> per_subgroup;
    std::optional<double> threshold;
    double target_q = 0.0;
    std::vector<std::string> warnings;
};

// Subgroup detection with the requested selection rule (naive, Bonferroni,
// BH on transformed-outcome regression p-values, or the knockoff filter on
// the plain one-hot design).
SubgroupReport analyze_subgroups(const data::ExperimentDataset& ds,
                                 const std::string& column,
                                 double q,
                                 mht::Method method,
                                 DfMode df_mode = DfMode::Pooled,
                                 std::uint64_t seed = 0);

// BH on transformed-outcome regression p-values.
SubgroupReport hte_bh(const data::ExperimentDataset& ds,
                      const std::string& column,
                      double q,
                      DfMode df_mode = DfMode::Pooled);

// Knockoff filter on the one-hot subgroup design (no intercept), response =
// ATE-centered transformed outcomes.
SubgroupReport knockoff_subgroups(const data::ExperimentDataset& ds,
                                  const std::string& column,
                                  double q,
                                  std::uint64_t seed = 0);

struct FactorRow {
    std::string label;
    double w = 0.0;
    bool selected = false;
};

struct FactorReport {
    mht::Method method = mht::Method::Knockoff;
    double ate = 0.0;
    std::vector<FactorRow> per_column;
    double threshold = 0.0; // +infinity when nothing qualifies
    double target_q = 0.0;
    std::vector<std::string> interpretation_notes;
};

// Heterogeneous-factor detection: reference-level design, ATE-centered
// transformed outcomes, knockoff selection over every non-intercept column.
// The intercept encodes the reference level and is projected out, never
// tested. Selecting any level of the categorical marks the whole variable as
// a heterogeneous factor.
FactorReport hte_knockoff(const data::ExperimentDataset& ds,
                          const std::vector<std::string>& categorical,
                          const std::vector<std::string>& continuous,
                          double q,
                          std::uint64_t seed = 0,
                          std::optional<std::string> reference_level = {});

} // namespace hteguard::pipelines
