#include "hteguard/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "hteguard/errors.hpp"
#include "hteguard/numerics.hpp"

namespace hteguard::pipelines {

namespace {

struct GroupedView {
    std::vector<std::string> labels;  // sorted lexicographically
    std::vector<Index> group_of_unit; // index into labels
    std::vector<Index> counts;
};

GroupedView group_units(const data::ExperimentDataset& ds, const std::string& column) {
    auto it = ds.categorical.find(column);
    if (it == ds.categorical.end()) {
        std::string msg = "column '" + column + "' is not a categorical covariate";
        if (ds.continuous.count(column)) msg += " (it is continuous)";
        throw UnknownColumn(msg);
    }
    const data::CategoricalColumn& col = it->second;

    std::vector<std::int32_t> order(col.levels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        return col.levels[static_cast<std::size_t>(a)] < col.levels[static_cast<std::size_t>(b)];
    });
    std::vector<Index> group_of_level(col.levels.size());
    GroupedView view;
    for (std::size_t g = 0; g < order.size(); ++g) {
        group_of_level[static_cast<std::size_t>(order[g])] = static_cast<Index>(g);
        view.labels.push_back(col.levels[static_cast<std::size_t>(order[g])]);
    }
    view.group_of_unit.resize(static_cast<std::size_t>(ds.n()));
    view.counts.assign(view.labels.size(), 0);
    for (Index i = 0; i < ds.n(); ++i) {
        const Index g = group_of_level[static_cast<std::size_t>(col.codes[static_cast<std::size_t>(i)])];
        view.group_of_unit[static_cast<std::size_t>(i)] = g;
        view.counts[static_cast<std::size_t>(g)]++;
    }
    for (std::size_t g = 0; g < view.labels.size(); ++g) {
        if (view.counts[g] < 2) {
            throw DegenerateLevel("level '" + view.labels[g] + "' of '" + column + "' has " +
                                  std::to_string(view.counts[g]) +
                                  " unit(s); at least 2 are needed for a t-statistic");
        }
    }
    return view;
}

void warn_small_groups(const GroupedView& view, std::vector<std::string>& warnings) {
    for (std::size_t g = 0; g < view.labels.size(); ++g) {
        if (view.counts[g] < 30) {
            warnings.push_back("subgroup '" + view.labels[g] + "' has only " +
                               std::to_string(view.counts[g]) +
                               " units; its test has little power");
        }
    }
}

constexpr double kVarianceFloor = 1e-12;

// shared zero-variance convention: a vanishing scale with a vanishing
// coefficient is an exact fit (p=1); with a non-vanishing coefficient the
// evidence is overwhelming (p=0, flagged).
double guarded_p(double effect, double scale, double t_df, double* t_out, bool* flag) {
    if (scale < kVarianceFloor) {
        if (std::fabs(effect) > kVarianceFloor) {
            *t_out = std::numeric_limits<double>::infinity() * (effect > 0 ? 1.0 : -1.0);
            *flag = true;
            return 0.0;
        }
        *t_out = 0.0;
        return 1.0;
    }
    const double t = effect / scale;
    *t_out = t;
    return numerics::student_t_two_sided_p(t, t_df);
}

} // namespace

SubgroupPValues subgroup_pvalues(const data::ExperimentDataset& ds,
                                 const std::string& column,
                                 DfMode df_mode) {
    ds.validate();
    const GroupedView view = group_units(ds, column);
    const auto n_groups = static_cast<Index>(view.labels.size());
    const Index n = ds.n();

    const double ate = data::estimate_ate(ds);
    const Vector y = data::center_by_ate(data::transformed_outcomes(ds), ate);

    Vector sums = Vector::Zero(n_groups);
    Vector sq_sums = Vector::Zero(n_groups);
    for (Index i = 0; i < n; ++i) {
        const Index g = view.group_of_unit[static_cast<std::size_t>(i)];
        sums(g) += y(i);
        sq_sums(g) += y(i) * y(i);
    }

    SubgroupPValues out;
    out.ate = ate;
    out.pvalues.labels = view.labels;
    out.pvalues.pvalues.resize(n_groups);
    out.n_units = view.counts;
    out.effects.resize(n_groups);
    out.t_stats.resize(n_groups);
    out.dfs.resize(n_groups);
    warn_small_groups(view, out.warnings);

    Vector within_ss(n_groups);
    for (Index g = 0; g < n_groups; ++g) {
        const auto ng = static_cast<double>(view.counts[static_cast<std::size_t>(g)]);
        out.effects(g) = sums(g) / ng;
        within_ss(g) = std::max(0.0, sq_sums(g) - ng * out.effects(g) * out.effects(g));
    }

    if (df_mode == DfMode::Pooled) {
        const double df = static_cast<double>(n - n_groups);
        if (df < 1.0) {
            throw DegenerateLevel("pooled t-statistics need n - p >= 1, got n=" +
                                  std::to_string(n) + ", p=" + std::to_string(n_groups));
        }
        const double sigma_hat = std::sqrt(within_ss.sum() / df);
        for (Index g = 0; g < n_groups; ++g) {
            const auto ng = static_cast<double>(view.counts[static_cast<std::size_t>(g)]);
            const double scale = sigma_hat / std::sqrt(ng);
            double t;
            out.pvalues.pvalues(g) =
                guarded_p(out.effects(g), scale, df, &t, &out.zero_variance_warning);
            out.t_stats(g) = t;
            out.dfs(g) = df;
        }
    } else {
        for (Index g = 0; g < n_groups; ++g) {
            const auto ng = static_cast<double>(view.counts[static_cast<std::size_t>(g)]);
            const double df = ng - 1.0;
            const double sd = std::sqrt(within_ss(g) / df);
            const double scale = sd / std::sqrt(ng);
            double t;
            out.pvalues.pvalues(g) =
                guarded_p(out.effects(g), scale, df, &t, &out.zero_variance_warning);
            out.t_stats(g) = t;
            out.dfs(g) = df;
        }
    }
    if (out.zero_variance_warning) {
        out.warnings.emplace_back("a subgroup had zero residual variance with a nonzero "
                                  "effect; its p-value was set to 0");
    }
    return out;
}

SubgroupPValues subgroup_two_sample_pvalues(const data::ExperimentDataset& ds,
                                            const std::string& column) {
    ds.validate();
    const GroupedView view = group_units(ds, column);
    const auto n_groups = static_cast<Index>(view.labels.size());
    const Index n = ds.n();

    Vector sum1 = Vector::Zero(n_groups), sum0 = Vector::Zero(n_groups);
    Vector sq1 = Vector::Zero(n_groups), sq0 = Vector::Zero(n_groups);
    Vector n1 = Vector::Zero(n_groups), n0 = Vector::Zero(n_groups);
    for (Index i = 0; i < n; ++i) {
        const Index g = view.group_of_unit[static_cast<std::size_t>(i)];
        const double yi = ds.outcome(i);
        if (ds.treatment[static_cast<std::size_t>(i)]) {
            sum1(g) += yi;
            sq1(g) += yi * yi;
            n1(g) += 1.0;
        } else {
            sum0(g) += yi;
            sq0(g) += yi * yi;
            n0(g) += 1.0;
        }
    }

    SubgroupPValues out;
    out.ate = data::estimate_ate(ds);
    out.pvalues.labels = view.labels;
    out.pvalues.pvalues.resize(n_groups);
    out.n_units = view.counts;
    out.effects.resize(n_groups);
    out.t_stats.resize(n_groups);
    out.dfs.resize(n_groups);
    warn_small_groups(view, out.warnings);

    for (Index g = 0; g < n_groups; ++g) {
        if (n1(g) < 1.0 || n0(g) < 1.0 || n1(g) + n0(g) < 3.0) {
            throw DegenerateLevel("level '" + view.labels[static_cast<std::size_t>(g)] + "' of '" +
                                  column + "' needs at least one treated and one control unit "
                                  "and three units total for a two-sample t-test");
        }
        const double m1 = sum1(g) / n1(g);
        const double m0 = sum0(g) / n0(g);
        const double ss =
            std::max(0.0, sq1(g) - n1(g) * m1 * m1) + std::max(0.0, sq0(g) - n0(g) * m0 * m0);
        const double df = n1(g) + n0(g) - 2.0;
        const double pooled_sd = std::sqrt(ss / df);
        const double scale = pooled_sd * std::sqrt(1.0 / n1(g) + 1.0 / n0(g));
        out.effects(g) = m1 - m0;
        double t;
        out.pvalues.pvalues(g) =
            guarded_p(out.effects(g), scale, df, &t, &out.zero_variance_warning);
        out.t_stats(g) = t;
        out.dfs(g) = df;
    }
    return out;
}

RegressionPValues ols_pvalues(const data::DesignMatrix& x, const Vector& y) {
    const Index n = x.n();
    const Index p = x.p();
    if (y.size() != n) throw DimensionError("ols_pvalues: response length mismatch");
    if (n - p < 1) {
        throw DimensionError("ols_pvalues: need n - p >= 1, got n=" + std::to_string(n) +
                             ", p=" + std::to_string(p));
    }

    Matrix gram = x.matrix.transpose() * x.matrix;
    gram = 0.5 * (gram + gram.transpose());
    Eigen::LDLT<Matrix> ldlt(gram);
    const Vector beta = ldlt.solve(x.matrix.transpose() * y);
    const Matrix gram_inv = ldlt.solve(Matrix::Identity(p, p));

    const double rss = (y - x.matrix * beta).squaredNorm();
    const double df = static_cast<double>(n - p);
    const double sigma2 = rss / df;

    RegressionPValues out;
    out.pvalues.labels = x.labels;
    out.pvalues.pvalues.resize(p);
    out.effects = beta;
    out.t_stats.resize(p);
    out.df = df;
    bool flag = false;
    for (Index j = 0; j < p; ++j) {
        const double var_j = std::max(0.0, sigma2 * gram_inv(j, j));
        double t;
        out.pvalues.pvalues(j) = guarded_p(beta(j), std::sqrt(var_j), df, &t, &flag);
        out.t_stats(j) = t;
    }
    return out;
}

namespace {

SubgroupReport report_from_stats(const SubgroupPValues& stats,
                                 const mht::SelectionResult& sel,
                                 const std::string& column,
                                 double q) {
    SubgroupReport rep;
    rep.method = sel.method;
    rep.column = column;
    rep.ate = stats.ate;
    rep.target_q = q;
    rep.threshold = sel.threshold;
    rep.warnings = stats.warnings;
    for (std::size_t g = 0; g < stats.pvalues.labels.size(); ++g) {
        SubgroupRow row;
        row.label = stats.pvalues.labels[g];
        row.n_units = stats.n_units[g];
        row.effect = stats.effects(static_cast<Index>(g));
        row.t_statistic = stats.t_stats(static_cast<Index>(g));
        row.p_value = stats.pvalues.pvalues(static_cast<Index>(g));
        row.w = std::numeric_limits<double>::quiet_NaN();
        row.selected = sel.selected[g];
        rep.per_subgroup.push_back(std::move(row));
    }
    return rep;
}

} // namespace

SubgroupReport analyze_subgroups(const data::ExperimentDataset& ds,
                                 const std::string& column,
                                 double q,
                                 mht::Method method,
                                 DfMode df_mode,
                                 std::uint64_t seed) {
    if (method == mht::Method::Knockoff) {
        return knockoff_subgroups(ds, column, q, seed);
    }
    const SubgroupPValues stats = subgroup_pvalues(ds, column, df_mode);
    mht::SelectionResult sel;
    switch (method) {
        case mht::Method::Naive: sel = mht::naive_select(stats.pvalues, q); break;
        case mht::Method::Bonferroni: sel = mht::bonferroni_select(stats.pvalues, q); break;
        default: sel = mht::bh_select(stats.pvalues, q); break;
    }
    return report_from_stats(stats, sel, column, q);
}

SubgroupReport hte_bh(const data::ExperimentDataset& ds,
                      const std::string& column,
                      double q,
                      DfMode df_mode) {
    return analyze_subgroups(ds, column, q, mht::Method::BH, df_mode);
}

SubgroupReport knockoff_subgroups(const data::ExperimentDataset& ds,
                                  const std::string& column,
                                  double q,
                                  std::uint64_t seed) {
    ds.validate();
    const data::DesignMatrix design = data::build_subgroup_design(ds, column);
    const double ate = data::estimate_ate(ds);
    const Vector y = data::center_by_ate(data::transformed_outcomes(ds), ate);
    const knockoff::KnockoffSelection ks = knockoff::knockoff_select(design, y, q, seed);

    // descriptive effect estimates alongside the W statistics
    const SubgroupPValues stats = subgroup_pvalues(ds, column);

    SubgroupReport rep;
    rep.method = mht::Method::Knockoff;
    rep.column = column;
    rep.ate = ate;
    rep.target_q = q;
    rep.threshold = ks.artifacts.threshold;
    rep.warnings = stats.warnings;
    for (std::size_t g = 0; g < design.labels.size(); ++g) {
        SubgroupRow row;
        row.label = design.labels[g];
        row.n_units = stats.n_units[g];
        row.effect = stats.effects(static_cast<Index>(g));
        row.t_statistic = stats.t_stats(static_cast<Index>(g));
        row.p_value = std::numeric_limits<double>::quiet_NaN();
        row.w = ks.selection.evidence(static_cast<Index>(g));
        row.selected = ks.selection.selected[g];
        rep.per_subgroup.push_back(std::move(row));
    }
    return rep;
}

FactorReport hte_knockoff(const data::ExperimentDataset& ds,
                          const std::vector<std::string>& categorical,
                          const std::vector<std::string>& continuous,
                          double q,
                          std::uint64_t seed,
                          std::optional<std::string> reference_level) {
    ds.validate();
    const data::DesignMatrix full =
        data::build_factor_design(ds, categorical, continuous, reference_level);

    const double ate = data::estimate_ate(ds);
    Vector y = data::center_by_ate(data::transformed_outcomes(ds), ate);

    // Drop the intercept and project it out of everything else: mean-center
    // the response and the remaining columns. This is the unpenalized
    // intercept treated exactly, and the intercept itself is never tested.
    const Index n = full.n();
    const Index p = full.p() - 1;
    if (p < 1) throw ConfigError("hte_knockoff: no testable columns besides the intercept");
    data::DesignMatrix tested;
    tested.matrix.resize(n, p);
    for (Index j = 0; j < p; ++j) {
        const Vector col = full.matrix.col(j + 1);
        tested.matrix.col(j) = col.array() - col.mean();
        tested.labels.push_back(full.labels[static_cast<std::size_t>(j + 1)]);
    }
    y.array() -= y.mean();
    tested.is_orthogonal = data::is_orthogonal_design(tested.matrix);
    tested.is_normalized = false;

    const knockoff::KnockoffSelection ks = knockoff::knockoff_select(tested, y, q, seed);

    FactorReport rep;
    rep.method = mht::Method::Knockoff;
    rep.ate = ate;
    rep.target_q = q;
    rep.threshold = ks.artifacts.threshold;
    for (std::size_t j = 0; j < tested.labels.size(); ++j) {
        rep.per_column.push_back(FactorRow{tested.labels[j],
                                           ks.selection.evidence(static_cast<Index>(j)),
                                           ks.selection.selected[j]});
    }

    if (!categorical.empty()) {
        const std::string& name = categorical.front();
        std::vector<std::string> selected_levels;
        std::string reference = "?";
        for (const auto& row : rep.per_column) {
            if (row.label.rfind(name + "=", 0) == 0 && row.selected) {
                selected_levels.push_back(row.label.substr(name.size() + 1));
            }
        }
        // recover the reference level for the note
        {
            std::set<std::string> encoded;
            for (const auto& row : rep.per_column) {
                if (row.label.rfind(name + "=", 0) == 0) {
                    encoded.insert(row.label.substr(name.size() + 1));
                }
            }
            for (const auto& level : ds.categorical.at(name).levels) {
                if (!encoded.count(level)) reference = level;
            }
        }
        if (selected_levels.empty()) {
            rep.interpretation_notes.push_back("categorical '" + name +
                                               "' shows no heterogeneity: no non-reference "
                                               "level was selected (reference '" +
                                               reference + "')");
        } else {
            std::string joined;
            for (const auto& l : selected_levels) {
                if (!joined.empty()) joined += ", ";
                joined += l;
            }
            rep.interpretation_notes.push_back(
                "categorical '" + name + "' is a heterogeneous factor: level(s) " + joined +
                " selected against reference '" + reference + "'");
        }
    }
    for (const auto& name : continuous) {
        for (const auto& row : rep.per_column) {
            if (row.label == name && row.selected) {
                rep.interpretation_notes.push_back(
                    "continuous '" + name + "' contributes to treatment-effect heterogeneity");
            }
        }
    }
    if (rep.per_column.empty() ||
        std::none_of(rep.per_column.begin(), rep.per_column.end(),
                     [](const FactorRow& r) { return r.selected; })) {
        rep.interpretation_notes.push_back("no factor selected at target level q=" +
                                           std::to_string(q));
    }
    return rep;
}

} // namespace hteguard::pipelines
