#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hteguard/types.hpp"

namespace hteguard::data {

// One experiment unit as ingested; the dataset stores columns, not records.
struct UnitRecord {
    std::string unit_id;
    int treatment = 0; // 0 or 1
    double outcome = 0.0;
    std::map<std::string, std::string> categorical_covariates;
    std::map<std::string, double> continuous_covariates;
};

// Level-coded categorical column; `levels` holds the distinct values in first-seen
// order, `codes[i]` indexes into it.
struct CategoricalColumn {
    std::vector<std::string> levels;
    std::vector<std::int32_t> codes;
};

struct ExperimentDataset {
    std::vector<std::string> unit_ids;
    std::vector<std::uint8_t> treatment;
    Vector outcome;
    std::map<std::string, CategoricalColumn> categorical;
    std::map<std::string, Vector> continuous;
    double assignment_probability = 0.5;

    Index n() const { return outcome.size(); }
    Index treated_count() const;
    UnitRecord unit(Index i) const;
    void validate() const;
};

struct DesignMatrix {
    Matrix matrix;
    std::vector<std::string> labels;
    bool is_orthogonal = false;
    bool is_normalized = false;

    Index n() const { return matrix.rows(); }
    Index p() const { return matrix.cols(); }
};

// true when X^T X has off-diagonal entries all below 1e-8 in magnitude
bool is_orthogonal_design(const Matrix& x);

ExperimentDataset make_dataset(const std::vector<UnitRecord>& units,
                               std::optional<double> assignment_probability = {});

// Comma-separated UTF-8, header row required. Required columns: unit_id,
// treatment (literal 0/1), outcome (decimal). Every other column becomes a
// covariate: continuous when all values parse as finite numbers, else
// categorical. Empty cells are rejected. assignment_probability defaults to
// the empirical treated fraction.
ExperimentDataset load_csv(const std::string& path,
                           std::optional<double> assignment_probability = {});

// mean(outcome | treated) - mean(outcome | control)
double estimate_ate(const ExperimentDataset& ds);

// Y*_i = Y_i^obs (T_i - p) / (p (1 - p)), in dataset order
Vector transformed_outcomes(const ExperimentDataset& ds);

Vector center_by_ate(const Vector& y_star, double ate);

// One-hot n x p with one column per level of `column`, labels sorted
// lexicographically. Every level must have at least 2 units.
DesignMatrix build_subgroup_design(const ExperimentDataset& ds, const std::string& column);

// Reference-level full-rank design: intercept, one-hot columns for every
// non-reference level of at most one categorical, then standardized
// continuous columns. Reference level defaults to the most frequent level.
DesignMatrix build_factor_design(const ExperimentDataset& ds,
                                 const std::vector<std::string>& categorical,
                                 const std::vector<std::string>& continuous,
                                 std::optional<std::string> reference_level = {});

// Row i scaled by (T_i - 0.5); only defined for assignment probability 0.5.
DesignMatrix transformed_design(const DesignMatrix& x,
                                const Vector& treatments,
                                double assignment_probability);

} // namespace hteguard::data
