#include "hteguard/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "hteguard/errors.hpp"
#include "hteguard/numerics.hpp"

namespace hteguard::data {

namespace {

bool parse_double(const std::string& token, double& out) {
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    out.push_back(field);
    return out;
}

// distinct level values of a categorical column, lexicographically sorted
std::vector<std::int32_t> sorted_level_order(const CategoricalColumn& col) {
    std::vector<std::int32_t> order(col.levels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        return col.levels[static_cast<std::size_t>(a)] < col.levels[static_cast<std::size_t>(b)];
    });
    return order;
}

std::vector<Index> level_counts(const CategoricalColumn& col) {
    std::vector<Index> counts(col.levels.size(), 0);
    for (auto c : col.codes) counts[static_cast<std::size_t>(c)]++;
    return counts;
}

const CategoricalColumn& categorical_or_throw(const ExperimentDataset& ds,
                                              const std::string& name) {
    auto it = ds.categorical.find(name);
    if (it == ds.categorical.end()) {
        std::string msg = "column '" + name + "' is not a categorical covariate";
        if (ds.continuous.count(name)) msg += " (it is continuous)";
        throw UnknownColumn(msg);
    }
    return it->second;
}

} // namespace

Index ExperimentDataset::treated_count() const {
    Index c = 0;
    for (auto t : treatment) c += t;
    return c;
}

UnitRecord ExperimentDataset::unit(Index i) const {
    UnitRecord r;
    r.unit_id = unit_ids[static_cast<std::size_t>(i)];
    r.treatment = treatment[static_cast<std::size_t>(i)];
    r.outcome = outcome(i);
    for (const auto& [name, col] : categorical) {
        r.categorical_covariates[name] =
            col.levels[static_cast<std::size_t>(col.codes[static_cast<std::size_t>(i)])];
    }
    for (const auto& [name, col] : continuous) {
        r.continuous_covariates[name] = col(i);
    }
    return r;
}

void ExperimentDataset::validate() const {
    const auto count = static_cast<std::size_t>(n());
    if (unit_ids.size() != count || treatment.size() != count) {
        throw InvalidDataset("dataset columns disagree on the number of units");
    }
    if (count == 0) throw InvalidDataset("dataset has no units");
    for (const auto& [name, col] : categorical) {
        if (col.codes.size() != count) {
            throw InvalidDataset("categorical column '" + name + "' has wrong length");
        }
    }
    for (const auto& [name, col] : continuous) {
        if (static_cast<std::size_t>(col.size()) != count) {
            throw InvalidDataset("continuous column '" + name + "' has wrong length");
        }
        if (!col.allFinite()) {
            throw InvalidDataset("continuous column '" + name + "' has non-finite values");
        }
    }
    if (!outcome.allFinite()) throw InvalidDataset("outcomes contain non-finite values");
    const Index treated = treated_count();
    if (treated == 0 || treated == n()) {
        throw InvalidDataset("dataset needs at least one treated and one control unit");
    }
    if (!(assignment_probability > 0.0 && assignment_probability < 1.0)) {
        throw InvalidDataset("assignment probability must be strictly inside (0,1)");
    }
}

ExperimentDataset make_dataset(const std::vector<UnitRecord>& units,
                               std::optional<double> assignment_probability) {
    if (units.empty()) throw InvalidDataset("make_dataset: no units");
    ExperimentDataset ds;
    const std::size_t count = units.size();
    ds.unit_ids.reserve(count);
    ds.treatment.reserve(count);
    ds.outcome.resize(static_cast<Index>(count));

    for (const auto& [name, value] : units.front().categorical_covariates) {
        (void)value;
        ds.categorical[name] = CategoricalColumn{};
        ds.categorical[name].codes.reserve(count);
    }
    for (const auto& [name, value] : units.front().continuous_covariates) {
        (void)value;
        ds.continuous[name] = Vector(static_cast<Index>(count));
    }

    std::map<std::string, std::unordered_map<std::string, std::int32_t>> level_index;
    for (std::size_t i = 0; i < count; ++i) {
        const auto& u = units[i];
        if (u.treatment != 0 && u.treatment != 1) {
            throw InvalidTreatmentValue("unit '" + u.unit_id + "' has treatment " +
                                        std::to_string(u.treatment));
        }
        ds.unit_ids.push_back(u.unit_id);
        ds.treatment.push_back(static_cast<std::uint8_t>(u.treatment));
        ds.outcome(static_cast<Index>(i)) = u.outcome;
        if (u.categorical_covariates.size() != ds.categorical.size() ||
            u.continuous_covariates.size() != ds.continuous.size()) {
            throw InvalidDataset("unit '" + u.unit_id + "' has a different covariate set");
        }
        for (const auto& [name, value] : u.categorical_covariates) {
            auto it = ds.categorical.find(name);
            if (it == ds.categorical.end()) {
                throw InvalidDataset("unit '" + u.unit_id + "' has unexpected covariate '" +
                                     name + "'");
            }
            auto& idx = level_index[name];
            auto [lit, inserted] = idx.emplace(value, static_cast<std::int32_t>(it->second.levels.size()));
            if (inserted) it->second.levels.push_back(value);
            it->second.codes.push_back(lit->second);
        }
        for (const auto& [name, value] : u.continuous_covariates) {
            auto it = ds.continuous.find(name);
            if (it == ds.continuous.end()) {
                throw InvalidDataset("unit '" + u.unit_id + "' has unexpected covariate '" +
                                     name + "'");
            }
            it->second(static_cast<Index>(i)) = value;
        }
    }

    if (assignment_probability) {
        ds.assignment_probability = *assignment_probability;
    } else {
        ds.assignment_probability =
            static_cast<double>(ds.treated_count()) / static_cast<double>(ds.n());
    }
    ds.validate();
    return ds;
}

ExperimentDataset load_csv(const std::string& path,
                           std::optional<double> assignment_probability) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw ParseError("'" + path + "' is empty");
    const std::vector<std::string> header = split_line(line);

    std::map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i].empty()) throw ParseError("empty column name in header");
        if (!col_index.emplace(header[i], i).second) {
            throw ParseError("duplicate column '" + header[i] + "' in header");
        }
    }
    for (const char* required : {"unit_id", "treatment", "outcome"}) {
        if (!col_index.count(required)) {
            throw MissingColumn("required column '" + std::string(required) + "' not found in '" +
                                path + "'");
        }
    }
    const std::size_t id_col = col_index["unit_id"];
    const std::size_t treat_col = col_index["treatment"];
    const std::size_t outcome_col = col_index["outcome"];

    std::vector<std::size_t> covariate_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i != id_col && i != treat_col && i != outcome_col) covariate_cols.push_back(i);
    }

    ExperimentDataset ds;
    std::vector<double> outcomes;
    // Covariate cells are buffered raw; the column type is decided once the
    // whole file is read (continuous iff every cell parses as a number).
    std::vector<std::vector<std::string>> raw(covariate_cols.size());
    std::vector<bool> numeric(covariate_cols.size(), true);
    std::vector<std::vector<double>> numeric_values(covariate_cols.size());

    std::size_t row = 1; // header was row 1
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const std::vector<std::string> fields = split_line(line);
        if (fields.size() != header.size()) {
            throw ParseError("row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        }
        for (const auto& f : fields) {
            if (f.empty()) {
                throw ParseError("row " + std::to_string(row) +
                                 ": empty cell (missing data is not supported)");
            }
        }
        ds.unit_ids.push_back(fields[id_col]);
        const std::string& t = fields[treat_col];
        if (t == "0") {
            ds.treatment.push_back(0);
        } else if (t == "1") {
            ds.treatment.push_back(1);
        } else {
            throw InvalidTreatmentValue("row " + std::to_string(row) + ": treatment '" + t +
                                        "' is not 0 or 1");
        }
        double y;
        if (!parse_double(fields[outcome_col], y)) {
            throw ParseError("row " + std::to_string(row) + ": outcome '" +
                             fields[outcome_col] + "' is not a finite number");
        }
        outcomes.push_back(y);
        for (std::size_t c = 0; c < covariate_cols.size(); ++c) {
            const std::string& cell = fields[covariate_cols[c]];
            raw[c].push_back(cell);
            if (numeric[c]) {
                double v;
                if (parse_double(cell, v)) {
                    numeric_values[c].push_back(v);
                } else {
                    numeric[c] = false;
                    numeric_values[c].clear();
                }
            }
        }
    }
    if (outcomes.empty()) throw ParseError("'" + path + "' has a header but no data rows");

    ds.outcome = Eigen::Map<const Vector>(outcomes.data(), static_cast<Index>(outcomes.size()));
    for (std::size_t c = 0; c < covariate_cols.size(); ++c) {
        const std::string& name = header[covariate_cols[c]];
        if (numeric[c]) {
            ds.continuous[name] = Eigen::Map<const Vector>(
                numeric_values[c].data(), static_cast<Index>(numeric_values[c].size()));
        } else {
            CategoricalColumn col;
            std::unordered_map<std::string, std::int32_t> idx;
            col.codes.reserve(raw[c].size());
            for (const auto& cell : raw[c]) {
                auto [it, inserted] = idx.emplace(cell, static_cast<std::int32_t>(col.levels.size()));
                if (inserted) col.levels.push_back(cell);
                col.codes.push_back(it->second);
            }
            ds.categorical[name] = std::move(col);
        }
    }

    if (assignment_probability) {
        ds.assignment_probability = *assignment_probability;
    } else {
        ds.assignment_probability =
            static_cast<double>(ds.treated_count()) / static_cast<double>(ds.n());
    }
    ds.validate();
    return ds;
}

double estimate_ate(const ExperimentDataset& ds) {
    double treated_sum = 0.0, control_sum = 0.0;
    Index treated_n = 0, control_n = 0;
    for (Index i = 0; i < ds.n(); ++i) {
        if (ds.treatment[static_cast<std::size_t>(i)]) {
            treated_sum += ds.outcome(i);
            ++treated_n;
        } else {
            control_sum += ds.outcome(i);
            ++control_n;
        }
    }
    if (treated_n == 0 || control_n == 0) {
        throw InvalidDataset("estimate_ate: need both treated and control units");
    }
    return treated_sum / treated_n - control_sum / control_n;
}

Vector transformed_outcomes(const ExperimentDataset& ds) {
    const double p = ds.assignment_probability;
    const double denom = p * (1.0 - p);
    Vector out(ds.n());
    for (Index i = 0; i < ds.n(); ++i) {
        const double t = ds.treatment[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        out(i) = ds.outcome(i) * (t - p) / denom;
    }
    return out;
}

Vector center_by_ate(const Vector& y_star, double ate) {
    return y_star.array() - ate;
}

bool is_orthogonal_design(const Matrix& x) {
    const Matrix gram = x.transpose() * x;
    for (Index i = 0; i < gram.rows(); ++i) {
        for (Index j = 0; j < gram.cols(); ++j) {
            if (i != j && std::fabs(gram(i, j)) > 1e-8) return false;
        }
    }
    return true;
}

DesignMatrix build_subgroup_design(const ExperimentDataset& ds, const std::string& column) {
    const CategoricalColumn& col = categorical_or_throw(ds, column);
    const auto counts = level_counts(col);
    const auto order = sorted_level_order(col);

    for (std::size_t l = 0; l < counts.size(); ++l) {
        if (counts[l] < 2) {
            throw DegenerateLevel("level '" + col.levels[l] + "' of '" + column + "' has " +
                                  std::to_string(counts[l]) +
                                  " unit(s); at least 2 are needed for a t-statistic");
        }
    }

    const Index n = ds.n();
    const auto p = static_cast<Index>(col.levels.size());
    std::vector<Index> col_of_level(col.levels.size());
    for (Index j = 0; j < p; ++j) col_of_level[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = j;

    DesignMatrix d;
    d.matrix = Matrix::Zero(n, p);
    for (Index i = 0; i < n; ++i) {
        d.matrix(i, col_of_level[static_cast<std::size_t>(col.codes[static_cast<std::size_t>(i)])]) = 1.0;
    }
    d.labels.reserve(static_cast<std::size_t>(p));
    for (auto l : order) d.labels.push_back(col.levels[static_cast<std::size_t>(l)]);
    d.is_orthogonal = true;
    d.is_normalized = false;
    return d;
}

DesignMatrix build_factor_design(const ExperimentDataset& ds,
                                 const std::vector<std::string>& categorical,
                                 const std::vector<std::string>& continuous,
                                 std::optional<std::string> reference_level) {
    if (categorical.size() > 1) {
        throw MultipleCategoricals(
            "at most one categorical variable is supported: one-hot columns of a second "
            "categorical are linear combinations of the intercept and the first one's "
            "columns, so the design would be rank-deficient");
    }
    if (categorical.empty() && continuous.empty()) {
        throw ConfigError("build_factor_design: no covariates requested");
    }

    const Index n = ds.n();
    std::vector<std::string> labels{"intercept"};
    std::vector<Vector> columns;
    columns.emplace_back(Vector::Ones(n));

    if (!categorical.empty()) {
        const std::string& name = categorical.front();
        const CategoricalColumn& col = categorical_or_throw(ds, name);
        const auto counts = level_counts(col);
        const auto order = sorted_level_order(col);

        std::int32_t ref;
        if (reference_level) {
            auto it = std::find(col.levels.begin(), col.levels.end(), *reference_level);
            if (it == col.levels.end()) {
                throw UnknownColumn("reference level '" + *reference_level +
                                    "' does not occur in column '" + name + "'");
            }
            ref = static_cast<std::int32_t>(it - col.levels.begin());
        } else {
            // most frequent level; ties resolved lexicographically
            ref = order.front();
            for (auto l : order) {
                if (counts[static_cast<std::size_t>(l)] > counts[static_cast<std::size_t>(ref)]) ref = l;
            }
        }

        for (auto l : order) {
            if (l == ref) continue;
            Vector v = Vector::Zero(n);
            for (Index i = 0; i < n; ++i) {
                if (col.codes[static_cast<std::size_t>(i)] == l) v(i) = 1.0;
            }
            columns.push_back(std::move(v));
            labels.push_back(name + "=" + col.levels[static_cast<std::size_t>(l)]);
        }
    }

    for (const auto& name : continuous) {
        auto it = ds.continuous.find(name);
        if (it == ds.continuous.end()) {
            std::string msg = "column '" + name + "' is not a continuous covariate";
            if (ds.categorical.count(name)) msg += " (it is categorical)";
            throw UnknownColumn(msg);
        }
        const Vector& raw = it->second;
        const double mean = raw.mean();
        const double sd = n > 1 ? std::sqrt((raw.array() - mean).square().sum() / (n - 1)) : 0.0;
        if (sd < 1e-12) {
            throw RankDeficient("continuous column '" + name +
                                "' is constant; it cannot enter the design");
        }
        columns.emplace_back((raw.array() - mean) / sd);
        labels.push_back(name);
    }

    DesignMatrix d;
    d.matrix.resize(n, static_cast<Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        d.matrix.col(static_cast<Index>(j)) = columns[j];
    }
    d.labels = std::move(labels);

    // full-rank gate on the column-normalized Gram
    Matrix normalized = d.matrix;
    for (Index j = 0; j < normalized.cols(); ++j) {
        const double norm = normalized.col(j).norm();
        if (norm < 1e-12) throw RankDeficient("design column '" + d.labels[static_cast<std::size_t>(j)] + "' is zero");
        normalized.col(j) /= norm;
    }
    const Matrix gram = normalized.transpose() * normalized;
    if (numerics::min_eigenvalue(0.5 * (gram + gram.transpose())) <= 1e-10) {
        throw RankDeficient("factor design is rank-deficient (duplicate or collinear columns)");
    }

    d.is_orthogonal = is_orthogonal_design(d.matrix);
    d.is_normalized = false;
    return d;
}

DesignMatrix transformed_design(const DesignMatrix& x,
                                const Vector& treatments,
                                double assignment_probability) {
    if (std::fabs(assignment_probability - 0.5) > 1e-12) {
        throw UnsupportedProbability(
            "transformed_design requires assignment probability 0.5, got " +
            std::to_string(assignment_probability));
    }
    if (treatments.size() != x.matrix.rows()) {
        throw DimensionError("transformed_design: treatment vector length mismatch");
    }
    DesignMatrix out;
    out.matrix = x.matrix;
    for (Index i = 0; i < treatments.size(); ++i) {
        const double t = treatments(i);
        if (t != 0.0 && t != 1.0) {
            throw InvalidTreatmentValue("transformed_design: treatment entry " +
                                        std::to_string(t) + " at row " + std::to_string(i));
        }
        out.matrix.row(i) *= (t - 0.5);
    }
    out.labels = x.labels;
    out.is_orthogonal = is_orthogonal_design(out.matrix);
    out.is_normalized = false;
    return out;
}

} // namespace hteguard::data
