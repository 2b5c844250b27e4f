#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hteguard/data.hpp"
#include "hteguard/errors.hpp"
#include "hteguard/rng.hpp"

using namespace hteguard;
namespace fs = std::filesystem;

namespace {

data::UnitRecord unit(const std::string& id, int t, double y) {
    data::UnitRecord u;
    u.unit_id = id;
    u.treatment = t;
    u.outcome = y;
    return u;
}

data::ExperimentDataset tiny(const std::vector<int>& treat, const std::vector<double>& y,
                             std::optional<double> p = {}) {
    std::vector<data::UnitRecord> units;
    for (std::size_t i = 0; i < treat.size(); ++i) {
        units.push_back(unit("u" + std::to_string(i), treat[i], y[i]));
    }
    return data::make_dataset(units, p);
}

struct TempCsv {
    fs::path path;
    explicit TempCsv(const std::string& content) {
        path = fs::temp_directory_path() /
               ("hteguard_test_" + std::to_string(std::rand()) + ".csv");
        std::ofstream out(path);
        out << content;
    }
    ~TempCsv() { std::error_code ec; fs::remove(path, ec); }
};

} // namespace

TEST_SUITE("data") {

TEST_CASE("estimate_ate arithmetic") {
    CHECK(data::estimate_ate(tiny({1, 1, 0, 0}, {2, 4, 1, 1})) == doctest::Approx(2.0));
    CHECK(data::estimate_ate(tiny({1, 0, 1, 0}, {3, 3, 3, 3})) == doctest::Approx(0.0));
    CHECK(data::estimate_ate(tiny({1, 0}, {10, -10})) == doctest::Approx(20.0));
}

TEST_CASE("transformed_outcomes applies the (T - p) / p(1-p) weight") {
    const auto ds = tiny({1, 0}, {3, 3}, 0.5);
    const Vector y = data::transformed_outcomes(ds);
    CHECK(y(0) == doctest::Approx(6.0));
    CHECK(y(1) == doctest::Approx(-6.0));

    const auto ds2 = tiny({1, 0, 0, 0, 0}, {1, 0, 0, 0, 0}, 0.2);
    CHECK(data::transformed_outcomes(ds2)(0) == doctest::Approx(5.0));
}

TEST_CASE("center_by_ate shifts entries") {
    Vector v(2);
    v << 6, -6;
    CHECK((data::center_by_ate(v, 0.0) - v).norm() == 0.0);
    const Vector c = data::center_by_ate(v, 2.0);
    CHECK(c(0) == doctest::Approx(4.0));
    CHECK(c(1) == doctest::Approx(-8.0));
    Vector one(1);
    one << 0;
    CHECK(data::center_by_ate(one, -1.0)(0) == doctest::Approx(1.0));
}

TEST_CASE("centered transformed outcomes have mean zero at the empirical split") {
    rngutil::Rng rng(21);
    std::vector<int> treat;
    std::vector<double> y;
    for (int i = 0; i < 57; ++i) {
        treat.push_back(rng.uniform() < 0.37 ? 1 : 0);
        y.push_back(rng.normal() * 3.0 + 1.0);
    }
    treat[0] = 1;
    treat[1] = 0;
    const auto ds = tiny(treat, y); // p defaults to the empirical fraction
    const Vector centered =
        data::center_by_ate(data::transformed_outcomes(ds), data::estimate_ate(ds));
    CHECK(std::fabs(centered.mean()) < 1e-10);
}

TEST_CASE("load_csv ingests and types columns") {
    TempCsv file("unit_id,treatment,outcome,country,age\n"
                 "a,1,2.5,US,34\n"
                 "b,1,1.5,UK,41\n"
                 "c,0,0.5,US,28\n"
                 "d,0,3.5,UK,55\n");
    const auto ds = data::load_csv(file.path.string());
    CHECK(ds.n() == 4);
    CHECK(ds.assignment_probability == doctest::Approx(0.5));
    REQUIRE(ds.categorical.count("country") == 1);
    CHECK(ds.categorical.at("country").levels.size() == 2);
    REQUIRE(ds.continuous.count("age") == 1);
    CHECK(ds.continuous.at("age")(0) == doctest::Approx(34.0));
    const auto rec = ds.unit(1);
    CHECK(rec.unit_id == "b");
    CHECK(rec.categorical_covariates.at("country") == "UK");
}

TEST_CASE("load_csv error contracts") {
    TempCsv bad_treat("unit_id,treatment,outcome\na,1,1\nb,2,1\nc,0,1\n");
    CHECK_THROWS_AS(data::load_csv(bad_treat.path.string()), InvalidTreatmentValue);

    TempCsv missing("unit_id,outcome\na,1\n");
    CHECK_THROWS_AS(data::load_csv(missing.path.string()), MissingColumn);

    TempCsv empty_cell("unit_id,treatment,outcome,x\na,1,1,\nb,0,1,2\n");
    CHECK_THROWS_AS(data::load_csv(empty_cell.path.string()), ParseError);

    TempCsv bad_outcome("unit_id,treatment,outcome\na,1,abc\nb,0,1\n");
    CHECK_THROWS_AS(data::load_csv(bad_outcome.path.string()), ParseError);

    TempCsv ragged("unit_id,treatment,outcome\na,1,1,9\nb,0,1\n");
    CHECK_THROWS_AS(data::load_csv(ragged.path.string()), ParseError);

    CHECK_THROWS_AS(data::load_csv("/nonexistent/nope.csv"), ParseError);
}

TEST_CASE("load_csv reports the offending row") {
    TempCsv bad("unit_id,treatment,outcome\na,1,1\nb,0,1\nc,1,oops\n");
    try {
        data::load_csv(bad.path.string());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("row 4") != std::string::npos);
    }
}

TEST_CASE("build_subgroup_design produces a one-hot partition") {
    std::vector<data::UnitRecord> units;
    const char* countries[] = {"US", "US", "UK", "UK"};
    for (int i = 0; i < 4; ++i) {
        auto u = unit("u" + std::to_string(i), i % 2, 1.0);
        u.categorical_covariates["country"] = countries[i];
        units.push_back(u);
    }
    const auto ds = data::make_dataset(units);
    const auto design = data::build_subgroup_design(ds, "country");
    CHECK(design.labels == std::vector<std::string>{"UK", "US"});
    CHECK(design.is_orthogonal);
    const Matrix gram = design.matrix.transpose() * design.matrix;
    CHECK(gram(0, 0) == doctest::Approx(2.0));
    CHECK(gram(1, 1) == doctest::Approx(2.0));
    CHECK(gram(0, 1) == doctest::Approx(0.0));
    // rows sum to one: the columns partition the units
    for (Index i = 0; i < design.matrix.rows(); ++i) {
        CHECK(design.matrix.row(i).sum() == doctest::Approx(1.0));
    }
}

TEST_CASE("build_subgroup_design degenerate cases") {
    std::vector<data::UnitRecord> units;
    for (int i = 0; i < 3; ++i) {
        auto u = unit("u" + std::to_string(i), i % 2, 1.0);
        u.categorical_covariates["g"] = "only";
        units.push_back(u);
    }
    const auto single = data::make_dataset(units);
    const auto design = data::build_subgroup_design(single, "g");
    CHECK(design.p() == 1);
    CHECK(design.matrix.col(0).minCoeff() == doctest::Approx(1.0));

    units[2].categorical_covariates["g"] = "rare";
    const auto with_rare = data::make_dataset(units);
    CHECK_THROWS_AS(data::build_subgroup_design(with_rare, "g"), DegenerateLevel);
    CHECK_THROWS_AS(data::build_subgroup_design(single, "nope"), UnknownColumn);
}

TEST_CASE("build_factor_design uses reference-level encoding") {
    std::vector<data::UnitRecord> units;
    const char* levels[] = {"A", "A", "B", "C"};
    for (int i = 0; i < 4; ++i) {
        auto u = unit("u" + std::to_string(i), i % 2, 1.0);
        u.categorical_covariates["cat"] = levels[i];
        units.push_back(u);
    }
    const auto ds = data::make_dataset(units);
    const auto design = data::build_factor_design(ds, {"cat"}, {}, std::string("A"));
    CHECK(design.labels == std::vector<std::string>{"intercept", "cat=B", "cat=C"});
    CHECK(design.matrix.col(0).minCoeff() == doctest::Approx(1.0));
    // default reference is the most frequent level, here A as well
    const auto def = data::build_factor_design(ds, {"cat"}, {});
    CHECK(def.labels == design.labels);
}

TEST_CASE("build_factor_design rejects invalid requests") {
    std::vector<data::UnitRecord> units;
    for (int i = 0; i < 6; ++i) {
        auto u = unit("u" + std::to_string(i), i % 2, 1.0);
        u.categorical_covariates["c1"] = i < 3 ? "a" : "b";
        u.categorical_covariates["c2"] = i % 2 ? "x" : "y";
        u.continuous_covariates["age"] = static_cast<double>(i);
        u.continuous_covariates["flat"] = 7.0;
        units.push_back(u);
    }
    const auto ds = data::make_dataset(units);
    CHECK_THROWS_AS(data::build_factor_design(ds, {"c1", "c2"}, {"age"}), MultipleCategoricals);
    CHECK_THROWS_AS(data::build_factor_design(ds, {}, {"flat"}), RankDeficient);
    CHECK_THROWS_AS(data::build_factor_design(ds, {}, {"age", "age"}), RankDeficient);
    CHECK_THROWS_AS(data::build_factor_design(ds, {}, {"nope"}), UnknownColumn);
}

TEST_CASE("transformed_design scales rows by the centered treatment") {
    std::vector<data::UnitRecord> units;
    for (int i = 0; i < 4; ++i) {
        auto u = unit("u" + std::to_string(i), i < 2 ? 1 : 0, 1.0);
        u.categorical_covariates["g"] = i % 2 ? "a" : "b";
        units.push_back(u);
    }
    const auto ds = data::make_dataset(units, 0.5);
    const auto design = data::build_subgroup_design(ds, "g");
    Vector treat(4);
    for (Index i = 0; i < 4; ++i) treat(i) = ds.treatment[static_cast<std::size_t>(i)];

    const auto z = data::transformed_design(design, treat, 0.5);
    for (Index i = 0; i < 4; ++i) {
        const double sign = ds.treatment[static_cast<std::size_t>(i)] ? 0.5 : -0.5;
        CHECK((z.matrix.row(i) - sign * design.matrix.row(i)).cwiseAbs().maxCoeff() < 1e-15);
    }
    CHECK(z.labels == design.labels);
    CHECK_THROWS_AS(data::transformed_design(design, treat, 0.3), UnsupportedProbability);
}

TEST_CASE("transformed-outcome and transformed-design objectives coincide at p=0.5") {
    rngutil::Rng rng(33);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 30 + static_cast<Index>(rng.below(40));
        std::vector<data::UnitRecord> units;
        for (Index i = 0; i < n; ++i) {
            auto u = unit("u" + std::to_string(i), i < n / 2 ? 1 : 0, rng.normal() * 2.0 + 0.3);
            u.continuous_covariates["x1"] = rng.normal();
            u.continuous_covariates["x2"] = rng.normal();
            units.push_back(u);
        }
        const auto ds = data::make_dataset(units, 0.5);
        Matrix x(n, 2);
        x.col(0) = ds.continuous.at("x1");
        x.col(1) = ds.continuous.at("x2");
        const Vector y_star = data::transformed_outcomes(ds);

        for (int b = 0; b < 20; ++b) {
            Vector beta(2);
            beta << 3.0 * rng.normal(), 3.0 * rng.normal();
            double lhs = 0.0, rhs = 0.0;
            for (Index i = 0; i < n; ++i) {
                const double fit = x.row(i).dot(beta);
                const double t = ds.treatment[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
                lhs += (y_star(i) - fit) * (y_star(i) - fit);
                const double zfit = fit * (t - 0.5);
                rhs += 4.0 * (ds.outcome(i) - zfit) * (ds.outcome(i) - zfit);
            }
            lhs /= static_cast<double>(n);
            rhs /= static_cast<double>(n);
            CHECK(std::fabs(lhs - rhs) <= 1e-10 * std::max(1.0, std::fabs(lhs)));
        }
    }
}

TEST_CASE("dataset invariants are enforced") {
    CHECK_THROWS_AS(tiny({1, 1}, {1, 2}), InvalidDataset);     // no control
    CHECK_THROWS_AS(tiny({1, 0}, {1, 2}, 1.5), InvalidDataset); // bad probability
    std::vector<data::UnitRecord> units{unit("a", 2, 1.0), unit("b", 0, 1.0)};
    CHECK_THROWS_AS(data::make_dataset(units), InvalidTreatmentValue);
}

} // TEST_SUITE
