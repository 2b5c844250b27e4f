#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hteguard/errors.hpp"
#include "hteguard/knockoff.hpp"
#include "hteguard/rng.hpp"

using namespace hteguard;
namespace ko = hteguard::knockoff;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix random_matrix(Index n, Index p, rngutil::Rng& rng) {
    Matrix m(n, p);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) m(i, j) = rng.normal();
    }
    return m;
}

Matrix equicorrelated(Index p, double rho) {
    Matrix s = Matrix::Constant(p, p, rho);
    s.diagonal().setOnes();
    return s;
}

// exhaustive scan over the candidate set, independent of the implementation
double threshold_oracle(const Vector& w, double q) {
    std::vector<double> cands;
    for (Index j = 0; j < w.size(); ++j) {
        if (std::fabs(w(j)) > 0.0) cands.push_back(std::fabs(w(j)));
    }
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    double best = kInf;
    for (double t : cands) {
        int neg = 0, pos = 0;
        for (Index j = 0; j < w.size(); ++j) {
            if (w(j) <= -t) ++neg;
            if (w(j) >= t) ++pos;
        }
        if ((1.0 + neg) / std::max(pos, 1) <= q) {
            best = std::min(best, t);
        }
    }
    return best;
}

Vector vec(const std::vector<double>& v) {
    Vector out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Index>(i)) = v[i];
    return out;
}

} // namespace

TEST_SUITE("knockoff") {

TEST_CASE("normalize_columns rescales to unit norm") {
    Matrix x(2, 1);
    x << 3, 4;
    const Matrix n = ko::normalize_columns(x);
    CHECK(n(0, 0) == doctest::Approx(0.6));
    CHECK(n(1, 0) == doctest::Approx(0.8));
    CHECK((ko::normalize_columns(n) - n).cwiseAbs().maxCoeff() < 1e-15);
    Matrix zero = Matrix::Zero(3, 1);
    CHECK_THROWS_AS(ko::normalize_columns(zero), ZeroColumn);
}

TEST_CASE("equi_s follows min(2 lambda_min, 1) with the PD shrink") {
    const Vector s_id = ko::equi_s(Matrix::Identity(4, 4));
    CHECK(s_id(0) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(s_id(0) < 1.0);

    CHECK(ko::equi_s(equicorrelated(2, 0.8))(0) == doctest::Approx(0.4).epsilon(1e-5));
    CHECK(ko::equi_s(equicorrelated(2, 0.3))(0) == doctest::Approx(1.0).epsilon(1e-5));

    Matrix bad = Matrix::Identity(2, 2) * 2.0;
    CHECK_THROWS_AS(ko::equi_s(bad), NotUnitDiagonal);
}

TEST_CASE("construct_knockoffs on an orthonormal design") {
    rngutil::Rng rng(44);
    Matrix x = random_matrix(40, 4, rng);
    for (Index j = 0; j < 4; ++j) {
        for (Index k = 0; k < j; ++k) x.col(j) -= x.col(k).dot(x.col(j)) * x.col(k);
        x.col(j).normalize();
    }
    const Vector s = ko::equi_s(x.transpose() * x);
    const auto art = ko::construct_knockoffs(x, s, 1);
    // with Sigma = I and s ~ 1 the originals and knockoffs are near-orthogonal
    CHECK((art.x_knockoff.transpose() * art.x_knockoff - art.sigma).cwiseAbs().maxCoeff() <
          1e-6);
    CHECK((x.transpose() * art.x_knockoff - (art.sigma - Matrix(s.asDiagonal())))
              .cwiseAbs()
              .maxCoeff() < 1e-6);
    CHECK((x.transpose() * art.x_knockoff).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("construct_knockoffs rejects n < 2p") {
    rngutil::Rng rng(45);
    const Matrix x = ko::normalize_columns(random_matrix(7, 4, rng));
    const Vector s = Vector::Constant(4, 0.5);
    CHECK_THROWS_AS(ko::construct_knockoffs(x, s, 0), DimensionError);
}

TEST_CASE("gram identities hold across random designs") {
    rngutil::Rng rng(46);
    for (Index p : {2, 5, 8}) {
        for (Index factor : {2, 4, 10}) {
            const Index n = factor * p;
            const Matrix x = ko::normalize_columns(random_matrix(n, p, rng));
            Matrix sigma = x.transpose() * x;
            sigma = 0.5 * (sigma + sigma.transpose());
            const Vector s = ko::equi_s(sigma);
            const auto art = ko::construct_knockoffs(x, s, 7);
            CHECK((art.x_knockoff.transpose() * art.x_knockoff - sigma).cwiseAbs().maxCoeff() <
                  1e-6);
            CHECK((x.transpose() * art.x_knockoff - (sigma - Matrix(s.asDiagonal())))
                      .cwiseAbs()
                      .maxCoeff() < 1e-6);
        }
    }
}

TEST_CASE("w statistic follows the signed-max rule") {
    // a large positive W means the original entered well before its knockoff
    const Vector w = ko::w_from_entry_values(vec({5, 2, 3, 2, 5, 3}));
    CHECK(w(0) == doctest::Approx(5.0));  // Z=5 vs knockoff 2
    CHECK(w(1) == doctest::Approx(-5.0)); // Z=2 vs knockoff 5
    CHECK(w(2) == doctest::Approx(0.0));  // tie
    CHECK_THROWS_AS(ko::w_from_entry_values(vec({1, 2, 3})), DimensionError);
}

TEST_CASE("knockoff_threshold frozen examples") {
    // at t=1: (1 + #{W<=-1}) / #{W>=1} = 2/5 <= 0.5
    CHECK(ko::knockoff_threshold(vec({5, 4, 3, -1, 6, 2}), 0.5) == doctest::Approx(1.0));
    // minimum achievable ratio is 2/3 > 0.4 -> empty selection
    CHECK(ko::knockoff_threshold(vec({3, -1, 2, -4, 5}), 0.4) == kInf);
    CHECK(ko::knockoff_threshold(vec({-1, -2, -0.5}), 0.3) == kInf);
}

TEST_CASE("knockoff_threshold matches exhaustive enumeration") {
    rngutil::Rng rng(47);
    for (int rep = 0; rep < 2000; ++rep) {
        const Index p = 1 + static_cast<Index>(rng.below(50));
        Vector w(p);
        for (Index j = 0; j < p; ++j) {
            const double mag = rng.uniform() < 0.2 ? 0.0 : std::ceil(rng.uniform() * 8);
            w(j) = (rng.uniform() < 0.5 ? 1.0 : -1.0) * mag; // ties are likely
        }
        const double q = 0.1 + 0.4 * rng.uniform();
        CHECK(ko::knockoff_threshold(w, q) == threshold_oracle(w, q));
    }
}

TEST_CASE("knockoff_threshold is monotone in q") {
    rngutil::Rng rng(48);
    for (int rep = 0; rep < 200; ++rep) {
        Vector w(12);
        for (Index j = 0; j < 12; ++j) w(j) = rng.normal() * 3.0;
        double prev = kInf;
        for (double q : {0.05, 0.1, 0.2, 0.4, 0.6}) {
            const double t = ko::knockoff_threshold(w, q);
            CHECK(t <= prev);
            prev = t;
        }
    }
}

TEST_CASE("swapping a column with its knockoff flips the sign of W") {
    rngutil::Rng rng(49);
    const Index n = 60, p = 5;
    const Matrix x = ko::normalize_columns(random_matrix(n, p, rng));
    Matrix sigma = x.transpose() * x;
    sigma = 0.5 * (sigma + sigma.transpose());
    const auto art = ko::construct_knockoffs(x, ko::equi_s(sigma), 3);
    Vector y = x.col(1) * 4.0;
    for (Index i = 0; i < n; ++i) y(i) += 0.5 * rng.normal();

    const auto [w, z] = ko::knockoff_statistics(x, art.x_knockoff, y);

    for (Index swap : {Index{1}, Index{3}}) {
        Matrix xs = x, ks = art.x_knockoff;
        xs.col(swap) = art.x_knockoff.col(swap);
        ks.col(swap) = x.col(swap);
        const auto [w2, z2] = ko::knockoff_statistics(xs, ks, y);
        CHECK(w2(swap) == doctest::Approx(-w(swap)).epsilon(1e-12));
        for (Index j = 0; j < p; ++j) {
            if (j != swap) CHECK(w2(j) == doctest::Approx(w(j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("signs of W are balanced under the global null") {
    rngutil::Rng rng(50);
    const Index n = 60, p = 10;
    double sign_sum = 0.0, nonzero = 0.0;
    Matrix x(n, p);
    x.setZero();
    for (Index i = 0; i < n; ++i) x(i, i % p) = 1.0; // orthogonal one-hot design
    const Matrix xn = ko::normalize_columns(x);
    Matrix sigma = xn.transpose() * xn;
    sigma = 0.5 * (sigma + sigma.transpose());
    const Vector s = ko::equi_s(sigma);
    for (int rep = 0; rep < 1000; ++rep) {
        const auto art = ko::construct_knockoffs(xn, s, static_cast<std::uint64_t>(rep));
        Vector y(n);
        for (Index i = 0; i < n; ++i) y(i) = rng.normal();
        const auto [w, z] = ko::knockoff_statistics(xn, art.x_knockoff, y);
        for (Index j = 0; j < p; ++j) {
            if (w(j) != 0.0) {
                sign_sum += w(j) > 0 ? 1.0 : -1.0;
                nonzero += 1.0;
            }
        }
    }
    REQUIRE(nonzero > 0);
    CHECK(std::fabs(sign_sum / nonzero) < 0.1);
}

TEST_CASE("knockoff_select composes the full filter") {
    rngutil::Rng rng(51);
    const Index n = 200, p = 10;
    data::DesignMatrix design;
    design.matrix = random_matrix(n, p, rng);
    for (Index j = 0; j < p; ++j) design.labels.push_back("v" + std::to_string(j));

    // strong signal on five columns; the +1 in the threshold numerator means a
    // q=0.2 selection needs at least five positives, so five signals suffice
    Vector y = 5.0 * (design.matrix.col(0) + design.matrix.col(2) + design.matrix.col(4) +
                      design.matrix.col(6) - design.matrix.col(8));
    for (Index i = 0; i < n; ++i) y(i) += rng.normal();

    const auto sel = ko::knockoff_select(design, y, 0.2, 9);
    const auto labels = sel.selection.selected_labels();
    for (const char* expect : {"v0", "v2", "v4", "v6", "v8"}) {
        CHECK(std::find(labels.begin(), labels.end(), expect) != labels.end());
    }
    CHECK(sel.artifacts.threshold < kInf);

    // pure noise again and again rarely selects anything at q=0.2
    int any = 0;
    const int reps = 60;
    for (int rep = 0; rep < reps; ++rep) {
        Vector noise(n);
        for (Index i = 0; i < n; ++i) noise(i) = rng.normal();
        const auto nsel = ko::knockoff_select(design, noise, 0.2, static_cast<std::uint64_t>(rep));
        if (nsel.selection.selected_count() > 0) ++any;
        if (nsel.artifacts.threshold == kInf) {
            CHECK(nsel.selection.selected_count() == 0);
        }
    }
    const double rate = static_cast<double>(any) / reps;
    const double se = std::sqrt(0.2 * 0.8 / reps);
    CHECK(rate <= 0.2 + 3.0 * se);
}

TEST_CASE("knockoff_select validates its inputs") {
    rngutil::Rng rng(52);
    data::DesignMatrix thin;
    thin.matrix = random_matrix(9, 5, rng);
    for (int j = 0; j < 5; ++j) thin.labels.push_back("c" + std::to_string(j));
    CHECK_THROWS_AS(ko::knockoff_select(thin, Vector::Zero(9), 0.2, 0), DimensionError);

    data::DesignMatrix dup;
    dup.matrix = random_matrix(30, 3, rng);
    dup.matrix.col(2) = dup.matrix.col(0);
    for (int j = 0; j < 3; ++j) dup.labels.push_back("c" + std::to_string(j));
    CHECK_THROWS_AS(ko::knockoff_select(dup, Vector::Zero(30), 0.2, 0), RankDeficient);
}

} // TEST_SUITE
