#include "hteguard/knockoff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hteguard/errors.hpp"
#include "hteguard/numerics.hpp"

namespace hteguard::knockoff {

Matrix normalize_columns(const Eigen::Ref<const Matrix>& x) {
    Matrix out = x;
    for (Index j = 0; j < out.cols(); ++j) {
        const double norm = out.col(j).norm();
        if (norm < 1e-12) {
            throw ZeroColumn("normalize_columns: column " + std::to_string(j) + " is zero");
        }
        out.col(j) /= norm;
    }
    return out;
}

Vector equi_s(const Eigen::Ref<const Matrix>& sigma) {
    const Index p = sigma.rows();
    for (Index j = 0; j < p; ++j) {
        if (std::fabs(sigma(j, j) - 1.0) > 1e-8) {
            throw NotUnitDiagonal("equi_s: sigma(" + std::to_string(j) + "," +
                                  std::to_string(j) + ")=" + std::to_string(sigma(j, j)) +
                                  "; normalize the design first");
        }
    }
    const double lambda_min = numerics::min_eigenvalue(sigma);
    const double s = std::max(0.0, std::min(2.0 * lambda_min, 1.0)) * (1.0 - 1e-6);
    return Vector::Constant(p, s);
}

KnockoffArtifacts construct_knockoffs(const Eigen::Ref<const Matrix>& x_normalized,
                                      const Vector& s,
                                      std::uint64_t seed) {
    const Index n = x_normalized.rows();
    const Index p = x_normalized.cols();
    if (n < 2 * p) {
        throw DimensionError("construct_knockoffs: need n >= 2p, got n=" + std::to_string(n) +
                             ", p=" + std::to_string(p));
    }
    if (s.size() != p) throw DimensionError("construct_knockoffs: s has wrong length");
    for (Index j = 0; j < p; ++j) {
        if (s(j) < 0.0) throw Error("construct_knockoffs: s must be non-negative");
    }

    KnockoffArtifacts art;
    art.x_normalized = x_normalized;
    art.s = s;
    Matrix sigma = x_normalized.transpose() * x_normalized;
    sigma = 0.5 * (sigma + sigma.transpose());
    art.sigma = sigma;

    if (numerics::min_eigenvalue(sigma) <= 1e-10) {
        throw RankDeficient("construct_knockoffs: design is rank-deficient");
    }

    // sigma_inv_ds = Sigma^-1 diag{s}
    Eigen::LDLT<Matrix> ldlt(sigma);
    const Matrix sigma_inv_ds = ldlt.solve(Matrix(s.asDiagonal()));
    Matrix target = 2.0 * Matrix(s.asDiagonal()) - s.asDiagonal() * sigma_inv_ds;
    target = 0.5 * (target + target.transpose());

    const Matrix chol_lower = numerics::cholesky(target); // throws if s is too large
    const Matrix u = numerics::orthonormal_complement(x_normalized, seed);

    art.x_knockoff = x_normalized * (Matrix::Identity(p, p) - sigma_inv_ds) +
                     u * chol_lower.transpose();
    return art;
}

Vector w_from_entry_values(const Vector& z) {
    if (z.size() % 2 != 0) {
        throw DimensionError("w_from_entry_values: z must hold 2p entries");
    }
    const Index p = z.size() / 2;
    Vector w(p);
    for (Index j = 0; j < p; ++j) {
        const double zo = z(j);
        const double zk = z(j + p);
        if (zo == zk) {
            w(j) = 0.0;
        } else {
            w(j) = std::max(zo, zk) * (zo > zk ? 1.0 : -1.0);
        }
    }
    return w;
}

std::pair<Vector, Vector> knockoff_statistics(const Eigen::Ref<const Matrix>& x,
                                              const Eigen::Ref<const Matrix>& x_knockoff,
                                              const Eigen::Ref<const Vector>& y) {
    const Index n = x.rows();
    const Index p = x.cols();
    if (x_knockoff.rows() != n || x_knockoff.cols() != p || y.size() != n) {
        throw DimensionError("knockoff_statistics: inconsistent dimensions");
    }

    Matrix augmented(n, 2 * p);
    augmented << x, x_knockoff;
    const Vector z = numerics::lasso_entry_values(augmented, y);
    return {w_from_entry_values(z), z};
}

double knockoff_threshold(const Vector& w, double q) {
    if (!(q > 0.0 && q < 1.0)) {
        throw ConfigError("knockoff_threshold: q must be in (0,1), got " + std::to_string(q));
    }
    std::vector<double> candidates;
    candidates.reserve(static_cast<std::size_t>(w.size()));
    for (Index j = 0; j < w.size(); ++j) {
        const double a = std::fabs(w(j));
        if (a > 0.0) candidates.push_back(a);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    for (double t : candidates) {
        Index negatives = 0, positives = 0;
        for (Index j = 0; j < w.size(); ++j) {
            if (w(j) <= -t) ++negatives;
            if (w(j) >= t) ++positives;
        }
        const double ratio = (1.0 + static_cast<double>(negatives)) /
                             std::max<double>(static_cast<double>(positives), 1.0);
        if (ratio <= q) return t;
    }
    return std::numeric_limits<double>::infinity();
}

KnockoffSelection knockoff_select(const data::DesignMatrix& x,
                                  const Vector& y,
                                  double q,
                                  std::uint64_t seed) {
    const Index n = x.n();
    const Index p = x.p();
    if (n < 2 * p) {
        throw DimensionError("knockoff_select: need n >= 2p, got n=" + std::to_string(n) +
                             ", p=" + std::to_string(p) +
                             " (too many encoded columns for this sample size)");
    }
    if (y.size() != n) throw DimensionError("knockoff_select: response length mismatch");
    if (static_cast<Index>(x.labels.size()) != p) {
        throw DimensionError("knockoff_select: design has " + std::to_string(x.labels.size()) +
                             " labels for " + std::to_string(p) + " columns");
    }

    const Matrix normalized = normalize_columns(x.matrix);
    Matrix sigma = normalized.transpose() * normalized;
    sigma = 0.5 * (sigma + sigma.transpose());
    if (numerics::min_eigenvalue(sigma) <= 1e-10) {
        throw RankDeficient("knockoff_select: design '" + (x.labels.empty() ? "" : x.labels[0]) +
                            "...' is rank-deficient after normalization");
    }

    const Vector s = equi_s(sigma);
    KnockoffSelection out;
    out.artifacts = construct_knockoffs(normalized, s, seed);
    auto [w, z] = knockoff_statistics(out.artifacts.x_normalized, out.artifacts.x_knockoff, y);
    out.artifacts.w = w;
    out.artifacts.z = z;
    out.artifacts.threshold = knockoff_threshold(w, q);
    out.artifacts.target_q = q;

    out.selection.method = mht::Method::Knockoff;
    out.selection.labels = x.labels;
    out.selection.evidence = w;
    out.selection.selected.resize(x.labels.size());
    for (Index j = 0; j < p; ++j) {
        out.selection.selected[static_cast<std::size_t>(j)] = w(j) >= out.artifacts.threshold;
    }
    out.selection.threshold = out.artifacts.threshold;
    out.selection.target_level = q;
    return out;
}

} // namespace hteguard::knockoff
