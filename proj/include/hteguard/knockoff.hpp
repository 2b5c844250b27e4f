#pragma once

#include <cstdint>
#include <limits>
#include <utility>

#include "hteguard/data.hpp"
#include "hteguard/mht.hpp"
#include "hteguard/types.hpp"

namespace hteguard::knockoff {

struct KnockoffArtifacts {
    Matrix x_normalized;
    Matrix x_knockoff;
    Vector s;
    Matrix sigma; // X^T X of the normalized design
    Vector w;     // signed statistic per original column
    Vector z;     // lasso entry values, originals first then knockoffs
    double threshold = std::numeric_limits<double>::infinity();
    double target_q = 0.0;
};

// Scale every column to unit Euclidean norm.
Matrix normalize_columns(const Eigen::Ref<const Matrix>& x);

// Equi-correlated construction: s_j = min(2 lambda_min(sigma), 1) for all j,
// shrunk by (1 - 1e-6) so the Cholesky target stays strictly PD at the
// boundary case s = 2 lambda_min.
Vector equi_s(const Eigen::Ref<const Matrix>& sigma);

// Knockoff matrix for a normalized full-column-rank design with n >= 2p:
//   X~ = X (I - Sigma^-1 diag{s}) + U C,  C^T C = 2 diag{s} - diag{s} Sigma^-1 diag{s}
// U is an orthonormal complement of col(X), deterministic in `seed`.
// Fills x_normalized, x_knockoff, s, sigma.
KnockoffArtifacts construct_knockoffs(const Eigen::Ref<const Matrix>& x_normalized,
                                      const Vector& s,
                                      std::uint64_t seed);

// w_j = max(Z_j, Z_{j+p}) * sign(Z_j - Z_{j+p}), 0 on ties; z holds the 2p
// entry values, originals first.
Vector w_from_entry_values(const Vector& z);

// Lasso-path statistics on the augmented design [X X~]: returns (w, z).
std::pair<Vector, Vector> knockoff_statistics(const Eigen::Ref<const Matrix>& x,
                                              const Eigen::Ref<const Matrix>& x_knockoff,
                                              const Eigen::Ref<const Vector>& y);

// Data-dependent threshold over the candidate set {|W_j|} \ {0}:
//   T = min{ t : (1 + #{W_j <= -t}) / max(#{W_j >= t}, 1) <= q }
// or +infinity when no candidate qualifies.
double knockoff_threshold(const Vector& w, double q);

struct KnockoffSelection {
    mht::SelectionResult selection;
    KnockoffArtifacts artifacts;
};

// normalize -> equi_s -> construct -> statistics -> threshold; selects
// {labels j : W_j >= T}.
KnockoffSelection knockoff_select(const data::DesignMatrix& x,
                                  const Vector& y,
                                  double q,
                                  std::uint64_t seed);

} // namespace hteguard::knockoff
