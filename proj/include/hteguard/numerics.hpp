#pragma once

#include <cstdint>

#include "hteguard/types.hpp"

namespace hteguard::numerics {

// Lower-triangular L with L * L^T = a. `a` must be symmetric PSD. A pivot in
// (-1e-8, 1e-12) triggers a one-shot diagonal jitter of 1e-10 * trace/p and a
// restart, which keeps exactly-singular PSD targets factorizable; a pivot at
// or below -1e-8 throws NotPositiveSemiDefinite.
Matrix cholesky(const Eigen::Ref<const Matrix>& a);

// Smallest eigenvalue of a symmetric matrix, via full symmetric
// eigendecomposition (no power iteration).
double min_eigenvalue(const Eigen::Ref<const Matrix>& a);

// n x p matrix U with U^T U = I and U^T x = 0, deterministic in `seed`.
// Requires n >= 2p and full column rank.
Matrix orthonormal_complement(const Eigen::Ref<const Matrix>& x, std::uint64_t seed);

// 2 * P(T_df > |t|) via the regularized incomplete beta function.
double student_t_two_sided_p(double t, double df);

// Entry value Z_j for each column of x along a geometric lambda grid for the
// objective ||y - x b||_2^2 + lambda * ||b||_1 (no 1/2 on the quadratic, so
// the grid starts at lambda_max = 2 * max_j |x_j^T y|). Z_j is the largest
// grid lambda at which b_j is nonzero, 0 if the column never enters.
Vector lasso_entry_values(const Eigen::Ref<const Matrix>& x,
                          const Eigen::Ref<const Vector>& y,
                          int grid_size = 100,
                          double grid_ratio = 1e-3);

} // namespace hteguard::numerics
