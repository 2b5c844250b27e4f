#include "hteguard/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hteguard/errors.hpp"
#include "hteguard/rng.hpp"

namespace hteguard::numerics {

namespace {

void require_symmetric(const Eigen::Ref<const Matrix>& a, const char* op) {
    if (a.rows() != a.cols()) {
        throw NotSymmetric(std::string(op) + ": matrix is not square");
    }
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    const double dev = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (dev > 1e-10 * scale) {
        throw NotSymmetric(std::string(op) + ": matrix deviates from symmetry by " +
                           std::to_string(dev));
    }
}

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_cf(double a, double b, double x) {
    constexpr int max_iter = 400;
    constexpr double eps = 3e-16;
    constexpr double fpmin = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

} // namespace

Matrix cholesky(const Eigen::Ref<const Matrix>& a) {
    require_symmetric(a, "cholesky");
    const Index p = a.rows();

    Matrix m = 0.5 * (a + a.transpose());
    const double jitter = 1e-10 * m.trace() / static_cast<double>(p);
    bool jittered = false;

    Matrix l = Matrix::Zero(p, p);
    for (Index j = 0; j < p; ++j) {
        double d = m(j, j) - l.row(j).head(j).squaredNorm();
        if (d < 1e-12) {
            if (d <= -1e-8) {
                throw NotPositiveSemiDefinite("cholesky: pivot " + std::to_string(d) +
                                              " at column " + std::to_string(j));
            }
            if (!jittered) {
                m.diagonal().array() += jitter;
                jittered = true;
                l.setZero();
                j = -1; // restart from the top with the jittered matrix
                continue;
            }
            d = 1e-12;
        }
        l(j, j) = std::sqrt(d);
        for (Index i = j + 1; i < p; ++i) {
            l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
        }
    }
    return l;
}

double min_eigenvalue(const Eigen::Ref<const Matrix>& a) {
    require_symmetric(a, "min_eigenvalue");
    if (a.rows() == 1) return a(0, 0);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw Error("min_eigenvalue: eigendecomposition did not converge");
    }
    return solver.eigenvalues()(0);
}

Matrix orthonormal_complement(const Eigen::Ref<const Matrix>& x, std::uint64_t seed) {
    const Index n = x.rows();
    const Index p = x.cols();
    if (p < 1) throw std::invalid_argument("orthonormal_complement: p must be >= 1");
    if (n < 2 * p) {
        throw DimensionError("orthonormal_complement: need n >= 2p, got n=" +
                             std::to_string(n) + ", p=" + std::to_string(p));
    }

    // Orthonormal basis of col(x); rank deficiency surfaces here.
    Matrix qx(n, p);
    for (Index j = 0; j < p; ++j) {
        Vector v = x.col(j);
        for (int pass = 0; pass < 2; ++pass) {
            for (Index k = 0; k < j; ++k) {
                v -= qx.col(k).dot(v) * qx.col(k);
            }
        }
        const double norm = v.norm();
        if (norm < 1e-10) {
            throw RankDeficient("orthonormal_complement: column " + std::to_string(j) +
                                " is linearly dependent on earlier columns");
        }
        qx.col(j) = v / norm;
    }

    rngutil::Rng rng(seed);
    Matrix u(n, p);
    for (Index j = 0; j < p; ++j) {
        Vector v(n);
        double norm = 0.0;
        for (int attempt = 0; attempt < 100; ++attempt) {
            for (Index i = 0; i < n; ++i) v(i) = rng.normal();
            for (int pass = 0; pass < 2; ++pass) {
                for (Index k = 0; k < p; ++k) v -= qx.col(k).dot(v) * qx.col(k);
                for (Index k = 0; k < j; ++k) v -= u.col(k).dot(v) * u.col(k);
            }
            norm = v.norm();
            if (norm >= 1e-8 * std::sqrt(static_cast<double>(n))) break;
            norm = 0.0;
        }
        if (norm == 0.0) {
            throw Error("orthonormal_complement: failed to extend the complement basis");
        }
        u.col(j) = v / norm;
    }
    return u;
}

double student_t_two_sided_p(double t, double df) {
    if (!(df >= 1.0)) {
        throw InvalidDf("student_t_two_sided_p: df must be >= 1, got " + std::to_string(df));
    }
    if (std::isnan(t)) throw std::invalid_argument("student_t_two_sided_p: t is NaN");
    if (t == 0.0) return 1.0;
    if (std::isinf(t)) return 0.0;

    const double t2 = t * t;
    const double x = df / (df + t2);
    const double omx = t2 / (df + t2); // exact 1-x, no cancellation
    const double a = 0.5 * df;
    const double b = 0.5;

    // p = I_x(a, b)
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log1p(-omx) + b * std::log(omx);
    const double bt = std::exp(ln_bt);
    double pval;
    if (x < (a + 1.0) / (a + b + 2.0)) {
        pval = bt * beta_cf(a, b, x) / a;
    } else {
        pval = 1.0 - bt * beta_cf(b, a, omx) / b;
    }
    return std::clamp(pval, 0.0, 1.0);
}

Vector lasso_entry_values(const Eigen::Ref<const Matrix>& x,
                          const Eigen::Ref<const Vector>& y,
                          int grid_size,
                          double grid_ratio) {
    const Index n = x.rows();
    const Index q = x.cols();
    if (y.size() != n) {
        throw DimensionError("lasso_entry_values: y has " + std::to_string(y.size()) +
                             " entries for " + std::to_string(n) + " rows");
    }
    if (grid_size < 50) throw std::invalid_argument("lasso_entry_values: grid_size must be >= 50");
    if (!(grid_ratio > 0.0 && grid_ratio < 1.0)) {
        throw std::invalid_argument("lasso_entry_values: grid_ratio must be in (0,1)");
    }

    Vector colsq(q);
    for (Index j = 0; j < q; ++j) {
        colsq(j) = x.col(j).squaredNorm();
        if (colsq(j) < 1e-24) {
            throw ZeroColumn("lasso_entry_values: column " + std::to_string(j) + " is zero");
        }
    }

    const double lambda_max = 2.0 * (x.transpose() * y).cwiseAbs().maxCoeff();
    Vector entry = Vector::Zero(q);
    if (lambda_max <= 0.0) return entry;

    Vector beta = Vector::Zero(q);
    Vector residual = y;
    for (int g = 0; g < grid_size; ++g) {
        const double lam =
            lambda_max * std::pow(grid_ratio, static_cast<double>(g) / (grid_size - 1));
        bool converged = false;
        for (int sweep = 0; sweep < 10000; ++sweep) {
            double max_change = 0.0;
            for (Index j = 0; j < q; ++j) {
                const double rho = x.col(j).dot(residual) + beta(j) * colsq(j);
                const double bj = soft_threshold(rho, 0.5 * lam) / colsq(j);
                const double delta = bj - beta(j);
                if (delta != 0.0) {
                    residual -= delta * x.col(j);
                    beta(j) = bj;
                    max_change = std::max(max_change, std::fabs(delta));
                }
            }
            if (max_change < 1e-9) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            throw ConvergenceFailure("lasso_entry_values: coordinate descent exceeded 10000 "
                                     "sweeps at lambda=" + std::to_string(lam));
        }
        for (Index j = 0; j < q; ++j) {
            if (entry(j) == 0.0 && std::fabs(beta(j)) > 1e-10) entry(j) = lam;
        }
    }
    return entry;
}

} // namespace hteguard::numerics
