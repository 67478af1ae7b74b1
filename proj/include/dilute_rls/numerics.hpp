#pragma once

// Dense symmetric kernels: rank-one information updates, SPD solves and
// symmetric eigenvalue extremes. Everything here is a pure function.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "dilute_rls/errors.hpp"

namespace dilute_rls {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Module tolerances. Callers may pass their own copy to override.
struct NumericTolerances {
    /// Symmetry check: |A - A^T| <= symmetry_rel * max|A|.
    double symmetry_rel = 1e-12;
    /// Cholesky pivot floor relative to the trace.
    double singular_pivot_rel = 1e-14;
};

inline constexpr NumericTolerances kDefaultTolerances{};

inline bool all_finite(const DenseMatrix& a) { return a.allFinite(); }

inline void require_finite(const DenseMatrix& a, const char* what) {
    if (!a.allFinite()) throw ContractViolation(std::string(what) + ": non-finite entry");
}

inline bool is_symmetric(const DenseMatrix& a, double rel_tol = kDefaultTolerances.symmetry_rel) {
    if (a.rows() != a.cols()) return false;
    if (a.size() == 0) return true;
    const double scale = a.cwiseAbs().maxCoeff();
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

/// Symmetric matrix that is expected to be positive definite.
///
/// Symmetry is validated on construction. Positive definiteness is only
/// discovered when the matrix is factored (see spd_solve).
class SpdMatrix {
public:
    SpdMatrix() = default;

    explicit SpdMatrix(DenseMatrix m, const NumericTolerances& tol = kDefaultTolerances)
        : m_(std::move(m)) {
        require(m_.rows() == m_.cols(), "SpdMatrix: matrix must be square");
        require_finite(m_, "SpdMatrix");
        require(is_symmetric(m_, tol.symmetry_rel), "SpdMatrix: matrix is not symmetric");
    }

    static SpdMatrix identity(Eigen::Index dim, double scale = 1.0) {
        return SpdMatrix(DenseMatrix::Identity(dim, dim) * scale);
    }

    Eigen::Index dim() const noexcept { return m_.rows(); }
    const DenseMatrix& matrix() const noexcept { return m_; }
    double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

private:
    DenseMatrix m_;
};

struct DowndateResult {
    SpdMatrix p_bar;
    double b = 1.0;
};

/// (P^{-1} + phi phi^T)^{-1} through the matrix inversion formula.
///
/// Returns b = 1 / (1 + phi^T P phi) and P_bar = P - b (P phi)(P phi)^T.
inline DowndateResult sherman_morrison_downdate(const SpdMatrix& p, const Vector& phi) {
    require(p.dim() == phi.size(), "sherman_morrison_downdate: dimension mismatch");
    require(phi.allFinite(), "sherman_morrison_downdate: non-finite regressor");
    const Vector p_phi = p.matrix() * phi;
    const double b = 1.0 / (1.0 + phi.dot(p_phi));
    // Update one triangle and mirror it: under heavy cancellation a general
    // product can round (i, j) and (j, i) differently.
    DenseMatrix p_bar = p.matrix();
    p_bar.selfadjointView<Eigen::Lower>().rankUpdate(p_phi, -b);
    p_bar.triangularView<Eigen::StrictlyUpper>() = p_bar.transpose();
    return {SpdMatrix(std::move(p_bar)), b};
}

/// Solves A X = B for SPD A by Cholesky.
inline DenseMatrix spd_solve(const SpdMatrix& a, const DenseMatrix& rhs,
                             const NumericTolerances& tol = kDefaultTolerances) {
    require(a.dim() == rhs.rows(), "spd_solve: dimension mismatch");
    require_finite(rhs, "spd_solve");
    if (a.dim() == 0) return rhs;
    const Eigen::LLT<DenseMatrix> llt(a.matrix());
    const double floor = tol.singular_pivot_rel * std::abs(a.matrix().trace());
    if (llt.info() != Eigen::Success) throw SingularityError("spd_solve: matrix is not positive definite");
    const DenseMatrix& factor = llt.matrixLLT();
    for (Eigen::Index i = 0; i < factor.rows(); ++i) {
        const double pivot = factor(i, i) * factor(i, i);
        if (!(pivot > floor)) throw SingularityError("spd_solve: pivot below singularity floor");
    }
    return llt.solve(rhs);
}

/// Inverse of an SPD matrix, symmetrized.
inline SpdMatrix spd_inverse(const SpdMatrix& a, const NumericTolerances& tol = kDefaultTolerances) {
    DenseMatrix inv = spd_solve(a, DenseMatrix::Identity(a.dim(), a.dim()), tol);
    DenseMatrix sym = 0.5 * (inv + inv.transpose());
    return SpdMatrix(std::move(sym));
}

struct EigenExtremes {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
};

/// Extreme eigenvalues from a full symmetric eigendecomposition.
inline EigenExtremes sym_eigen_extremes(const DenseMatrix& a,
                                        const NumericTolerances& tol = kDefaultTolerances) {
    require(a.rows() == a.cols(), "sym_eigen_extremes: matrix must be square");
    require_finite(a, "sym_eigen_extremes");
    require(is_symmetric(a, std::max(tol.symmetry_rel, 1e-10)),
            "sym_eigen_extremes: matrix is not symmetric");
    if (a.size() == 0) return {};
    const Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(a, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw SingularityError("sym_eigen_extremes: no convergence");
    const Vector& ev = solver.eigenvalues();
    return {ev.minCoeff(), ev.maxCoeff()};
}

inline double lambda_min(const DenseMatrix& a) { return sym_eigen_extremes(a).lambda_min; }
inline double lambda_max(const DenseMatrix& a) { return sym_eigen_extremes(a).lambda_max; }

/// A <= B in the Loewner order, up to tol: lambda_min(B - A) >= -tol.
inline bool psd_order_holds(const DenseMatrix& a, const DenseMatrix& b, double tol) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "psd_order_holds: dimension mismatch");
    const DenseMatrix diff = b - a;
    return sym_eigen_extremes(0.5 * (diff + diff.transpose())).lambda_min >= -tol;
}

/// Smallest eigenvalue of B - A; the slack of the ordering A <= B.
inline double psd_order_slack(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "psd_order_slack: dimension mismatch");
    const DenseMatrix diff = b - a;
    return sym_eigen_extremes(0.5 * (diff + diff.transpose())).lambda_min;
}

/// Block-diagonal stack of equally sized square blocks.
template <typename Range>
DenseMatrix block_diagonal(const Range& blocks) {
    Eigen::Index total = 0;
    for (const DenseMatrix& b : blocks) total += b.rows();
    DenseMatrix out = DenseMatrix::Zero(total, total);
    Eigen::Index offset = 0;
    for (const DenseMatrix& b : blocks) {
        out.block(offset, offset, b.rows(), b.cols()) = b;
        offset += b.rows();
    }
    return out;
}

/// A (x) I_p.
inline DenseMatrix kron_identity(const DenseMatrix& a, Eigen::Index p) {
    DenseMatrix out = DenseMatrix::Zero(a.rows() * p, a.cols() * p);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (a(i, j) != 0.0) out.block(i * p, j * p, p, p).diagonal().setConstant(a(i, j));
    return out;
}

}  // namespace dilute_rls
