#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <type_traits>

#include "errors.hpp"

namespace resetloop {

using Complex       = std::complex<double>;
using Matrix        = Eigen::MatrixXd;
using Vector        = Eigen::VectorXd;
using RowVector     = Eigen::RowVectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

namespace numerics {

template <class Derived>
[[nodiscard]] bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
    if (!m.allFinite()) throw ParameterError(std::string(what) + ": non-finite entry");
}

/// Induced 1-norm (maximum absolute column sum).
template <class Derived>
[[nodiscard]] double norm1(const Eigen::MatrixBase<Derived>& m) {
    if (m.size() == 0) return 0.0;
    return m.cwiseAbs().colwise().sum().maxCoeff();
}

/**
 * Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
 *
 * The matrix is scaled by 2^-s so that its 1-norm is at most 5.37, the
 * rational approximant is evaluated, and the result is squared s times.
 */
[[nodiscard]] inline Matrix mat_exp(const Matrix& m) {
    if (m.rows() != m.cols()) throw DimensionError("mat_exp: matrix must be square");
    require_finite(m, "mat_exp");
    const Eigen::Index n = m.rows();
    if (n == 0) return Matrix(0, 0);

    static constexpr std::array<double, 14> b{
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
        129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
        1323241920.0,        40840800.0,          960960.0,           16380.0,
        182.0,               1.0};
    constexpr double theta13 = 5.371920351148152;

    const double nrm = norm1(m);
    int squarings    = 0;
    if (nrm > theta13) squarings = static_cast<int>(std::ceil(std::log2(nrm / theta13)));

    const Matrix a  = m / std::ldexp(1.0, squarings);
    const Matrix id = Matrix::Identity(n, n);
    const Matrix a2 = a * a;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a4 * a2;

    const Matrix u_inner = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2);
    // normalised by b[0] so that a zero argument gives exactly I
    const Matrix u       = a * (u_inner + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id) / b[0];
    const Matrix v_inner = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2);
    const Matrix v       = (v_inner + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id) / b[0];

    Matrix r = (v - u).partialPivLu().solve(v + u);
    for (int k = 0; k < squarings; ++k) r = r * r;
    return r;
}

/**
 * Solves M X = B by LU factorisation with partial pivoting.
 *
 * A pivot whose magnitude falls below 1e-14 times the infinity norm of the
 * original row it came from is treated as singular.
 */
template <class Scalar>
[[nodiscard]] Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> lu_solve(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& m,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& rhs) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (m.rows() != m.cols()) throw DimensionError("solve: matrix must be square");
    if (rhs.rows() != m.rows()) throw DimensionError("solve: right-hand side row count mismatch");
    require_finite(m, "solve");
    require_finite(rhs, "solve");

    constexpr double pivot_tol = 1e-14;
    const Eigen::Index n       = m.rows();
    Mat lu                     = m;
    Mat x                      = rhs;
    Eigen::VectorXd row_norm   = m.cwiseAbs().rowwise().maxCoeff();

    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::Index piv = k;
        double best      = std::abs(lu(k, k));
        for (Eigen::Index i = k + 1; i < n; ++i) {
            if (std::abs(lu(i, k)) > best) {
                best = std::abs(lu(i, k));
                piv  = i;
            }
        }
        if (best == 0.0 || best < pivot_tol * row_norm(piv)) {
            throw SingularityError("solve: matrix is singular to working precision");
        }
        if (piv != k) {
            lu.row(k).swap(lu.row(piv));
            x.row(k).swap(x.row(piv));
            std::swap(row_norm(k), row_norm(piv));
        }
        for (Eigen::Index i = k + 1; i < n; ++i) {
            const Scalar f = lu(i, k) / lu(k, k);
            if (f == Scalar(0)) continue;
            lu.row(i).tail(n - k - 1) -= f * lu.row(k).tail(n - k - 1);
            x.row(i) -= f * x.row(k);
        }
    }
    for (Eigen::Index k = n - 1; k >= 0; --k) {
        if (k + 1 < n) x.row(k) -= lu.row(k).tail(n - k - 1) * x.bottomRows(n - k - 1);
        x.row(k) /= lu(k, k);
    }
    return x;
}

[[nodiscard]] inline ComplexMatrix solve_complex(const ComplexMatrix& m, const ComplexMatrix& rhs) {
    return lu_solve<Complex>(m, rhs);
}

[[nodiscard]] inline Matrix solve_real(const Matrix& m, const Matrix& rhs) {
    return lu_solve<double>(m, rhs);
}

/// Largest eigenvalue magnitude; used for stability and jump-map checks.
[[nodiscard]] inline double spectral_radius(const Matrix& m) {
    if (m.rows() != m.cols()) throw DimensionError("spectral_radius: matrix must be square");
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(m, false);
    if (es.info() != Eigen::Success) throw Error("spectral_radius: eigenvalue iteration failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace numerics
}  // namespace resetloop
