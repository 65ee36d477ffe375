#pragma once

#include <Eigen/Dense>
#include <lapacke.h>

#include <string>

#include "relaxlab/errors.hpp"

extern "C" void openblas_set_num_threads(int);

namespace relaxlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SymmetricEigen {
    Vector values;   // ascending
    Matrix vectors;  // columns
};

/// Full eigendecomposition of a real symmetric matrix (LAPACK divide and conquer).
/// Takes the matrix by value; pass an rvalue to reuse its storage for the eigenvectors.
inline SymmetricEigen symmetric_eigen(Matrix m) {
    if (m.rows() != m.cols()) throw ValidationError("symmetric_eigen: matrix is not square");
    const auto n = static_cast<lapack_int>(m.rows());
    Vector w(n);
    const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, m.data(), n, w.data());
    if (info != 0) throw NumericError("symmetric_eigen: dsyevd failed with info=" + std::to_string(info));
    return {std::move(w), std::move(m)};
}

inline double hs_norm(const Matrix& m) { return m.norm(); }

/// max |Q^T Q - 1|
inline double orthogonality_defect(const Matrix& q) {
    Matrix g = q.transpose() * q;
    g.diagonal().array() -= 1.0;
    return g.cwiseAbs().maxCoeff();
}

/// Pins the BLAS to one thread so results do not depend on scheduling.
inline void single_threaded_blas() { openblas_set_num_threads(1); }

}  // namespace relaxlab
