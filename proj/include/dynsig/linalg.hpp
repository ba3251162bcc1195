#pragma once

#include <Eigen/Dense>

namespace dynsig {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Eigendecomposition of a symmetric matrix. Eigenvalues are sorted
// ascending; each eigenvector is sign-fixed so that its largest-magnitude
// component is positive (first such index on ties). Exactly diagonal inputs
// bypass the iterative solver and return a permutation matrix.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;  // columns are eigenvectors
};

SymmetricEigen symmetric_eigen(const Matrix& a);

bool is_square(const Matrix& a);
bool is_symmetric(const Matrix& a, double tol = 1e-12);
bool is_diagonal(const Matrix& a, double tol = 0.0);

// Sum of absolute values of the off-diagonal entries.
double off_diagonal_mass(const Matrix& a);

double min_eigenvalue(const Matrix& a);

// Symmetric PSD square root; negative eigenvalues are clamped to zero.
Matrix psd_sqrt(const Matrix& a);

// Symmetric (pseudo-)inverse square root. Eigenvalues at or below
// `cutoff * max_eigenvalue` are treated as zero and map to zero.
// `singular` (optional) reports whether any eigenvalue was dropped.
Matrix psd_inv_sqrt(const Matrix& a, double cutoff = 1e-14,
                    bool* singular = nullptr);

// Residual ||(I + U W V)^{-1} - (I - U (W^{-1} + V U)^{-1} V)||_F of the
// matrix inversion lemma. Throws SingularityError when either inner matrix
// cannot be inverted.
double matrix_inversion_lemma_check(const Matrix& u, const Matrix& w,
                                    const Matrix& v);

}  // namespace dynsig
