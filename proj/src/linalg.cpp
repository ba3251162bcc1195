#include "dynsig/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dynsig/errors.hpp"

namespace dynsig {

namespace {

void fix_signs(Matrix& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const double a = std::abs(vectors(i, j));
      if (a > best + 1e-15) {
        best = a;
        arg = i;
      }
    }
    if (vectors(arg, j) < 0.0) vectors.col(j) = -vectors.col(j);
  }
}

}  // namespace

bool is_square(const Matrix& a) { return a.rows() == a.cols(); }

bool is_symmetric(const Matrix& a, double tol) {
  if (!is_square(a)) return false;
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol;
}

bool is_diagonal(const Matrix& a, double tol) {
  return is_square(a) && off_diagonal_mass(a) <= tol;
}

double off_diagonal_mass(const Matrix& a) {
  double mass = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (i != j) mass += std::abs(a(i, j));
  return mass;
}

SymmetricEigen symmetric_eigen(const Matrix& a) {
  if (!is_square(a)) throw ShapeError("symmetric_eigen: matrix is not square");
  const Eigen::Index n = a.rows();
  SymmetricEigen out;
  if (off_diagonal_mass(a) == 0.0) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index l, Eigen::Index r) { return a(l, l) < a(r, r); });
    out.values.resize(n);
    out.vectors = Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      out.values(j) = a(order[j], order[j]);
      out.vectors(order[j], j) = 1.0;
    }
    return out;
  }
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success)
    throw SingularityError("symmetric_eigen: decomposition failed");
  out.values = solver.eigenvalues();  // Eigen returns ascending order
  out.vectors = solver.eigenvectors();
  fix_signs(out.vectors);
  return out;
}

double min_eigenvalue(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return symmetric_eigen(a).values.minCoeff();
}

Matrix psd_sqrt(const Matrix& a) {
  const SymmetricEigen e = symmetric_eigen(a);
  const Vector roots = e.values.cwiseMax(0.0).cwiseSqrt();
  return e.vectors * roots.asDiagonal() * e.vectors.transpose();
}

Matrix psd_inv_sqrt(const Matrix& a, double cutoff, bool* singular) {
  const SymmetricEigen e = symmetric_eigen(a);
  const double top = e.values.size() ? std::max(e.values.maxCoeff(), 0.0) : 0.0;
  Vector inv(e.values.size());
  bool dropped = false;
  for (Eigen::Index i = 0; i < e.values.size(); ++i) {
    if (e.values(i) > cutoff * top && e.values(i) > 0.0) {
      inv(i) = 1.0 / std::sqrt(e.values(i));
    } else {
      inv(i) = 0.0;
      dropped = true;
    }
  }
  if (singular) *singular = dropped;
  return e.vectors * inv.asDiagonal() * e.vectors.transpose();
}

double matrix_inversion_lemma_check(const Matrix& u, const Matrix& w,
                                    const Matrix& v) {
  if (u.cols() != w.rows() || w.cols() != v.rows() || u.rows() != v.cols() ||
      !is_square(w))
    throw ShapeError("matrix_inversion_lemma_check: non-conformable operands");
  const Eigen::Index n = u.rows();
  const Matrix outer = Matrix::Identity(n, n) + u * w * v;
  Eigen::FullPivLU<Matrix> outer_lu(outer);
  Eigen::FullPivLU<Matrix> w_lu(w);
  if (!outer_lu.isInvertible() || !w_lu.isInvertible())
    throw SingularityError("matrix_inversion_lemma_check: singular operand");
  const Matrix inner = w_lu.inverse() + v * u;
  Eigen::FullPivLU<Matrix> inner_lu(inner);
  if (!inner_lu.isInvertible())
    throw SingularityError("matrix_inversion_lemma_check: W^-1 + V U is singular");
  const Matrix lhs = outer_lu.inverse();
  const Matrix rhs = Matrix::Identity(n, n) - u * inner_lu.inverse() * v;
  return (lhs - rhs).norm();
}

}  // namespace dynsig
