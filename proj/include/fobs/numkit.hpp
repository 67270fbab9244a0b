#pragma once

// Dense linear algebra primitives with an explicit numerical-rank policy.
// Every "rank" decision in the library goes through rank_tol so that the
// singular values and the threshold that produced a decision are inspectable.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include "fobs/error.hpp"

namespace fobs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Index = Eigen::Index;
using Complex = std::complex<double>;

struct RankDecision {
  Index rank = 0;
  Vector singular_values;  // nonincreasing
  double tolerance_used = 0.0;
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 || m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!all_finite(m)) throw Error(ErrorCode::NonFinite, std::string(what) + " has NaN/Inf entries");
}

/// max(rows, cols) * sigma_max * eps.
inline double default_rank_tolerance(Index rows, Index cols, double sigma_max) {
  return static_cast<double>(std::max(rows, cols)) * sigma_max *
         std::numeric_limits<double>::epsilon();
}

template <typename Derived>
Vector singular_values(const Eigen::MatrixBase<Derived>& m) {
  using Plain = typename Derived::PlainObject;
  if (m.rows() == 0 || m.cols() == 0) return Vector(0);
  Eigen::JacobiSVD<Plain> svd(m.derived());
  return svd.singularValues();
}

/// Numerical rank: number of singular values strictly above the tolerance.
/// Works for real and complex matrices.
template <typename Derived>
RankDecision rank_tol(const Eigen::MatrixBase<Derived>& m, std::optional<double> tol = std::nullopt) {
  require_finite(m, "rank_tol input");
  RankDecision out;
  out.singular_values = singular_values(m);
  const double smax = out.singular_values.size() ? out.singular_values(0) : 0.0;
  out.tolerance_used = tol ? *tol : default_rank_tolerance(m.rows(), m.cols(), smax);
  if (out.tolerance_used < 0) throw Error(ErrorCode::PreconditionViolated, "negative rank tolerance");
  out.rank = static_cast<Index>(
      std::count_if(out.singular_values.data(), out.singular_values.data() + out.singular_values.size(),
                    [&](double s) { return s > out.tolerance_used; }));
  return out;
}

/// Moore-Penrose inverse from an SVD; singular values at or below the rank
/// threshold are treated as zero.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> pinv(
    const Eigen::MatrixBase<Derived>& m, std::optional<double> tol = std::nullopt) {
  using Plain = typename Derived::PlainObject;
  using Result = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  require_finite(m, "pinv input");
  if (m.rows() == 0 || m.cols() == 0) return Result::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Plain> svd(m.derived(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double threshold = tol ? *tol : default_rank_tolerance(m.rows(), m.cols(), s(0));
  Result out = Result::Zero(m.cols(), m.rows());
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) <= threshold) break;
    out.noalias() += (svd.matrixV().col(i) / s(i)) * svd.matrixU().col(i).adjoint();
  }
  return out;
}

struct RowCompression {
  Matrix U;  // orthogonal, U * M = [M_hat; 0]
  Index rank = 0;
};

/// Orthogonal U with U*M = [M_hat; 0], M_hat of full row rank.
inline RowCompression row_compress(const Matrix& m, std::optional<double> tol = std::nullopt) {
  require_finite(m, "row_compress input");
  RowCompression out;
  if (m.rows() == 0) {
    out.U = Matrix(0, 0);
    return out;
  }
  if (m.cols() == 0) {
    out.U = Matrix::Identity(m.rows(), m.rows());
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU);
  const Vector& s = svd.singularValues();
  const double threshold = tol ? *tol : default_rank_tolerance(m.rows(), m.cols(), s(0));
  out.rank = static_cast<Index>(std::count_if(s.data(), s.data() + s.size(), [&](double v) { return v > threshold; }));
  out.U = svd.matrixU().transpose();
  return out;
}

struct ColumnCompression {
  Matrix V;  // orthogonal, M * V = [0 | M1], M1 of full column rank
  Index rank = 0;
};

/// Orthogonal V with M*V = [0 | M1]; the zero block occupies the leading
/// cols - rank columns.
inline ColumnCompression column_compress_right(const Matrix& m, std::optional<double> tol = std::nullopt) {
  require_finite(m, "column_compress_right input");
  ColumnCompression out;
  const Index n = m.cols();
  if (n == 0) {
    out.V = Matrix(0, 0);
    return out;
  }
  if (m.rows() == 0) {
    out.V = Matrix::Identity(n, n);
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double threshold = tol ? *tol : default_rank_tolerance(m.rows(), m.cols(), s(0));
  out.rank = static_cast<Index>(std::count_if(s.data(), s.data() + s.size(), [&](double v) { return v > threshold; }));
  const Matrix& v = svd.matrixV();
  out.V.resize(n, n);
  out.V.leftCols(n - out.rank) = v.rightCols(n - out.rank);
  out.V.rightCols(out.rank) = v.leftCols(out.rank);
  return out;
}

/// Vertical stack [C; C A; ...; C A^{q-1}] for square A (q x q).
template <typename DerivedA, typename DerivedC>
typename DerivedA::PlainObject observability_matrix(const Eigen::MatrixBase<DerivedA>& a,
                                                    const Eigen::MatrixBase<DerivedC>& c) {
  using Plain = typename DerivedA::PlainObject;
  if (a.rows() != a.cols())
    throw Error(ErrorCode::DimensionMismatch, "observability_matrix: A must be square");
  if (c.cols() != a.cols())
    throw Error(ErrorCode::DimensionMismatch, "observability_matrix: C and A column counts differ");
  const Index q = a.rows();
  const Index r = c.rows();
  Plain out(r * q, q);
  Plain block = c;
  for (Index i = 0; i < q; ++i) {
    out.middleRows(i * r, r) = block;
    block = block * a;
  }
  return out;
}

/// All eigenvalues with multiplicity, sorted by descending real part, then
/// descending imaginary part.
inline std::vector<Complex> eigenvalues(const Matrix& a) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::DimensionMismatch, "eigenvalues: matrix must be square");
  require_finite(a, "eigenvalues input");
  std::vector<Complex> out;
  if (a.rows() == 0) return out;
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "eigenvalue iteration did not converge");
  const CVector& ev = solver.eigenvalues();
  out.assign(ev.data(), ev.data() + ev.size());
  std::sort(out.begin(), out.end(), [](const Complex& x, const Complex& y) {
    if (x.real() != y.real()) return x.real() > y.real();
    return x.imag() > y.imag();
  });
  return out;
}

inline double max_real_part(const std::vector<Complex>& values) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& v : values) m = std::max(m, v.real());
  return m;
}

/// Stack matrices vertically; all must share the column count.
inline Matrix vstack(std::initializer_list<const Matrix*> parts) {
  Index rows = 0;
  Index cols = -1;
  for (const Matrix* p : parts) {
    if (cols >= 0 && p->cols() != cols) throw Error(ErrorCode::DimensionMismatch, "vstack: column counts differ");
    cols = p->cols();
    rows += p->rows();
  }
  Matrix out(rows, std::max<Index>(cols, 0));
  Index at = 0;
  for (const Matrix* p : parts) {
    out.middleRows(at, p->rows()) = *p;
    at += p->rows();
  }
  return out;
}

/// Solution P of A^T P + P A = -Q via the Kronecker form. Intended for the
/// small observer orders handled here.
inline Matrix lyapunov_continuous(const Matrix& a, const Matrix& q) {
  const Index n = a.rows();
  if (a.cols() != n || q.rows() != n || q.cols() != n)
    throw Error(ErrorCode::DimensionMismatch, "lyapunov_continuous: shapes");
  if (n == 0) return Matrix(0, 0);
  const Matrix at = a.transpose();
  const Matrix id = Matrix::Identity(n, n);
  Matrix big = Matrix::Zero(n * n, n * n);
  // vec(A^T P) = (I kron A^T) vec(P); vec(P A) = (A^T kron I) vec(P)
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      big.block(i * n, j * n, n, n) += id(i, j) * at;
      big.block(i * n, j * n, n, n) += at(i, j) * id;
    }
  Vector rhs = -Eigen::Map<const Vector>(Matrix(q).data(), n * n);
  Eigen::FullPivLU<Matrix> lu(big);
  if (!lu.isInvertible())
    throw Error(ErrorCode::PreconditionViolated, "lyapunov_continuous: spectrum of A meets that of -A");
  Vector x = lu.solve(rhs);
  Matrix p = Eigen::Map<Matrix>(x.data(), n, n);
  return 0.5 * (p + p.transpose());
}

}  // namespace fobs
