#pragma once

#include <optional>
#include <string>

#include "fobs/numkit.hpp"

namespace fobs {

/// E x' = A x + B u, y = C x, z = K x with E, A of size m x n. No
/// squareness or regularity assumption on the pencil.
struct DescriptorSystem {
  Matrix E, A, B, C, K;
  std::string name;

  Index m() const { return E.rows(); }
  Index n() const { return E.cols(); }
  Index l() const { return B.cols(); }
  Index p() const { return C.rows(); }
  Index r() const { return K.rows(); }

  /// Throws DimensionError on inconsistent shapes, NonFinite on NaN/Inf.
  void validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::DimensionError, msg); };
    if (A.rows() != E.rows() || A.cols() != E.cols())
      fail("A is " + shape(A) + " but E is " + shape(E));
    if (B.rows() != m()) fail("B has " + std::to_string(B.rows()) + " rows, expected m = " + std::to_string(m()));
    if (C.cols() != n()) fail("C has " + std::to_string(C.cols()) + " columns, expected n = " + std::to_string(n()));
    if (K.cols() != n()) fail("K has " + std::to_string(K.cols()) + " columns, expected n = " + std::to_string(n()));
    require_finite(E, "E");
    require_finite(A, "A");
    require_finite(B, "B");
    require_finite(C, "C");
    require_finite(K, "K");
  }

  /// Frobenius norm of all coefficient data.
  double data_norm() const {
    return std::sqrt(E.squaredNorm() + A.squaredNorm() + B.squaredNorm() + C.squaredNorm() + K.squaredNorm());
  }

  static std::string shape(const Matrix& mat) {
    return std::to_string(mat.rows()) + "x" + std::to_string(mat.cols());
  }
};

inline bool operator==(const DescriptorSystem& a, const DescriptorSystem& b) {
  auto same = [](const Matrix& x, const Matrix& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && (x.size() == 0 || x == y);
  };
  return a.name == b.name && same(a.E, b.E) && same(a.A, b.A) && same(a.B, b.B) && same(a.C, b.C) &&
         same(a.K, b.K);
}

/// One rank policy shared by every decision of a run.
///
/// The threshold for a matrix is max(rows, cols) * sigma_max * eps, floored
/// by noise_floor. The floor is an absolute level tied to the scale of the
/// original system data: blocks that vanish in exact arithmetic come out of
/// the orthogonal reductions at roundoff level, and a purely relative
/// threshold would count that roundoff as rank. An explicit override
/// replaces both.
struct TolerancePolicy {
  std::optional<double> rank_tol_override;
  double residual_tol = 1e-8;
  double stability_margin = 0.0;
  double noise_floor = 0.0;

  void validate() const {
    if (!(residual_tol > 0)) throw Error(ErrorCode::PreconditionViolated, "residual_tol must be positive");
    if (rank_tol_override && !(*rank_tol_override >= 0))
      throw Error(ErrorCode::PreconditionViolated, "rank tolerance must be nonnegative");
    if (!(stability_margin >= 0)) throw Error(ErrorCode::PreconditionViolated, "stability_margin must be >= 0");
  }

  double threshold(Index rows, Index cols, double sigma_max) const {
    if (rank_tol_override) return *rank_tol_override;
    return std::max(default_rank_tolerance(rows, cols, sigma_max), noise_floor);
  }

  template <typename Derived>
  RankDecision rank(const Eigen::MatrixBase<Derived>& m) const {
    require_finite(m, "rank input");
    RankDecision d;
    d.singular_values = singular_values(m);
    const Vector& s = d.singular_values;
    d.tolerance_used = threshold(m.rows(), m.cols(), s.size() ? s(0) : 0.0);
    d.rank = static_cast<Index>(
        std::count_if(s.data(), s.data() + s.size(), [&](double v) { return v > d.tolerance_used; }));
    return d;
  }

  template <typename Derived>
  Index rank_of(const Eigen::MatrixBase<Derived>& m) const {
    return rank(m).rank;
  }

  template <typename Derived>
  auto pinv_of(const Eigen::MatrixBase<Derived>& m) const {
    const Vector s = singular_values(m);
    return pinv(m, threshold(m.rows(), m.cols(), s.size() ? s(0) : 0.0));
  }

  RowCompression row_compress_of(const Matrix& m) const {
    const Vector s = singular_values(m);
    return row_compress(m, threshold(m.rows(), m.cols(), s.size() ? s(0) : 0.0));
  }

  ColumnCompression column_compress_of(const Matrix& m) const {
    const Vector s = singular_values(m);
    return column_compress_right(m, threshold(m.rows(), m.cols(), s.size() ? s(0) : 0.0));
  }

  /// Copy of this policy with the noise floor set from the system's scale.
  TolerancePolicy for_system(const DescriptorSystem& sys) const {
    TolerancePolicy out = *this;
    const double dims = static_cast<double>(sys.m() + sys.n() + sys.l() + sys.p() + sys.r());
    out.noise_floor = std::max(noise_floor, dims * std::numeric_limits<double>::epsilon() * sys.data_norm());
    return out;
  }
};

}  // namespace fobs
