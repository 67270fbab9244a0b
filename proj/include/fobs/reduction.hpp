#pragma once

// Orthogonal staircase reduction of (E, A, B), elimination of the semistates
// that are forced to zero, and separation of the functional into a part
// already known from the outputs and a part that needs a dynamic estimate.

#include <vector>

#include "fobs/model.hpp"

namespace fobs {

/// U E V, U A V, U B in staircase form.
///
/// Row blocks, top to bottom: [m1, m2, h_{k-1}, ..., h_1]; column blocks,
/// left to right: [n_k, a_{k-1}, ..., a_1]. The bottom row block h_i carries
/// A_i (h_i x a_i, full column rank) and has zero E and B rows at the time it
/// is split off; the leading n_k columns hold the surviving semistate x_k.
struct StaircaseDecomposition {
  Matrix U;  // m x m orthogonal
  Matrix V;  // n x n orthogonal
  Index k = 1;
  std::vector<Index> row_block_sizes;
  std::vector<Index> col_block_sizes;
  std::vector<Index> Ai_ranks;     // a_1, ..., a_{k-1}
  std::vector<Index> stage_ranks;  // n_1, ..., n_{k-1}: row rank of [E~_i B~_i]
  Index final_rows = 0;            // rows of the last triple; rank [E11 B11; 0 B21]
  Matrix E11, A11, B11, B21, A21;

  Index m1() const { return E11.rows(); }
  Index m2() const { return A21.rows(); }
  Index nk() const { return E11.cols(); }
};

/// E11 x_k' = A11 x_k + B11 u, y1 = C11 x_k with y1 = [-B21 u; y], z = K11 x_k.
struct ReducedSystem {
  Matrix E11, A11, B11, B21, A21, Ck, K11, C11;

  Index nk() const { return E11.cols(); }
  Index m1() const { return E11.rows(); }
  Index m2() const { return A21.rows(); }
  Index l() const { return B11.cols(); }
  Index p() const { return Ck.rows(); }
  Index r() const { return K11.rows(); }
};

/// K11 = coeff_S * S11 + coeff_C * C11 with row(S11) ∩ row(C11) = {0},
/// row(S11) ⊆ row(K11), S11 orthonormal rows, coeff_S of full column rank.
struct FunctionalSplit {
  Index q = 0;
  Matrix S11;      // q x n_k
  Matrix coeff_S;  // r x q
  Matrix coeff_C;  // r x (m2 + p)
};

/// Staircase reduction by repeated row compression of [E B] and right column
/// compression of the rows of A that [E B] leaves unconstrained.
inline StaircaseDecomposition staircase(const Matrix& E, const Matrix& A, const Matrix& B,
                                        const TolerancePolicy& tol) {
  if (A.rows() != E.rows() || A.cols() != E.cols() || B.rows() != E.rows())
    throw Error(ErrorCode::DimensionMismatch, "staircase: E, A, B shapes disagree");
  require_finite(E, "E");
  require_finite(A, "A");
  require_finite(B, "B");

  const Index m = E.rows();
  const Index n = E.cols();
  const Index l = B.cols();

  StaircaseDecomposition dec;
  Matrix U_acc = Matrix::Identity(m, m);
  Matrix V_acc = Matrix::Identity(n, n);

  // Current triple occupies the leading mc rows and nc columns.
  Matrix Ec = E, Ac = A, Bc = B;
  std::vector<Index> peeled_rows;  // h_1, h_2, ...
  std::vector<Index> peeled_cols;  // a_1, a_2, ...

  while (true) {
    const Index mc = Ec.rows();
    const Index nc = Ec.cols();
    Matrix EB(mc, nc + l);
    EB << Ec, Bc;
    const RowCompression rc = tol.row_compress_of(EB);
    if (rc.rank == mc) break;  // [E_k B_k] has full row rank
    if (static_cast<Index>(peeled_rows.size()) >= n + 1)
      throw Error(ErrorCode::NoConvergence, "staircase did not terminate");

    const Index top = rc.rank;
    const Matrix UE = rc.U * Ec;
    const Matrix UA = rc.U * Ac;
    const Matrix UB = rc.U * Bc;

    const ColumnCompression cc = tol.column_compress_of(UA.bottomRows(mc - top));
    const Index a = cc.rank;
    const Index keep = nc - a;

    Matrix Ucur = Matrix::Identity(m, m);
    Ucur.topLeftCorner(mc, mc) = rc.U;
    U_acc = Ucur * U_acc;
    Matrix Vcur = Matrix::Identity(n, n);
    Vcur.topLeftCorner(nc, nc) = cc.V;
    V_acc = V_acc * Vcur;

    dec.stage_ranks.push_back(top);
    peeled_rows.push_back(mc - top);
    peeled_cols.push_back(a);

    Ec = (UE.topRows(top) * cc.V).leftCols(keep);
    Ac = (UA.topRows(top) * cc.V).leftCols(keep);
    Bc = UB.topRows(top);
  }

  dec.k = static_cast<Index>(peeled_rows.size()) + 1;
  dec.final_rows = Ec.rows();

  // Split the final E block into E11 (full row rank) over zero rows.
  const RowCompression last = tol.row_compress_of(Ec);
  Matrix Ufin = Matrix::Identity(m, m);
  Ufin.topLeftCorner(Ec.rows(), Ec.rows()) = last.U;
  dec.U = Ufin * U_acc;
  dec.V = V_acc;

  const Index mk = Ec.rows();
  const Index nk = Ec.cols();
  const Index m1 = last.rank;
  const Index m2 = mk - m1;

  dec.row_block_sizes = {m1, m2};
  for (auto it = peeled_rows.rbegin(); it != peeled_rows.rend(); ++it) dec.row_block_sizes.push_back(*it);
  dec.col_block_sizes = {nk};
  for (auto it = peeled_cols.rbegin(); it != peeled_cols.rend(); ++it) dec.col_block_sizes.push_back(*it);
  dec.Ai_ranks = peeled_cols;

  const Matrix UEV = dec.U * E * dec.V;
  const Matrix UAV = dec.U * A * dec.V;
  const Matrix UB = dec.U * B;
  dec.E11 = UEV.block(0, 0, m1, nk);
  dec.A11 = UAV.block(0, 0, m1, nk);
  dec.A21 = UAV.block(m1, 0, m2, nk);
  dec.B11 = UB.topRows(m1);
  dec.B21 = UB.middleRows(m1, m2);
  return dec;
}

/// Restriction of the system to the surviving semistate x_k.
inline ReducedSystem reduce(const DescriptorSystem& sys, const StaircaseDecomposition& dec) {
  if (dec.V.rows() != sys.n() || dec.U.rows() != sys.m())
    throw Error(ErrorCode::DimensionMismatch, "reduce: decomposition does not match the system");
  ReducedSystem red;
  red.E11 = dec.E11;
  red.A11 = dec.A11;
  red.B11 = dec.B11;
  red.B21 = dec.B21;
  red.A21 = dec.A21;
  const Index nk = dec.nk();
  red.Ck = (sys.C * dec.V).leftCols(nk);
  red.K11 = (sys.K * dec.V).leftCols(nk);
  red.C11 = vstack({&red.A21, &red.Ck});
  return red;
}

/// Splits K11 into a dynamic part over S11 and a part read off y1 = C11 x_k.
///
/// S11 spans the complement of row(K11) ∩ row(C11) inside row(K11) that is
/// orthogonal to the intersection after projecting out row(C11); q = 0 means
/// the functional is a static map of y1.
inline FunctionalSplit split_functional(const ReducedSystem& red, const TolerancePolicy& tol) {
  const Index nk = red.nk();
  const Index r = red.r();
  const Index c_rows = red.C11.rows();
  FunctionalSplit split;

  const Matrix KC = vstack({&red.K11, &red.C11});
  const Index rank_kc = tol.rank_of(KC);
  const Index rank_c = tol.rank_of(red.C11);
  split.q = std::max<Index>(rank_kc - rank_c, 0);

  if (split.q == 0) {
    split.S11 = Matrix(0, nk);
    split.coeff_S = Matrix(r, 0);
    split.coeff_C = red.K11 * tol.pinv_of(red.C11);
    return split;
  }

  // Orthonormal basis W of row(K11).
  Eigen::JacobiSVD<Matrix> ksvd(red.K11, Eigen::ComputeFullV);
  const Index rank_k = tol.rank_of(red.K11);
  const Matrix W = ksvd.matrixV().leftCols(rank_k).transpose();

  // Components of that basis outside row(C11); directions alpha with
  // alpha * W in row(C11) are exactly the left null space of Y.
  const Matrix Pc = tol.pinv_of(red.C11) * red.C11;
  const Matrix Y = W * (Matrix::Identity(nk, nk) - Pc);
  Eigen::JacobiSVD<Matrix> ysvd(Y, Eigen::ComputeFullU);
  split.S11 = ysvd.matrixU().leftCols(split.q).transpose() * W;

  const Matrix SC = vstack({&split.S11, &red.C11});
  const Matrix coeffs = red.K11 * tol.pinv_of(SC);
  split.coeff_S = coeffs.leftCols(split.q);
  split.coeff_C = coeffs.rightCols(c_rows);
  return split;
}

}  // namespace fobs
