#pragma once

// Rank conditions for the existence of a functional ODE observer.
//
// The reduced route (Gamma1, Psi1, Omega1 on the staircase-reduced system)
// is normative: H1 is rank Psi1 = rank Gamma1, and under H1 the second
// condition is decided by a PBH test on the pair (N1, N2). The full route
// builds Gamma, Psi, Omega(lambda) from the original coefficients and is a
// diagnostic cross-check whose rank gaps must agree with the reduced ones up
// to the offset rho.

#include <algorithm>
#include <optional>
#include <random>
#include <vector>

#include "fobs/reduction.hpp"

namespace fobs {

/// Gamma1 = [E11 A11; C11 0; 0 C11; 0 S11].
inline Matrix gamma1(const ReducedSystem& red, const FunctionalSplit& split) {
  const Index nk = red.nk();
  const Index m1 = red.m1();
  const Index c = red.C11.rows();
  const Index q = split.q;
  Matrix g = Matrix::Zero(m1 + 2 * c + q, 2 * nk);
  g.block(0, 0, m1, nk) = red.E11;
  g.block(0, nk, m1, nk) = red.A11;
  g.block(m1, 0, c, nk) = red.C11;
  g.block(m1 + c, nk, c, nk) = red.C11;
  g.block(m1 + 2 * c, nk, q, nk) = split.S11;
  return g;
}

/// Psi1 = Gamma1 with the extra block row [S11 0].
inline Matrix psi1(const ReducedSystem& red, const FunctionalSplit& split) {
  const Matrix g = gamma1(red, split);
  Matrix out = Matrix::Zero(g.rows() + split.q, g.cols());
  out.topRows(g.rows()) = g;
  out.bottomLeftCorner(split.q, red.nk()) = split.S11;
  return out;
}

/// Omega1(lambda) = [E11 A11; C11 0; 0 C11; S11 lambda*S11].
inline CMatrix omega1(const ReducedSystem& red, const FunctionalSplit& split, Complex lambda) {
  CMatrix out = gamma1(red, split).cast<Complex>();
  const Index nk = red.nk();
  const Index last = out.rows() - split.q;
  out.block(last, 0, split.q, nk) = split.S11.cast<Complex>();
  out.block(last, nk, split.q, nk) = lambda * split.S11.cast<Complex>();
  return out;
}

/// Full-size test matrices built from script-E = [E 0], script-A = [A B],
/// calligraphic-A = [0; A] and the n x n block band F.
struct FullTestMatrices {
  Matrix Gamma;
  Matrix Psi;
  Index band_rows = 0;  // rows of [F calA 0]
  Index band_cols = 0;  // columns of F
  Index n = 0;

  /// Gamma with its last block row [0 0 K] replaced by [0 K lambda*K].
  CMatrix omega_at(const DescriptorSystem& sys, Complex lambda) const {
    CMatrix out = Gamma.cast<Complex>();
    const Index r = sys.r();
    const Index last = Gamma.rows() - r;
    out.block(last, band_cols, r, n) = sys.K.cast<Complex>();
    out.block(last, band_cols + n, r, n) = lambda * sys.K.cast<Complex>();
    return out;
  }
};

inline FullTestMatrices build_full_test_matrices(const DescriptorSystem& sys) {
  const Index m = sys.m(), n = sys.n(), l = sys.l(), p = sys.p(), r = sys.r();
  const Index w = n + l;  // width of one band column
  FullTestMatrices out;
  out.n = n;
  out.band_rows = n * m;
  out.band_cols = n * w;
  const Index rows = n * m + m + 2 * p + r;
  const Index cols = n * w + 2 * n;
  Matrix g = Matrix::Zero(rows, cols);
  for (Index i = 0; i < n; ++i) {
    g.block(i * m, i * w, m, n) = sys.E;  // script-E = [E 0]
    if (i + 1 < n) {
      g.block(i * m, (i + 1) * w, m, n) = sys.A;  // script-A = [A B]
      g.block(i * m, (i + 1) * w + n, m, l) = sys.B;
    }
  }
  if (n > 0) g.block((n - 1) * m, n * w, m, n) = sys.A;  // calligraphic-A = [0; A]
  Index row = n * m;
  g.block(row, n * w, m, n) = sys.E;
  g.block(row, n * w + n, m, n) = sys.A;
  row += m;
  g.block(row, n * w, p, n) = sys.C;
  row += p;
  g.block(row, n * w + n, p, n) = sys.C;
  row += p;
  g.block(row, n * w + n, r, n) = sys.K;
  out.Gamma = g;

  out.Psi = Matrix::Zero(rows + r, cols);
  out.Psi.topRows(rows) = g;
  out.Psi.block(rows, n * w, r, n) = sys.K;
  return out;
}

/// rank Psi1 = rank Gamma1; equivalently [T M Q -N] Gamma1 = [S11 0] is solvable.
inline bool check_h1_reduced(const ReducedSystem& red, const FunctionalSplit& split, const TolerancePolicy& tol) {
  if (split.q == 0) return true;
  return tol.rank_of(psi1(red, split)) == tol.rank_of(gamma1(red, split));
}

struct DetectabilityPair {
  Matrix N1;          // q x q
  Matrix N2;          // rows(Gamma1) x q
  Matrix Gamma1_pinv;
};

/// N1 = [S11 0] Gamma1^+ [0; 0; 0; -I], N2 = (I - Gamma1 Gamma1^+) [0; 0; 0; -I].
inline DetectabilityPair compute_N1_N2(const ReducedSystem& red, const FunctionalSplit& split,
                                       const TolerancePolicy& tol) {
  if (!check_h1_reduced(red, split, tol))
    throw Error(ErrorCode::PreconditionViolated, "N1/N2 require H1 (rank Psi1 = rank Gamma1)");
  const Matrix g = gamma1(red, split);
  const Index q = split.q;
  const Index nk = red.nk();
  DetectabilityPair out;
  out.Gamma1_pinv = tol.pinv_of(g);
  Matrix s0 = Matrix::Zero(q, 2 * nk);
  s0.leftCols(nk) = split.S11;
  const Matrix particular = s0 * out.Gamma1_pinv;  // q x rows(Gamma1)
  out.N1 = -particular.rightCols(q);
  const Matrix proj = Matrix::Identity(g.rows(), g.rows()) - g * out.Gamma1_pinv;
  out.N2 = -proj.rightCols(q);
  return out;
}

struct DetectabilityVerdict {
  bool detectable = true;
  std::optional<Complex> witness;
};

/// Computed eigenvalues of an exact imaginary-axis eigenvalue scatter by
/// roundoff; anything within this slack of the axis counts as on it.
inline double axis_slack(double scale) { return 1e-9 * std::max(1.0, scale); }

/// PBH: for every eigenvalue of N1 with Re >= -stability_margin (up to the
/// axis slack), rank [lambda I - N1; N2] must equal q.
inline DetectabilityVerdict check_h2_via_detectability(const Matrix& N1, const Matrix& N2,
                                                       const TolerancePolicy& tol) {
  const Index q = N1.rows();
  if (N1.cols() != q || N2.cols() != q) throw Error(ErrorCode::DimensionMismatch, "PBH: N1 must be square, N2 q columns");
  DetectabilityVerdict out;
  const double cut = -tol.stability_margin - axis_slack(N1.norm());
  for (const Complex& lambda : eigenvalues(N1)) {
    if (lambda.real() < cut) continue;
    CMatrix pbh(q + N2.rows(), q);
    pbh.topRows(q) = lambda * CMatrix::Identity(q, q) - N1.cast<Complex>();
    pbh.bottomRows(N2.rows()) = N2.cast<Complex>();
    if (tol.rank_of(pbh) < q) {
      out.detectable = false;
      out.witness = lambda;
      return out;
    }
  }
  return out;
}

/// Candidate finite eigenvalues of the pencil ([E; 0], [A; C]).
///
/// The pencil is compressed to its normal rank nr by fixed random orthonormal
/// maps P, Q and shifted by sigma; the finite eigenvalues of the nr x nr
/// pencil are sigma + 1/mu over the nonzero eigenvalues mu of
/// (P (A - sigma E) Q)^{-1} P E Q. Every point where the rank of the original
/// pencil drops below nr is among them; the compression can add spurious
/// points, which is harmless for a candidate set.
inline std::vector<Complex> pencil_candidate_eigenvalues(const Matrix& E, const Matrix& A, const Matrix& C) {
  const Index rows = E.rows() + C.rows();
  const Index n = E.cols();
  std::vector<Complex> out;
  if (rows == 0 || n == 0 || E.norm() == 0.0) return out;
  Matrix Eb = Matrix::Zero(rows, n), Ab(rows, n);
  Eb.topRows(E.rows()) = E;
  Ab << A, C;

  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> nd;
  auto gaussian = [&](Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = nd(rng);
    return m;
  };
  const double scale = std::max(Eb.norm(), Ab.norm());
  const double sigma = 0.7318 * scale / std::max(Eb.norm(), 1e-300);
  const Matrix shifted = Ab - sigma * Eb;
  const Index nr = rank_tol(shifted).rank;
  if (nr == 0) return out;
  const Matrix P = Eigen::HouseholderQR<Matrix>(gaussian(rows, nr)).householderQ() * Matrix::Identity(rows, nr);
  const Matrix Q = Eigen::HouseholderQR<Matrix>(gaussian(n, nr)).householderQ() * Matrix::Identity(n, nr);
  const Matrix Mr = P.transpose() * shifted * Q;
  const Eigen::FullPivLU<Matrix> lu(Mr);
  if (!lu.isInvertible()) return out;
  const Matrix W = lu.solve(P.transpose() * Eb * Q);
  const double tiny = 1e-10 * std::max(W.norm(), 1e-300);
  for (const Complex& mu : eigenvalues(W)) {
    if (std::abs(mu) <= tiny) continue;  // infinite eigenvalue
    out.push_back(sigma + 1.0 / mu);
  }
  return out;
}

/// Rank bookkeeping between the full and reduced matrices.
struct RhoBookkeeping {
  Index rho = 0, rho1 = 0, rho2 = 0;
  Index rank_Gamma = 0, rank_Psi = 0;
  Index rank_Gamma1 = 0, rank_Psi1 = 0;
  struct Sample {
    Complex lambda;
    Index rank_Omega = 0;
    Index rank_Omega1 = 0;
  };
  std::vector<Sample> samples;
  bool identities_hold = false;
};

struct ExistenceReport {
  Index q = 0;
  bool static_case = false;  // rank [K11; C11] = rank C11
  bool h1 = false;
  std::optional<bool> h2;  // empty when H1 fails on the reduced route
  Index rank_Gamma1 = 0, rank_Psi1 = 0;
  std::optional<Complex> unstable_witness;
  std::optional<RhoBookkeeping> rho_bookkeeping;

  // Full-matrix verdicts, present when the cross-check was run.
  std::optional<bool> full_h1;
  std::optional<bool> full_h2;
  // Reduced Omega1 evaluated on the same candidate set as the full check.
  std::optional<bool> reduced_h2_at_candidates;
  std::vector<Complex> candidates;
};

/// rho = rho2 + rank E11 + 2 (rank A_1 + ... + rank A_{k-1}), from the
/// staircase bookkeeping.
inline RhoBookkeeping rho_from_staircase(const StaircaseDecomposition& dec, Index n) {
  RhoBookkeeping bk;
  const Index k = dec.k;
  Index sum_a = 0;
  for (Index i = 0; i + 1 < k; ++i) {
    sum_a += dec.Ai_ranks[i];
    bk.rho1 += dec.stage_ranks[i] + sum_a;
  }
  bk.rho2 = bk.rho1 + (n - k) * sum_a + (n - k) * dec.final_rows;
  bk.rho = bk.rho2 + dec.m1() + 2 * sum_a;
  return bk;
}

struct PipelineFront {
  TolerancePolicy tol;
  StaircaseDecomposition dec;
  ReducedSystem red;
  FunctionalSplit split;
};

/// Staircase, reduction and functional split under the system-scaled policy.
inline PipelineFront reduce_system(const DescriptorSystem& sys, const TolerancePolicy& base) {
  sys.validate();
  base.validate();
  PipelineFront f;
  f.tol = base.for_system(sys);
  f.dec = staircase(sys.E, sys.A, sys.B, f.tol);
  f.red = reduce(sys, f.dec);
  f.split = split_functional(f.red, f.tol);
  return f;
}

/// Reduced-route report: static shortcut, H1, and under H1 the PBH verdict.
inline ExistenceReport check_reduced(const PipelineFront& f) {
  ExistenceReport rep;
  rep.q = f.split.q;
  rep.static_case = f.split.q == 0;
  rep.rank_Gamma1 = f.tol.rank_of(gamma1(f.red, f.split));
  rep.rank_Psi1 = f.tol.rank_of(psi1(f.red, f.split));
  rep.h1 = rep.rank_Gamma1 == rep.rank_Psi1;
  if (!rep.h1) return rep;
  if (rep.q == 0) {
    rep.h2 = true;
    return rep;
  }
  const DetectabilityPair pair = compute_N1_N2(f.red, f.split, f.tol);
  const DetectabilityVerdict v = check_h2_via_detectability(pair.N1, pair.N2, f.tol);
  rep.h2 = v.detectable;
  rep.unstable_witness = v.witness;
  return rep;
}

struct FullCheckOptions {
  Index max_dimension = 12;  // cap on m and n for the full matrices
};

/// Reduced report plus the full-matrix cross-check and rho bookkeeping.
inline ExistenceReport check_full_conditions(const DescriptorSystem& sys, const TolerancePolicy& base,
                                             FullCheckOptions opts = {}) {
  if (sys.n() > opts.max_dimension || sys.m() > opts.max_dimension)
    throw Error(ErrorCode::TooLarge, "full-matrix check capped at m, n <= " + std::to_string(opts.max_dimension));
  const PipelineFront f = reduce_system(sys, base);
  ExistenceReport rep = check_reduced(f);
  const TolerancePolicy& tol = f.tol;

  const FullTestMatrices full = build_full_test_matrices(sys);
  RhoBookkeeping bk = rho_from_staircase(f.dec, sys.n());
  bk.rank_Gamma = tol.rank_of(full.Gamma);
  bk.rank_Psi = tol.rank_of(full.Psi);
  bk.rank_Gamma1 = rep.rank_Gamma1;
  bk.rank_Psi1 = rep.rank_Psi1;
  rep.full_h1 = bk.rank_Psi == bk.rank_Gamma;

  // Candidate points where rank Omega can differ from its generic value.
  std::vector<Complex> cand;
  double n1_norm = 0.0;
  if (rep.h1 && rep.q > 0) {
    const DetectabilityPair pair = compute_N1_N2(f.red, f.split, tol);
    n1_norm = pair.N1.norm();
    for (const Complex& z : eigenvalues(pair.N1)) cand.push_back(z);
  }
  for (const Complex& z : pencil_candidate_eigenvalues(sys.E, sys.A, sys.C)) cand.push_back(z);
  for (const Complex& z : pencil_candidate_eigenvalues(f.red.E11, f.red.A11, f.red.C11)) cand.push_back(z);
  cand.emplace_back(1.0, 1.0);
  std::vector<Complex> kept;
  const double cut = -tol.stability_margin - axis_slack(n1_norm);
  for (const Complex& z : cand) {
    if (z.real() < cut) continue;
    kept.push_back(z);
  }
  rep.candidates = kept;

  bool full_h2 = true, reduced_h2 = true;
  bool identities = bk.rank_Gamma - bk.rank_Gamma1 == bk.rho && bk.rank_Psi - bk.rank_Psi1 == bk.rho;
  std::optional<Complex> full_witness;
  for (const Complex& z : kept) {
    RhoBookkeeping::Sample s;
    s.lambda = z;
    s.rank_Omega = tol.rank_of(full.omega_at(sys, z));
    s.rank_Omega1 = tol.rank_of(omega1(f.red, f.split, z));
    if (s.rank_Omega != bk.rank_Gamma) {
      full_h2 = false;
      if (!full_witness) full_witness = z;
    }
    if (s.rank_Omega1 != bk.rank_Gamma1) reduced_h2 = false;
    identities = identities && (s.rank_Omega - s.rank_Omega1 == bk.rho);
    bk.samples.push_back(s);
  }
  bk.identities_hold = identities;
  rep.full_h2 = full_h2;
  rep.reduced_h2_at_candidates = reduced_h2;
  if (!rep.unstable_witness && !full_h2) rep.unstable_witness = full_witness;
  rep.rho_bookkeeping = bk;
  return rep;
}

/// Reduced-route check for a system.
inline ExistenceReport check_conditions(const DescriptorSystem& sys, const TolerancePolicy& base) {
  return check_reduced(reduce_system(sys, base));
}

}  // namespace fobs
