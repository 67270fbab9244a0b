#pragma once

// Observer synthesis on the reduced system.
//
// With Gamma1 = [E11 A11; C11 0; 0 C11; 0 S11], the parameter equations
//   T A11 + Q C11 - N S11 = 0,   T E11 + Mbar C11 = S11
// read [T Mbar Q -N] Gamma1 = [S11 0], solved as
//   [T Mbar Q -N] = [S11 0] Gamma1^+ - Z (I - Gamma1 Gamma1^+),
// so N = N1 - Z N2 and Z is chosen to make N Hurwitz.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "fobs/existence.hpp"
#include "fobs/observer.hpp"

namespace fobs {

struct ObserverParameters {
  Matrix T, Mbar, Q, N, Z;
};

/// Parameter family for a given Z (q x rows(Gamma1)).
inline ObserverParameters solve_parameters(const ReducedSystem& red, const FunctionalSplit& split, const Matrix& Z,
                                           const TolerancePolicy& tol) {
  const Index q = split.q;
  const Index m1 = red.m1();
  const Index c = red.C11.rows();
  ObserverParameters out;
  out.Z = Z;
  if (q == 0) {
    out.T = Matrix(0, m1);
    out.Mbar = Matrix(0, c);
    out.Q = Matrix(0, c);
    out.N = Matrix(0, 0);
    out.Z = Matrix(0, Z.cols());
    return out;
  }
  if (!check_h1_reduced(red, split, tol))
    throw Error(ErrorCode::PreconditionViolated, "parameter equations unsolvable: H1 fails");
  const Matrix g = gamma1(red, split);
  if (Z.rows() != q || Z.cols() != g.rows())
    throw Error(ErrorCode::DimensionMismatch, "Z must be " + std::to_string(q) + "x" + std::to_string(g.rows()));
  const Index nk = red.nk();
  const Matrix gp = tol.pinv_of(g);
  Matrix s0 = Matrix::Zero(q, 2 * nk);
  s0.leftCols(nk) = split.S11;
  const Matrix X = s0 * gp - Z * (Matrix::Identity(g.rows(), g.rows()) - g * gp);
  out.T = X.leftCols(m1);
  out.Mbar = X.middleCols(m1, c);
  out.Q = X.middleCols(m1 + c, c);
  out.N = -X.rightCols(q);
  return out;
}

/// Normalized residuals of the two parameter equations.
inline std::pair<double, double> parameter_residuals(const ReducedSystem& red, const FunctionalSplit& split,
                                                     const Matrix& T, const Matrix& Mbar, const Matrix& Q,
                                                     const Matrix& N) {
  if (split.q == 0) return {0.0, 0.0};
  const double scale = split.S11.norm() + 1.0;
  const double ra = (T * red.A11 + Q * red.C11 - N * split.S11).norm() / scale;
  const double rb = (T * red.E11 + Mbar * red.C11 - split.S11).norm() / scale;
  return {ra, rb};
}

namespace detail {

/// Stabilizing solution X of A^T X + X A - X G X + Q = 0 by the matrix sign
/// function of the Hamiltonian [[A, -G], [-Q, -A^T]] (Newton iteration with
/// determinant scaling).
inline Matrix care_sign_function(const Matrix& A, const Matrix& G, const Matrix& Qw) {
  const Index n = A.rows();
  Matrix W(2 * n, 2 * n);
  W << A, -G, -Qw, -A.transpose();
  constexpr int kMaxIterations = 100;
  constexpr double kTolerance = 1e-13;
  const double p = static_cast<double>(2 * n);
  bool converged = false;
  for (int it = 0; it < kMaxIterations; ++it) {
    Eigen::PartialPivLU<Matrix> lu(W);
    const double det = std::abs(lu.determinant());
    if (!(det > 0) || !std::isfinite(det))
      throw Error(ErrorCode::NoConvergence, "Hamiltonian became singular (eigenvalue on the imaginary axis)");
    const double ck = std::pow(det, -1.0 / p);
    const Matrix next = 0.5 * (ck * W + lu.inverse() / ck);
    const double change = (next - W).lpNorm<1>();
    const double size = W.lpNorm<1>();
    W = next;
    if (change <= kTolerance * size) {
      converged = true;
      break;
    }
  }
  if (!converged) throw Error(ErrorCode::NoConvergence, "matrix sign iteration stalled");
  // Stable invariant subspace is ker(W + I), spanned by [I; X].
  Matrix lhs(2 * n, n), rhs(2 * n, n);
  lhs << W.topRightCorner(n, n), W.bottomRightCorner(n, n) + Matrix::Identity(n, n);
  rhs << W.topLeftCorner(n, n) + Matrix::Identity(n, n), W.bottomLeftCorner(n, n);
  Matrix X = lhs.colPivHouseholderQr().solve(-rhs);
  return 0.5 * (X + X.transpose());
}

}  // namespace detail

/// Output injection Z making N1 - Z N2 Hurwitz with margin, from the
/// filter Riccati equation
///   (N1 + a I) P + P (N1 + a I)^T - P N2^T N2 P + I = 0,  Z = P N2^T.
inline Matrix stabilize(const Matrix& N1, const Matrix& N2, const TolerancePolicy& tol) {
  const Index q = N1.rows();
  const DetectabilityVerdict v = check_h2_via_detectability(N1, N2, tol);
  if (!v.detectable)
    throw Error(ErrorCode::NotDetectable, "pair (N1, N2) is not detectable", v.witness);
  if (q == 0) return Matrix(0, N2.rows());
  if (max_real_part(eigenvalues(N1)) < -tol.stability_margin) return Matrix::Zero(q, N2.rows());

  const Matrix shifted = N1 + tol.stability_margin * Matrix::Identity(q, q);
  const Matrix P = detail::care_sign_function(shifted.transpose(), N2.transpose() * N2, Matrix::Identity(q, q));
  const Matrix Z = P * N2.transpose();
  const double worst = max_real_part(eigenvalues(N1 - Z * N2));
  if (!(worst < -tol.stability_margin))
    throw Error(ErrorCode::NoConvergence, "Riccati gain failed to stabilize N (max Re = " + std::to_string(worst) + ")");
  return Z;
}

/// Z placing the eigenvalues of N1 - Z N2 at the requested real poles by
/// reducing to a single output combination and Ackermann's formula. Limited
/// to q <= 3.
inline Matrix place_poles(const Matrix& N1, const Matrix& N2, const std::vector<double>& poles) {
  const Index q = N1.rows();
  const Index g = N2.rows();
  if (q == 0) return Matrix(0, g);
  if (q > 3) throw Error(ErrorCode::PreconditionViolated, "pole placement is limited to observer order q <= 3");
  std::vector<double> target = poles;
  if (target.size() == 1 && q > 1) target.assign(static_cast<std::size_t>(q), poles.front());
  if (static_cast<Index>(target.size()) != q)
    throw Error(ErrorCode::PreconditionViolated,
                "expected " + std::to_string(q) + " poles, got " + std::to_string(poles.size()));

  // Nothing to move when N1 already carries the requested spectrum.
  std::vector<Complex> have = eigenvalues(N1);
  std::vector<double> want = target;
  auto by_parts = [](const Complex& a, const Complex& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  };
  std::sort(have.begin(), have.end(), by_parts);
  std::sort(want.begin(), want.end());
  const double match_tol = 1e-10 * std::max(1.0, N1.norm());
  bool placed = true;
  for (std::size_t i = 0; i < have.size(); ++i) placed = placed && std::abs(have[i] - want[i]) <= match_tol;
  if (placed) return Matrix::Zero(q, g);

  // Candidate unit output combinations c (g-vector); keep the one whose
  // observability matrix is furthest from singular on the scale of N1.
  std::vector<Vector> candidates;
  if (g > 0) {
    Eigen::JacobiSVD<Matrix> svd(N2, Eigen::ComputeThinU);
    for (Index i = 0; i < svd.matrixU().cols(); ++i) candidates.push_back(svd.matrixU().col(i));
    candidates.push_back(svd.matrixU().rowwise().sum());
    std::mt19937_64 rng(20240601);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 8; ++i) {
      Vector c(g);
      for (Index j = 0; j < g; ++j) c(j) = nd(rng);
      candidates.push_back(c);
    }
  }
  const double growth = std::pow(std::max(1.0, N1.norm()), static_cast<double>(q - 1));
  double best_margin = 0.0;
  Vector best_c;
  Matrix best_obs;
  for (Vector c : candidates) {
    if (c.norm() == 0.0) continue;
    c.normalize();
    const Matrix h = c.transpose() * N2;  // 1 x q
    const Matrix obs = observability_matrix(N1, h);
    const Vector s = singular_values(obs);
    const double margin = s.size() ? s(s.size() - 1) / growth : 0.0;
    if (margin > best_margin) {
      best_margin = margin;
      best_c = c;
      best_obs = obs;
    }
  }
  if (best_margin < 1e-8)
    throw Error(ErrorCode::PreconditionViolated,
                "pole placement needs (N1, c N2) observable for some output combination c");

  // Ackermann (observer form): f = p(N1) O^{-1} e_q.
  Matrix pN1 = Matrix::Identity(q, q);
  for (double pole : target) pN1 = pN1 * (N1 - pole * Matrix::Identity(q, q));
  Vector eq = Vector::Zero(q);
  eq(q - 1) = 1.0;
  const Vector f = pN1 * best_obs.fullPivLu().solve(eq);
  return f * best_c.transpose();
}

/// Observer over [u; y] from the reduced-coordinate parameters.
inline ObserverRealization assemble(const ReducedSystem& red, const FunctionalSplit& split,
                                    const ObserverParameters& params, const SystemDims& dims) {
  const Index q = split.q;
  const Index l = red.l();
  const Index p = red.p();
  const Index m2 = red.m2();
  ObserverRealization obs;
  obs.q = q;
  obs.dims = dims;
  auto& cert = obs.certificates;
  cert.T = params.T;
  cert.Mbar = params.Mbar;
  cert.Q = params.Q;
  cert.Z = params.Z;
  obs.N = params.N;
  cert.L = params.N * params.Mbar - params.Q;

  const Matrix La = cert.L.leftCols(m2), Lb = cert.L.rightCols(p);
  const Matrix Ma = params.Mbar.leftCols(m2), Mb = params.Mbar.rightCols(p);
  const Matrix Ca = split.coeff_C.leftCols(m2), Cb = split.coeff_C.rightCols(p);

  obs.H.resize(q, l + p);
  obs.H << params.T * red.B11 - La * red.B21, Lb;
  obs.R = split.coeff_S;
  obs.M.resize(red.r(), l + p);
  obs.M << -(split.coeff_S * Ma + Ca) * red.B21, split.coeff_S * Mb + Cb;

  const auto [ra, rb] = parameter_residuals(red, split, params.T, params.Mbar, params.Q, params.N);
  cert.residual_a = ra;
  cert.residual_b = rb;
  cert.eigs_N = eigenvalues(obs.N);
  cert.P = q > 0 && max_real_part(cert.eigs_N) < 0 ? lyapunov_continuous(obs.N, Matrix::Identity(q, q))
                                                   : Matrix::Zero(q, q);
  return obs;
}

/// rank O(N, R) = rank R: the error cannot leave zero once it is zero.
inline bool verify_condition_b_certificate(const ObserverRealization& obs) {
  if (obs.q == 0) return true;
  const Matrix O = observability_matrix(obs.N, obs.R);
  return rank_tol(O).rank == rank_tol(obs.R).rank;
}

struct SynthesisOptions {
  std::optional<std::vector<double>> place_poles;
};

/// Full pipeline: staircase, reduction, split, static shortcut, H1/H2,
/// stabilization, parameter solve, assembly.
///
/// H1Failed / H2Failed mean the sufficient conditions are not met; an
/// observer may still exist.
inline ObserverRealization synthesize(const DescriptorSystem& sys, const TolerancePolicy& base,
                                      const SynthesisOptions& opts = {}) {
  const PipelineFront f = reduce_system(sys, base);
  const TolerancePolicy& tol = f.tol;
  const Index q = f.split.q;
  const Index g_rows = f.red.m1() + 2 * f.red.C11.rows() + q;

  ObserverParameters params;
  if (q == 0) {
    params = solve_parameters(f.red, f.split, Matrix(0, g_rows), tol);
  } else {
    if (!check_h1_reduced(f.red, f.split, tol))
      throw Error(ErrorCode::H1Failed,
                  "rank Psi1 != rank Gamma1; the conditions are sufficient only, an observer may still exist");
    const DetectabilityPair pair = compute_N1_N2(f.red, f.split, tol);
    const DetectabilityVerdict v = check_h2_via_detectability(pair.N1, pair.N2, tol);
    if (!v.detectable)
      throw Error(ErrorCode::H2Failed,
                  "(N1, N2) not detectable; the conditions are sufficient only, an observer may still exist",
                  v.witness);
    Matrix Z;
    if (opts.place_poles) {
      for (double pole : *opts.place_poles)
        if (!(pole < -tol.stability_margin))
          throw Error(ErrorCode::PreconditionViolated, "requested poles must lie in the open left half-plane");
      Z = place_poles(pair.N1, pair.N2, *opts.place_poles);
    } else {
      Z = stabilize(pair.N1, pair.N2, tol);
    }
    params = solve_parameters(f.red, f.split, Z, tol);
  }

  ObserverRealization obs = assemble(f.red, f.split, params, dims_of(sys));
  obs.system_name = sys.name;
  obs.tolerance = base;
  obs.static_case = q == 0;
  obs.h1 = true;
  obs.h2 = true;

  const double worst = std::max(obs.certificates.residual_a, obs.certificates.residual_b);
  if (worst > tol.residual_tol)
    throw Error(ErrorCode::ResidualTooLarge, "parameter residual " + std::to_string(worst) + " exceeds tolerance");
  if (q > 0 && !(max_real_part(obs.certificates.eigs_N) < -tol.stability_margin))
    throw Error(ErrorCode::NoConvergence, "synthesized N is not Hurwitz");
  return obs;
}

}  // namespace fobs
