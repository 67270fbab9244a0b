#pragma once

// Shared test helpers: seeded generators and exact-arithmetic oracles.

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "fobs/existence.hpp"
#include "fobs/io.hpp"
#include "fobs/model.hpp"

namespace fobs::testing {

using Rational = boost::multiprecision::cpp_rational;
using RMatrix = std::vector<std::vector<Rational>>;

inline std::string data_path(const std::string& name) { return std::string(FOBS_DATA_DIR) + "/" + name; }
inline DescriptorSystem example1() { return load_system(data_path("example1.json")); }
inline DescriptorSystem example2() { return load_system(data_path("example2.json")); }
inline DescriptorSystem h1_counterexample() { return load_system(data_path("h1_counterexample.json")); }

inline Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Index>(r.size()), r.size() ? static_cast<Index>(r.begin()->size()) : 0);
  Index i = 0;
  for (const auto& row : r) {
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return nd_(rng_); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

  Matrix normal_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  Matrix int_matrix(Index rows, Index cols, int lo, int hi) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = uniform_int(lo, hi);
    return m;
  }

  // Integer matrix with entries in {lo..hi}, with a given fraction of zeros.
  Matrix sparse_int_matrix(Index rows, Index cols, int lo, int hi, double zero_prob) {
    Matrix m = int_matrix(rows, cols, lo, hi);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j)
        if (coin(zero_prob)) m(i, j) = 0;
    return m;
  }

  Matrix low_rank_int(Index rows, Index cols, Index rank, int lo = -2, int hi = 2) {
    if (rank == 0) return Matrix::Zero(rows, cols);
    return int_matrix(rows, rank, lo, hi) * int_matrix(rank, cols, lo, hi);
  }

  Matrix orthogonal(Index n) {
    if (n == 0) return Matrix(0, 0);
    Eigen::HouseholderQR<Matrix> qr(normal_matrix(n, n));
    return qr.householderQ() * Matrix::Identity(n, n);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> nd_;
};

inline RMatrix to_rational(const Matrix& m) {
  RMatrix out(static_cast<std::size_t>(m.rows()), std::vector<Rational>(static_cast<std::size_t>(m.cols())));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      // Exact conversion of the binary value.
      int exp = 0;
      const double mant = std::frexp(v, &exp);
      const auto scaled = static_cast<long long>(std::ldexp(mant, 53));
      Rational r(scaled);
      const int shift = exp - 53;
      if (shift >= 0)
        r *= Rational(boost::multiprecision::cpp_int(1) << shift);
      else
        r /= Rational(boost::multiprecision::cpp_int(1) << -shift);
      out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = r;
    }
  return out;
}

/// Reduced row echelon form over the rationals; returns pivot columns.
inline std::vector<std::size_t> rref(RMatrix& a) {
  std::vector<std::size_t> pivots;
  if (a.empty()) return pivots;
  const std::size_t rows = a.size(), cols = a[0].size();
  std::size_t r = 0;
  for (std::size_t c = 0; c < cols && r < rows; ++c) {
    std::size_t piv = r;
    while (piv < rows && a[piv][c] == 0) ++piv;
    if (piv == rows) continue;
    std::swap(a[r], a[piv]);
    const Rational inv = 1 / a[r][c];
    for (auto& v : a[r]) v *= inv;
    for (std::size_t i = 0; i < rows; ++i) {
      if (i == r || a[i][c] == 0) continue;
      const Rational f = a[i][c];
      for (std::size_t j = c; j < cols; ++j) a[i][j] -= f * a[r][j];
    }
    pivots.push_back(c);
    ++r;
  }
  return pivots;
}

inline Index exact_rank(const Matrix& m) {
  RMatrix a = to_rational(m);
  return static_cast<Index>(rref(a).size());
}

inline RMatrix rmul(const RMatrix& a, const RMatrix& b) {
  const std::size_t n = a.size(), k = b.size(), p = b.empty() ? 0 : b[0].size();
  RMatrix out(n, std::vector<Rational>(p));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      if (a[i][l] == 0) continue;
      for (std::size_t j = 0; j < p; ++j) out[i][j] += a[i][l] * b[l][j];
    }
  return out;
}

inline RMatrix rtranspose(const RMatrix& a, std::size_t cols) {
  RMatrix out(cols, std::vector<Rational>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j][i] = a[i][j];
  return out;
}

inline RMatrix rinverse(RMatrix a) {
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    a[i].resize(2 * n);
    a[i][n + i] = 1;
  }
  rref(a);
  RMatrix out(n, std::vector<Rational>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i][j] = a[i][n + j];
  return out;
}

/// Exact Moore-Penrose inverse via a full-rank factorization M = F G:
/// M^+ = G^T (G G^T)^{-1} (F^T F)^{-1} F^T.
inline Matrix exact_pinv(const Matrix& m) {
  const std::size_t rows = static_cast<std::size_t>(m.rows()), cols = static_cast<std::size_t>(m.cols());
  RMatrix a = to_rational(m);
  RMatrix r = a;
  const std::vector<std::size_t> piv = rref(r);
  const std::size_t k = piv.size();
  if (k == 0) return Matrix::Zero(m.cols(), m.rows());
  RMatrix F(rows, std::vector<Rational>(k));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < k; ++j) F[i][j] = a[i][piv[j]];
  RMatrix G(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(k));
  const RMatrix Ft = rtranspose(F, k), Gt = rtranspose(G, cols);
  const RMatrix out = rmul(rmul(Gt, rinverse(rmul(G, Gt))), rmul(rinverse(rmul(Ft, F)), Ft));
  Matrix res(m.cols(), m.rows());
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t j = 0; j < rows; ++j) res(static_cast<Index>(i), static_cast<Index>(j)) = out[i][j].convert_to<double>();
  return res;
}

struct DescriptorShape {
  int max_m = 6, max_n = 6, max_lpr = 3;
};

/// Random descriptor system with small integer entries and a rank-deficient E.
inline DescriptorSystem random_descriptor(Gen& g, DescriptorShape shape = {}) {
  const Index m = g.uniform_int(2, shape.max_m);
  const Index n = g.uniform_int(2, shape.max_n);
  const Index l = g.uniform_int(1, shape.max_lpr);
  const Index p = g.uniform_int(1, shape.max_lpr);
  const Index r = g.uniform_int(1, shape.max_lpr);
  const Index re = g.uniform_int(1, static_cast<int>(std::min(m, n)));
  DescriptorSystem sys;
  sys.E = g.coin(0.5) ? g.low_rank_int(m, n, re, -1, 1) : g.sparse_int_matrix(m, n, -2, 2, 0.6);
  sys.A = g.sparse_int_matrix(m, n, -3, 3, 0.5);
  sys.B = g.sparse_int_matrix(m, l, -2, 2, 0.6);
  sys.C = g.sparse_int_matrix(p, n, -2, 2, 0.5);
  sys.K = g.sparse_int_matrix(r, n, -2, 2, 0.4);
  sys.name = "random";
  return sys;
}

/// Square or rectangular descriptor system whose finite dynamics are shifted
/// into the left half-plane: A = A0 - 3 E0.
inline DescriptorSystem random_damped_descriptor(Gen& g, DescriptorShape shape = {}) {
  DescriptorSystem sys = random_descriptor(g, shape);
  sys.A = sys.A - 3.0 * sys.E;
  return sys;
}

/// State-space system (E = I) with an optional hidden mode: the last state
/// is not seen by C and evolves with rate `hidden`.
inline DescriptorSystem random_state_space(Gen& g, Index n, Index p, Index r, double hidden, bool mix) {
  DescriptorSystem sys;
  sys.E = Matrix::Identity(n, n);
  sys.A = g.int_matrix(n, n, -2, 2) - 3.0 * Matrix::Identity(n, n);
  sys.A.row(n - 1).setZero();
  sys.A.col(n - 1).setZero();
  sys.A(n - 1, n - 1) = hidden;
  sys.B = g.int_matrix(n, 1, -1, 1);
  sys.C = g.int_matrix(p, n, -2, 2);
  sys.C.col(n - 1).setZero();
  sys.K = g.int_matrix(r, n, -2, 2);
  if (mix) {
    const Matrix Q = g.orthogonal(n);
    sys.E = Q.transpose() * sys.E * Q;
    sys.A = Q.transpose() * sys.A * Q;
    sys.B = Q.transpose() * sys.B;
    sys.C = sys.C * Q;
    sys.K = sys.K * Q;
  }
  sys.name = "state-space";
  return sys;
}

/// Random system with q >= 1 for which both rank conditions hold and
/// G = [E11; A21] has full row rank, so every input yields consistent
/// dynamics. Mixes damped descriptor draws with state-space systems that
/// carry a stable hidden mode.
inline DescriptorSystem random_synthesizable(Gen& g, DescriptorShape shape = {}) {
  for (int attempt = 0; attempt < 20000; ++attempt) {
    DescriptorSystem sys;
    if (g.coin()) {
      sys = random_damped_descriptor(g, shape);
    } else {
      const Index n = g.uniform_int(2, shape.max_n);
      sys = random_state_space(g, n, g.uniform_int(1, shape.max_lpr), g.uniform_int(1, shape.max_lpr),
                               -g.uniform(0.5, 2.0), g.coin());
    }
    const PipelineFront f = reduce_system(sys, TolerancePolicy{});
    if (f.split.q == 0) continue;
    const ExistenceReport rep = check_reduced(f);
    if (!rep.h1 || !rep.h2.value_or(false)) continue;
    Matrix G(f.red.E11.rows() + f.red.A21.rows(), f.red.nk());
    G << f.red.E11, f.red.A21;
    if (f.tol.rank_of(G) < G.rows()) continue;
    return sys;
  }
  throw std::runtime_error("no synthesizable system drawn");
}

// Appends a decoupled mode x' = hidden * x that C cannot see but K reads.
inline DescriptorSystem with_hidden_mode(Gen& g, const DescriptorSystem& sys, double hidden) {
  const Index m = sys.m(), n = sys.n();
  DescriptorSystem out;
  out.E = Matrix::Zero(m + 1, n + 1);
  out.A = Matrix::Zero(m + 1, n + 1);
  out.E.topLeftCorner(m, n) = sys.E;
  out.A.topLeftCorner(m, n) = sys.A;
  out.E(m, n) = 1.0;
  out.A(m, n) = hidden;
  out.B = Matrix::Zero(m + 1, sys.l());
  out.B.topRows(m) = sys.B;
  out.C = Matrix::Zero(sys.p(), n + 1);
  out.C.leftCols(n) = sys.C;
  out.K = Matrix::Zero(sys.r(), n + 1);
  out.K.leftCols(n) = sys.K;
  out.K.col(n) = g.int_matrix(sys.r(), 1, -2, 2);
  out.K(0, n) = g.coin() ? 1.0 : -1.0;
  out.name = "hidden";
  return out;
}

// Omega1(lambda) assembled from the blocks, independent of the library.
inline CMatrix omega1_oracle(const ReducedSystem& red, const Matrix& S11, Complex lambda) {
  const Index nk = red.nk(), m1 = red.E11.rows(), c = red.C11.rows(), q = S11.rows();
  CMatrix o = CMatrix::Zero(m1 + 2 * c + q, 2 * nk);
  o.topLeftCorner(m1, nk) = red.E11.cast<Complex>();
  o.topRightCorner(m1, nk) = red.A11.cast<Complex>();
  o.block(m1, 0, c, nk) = red.C11.cast<Complex>();
  o.block(m1 + c, nk, c, nk) = red.C11.cast<Complex>();
  o.bottomLeftCorner(q, nk) = S11.cast<Complex>();
  o.bottomRightCorner(q, nk) = lambda * S11.cast<Complex>();
  return o;
}

// Distance of Omega1(lambda) from rank < rank Gamma1.
inline double drop_measure(const ReducedSystem& red, const Matrix& S11, Index rank_gamma1, Complex lambda) {
  if (rank_gamma1 == 0) return 1.0;
  Eigen::JacobiSVD<CMatrix> svd(omega1_oracle(red, S11, lambda));
  const Vector s = svd.singularValues();
  return rank_gamma1 - 1 < s.size() ? s(rank_gamma1 - 1) : 0.0;
}

struct GridHit {
  bool found = false;
  Complex lambda;
  double value = 0;
};

// Shrinking compass search for a minimum of the drop measure on Re >= 0.
inline std::pair<Complex, double> compass(const ReducedSystem& red, const Matrix& S11, Index rank_gamma1, Complex z,
                                   double f, double stop_below, int max_evals) {
  double step = 0.25;
  int evals = 0;
  while (step > 1e-12 && f > stop_below && evals < max_evals) {
    bool moved = false;
    for (const Complex d : {Complex(step, 0), Complex(-step, 0), Complex(0, step), Complex(0, -step)}) {
      Complex w = z + d;
      if (w.real() < 0) w = Complex(0.0, w.imag());
      const double fw = drop_measure(red, S11, rank_gamma1, w);
      ++evals;
      if (fw < f) {
        f = fw;
        z = w;
        moved = true;
      }
    }
    if (!moved) step *= 0.5;
  }
  return {z, f};
}

// Brute-force scan of Re >= 0 on [0, 5] x [-5, 5], refined around the
// smallest grid values; a hit is then polished to locate the drop.
inline GridHit grid_oracle(const ReducedSystem& red, const Matrix& S11, Index rank_gamma1) {
  const int N = 40;
  struct Pt {
    double f;
    Complex z;
  };
  std::vector<Pt> pts;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const Complex z(5.0 * i / (N - 1), -5.0 + 10.0 * j / (N - 1));
      pts.push_back({drop_measure(red, S11, rank_gamma1, z), z});
    }
  std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) { return a.f < b.f; });
  const double scale = 1.0 + red.E11.norm() + red.A11.norm() + red.C11.norm();
  const double hit_level = 1e-7 * scale;
  GridHit best;
  best.value = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < std::min<std::size_t>(6, pts.size()) && best.value > hit_level; ++s) {
    const auto [z, f] = compass(red, S11, rank_gamma1, pts[s].z, pts[s].f, hit_level, 600);
    if (f < best.value) {
      best.value = f;
      best.lambda = z;
    }
  }
  best.found = best.value <= hit_level;
  if (best.found) std::tie(best.lambda, best.value) = compass(red, S11, rank_gamma1, best.lambda, best.value, 0.0, 2000);
  return best;
}

}  // namespace fobs::testing
