#pragma once

#include <string>
#include <vector>

#include "fobs/model.hpp"

namespace fobs {

/// Certificates that accompany an observer so it can be re-checked without
/// re-running the synthesis.
struct ObserverCertificates {
  Matrix T, Mbar, Q, L, Z;
  Matrix P;  // Lyapunov certificate: N^T P + P N = -I, P > 0
  double residual_a = 0.0;  // ||T A11 + Q C11 - N S11|| / (||S11|| + 1)
  double residual_b = 0.0;  // ||T E11 + Mbar C11 - S11|| / (||S11|| + 1)
  std::vector<Complex> eigs_N;
};

struct SystemDims {
  Index m = 0, n = 0, l = 0, p = 0, r = 0;
  friend bool operator==(const SystemDims&, const SystemDims&) = default;
};

inline SystemDims dims_of(const DescriptorSystem& sys) { return {sys.m(), sys.n(), sys.l(), sys.p(), sys.r()}; }

/// w' = N w + H [u; y],  zhat = R w + M [u; y].
struct ObserverRealization {
  Index q = 0;
  Matrix N;  // q x q
  Matrix H;  // q x (l + p)
  Matrix R;  // r x q
  Matrix M;  // r x (l + p)
  ObserverCertificates certificates;

  // Metadata.
  SystemDims dims;
  std::string system_name;
  TolerancePolicy tolerance;
  bool h1 = true;
  bool h2 = true;
  bool static_case = false;
};

}  // namespace fobs
