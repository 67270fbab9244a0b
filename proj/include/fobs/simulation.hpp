#pragma once

// Fixed-step RK4 co-simulation of the reduced plant and the observer.
//
// The plant E11 x' = A11 x + B11 u with the algebraic rows A21 x + B21 u = 0
// is integrated through the once-differentiated system
//   G x' = [A11 x + B11 u; -B21 u'],   G = [E11; A21],
// taking x' = G^+ rhs + (I - G^+ G) v with v a user-chosen free mode.

#include <cmath>
#include <optional>
#include <vector>

#include "fobs/observer.hpp"
#include "fobs/reduction.hpp"
#include "fobs/signal.hpp"

namespace fobs {

struct SimulationConfig {
  double t_end = 10.0;
  double dt = 1e-3;
  Vector x_k0;
  Vector w0;
  Signal u;
  std::optional<Signal> free_mode;  // zero when absent
  bool project_ic = true;
};

struct SimulationResult {
  std::vector<double> times;
  std::vector<Vector> x_k, w, z, zhat, e;
  std::vector<double> constraint_residual;
  Vector x_k0_used;  // after projection
  bool converged = false;
  bool constraint_ok = true;  // constraint residual <= 1e-6 throughout
  double max_matched_error = 0.0;  // max_t ||e(t)||
};

inline constexpr double kConstraintTolerance = 1e-6;
inline constexpr double kConsistencyTolerance = 1e-8;
inline constexpr double kConvergenceTolerance = 1e-4;

/// Euclidean-closest point to x_k0 with A21 x + B21 u0 = 0.
inline Vector project_initial_condition(const ReducedSystem& red, const Vector& x_k0, const Vector& u0) {
  if (x_k0.size() != red.nk())
    throw Error(ErrorCode::DimensionMismatch,
                "initial state has " + std::to_string(x_k0.size()) + " entries, expected " + std::to_string(red.nk()));
  if (red.m2() == 0) return x_k0;
  const Vector target = -red.B21 * u0;
  const Matrix pinvA21 = pinv(red.A21);
  const Vector residual = red.A21 * x_k0 - target;
  const Vector corrected = x_k0 - pinvA21 * residual;
  const double miss = (red.A21 * corrected - target).norm();
  if (miss > kConsistencyTolerance * (1.0 + target.norm() + red.A21.norm() * x_k0.norm()))
    throw Error(ErrorCode::Infeasible, "algebraic constraint A21 x = -B21 u(0) has no solution");
  return corrected;
}

/// Derivative map of the reduced plant with the cached pseudo-inverse of G.
class PlantModel {
 public:
  explicit PlantModel(const ReducedSystem& red) : red_(red) {
    G_ = vstack({&red.E11, &red.A21});
    Gpinv_ = pinv(G_);
    null_proj_ = Matrix::Identity(red.nk(), red.nk()) - Gpinv_ * G_;
  }

  Vector derivative(const Vector& x, double t, const Signal& u, const std::optional<Signal>& v) const {
    const Vector ut = u.value(t);
    Vector rhs(G_.rows());
    rhs << red_.A11 * x + red_.B11 * ut, -red_.B21 * u.derivative(t);
    const Vector xdot = Gpinv_ * rhs;
    const double miss = (G_ * xdot - rhs).norm();
    if (miss > kConsistencyTolerance * (1.0 + rhs.norm()))
      throw Error(ErrorCode::InconsistentDynamics,
                  "differentiated constraints are inconsistent at t = " + std::to_string(t) +
                      " (hidden higher-index constraint)");
    if (v) return xdot + null_proj_ * v->value(t);
    return xdot;
  }

  double constraint_residual(const Vector& x, const Vector& u) const {
    if (red_.m2() == 0) return 0.0;
    return (red_.A21 * x + red_.B21 * u).norm();
  }

  const ReducedSystem& reduced() const { return red_; }

 private:
  const ReducedSystem& red_;
  Matrix G_, Gpinv_, null_proj_;
};

inline void check_signal_dims(const ReducedSystem& red, const Signal& u, const std::optional<Signal>& v) {
  if (u.dimension() != red.l())
    throw Error(ErrorCode::DimensionMismatch,
                "input signal has " + std::to_string(u.dimension()) + " components, expected " + std::to_string(red.l()));
  if (v && v->dimension() != red.nk())
    throw Error(ErrorCode::DimensionMismatch, "free-mode signal must have " + std::to_string(red.nk()) + " components");
}

/// One RK4 step of the reduced plant.
inline Vector step_plant(const ReducedSystem& red, const Vector& x_k, double t, const Signal& u,
                         const std::optional<Signal>& v, double dt) {
  check_signal_dims(red, u, v);
  const PlantModel plant(red);
  const Vector k1 = plant.derivative(x_k, t, u, v);
  const Vector k2 = plant.derivative(x_k + 0.5 * dt * k1, t + 0.5 * dt, u, v);
  const Vector k3 = plant.derivative(x_k + 0.5 * dt * k2, t + 0.5 * dt, u, v);
  const Vector k4 = plant.derivative(x_k + dt * k3, t + dt, u, v);
  return x_k + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Co-integrates plant and observer and records z, zhat and the error.
inline SimulationResult simulate(const ReducedSystem& red, const FunctionalSplit& split,
                                 const ObserverRealization& obs, const SimulationConfig& cfg) {
  (void)split;
  check_signal_dims(red, cfg.u, cfg.free_mode);
  if (!(cfg.dt > 0) || !(cfg.t_end > 0) || !(cfg.dt < cfg.t_end))
    throw Error(ErrorCode::PreconditionViolated, "need 0 < dt < t_end");
  if (cfg.w0.size() != obs.q)
    throw Error(ErrorCode::DimensionMismatch,
                "observer initial state has " + std::to_string(cfg.w0.size()) + " entries, expected " +
                    std::to_string(obs.q));
  if (obs.R.rows() != red.r() || obs.M.cols() != red.l() + red.p() || obs.H.cols() != red.l() + red.p())
    throw Error(ErrorCode::DimensionMismatch, "observer does not match the reduced system");

  const Index nk = red.nk();
  const Index q = obs.q;
  const PlantModel plant(red);

  SimulationResult res;
  res.x_k0_used = cfg.project_ic ? project_initial_condition(red, cfg.x_k0, cfg.u.value(0.0)) : cfg.x_k0;
  if (res.x_k0_used.size() != nk) throw Error(ErrorCode::DimensionMismatch, "initial state size");

  auto measured = [&](const Vector& x, double t) {
    Vector uy(red.l() + red.p());
    uy << cfg.u.value(t), red.Ck * x;
    return uy;
  };
  auto derivative = [&](const Vector& s, double t) {
    Vector ds(nk + q);
    const Vector x = s.head(nk);
    ds.head(nk) = plant.derivative(x, t, cfg.u, cfg.free_mode);
    if (q > 0) ds.tail(q) = obs.N * s.tail(q) + obs.H * measured(x, t);
    return ds;
  };
  auto record = [&](const Vector& s, double t) {
    const Vector x = s.head(nk);
    const Vector w = s.tail(q);
    const Vector z = red.K11 * x;
    const Vector zhat = obs.R * w + obs.M * measured(x, t);
    res.times.push_back(t);
    res.x_k.push_back(x);
    res.w.push_back(w);
    res.z.push_back(z);
    res.zhat.push_back(zhat);
    res.e.push_back(zhat - z);
    res.constraint_residual.push_back(plant.constraint_residual(x, cfg.u.value(t)));
  };

  const long steps = std::lround(cfg.t_end / cfg.dt);
  Vector s(nk + q);
  s << res.x_k0_used, cfg.w0;
  record(s, 0.0);
  for (long i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * cfg.dt;
    const double h = cfg.dt;
    const Vector k1 = derivative(s, t);
    const Vector k2 = derivative(s + 0.5 * h * k1, t + 0.5 * h);
    const Vector k3 = derivative(s + 0.5 * h * k2, t + 0.5 * h);
    const Vector k4 = derivative(s + h * k3, t + h);
    s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    record(s, static_cast<double>(i + 1) * cfg.dt);
  }

  const double e0 = res.e.front().norm();
  const double t_tail = 0.9 * res.times.back();
  res.converged = true;
  for (std::size_t i = 0; i < res.times.size(); ++i) {
    const double en = res.e[i].norm();
    res.max_matched_error = std::max(res.max_matched_error, en);
    if (res.times[i] >= t_tail && en > kConvergenceTolerance * (1.0 + e0)) res.converged = false;
    if (res.constraint_residual[i] > kConstraintTolerance) res.constraint_ok = false;
  }
  return res;
}

/// Observer state that zeroes the internal error e1 = w - T E11 x_k.
inline Vector matched_observer_state(const ObserverRealization& obs, const ReducedSystem& red, const Vector& x_k0) {
  if (obs.q == 0) return Vector(0);
  return obs.certificates.T * red.E11 * x_k0;
}

/// Runs with the matched observer initialization and returns max_t ||e(t)||.
inline double check_matched_initialization(const ReducedSystem& red, const FunctionalSplit& split,
                                           const ObserverRealization& obs, const SimulationConfig& cfg) {
  if (obs.q == 0) return 0.0;
  SimulationConfig matched = cfg;
  matched.x_k0 = cfg.project_ic ? project_initial_condition(red, cfg.x_k0, cfg.u.value(0.0)) : cfg.x_k0;
  matched.project_ic = false;
  matched.w0 = matched_observer_state(obs, red, matched.x_k0);
  return simulate(red, split, obs, matched).max_matched_error;
}

}  // namespace fobs
