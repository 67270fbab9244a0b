#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "fobs/simulation.hpp"
#include "fobs/synthesis.hpp"
#include "support.hpp"

using namespace fobs;
using fobs::testing::Gen;
using fobs::testing::rows;

namespace {

// Reduced blocks written out by hand in the reference coordinates.
ReducedSystem hand_reduced_example2() {
  ReducedSystem red;
  red.E11 = rows({{0, 1}});
  red.A11 = rows({{0, -1}});
  red.B11 = rows({{0}});
  red.B21 = rows({{1}});
  red.A21 = rows({{-1, 0}});
  red.Ck = rows({{0, 0}});
  red.K11 = rows({{1, 1}});
  red.C11 = vstack({&red.A21, &red.Ck});
  return red;
}

// First differential row with the sign that matches the original system:
// x1' = -x1 + u2.
ReducedSystem hand_reduced_example1() {
  ReducedSystem red;
  red.E11 = rows({{-1, 0}});
  red.A11 = rows({{1, 0}});
  red.B11 = rows({{0, -1}});
  red.B21 = rows({{-1, 0}});
  red.A21 = rows({{0, -1}});
  red.Ck = rows({{1, 0}});
  red.K11 = rows({{-1, 0}, {0, 0}});
  red.C11 = vstack({&red.A21, &red.Ck});
  return red;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Integrates the plant alone with step_plant.
Vector integrate(const ReducedSystem& red, Vector x, const Signal& u, const std::optional<Signal>& v, double t_end,
                 double dt) {
  const long steps = std::lround(t_end / dt);
  for (long i = 0; i < steps; ++i) x = step_plant(red, x, static_cast<double>(i) * dt, u, v, dt);
  return x;
}

struct Synthesized {
  DescriptorSystem sys;
  PipelineFront f;
  ObserverRealization obs;
};

Synthesized synthesized(const DescriptorSystem& sys, SynthesisOptions opts = {}) {
  return {sys, reduce_system(sys, TolerancePolicy{}), synthesize(sys, TolerancePolicy{}, opts)};
}

}  // namespace

TEST(Projection, ExampleTwoReferenceInitialState) {
  const ReducedSystem red = hand_reduced_example2();
  const Vector x = project_initial_condition(red, vec({1, 2}), vec({0}));
  EXPECT_LE((x - vec({0, 2})).norm(), 1e-15);
}

TEST(Projection, FeasibleStateUnchanged) {
  const ReducedSystem red = hand_reduced_example2();
  const Vector x0 = vec({0.5, -3});
  EXPECT_LE((project_initial_condition(red, x0, vec({0.5})) - x0).norm(), 1e-15);
}

TEST(Projection, NoAlgebraicRows) {
  ReducedSystem red;
  red.E11 = Matrix::Identity(2, 2);
  red.A11 = -Matrix::Identity(2, 2);
  red.B11 = Matrix::Zero(2, 1);
  red.B21 = Matrix(0, 1);
  red.A21 = Matrix(0, 2);
  red.Ck = rows({{1, 0}});
  red.K11 = rows({{0, 1}});
  red.C11 = red.Ck;
  const Vector x0 = vec({3, 4});
  EXPECT_EQ(project_initial_condition(red, x0, vec({1})), x0);
}

TEST(Projection, InfeasibleAndWrongSize) {
  ReducedSystem red = hand_reduced_example2();
  red.A21 = rows({{0, 0}});
  red.C11 = vstack({&red.A21, &red.Ck});
  try {
    project_initial_condition(red, vec({1, 2}), vec({1}));
    FAIL() << "expected Infeasible";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Infeasible);
  }
  EXPECT_THROW(project_initial_condition(hand_reduced_example2(), vec({1, 2, 3}), vec({0})), Error);
}

TEST(StepPlant, ExampleTwoClosedForm) {
  const ReducedSystem red = hand_reduced_example2();
  const Signal u = parse_signal("sin(1*t)");
  const Vector x = integrate(red, vec({0, 2}), u, std::nullopt, 3.0, 1e-3);
  EXPECT_NEAR(x(0), std::sin(3.0), 1e-10);
  EXPECT_NEAR(x(1), 2.0 * std::exp(-3.0), 1e-10);
}

TEST(StepPlant, ExampleOneClosedForm) {
  const ReducedSystem red = hand_reduced_example1();
  const Signal u = parse_signal("sin(1*t), const(1)");
  // x2 = -u1 and x1' = -x1 + 1.
  const Vector x = integrate(red, vec({3, 0}), u, std::nullopt, 2.0, 1e-3);
  EXPECT_NEAR(x(0), 1.0 + 2.0 * std::exp(-2.0), 1e-10);
  EXPECT_NEAR(x(1), -std::sin(2.0), 1e-10);
}

TEST(StepPlant, PlainOdeStep) {
  ReducedSystem red;
  red.E11 = Matrix::Identity(1, 1);
  red.A11 = rows({{-2}});
  red.B11 = rows({{1}});
  red.B21 = Matrix(0, 1);
  red.A21 = Matrix(0, 1);
  red.Ck = rows({{1}});
  red.K11 = rows({{1}});
  red.C11 = red.Ck;
  // x' = -2x + 1, x(0) = 0.
  const Vector x = integrate(red, vec({0}), parse_signal("const(1)"), std::nullopt, 1.0, 1e-3);
  EXPECT_NEAR(x(0), 0.5 * (1.0 - std::exp(-2.0)), 1e-12);
}

TEST(StepPlant, RungeKuttaOrder) {
  const ReducedSystem red = hand_reduced_example2();
  const Signal u = parse_signal("sin(1*t)");
  const Vector exact = vec({std::sin(2.0), 2.0 * std::exp(-2.0)});
  const double coarse = (integrate(red, vec({0, 2}), u, std::nullopt, 2.0, 0.2) - exact).norm();
  const double fine = (integrate(red, vec({0, 2}), u, std::nullopt, 2.0, 0.1) - exact).norm();
  const double ratio = coarse / fine;
  EXPECT_GE(ratio, 8.0);
  EXPECT_LE(ratio, 24.0);
}

TEST(StepPlant, HiddenConstraintIsInconsistent) {
  // x' = x from the differential row, x = -u from the algebraic row.
  ReducedSystem red;
  red.E11 = rows({{1}});
  red.A11 = rows({{1}});
  red.B11 = rows({{0}});
  red.A21 = rows({{1}});
  red.B21 = rows({{1}});
  red.Ck = Matrix(0, 1);
  red.K11 = rows({{1}});
  red.C11 = red.A21;
  try {
    step_plant(red, vec({0}), 0.0, parse_signal("sin(1*t)"), std::nullopt, 1e-3);
    FAIL() << "expected InconsistentDynamics";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentDynamics);
  }
}

TEST(StepPlant, SignalDimensionsChecked) {
  const ReducedSystem red = hand_reduced_example2();
  EXPECT_THROW(step_plant(red, vec({0, 1}), 0.0, parse_signal("const(1), const(2)"), std::nullopt, 1e-3), Error);
  EXPECT_THROW(step_plant(red, vec({0, 1}), 0.0, parse_signal("const(1)"), parse_signal("const(0)"), 1e-3), Error);
}

TEST(Simulate, ExampleOneStaticObserverIsExact) {
  const Synthesized s = synthesized(fobs::testing::example1());
  ASSERT_EQ(s.obs.q, 0);
  SimulationConfig cfg;
  cfg.u = parse_signal("sin(1*t), exp(-1*t)");
  cfg.x_k0 = vec({1, 2});
  cfg.w0 = Vector(0);
  const SimulationResult r = simulate(s.f.red, s.f.split, s.obs, cfg);
  EXPECT_LE(r.max_matched_error, 1e-10);
  EXPECT_TRUE(r.constraint_ok);
  EXPECT_EQ(r.times.size(), 10001u);
}

TEST(Simulate, ExampleTwoConverges) {
  const Synthesized s = synthesized(fobs::testing::example2());
  SimulationConfig cfg;
  cfg.t_end = 20.0;
  cfg.u = parse_signal("sin(1*t)");
  cfg.x_k0 = (s.f.dec.V.transpose() * vec({2, 0, 1, 0})).head(s.f.red.nk());
  cfg.w0 = vec({3});
  const SimulationResult r = simulate(s.f.red, s.f.split, s.obs, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_TRUE(r.constraint_ok);
  EXPECT_LE(r.e.back().norm(), 1e-4);
  // The projected state is the reference [0; 2]: x3 = u(0) = 0 and x1 = 2.
  const Vector x_full = s.f.dec.V.leftCols(s.f.red.nk()) * r.x_k0_used;
  EXPECT_LE((x_full - vec({2, 0, 0, 0})).norm(), 1e-12);
}

TEST(Simulate, ZeroInputZeroState) {
  const Synthesized s = synthesized(fobs::testing::example2());
  SimulationConfig cfg;
  cfg.t_end = 1.0;
  cfg.u = Signal::zero(1);
  cfg.x_k0 = Vector::Zero(s.f.red.nk());
  cfg.w0 = Vector::Zero(1);
  const SimulationResult r = simulate(s.f.red, s.f.split, s.obs, cfg);
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    EXPECT_EQ(r.x_k[i].norm(), 0.0);
    EXPECT_EQ(r.w[i].norm(), 0.0);
    EXPECT_EQ(r.e[i].norm(), 0.0);
  }
}

TEST(Simulate, ConfigValidation) {
  const Synthesized s = synthesized(fobs::testing::example2());
  SimulationConfig cfg;
  cfg.u = parse_signal("sin(1*t)");
  cfg.x_k0 = Vector::Zero(2);
  cfg.w0 = Vector::Zero(2);
  EXPECT_THROW(simulate(s.f.red, s.f.split, s.obs, cfg), Error);
  cfg.w0 = Vector::Zero(1);
  cfg.dt = 20.0;
  EXPECT_THROW(simulate(s.f.red, s.f.split, s.obs, cfg), Error);
}

TEST(Simulate, ErrorFollowsObserverDynamics) {
  Gen g(61);
  std::vector<Synthesized> cases = {synthesized(fobs::testing::example2())};
  for (int i = 0; i < 10; ++i) cases.push_back(synthesized(fobs::testing::random_synthesizable(g)));
  for (const Synthesized& s : cases) {
    const ReducedSystem& red = s.f.red;
    SimulationConfig cfg;
    cfg.t_end = 5.0;
    cfg.u = Signal(std::vector<ScalarSignal>(static_cast<std::size_t>(red.l()), ScalarSignal::sine(1.3)));
    cfg.x_k0 = g.normal_matrix(red.nk(), 1);
    cfg.w0 = g.normal_matrix(s.obs.q, 1);
    const SimulationResult r = simulate(red, s.f.split, s.obs, cfg);
    const Vector e1 = cfg.w0 - s.obs.certificates.T * red.E11 * r.x_k0_used;
    for (double t : {1.0, 2.0, 5.0}) {
      const auto i = static_cast<std::size_t>(std::lround(t / cfg.dt));
      const Vector predicted = s.obs.R * (s.obs.N * t).exp() * e1;
      EXPECT_LE((r.e[i] - predicted).norm(), 1e-5 * predicted.norm() + 1e-12) << s.sys.name << " t = " << t;
    }
  }
}

TEST(Simulate, BehaviorOfOriginalSystem) {
  Gen g(62);
  for (int trial = 0; trial < 10; ++trial) {
    const Synthesized s = synthesized(fobs::testing::random_synthesizable(g));
    const ReducedSystem& red = s.f.red;
    const Index nk = red.nk();
    SimulationConfig cfg;
    cfg.t_end = 2.0;
    cfg.u = Signal(std::vector<ScalarSignal>(static_cast<std::size_t>(red.l()), ScalarSignal::sine(0.7)));
    cfg.x_k0 = g.normal_matrix(nk, 1);
    cfg.w0 = Vector::Zero(s.obs.q);
    const SimulationResult r = simulate(red, s.f.split, s.obs, cfg);
    EXPECT_TRUE(r.constraint_ok);
    const Matrix Vk = s.f.dec.V.leftCols(nk);
    for (std::size_t i = 2; i + 2 < r.times.size(); i += 97) {
      const double t = r.times[i];
      // Five-point stencil.
      const Vector xdot = (r.x_k[i - 2] - 8.0 * r.x_k[i - 1] + 8.0 * r.x_k[i + 1] - r.x_k[i + 2]) / (12.0 * cfg.dt);
      const Vector u = cfg.u.value(t);
      // Differential rows of the reduced system.
      EXPECT_LE((red.E11 * xdot - red.A11 * r.x_k[i] - red.B11 * u).norm(), 1e-6);
      // The lifted semistate x = V [x_k; 0] solves the original equations.
      EXPECT_LE((s.sys.E * Vk * xdot - s.sys.A * Vk * r.x_k[i] - s.sys.B * u).norm(), 1e-6);
      EXPECT_LE((s.sys.K * Vk * r.x_k[i] - r.z[i]).norm(), 1e-12);
    }
  }
}

TEST(Simulate, FreeModeDoesNotChangeTheError) {
  Gen g(63);
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 8; ++trial) {
    const DescriptorSystem sys = fobs::testing::random_synthesizable(g);
    const Synthesized s = synthesized(sys);
    const ReducedSystem& red = s.f.red;
    if (red.m1() + red.m2() >= red.nk()) continue;  // G has no null space
    SimulationConfig cfg;
    cfg.t_end = 3.0;
    cfg.u = Signal(std::vector<ScalarSignal>(static_cast<std::size_t>(red.l()), ScalarSignal::sine(1.0)));
    cfg.x_k0 = g.normal_matrix(red.nk(), 1);
    cfg.w0 = g.normal_matrix(s.obs.q, 1);
    const SimulationResult a = simulate(red, s.f.split, s.obs, cfg);
    std::vector<ScalarSignal> v;
    for (Index i = 0; i < red.nk(); ++i) v.push_back(ScalarSignal::scaled(g.uniform(-2, 2), ScalarSignal::sine(0.5 + i)));
    cfg.free_mode = Signal(v);
    const SimulationResult b = simulate(red, s.f.split, s.obs, cfg);
    double diff = 0.0, moved = 0.0;
    for (std::size_t i = 0; i < a.times.size(); ++i) {
      diff = std::max(diff, (a.e[i] - b.e[i]).norm());
      moved = std::max(moved, (a.x_k[i] - b.x_k[i]).norm());
    }
    EXPECT_LE(diff, 1e-6);
    EXPECT_GT(moved, 1e-3);
    ++checked;
  }
  EXPECT_GE(checked, 3);
}

TEST(MatchedInitialization, ExampleTwo) {
  const Synthesized s = synthesized(fobs::testing::example2());
  SimulationConfig cfg;
  cfg.t_end = 20.0;
  cfg.u = parse_signal("sin(1*t)");
  cfg.x_k0 = (s.f.dec.V.transpose() * vec({2, 0, 1, 0})).head(s.f.red.nk());
  cfg.w0 = vec({0});
  EXPECT_LE(check_matched_initialization(s.f.red, s.f.split, s.obs, cfg), 1e-6);

  // One unit off the matched state: nonzero at t = 0, then decaying.
  const Vector x0 = project_initial_condition(s.f.red, cfg.x_k0, cfg.u.value(0));
  cfg.x_k0 = x0;
  cfg.w0 = matched_observer_state(s.obs, s.f.red, x0) + vec({1});
  const SimulationResult r = simulate(s.f.red, s.f.split, s.obs, cfg);
  EXPECT_GT(r.e.front().norm(), 0.5);
  EXPECT_LT(r.e.back().norm(), 1e-6);
}

TEST(MatchedInitialization, StaticObserver) {
  const Synthesized s = synthesized(fobs::testing::example1());
  SimulationConfig cfg;
  cfg.u = parse_signal("sin(1*t), const(0)");
  cfg.x_k0 = vec({1, 0});
  EXPECT_EQ(check_matched_initialization(s.f.red, s.f.split, s.obs, cfg), 0.0);
  EXPECT_EQ(matched_observer_state(s.obs, s.f.red, cfg.x_k0).size(), 0);
}

TEST(MatchedInitialization, RandomSystems) {
  Gen g(64);
  for (int trial = 0; trial < 10; ++trial) {
    const Synthesized s = synthesized(fobs::testing::random_synthesizable(g));
    SimulationConfig cfg;
    cfg.t_end = 5.0;
    cfg.u = Signal(std::vector<ScalarSignal>(static_cast<std::size_t>(s.f.red.l()), ScalarSignal::sine(1.0)));
    cfg.x_k0 = g.normal_matrix(s.f.red.nk(), 1);
    cfg.w0 = Vector::Zero(s.obs.q);
    EXPECT_LE(check_matched_initialization(s.f.red, s.f.split, s.obs, cfg), 1e-6) << "trial " << trial;
  }
}
