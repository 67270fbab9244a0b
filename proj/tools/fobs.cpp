// fobs: existence check, synthesis, simulation and verification of
// functional observers for descriptor systems.
//
// Exit codes: 0 ok, 1 input error, 2 condition or certificate failure,
// 3 simulation infeasibility.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fobs/io.hpp"
#include "fobs/simulation.hpp"
#include "fobs/synthesis.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kConditionFailure = 2;
constexpr int kInfeasible = 3;

constexpr const char* kCaveat =
    "note: the conditions are sufficient only; failing them does not rule out a functional observer";

struct Common {
  std::string system_path;
  std::optional<double> tol_rank;
  double residual_tol = 1e-8;
  double stability_margin = 0.0;

  fobs::TolerancePolicy policy() const {
    fobs::TolerancePolicy tol;
    tol.rank_tol_override = tol_rank;
    tol.residual_tol = residual_tol;
    tol.stability_margin = stability_margin;
    tol.validate();
    return tol;
  }
};

std::vector<double> parse_csv(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw fobs::Error(fobs::ErrorCode::ParseError, flag + ": cannot parse \"" + item + "\" as a number");
    }
  }
  if (out.empty()) throw fobs::Error(fobs::ErrorCode::ParseError, flag + ": empty list");
  return out;
}

fobs::Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const fobs::Vector>(v.data(), static_cast<fobs::Index>(v.size()));
}

std::string format_complex(const fobs::Complex& z) {
  std::ostringstream os;
  os << z.real();
  if (z.imag() != 0.0) os << (z.imag() > 0 ? "+" : "-") << std::abs(z.imag()) << "i";
  return os.str();
}

std::string format_vector(const fobs::Vector& v) {
  std::ostringstream os;
  os << "[";
  for (fobs::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << "]";
  return os.str();
}

int exit_code_for(const fobs::Error& e) {
  using fobs::ErrorCode;
  switch (e.code()) {
    case ErrorCode::H1Failed:
    case ErrorCode::H2Failed:
    case ErrorCode::NotDetectable:
    case ErrorCode::ResidualTooLarge:
      return kConditionFailure;
    case ErrorCode::InconsistentDynamics:
    case ErrorCode::Infeasible:
      return kInfeasible;
    default:
      return kInputError;
  }
}

int cmd_check(const Common& c, bool full) {
  const fobs::DescriptorSystem sys = fobs::load_system(c.system_path);
  const fobs::TolerancePolicy tol = c.policy();
  const fobs::ExistenceReport rep = full ? fobs::check_full_conditions(sys, tol) : fobs::check_conditions(sys, tol);

  const std::string h2 = rep.h2 ? (*rep.h2 ? "pass" : "fail") : "n/a";
  std::cout << "H1: " << (rep.h1 ? "pass" : "fail") << ", H2: " << h2 << ", order q = " << rep.q << "\n";
  if (rep.static_case) std::cout << "static observer: z is a static map of [u; y]\n";
  std::cout << "rank Gamma1 = " << rep.rank_Gamma1 << ", rank Psi1 = " << rep.rank_Psi1 << "\n";
  if (rep.unstable_witness) std::cout << "witness lambda = " << format_complex(*rep.unstable_witness) << "\n";
  if (full && rep.rho_bookkeeping) {
    const auto& bk = *rep.rho_bookkeeping;
    std::cout << "full: H1: " << (*rep.full_h1 ? "pass" : "fail") << ", H2 at candidates: "
              << (*rep.full_h2 ? "pass" : "fail") << "\n";
    std::cout << "rho = " << bk.rho << " (rho1 = " << bk.rho1 << ", rho2 = " << bk.rho2 << ")\n";
    std::cout << "rank Gamma = " << bk.rank_Gamma << ", rank Psi = " << bk.rank_Psi << "\n";
    for (const auto& s : bk.samples)
      std::cout << "  lambda = " << format_complex(s.lambda) << ": rank Omega = " << s.rank_Omega
                << ", rank Omega1 = " << s.rank_Omega1 << "\n";
    std::cout << "rank identities: " << (bk.identities_hold ? "hold" : "violated") << "\n";
  }
  const bool ok = rep.static_case || (rep.h1 && rep.h2.value_or(false));
  if (!ok) {
    std::cout << kCaveat << "\n";
    return kConditionFailure;
  }
  return kOk;
}

int cmd_synthesize(const Common& c, const std::string& poles, const std::string& out) {
  const fobs::DescriptorSystem sys = fobs::load_system(c.system_path);
  fobs::SynthesisOptions opts;
  if (!poles.empty()) opts.place_poles = parse_csv(poles, "--place-poles");
  fobs::ObserverRealization obs;
  try {
    obs = fobs::synthesize(sys, c.policy(), opts);
  } catch (const fobs::Error& e) {
    if (e.code() == fobs::ErrorCode::H1Failed || e.code() == fobs::ErrorCode::H2Failed) {
      std::cout << (e.code() == fobs::ErrorCode::H1Failed ? "H1: fail" : "H1: pass, H2: fail") << "\n";
      std::cerr << e.what() << "\n";
      std::cout << kCaveat << "\n";
      return kConditionFailure;
    }
    throw;
  }
  fobs::save_observer(obs, out);
  std::cout << "order q = " << obs.q << (obs.static_case ? " (static)" : "") << "\n";
  std::cout << "eigs_N:";
  for (const auto& z : obs.certificates.eigs_N) std::cout << " " << format_complex(z);
  std::cout << "\n";
  std::cout << "residual_a = " << obs.certificates.residual_a << ", residual_b = " << obs.certificates.residual_b
            << "\n";
  std::cout << "wrote " << out << "\n";
  return kOk;
}

struct SimulateArgs {
  std::string observer_path;
  double horizon = 10.0;
  double dt = 1e-3;
  bool matched = false;
  std::string ic, ic_full, w0, zhat0, input, out;
};

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  const fobs::DescriptorSystem sys = fobs::load_system(c.system_path);
  const fobs::ObserverRealization obs = fobs::load_observer(a.observer_path);
  if (!(obs.dims == fobs::dims_of(sys)))
    throw fobs::Error(fobs::ErrorCode::DimensionMismatch, "observer was built for a system of different dimensions");
  const fobs::PipelineFront f = fobs::reduce_system(sys, obs.tolerance);
  if (f.split.q != obs.q)
    throw fobs::Error(fobs::ErrorCode::DimensionMismatch, "observer order " + std::to_string(obs.q) +
                                                              " does not match the system (q = " +
                                                              std::to_string(f.split.q) + ")");

  fobs::SimulationConfig cfg;
  cfg.t_end = a.horizon;
  cfg.dt = a.dt;
  cfg.u = a.input.empty() ? fobs::Signal::zero(sys.l()) : fobs::parse_signal(a.input);
  if (!a.ic.empty() && !a.ic_full.empty())
    throw fobs::Error(fobs::ErrorCode::ParseError, "--ic and --ic-full are exclusive");
  if (!a.ic.empty()) {
    cfg.x_k0 = to_vector(parse_csv(a.ic, "--ic"));
  } else if (!a.ic_full.empty()) {
    const fobs::Vector x = to_vector(parse_csv(a.ic_full, "--ic-full"));
    if (x.size() != sys.n()) throw fobs::Error(fobs::ErrorCode::DimensionMismatch, "--ic-full needs n entries");
    cfg.x_k0 = (f.dec.V.transpose() * x).head(f.red.nk());
  } else {
    cfg.x_k0 = fobs::Vector::Zero(f.red.nk());
  }
  if (cfg.x_k0.size() != f.red.nk())
    throw fobs::Error(fobs::ErrorCode::DimensionMismatch,
                      "--ic needs " + std::to_string(f.red.nk()) + " entries (reduced semistate)");
  cfg.x_k0 = fobs::project_initial_condition(f.red, cfg.x_k0, cfg.u.value(0.0));
  cfg.project_ic = false;

  if (!a.w0.empty() && !a.zhat0.empty())
    throw fobs::Error(fobs::ErrorCode::ParseError, "--w0 and --zhat0 are exclusive");
  if (!a.w0.empty()) {
    cfg.w0 = to_vector(parse_csv(a.w0, "--w0"));
  } else if (!a.zhat0.empty()) {
    const fobs::Vector zhat0 = to_vector(parse_csv(a.zhat0, "--zhat0"));
    if (zhat0.size() != sys.r()) throw fobs::Error(fobs::ErrorCode::DimensionMismatch, "--zhat0 needs r entries");
    fobs::Vector uy(sys.l() + sys.p());
    uy << cfg.u.value(0.0), f.red.Ck * cfg.x_k0;
    cfg.w0 = fobs::pinv(obs.R) * (zhat0 - obs.M * uy);
  } else {
    cfg.w0 = fobs::Vector::Zero(obs.q);
  }
  if (a.matched) cfg.w0 = fobs::matched_observer_state(obs, f.red, cfg.x_k0);

  const fobs::SimulationResult res = fobs::simulate(f.red, f.split, obs, cfg);
  double max_constraint = 0.0;
  for (double v : res.constraint_residual) max_constraint = std::max(max_constraint, v);
  std::cout << "projected x_k(0) = " << format_vector(res.x_k0_used) << "\n";
  std::cout << "w(0) = " << format_vector(cfg.w0) << "\n";
  std::cout << "converged: " << (res.converged ? "true" : "false") << "\n";
  std::cout << "final |e| = " << res.e.back().norm() << "\n";
  std::cout << "max |e| = " << res.max_matched_error << "\n";
  std::cout << "max constraint residual = " << max_constraint << (res.constraint_ok ? "" : " (flagged)") << "\n";
  if (a.matched) std::cout << "matched initialization: max |e| = " << res.max_matched_error << "\n";
  if (!a.out.empty()) {
    fobs::save_trajectory_csv(res, a.out);
    std::cout << "wrote " << a.out << "\n";
  }
  return kOk;
}

int cmd_verify(const Common& c, const std::string& observer_path) {
  const fobs::DescriptorSystem sys = fobs::load_system(c.system_path);
  const fobs::ObserverRealization obs = fobs::load_observer(observer_path);
  if (!(obs.dims == fobs::dims_of(sys)))
    throw fobs::Error(fobs::ErrorCode::DimensionMismatch, "observer was built for a system of different dimensions");
  fobs::TolerancePolicy tol = obs.tolerance;
  if (c.tol_rank) tol.rank_tol_override = c.tol_rank;
  tol.residual_tol = c.residual_tol;
  const fobs::PipelineFront f = fobs::reduce_system(sys, tol);

  std::vector<std::string> failed;
  if (f.split.q != obs.q) {
    failed.push_back("order mismatch: system needs q = " + std::to_string(f.split.q));
  } else {
    const auto& cert = obs.certificates;
    const fobs::Index q = obs.q;
    const fobs::Index c_rows = f.red.C11.rows();
    const bool shapes_ok = cert.T.rows() == q && cert.T.cols() == f.red.m1() && cert.Mbar.rows() == q &&
                           cert.Mbar.cols() == c_rows && cert.Q.rows() == q && cert.Q.cols() == c_rows;
    if (!shapes_ok) {
      failed.push_back("certificate shapes do not match the reduced system");
    } else {
      const auto [ra, rb] = fobs::parameter_residuals(f.red, f.split, cert.T, cert.Mbar, cert.Q, obs.N);
      std::cout << "residual_a = " << ra << ", residual_b = " << rb << "\n";
      if (!(ra <= tol.residual_tol)) failed.push_back("residual_a too large");
      if (!(rb <= tol.residual_tol)) failed.push_back("residual_b too large");

      fobs::ObserverParameters params{cert.T, cert.Mbar, cert.Q, obs.N, cert.Z};
      const fobs::ObserverRealization rebuilt = fobs::assemble(f.red, f.split, params, obs.dims);
      const double scale = 1.0 + rebuilt.H.norm() + rebuilt.M.norm() + rebuilt.R.norm();
      const double mismatch = (rebuilt.H - obs.H).norm() + (rebuilt.M - obs.M).norm() + (rebuilt.R - obs.R).norm();
      if (!(mismatch <= 1e-8 * scale)) failed.push_back("H, R, M inconsistent with the certificates");
      if (!((obs.N * cert.Mbar - cert.Q - cert.L).norm() <= 1e-8 * (1.0 + cert.L.norm())))
        failed.push_back("L != N Mbar - Q");
    }
    if (q > 0) {
      const double worst = fobs::max_real_part(fobs::eigenvalues(obs.N));
      std::cout << "max Re eig(N) = " << worst << "\n";
      if (!(worst < -tol.stability_margin)) failed.push_back("N not Hurwitz");
      if (!fobs::verify_condition_b_certificate(obs)) failed.push_back("rank O(N, R) != rank R");
    }
  }
  if (failed.empty()) {
    std::cout << "all certificates pass\n";
    return kOk;
  }
  for (const auto& msg : failed) std::cout << "FAILED: " << msg << "\n";
  return kConditionFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Functional observers for linear descriptor systems"};
  app.require_subcommand(1);
  Common common;
  bool full = false;
  std::string poles, out_observer = "observer.json", verify_observer;
  SimulateArgs sim;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("system", common.system_path, "system file (JSON)")->required();
    sub->add_option("--tol-rank", common.tol_rank, "absolute rank threshold (overrides the scaled default)");
    sub->add_option("--residual-tol", common.residual_tol, "normalized residual tolerance")->capture_default_str();
    sub->add_option("--stability-margin", common.stability_margin, "required decay margin")->capture_default_str();
  };

  CLI::App* check = app.add_subcommand("check", "test the existence conditions");
  add_common(check);
  check->add_flag("--full", full, "also run the full-matrix cross-check with rank bookkeeping");

  CLI::App* synth = app.add_subcommand("synthesize", "build an observer and write it with certificates");
  add_common(synth);
  synth->add_option("--place-poles", poles, "comma-separated real poles for N (q <= 3)");
  synth->add_option("--out", out_observer, "observer output file")->capture_default_str();

  CLI::App* simulate = app.add_subcommand("simulate", "co-simulate plant and observer");
  add_common(simulate);
  simulate->add_option("observer", sim.observer_path, "observer file")->required();
  simulate->add_option("--horizon", sim.horizon, "final time")->capture_default_str();
  simulate->add_option("--dt", sim.dt, "RK4 step")->capture_default_str();
  simulate->add_flag("--matched-init", sim.matched, "start the observer on the exact internal match");
  simulate->add_option("--ic", sim.ic, "reduced semistate x_k(0), comma separated");
  simulate->add_option("--ic-full", sim.ic_full, "original semistate x(0), mapped into x_k coordinates");
  simulate->add_option("--w0", sim.w0, "observer state w(0), comma separated");
  simulate->add_option("--zhat0", sim.zhat0, "initial estimate zhat(0); sets w(0) by least squares");
  simulate->add_option("--input", sim.input, "input signal, e.g. \"sin(1*t),exp(1*t)\"");
  simulate->add_option("--out", sim.out, "CSV trajectory output");

  CLI::App* verify = app.add_subcommand("verify", "re-check an observer's certificates from scratch");
  add_common(verify);
  verify->add_option("observer", verify_observer, "observer file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    if (*check) return cmd_check(common, full);
    if (*synth) return cmd_synthesize(common, poles, out_observer);
    if (*simulate) return cmd_simulate(common, sim);
    if (*verify) return cmd_verify(common, verify_observer);
  } catch (const fobs::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
