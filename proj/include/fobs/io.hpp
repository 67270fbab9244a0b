#pragma once

// JSON system and observer files, CSV trajectories.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fobs/observer.hpp"
#include "fobs/simulation.hpp"

namespace fobs {

using json = nlohmann::json;

namespace detail {

inline Matrix matrix_from_rows(const json& j, const std::string& field, Index rows, Index cols) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, field + ": expected an array of rows");
  if (static_cast<Index>(j.size()) != rows)
    throw Error(ErrorCode::DimensionError,
                field + ": has " + std::to_string(j.size()) + " rows, expected " + std::to_string(rows));
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array()) throw Error(ErrorCode::ParseError, field + ": row " + std::to_string(i) + " is not an array");
    if (static_cast<Index>(row.size()) != cols)
      throw Error(ErrorCode::DimensionError, field + ": row " + std::to_string(i) + " has " +
                                                 std::to_string(row.size()) + " entries, expected " +
                                                 std::to_string(cols));
    for (Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw Error(ErrorCode::ParseError, field + ": non-numeric entry");
      out(i, c) = v.get<double>();
    }
  }
  return out;
}

inline json rows_to_json(const Matrix& m) {
  json out = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    out.push_back(row);
  }
  return out;
}

// Observer matrices carry explicit shape so empty blocks survive.
inline json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Matrix matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw Error(ErrorCode::ParseError, field + ": expected {rows, cols, data}");
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || !data.is_array() || static_cast<Index>(data.size()) != rows * cols)
    throw Error(ErrorCode::DimensionError, field + ": data length does not match rows*cols");
  Matrix out(rows, cols);
  std::size_t k = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index c = 0; c < cols; ++c) out(i, c) = data[k++].get<double>();
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, what + ": " + e.what());
  }
}

}  // namespace detail

inline DescriptorSystem system_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "system file must be an object");
  try {
    for (const char* key : {"m", "n", "l", "p", "r", "E", "A", "B", "C", "K"})
      if (!j.contains(key)) throw Error(ErrorCode::ParseError, std::string("missing field \"") + key + "\"");
    const auto m = j.at("m").get<Index>(), n = j.at("n").get<Index>(), l = j.at("l").get<Index>();
    const auto p = j.at("p").get<Index>(), r = j.at("r").get<Index>();
    if (m < 0 || n < 0 || l < 0 || p < 0 || r < 0) throw Error(ErrorCode::DimensionError, "negative dimension");
    DescriptorSystem sys;
    sys.E = detail::matrix_from_rows(j.at("E"), "E", m, n);
    sys.A = detail::matrix_from_rows(j.at("A"), "A", m, n);
    sys.B = detail::matrix_from_rows(j.at("B"), "B", m, l);
    sys.C = detail::matrix_from_rows(j.at("C"), "C", p, n);
    sys.K = detail::matrix_from_rows(j.at("K"), "K", r, n);
    if (j.contains("name")) sys.name = j.at("name").get<std::string>();
    sys.validate();
    return sys;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

inline json system_to_json(const DescriptorSystem& sys) {
  json j;
  if (!sys.name.empty()) j["name"] = sys.name;
  j["m"] = sys.m();
  j["n"] = sys.n();
  j["l"] = sys.l();
  j["p"] = sys.p();
  j["r"] = sys.r();
  j["E"] = detail::rows_to_json(sys.E);
  j["A"] = detail::rows_to_json(sys.A);
  j["B"] = detail::rows_to_json(sys.B);
  j["C"] = detail::rows_to_json(sys.C);
  j["K"] = detail::rows_to_json(sys.K);
  return j;
}

inline DescriptorSystem load_system(const std::string& path) {
  return system_from_json(detail::parse_json(detail::read_file(path), path));
}

inline void save_system(const DescriptorSystem& sys, const std::string& path) {
  detail::write_file(path, system_to_json(sys).dump(2) + "\n");
}

inline json observer_to_json(const ObserverRealization& obs) {
  using detail::matrix_to_json;
  const auto& c = obs.certificates;
  json eigs = json::array();
  for (const Complex& z : c.eigs_N) eigs.push_back({z.real(), z.imag()});
  json j;
  j["q"] = obs.q;
  j["N"] = matrix_to_json(obs.N);
  j["H"] = matrix_to_json(obs.H);
  j["R"] = matrix_to_json(obs.R);
  j["M"] = matrix_to_json(obs.M);
  j["certificates"] = {{"T", matrix_to_json(c.T)},
                       {"Mbar", matrix_to_json(c.Mbar)},
                       {"Q", matrix_to_json(c.Q)},
                       {"L", matrix_to_json(c.L)},
                       {"Z", matrix_to_json(c.Z)},
                       {"P", matrix_to_json(c.P)},
                       {"residual_a", c.residual_a},
                       {"residual_b", c.residual_b},
                       {"eigs_N", eigs}};
  j["dims"] = {{"m", obs.dims.m}, {"n", obs.dims.n}, {"l", obs.dims.l}, {"p", obs.dims.p}, {"r", obs.dims.r}};
  json tol = {{"residual_tol", obs.tolerance.residual_tol}, {"stability_margin", obs.tolerance.stability_margin}};
  tol["rank_tol_override"] = obs.tolerance.rank_tol_override ? json(*obs.tolerance.rank_tol_override) : json(nullptr);
  j["metadata"] = {{"system_name", obs.system_name},
                   {"tolerance", tol},
                   {"conditions", {{"h1", obs.h1}, {"h2", obs.h2}, {"static_case", obs.static_case}}}};
  return j;
}

inline ObserverRealization observer_from_json(const json& j) {
  using detail::matrix_from_json;
  try {
    ObserverRealization obs;
    obs.q = j.at("q").get<Index>();
    obs.N = matrix_from_json(j.at("N"), "N");
    obs.H = matrix_from_json(j.at("H"), "H");
    obs.R = matrix_from_json(j.at("R"), "R");
    obs.M = matrix_from_json(j.at("M"), "M");
    const json& c = j.at("certificates");
    auto& cert = obs.certificates;
    cert.T = matrix_from_json(c.at("T"), "T");
    cert.Mbar = matrix_from_json(c.at("Mbar"), "Mbar");
    cert.Q = matrix_from_json(c.at("Q"), "Q");
    cert.L = matrix_from_json(c.at("L"), "L");
    cert.Z = matrix_from_json(c.at("Z"), "Z");
    cert.P = matrix_from_json(c.at("P"), "P");
    cert.residual_a = c.at("residual_a").get<double>();
    cert.residual_b = c.at("residual_b").get<double>();
    for (const json& z : c.at("eigs_N")) cert.eigs_N.emplace_back(z.at(0).get<double>(), z.at(1).get<double>());
    const json& d = j.at("dims");
    obs.dims = {d.at("m").get<Index>(), d.at("n").get<Index>(), d.at("l").get<Index>(), d.at("p").get<Index>(),
                d.at("r").get<Index>()};
    if (j.contains("metadata")) {
      const json& meta = j.at("metadata");
      obs.system_name = meta.value("system_name", std::string());
      if (meta.contains("tolerance")) {
        const json& t = meta.at("tolerance");
        obs.tolerance.residual_tol = t.value("residual_tol", obs.tolerance.residual_tol);
        obs.tolerance.stability_margin = t.value("stability_margin", obs.tolerance.stability_margin);
        if (t.contains("rank_tol_override") && !t.at("rank_tol_override").is_null())
          obs.tolerance.rank_tol_override = t.at("rank_tol_override").get<double>();
      }
      if (meta.contains("conditions")) {
        const json& cd = meta.at("conditions");
        obs.h1 = cd.value("h1", true);
        obs.h2 = cd.value("h2", true);
        obs.static_case = cd.value("static_case", false);
      }
    }
    const Index q = obs.q;
    const Index w = obs.dims.l + obs.dims.p;
    if (q < 0 || obs.N.rows() != q || obs.N.cols() != q || obs.H.rows() != q || obs.H.cols() != w ||
        obs.R.rows() != obs.dims.r || obs.R.cols() != q || obs.M.rows() != obs.dims.r || obs.M.cols() != w)
      throw Error(ErrorCode::DimensionError, "observer matrices disagree with the declared order and dimensions");
    return obs;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("observer file: ") + e.what());
  }
}

inline void save_observer(const ObserverRealization& obs, const std::string& path) {
  detail::write_file(path, observer_to_json(obs).dump(2) + "\n");
}

inline ObserverRealization load_observer(const std::string& path) {
  return observer_from_json(detail::parse_json(detail::read_file(path), path));
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trajectory_csv(const SimulationResult& res) {
  const Index r = res.z.empty() ? 0 : res.z.front().size();
  std::string out = "t";
  for (const char* prefix : {"z_", "zhat_", "e_"})
    for (Index i = 1; i <= r; ++i) out += "," + std::string(prefix) + std::to_string(i);
  out += ",constraint_residual\n";
  for (std::size_t k = 0; k < res.times.size(); ++k) {
    out += format_g17(res.times[k]);
    for (const auto* series : {&res.z, &res.zhat, &res.e})
      for (Index i = 0; i < r; ++i) out += "," + format_g17((*series)[k](i));
    out += "," + format_g17(res.constraint_residual[k]) + "\n";
  }
  return out;
}

inline void save_trajectory_csv(const SimulationResult& res, const std::string& path) {
  detail::write_file(path, trajectory_csv(res));
}

}  // namespace fobs
