#pragma once

// Run configuration: a JSON document (comments allowed). Every validation
// error names the offending key.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcanon/diagnostics.hpp"
#include "gcanon/error.hpp"
#include "gcanon/fields.hpp"
#include "gcanon/fullorbit.hpp"
#include "gcanon/types.hpp"

namespace gcanon {

struct GCInitial {
  Vec3 r = Vec3::Zero();
  double u = 0.0;
  double mu = 0.0;
  double phi = 0.0;
};

struct IntegratorConfig {
  Scheme scheme = Scheme::RK4;
  double dt = 0.0;
  double t_end = 0.0;
  int sample_stride = 1;
  /// Guiding-center step; defaults to dt.
  std::optional<double> gc_dt;
};

struct ScanConfig {
  std::vector<double> eps_list;
  Metric metric = Metric::MuDrift;
  double omega_dt = 0.05;
  double gc_omega_dt = 0.5;
  int gyrophases = 4;
};

struct ProbeConfig {
  int n_states = 1000;
  double speed = 1.0;
  Vec3 box_lo = Vec3::Zero();
  Vec3 box_hi = Vec3::Constant(2.0 * std::numbers::pi);
};

struct RunConfig {
  std::string scenario = "run";
  Species species{};
  double eps = 0.1;
  FieldModel field;
  std::optional<FullState> full_initial;
  std::optional<GCInitial> gc_initial;
  IntegratorConfig integrator;
  std::optional<ScanConfig> scan;
  std::optional<ProbeConfig> probe;
  std::uint64_t seed = 0;
  double fd_step = 1e-5;
  int check_points = 64;
};

namespace detail {

using nlohmann::json;

[[noreturn]] inline void config_error(const std::string& key, const std::string& why) {
  throw Error(ErrorKind::Config, "'" + key + "' " + why);
}

inline const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) config_error(path + key, "is required");
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) config_error(path, "must be a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) config_error(path, "must be finite");
  return x;
}

inline double number_or(const json& j, const std::string& key, const std::string& path, double fallback) {
  return j.contains(key) ? number(j.at(key), path + key) : fallback;
}

inline double positive(const json& j, const std::string& path) {
  const double x = number(j, path);
  if (!(x > 0.0)) config_error(path, "must be positive");
  return x;
}

inline double positive_or(const json& j, const std::string& key, const std::string& path, double fallback) {
  return j.contains(key) ? positive(j.at(key), path + key) : fallback;
}

inline int integer_or(const json& j, const std::string& key, const std::string& path, int fallback, int min) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) config_error(path + key, "must be an integer");
  const auto x = v.get<long long>();
  if (x < min) config_error(path + key, "must be at least " + std::to_string(min));
  return static_cast<int>(x);
}

inline Vec3 vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) config_error(path, "must be an array of 3 numbers");
  return Vec3(number(j[0], path + "[0]"), number(j[1], path + "[1]"), number(j[2], path + "[2]"));
}

inline FieldModel parse_field(const json& j) {
  const std::string p = "field.";
  if (!j.is_object()) config_error("field", "must be an object");
  const json& kind_j = require(j, "kind", p);
  if (!kind_j.is_string()) config_error("field.kind", "must be a string");
  const auto kind = kind_j.get<std::string>();
  FieldModel m;
  if (kind == "uniform_b") {
    m.geometry = UniformB{number_or(j, "B0", p, 1.0)};
  } else if (kind == "grad_b_slab") {
    m.geometry = GradBSlab{number_or(j, "B0", p, 1.0), positive_or(j, "L", p, 1.0)};
  } else if (kind == "magnetic_mirror") {
    m.geometry = MagneticMirror{number_or(j, "B0", p, 1.0), positive_or(j, "L", p, 1.0)};
  } else if (kind == "screw_pinch") {
    m.geometry = ScrewPinch{number_or(j, "Bz", p, 1.0), number_or(j, "Bp", p, 0.5), positive_or(j, "a", p, 1.0)};
  } else if (kind == "abc") {
    m.geometry = ABCField{number_or(j, "A", p, 1.0), number_or(j, "B", p, 1.0), number_or(j, "C", p, 1.0),
                          positive_or(j, "k", p, 1.0)};
  } else if (kind == "crossed_eb") {
    CrossedEB g;
    g.B0 = number_or(j, "B0", p, 1.0);
    if (j.contains("E")) g.E = vec3(j.at("E"), p + "E");
    m.geometry = g;
  } else {
    config_error("field.kind",
                 "must be one of uniform_b, grad_b_slab, magnetic_mirror, screw_pinch, abc, crossed_eb");
  }
  if (j.contains("E_background")) m.E_background = vec3(j.at("E_background"), p + "E_background");
  return m;
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) config_error("<root>", "must be an object");
  RunConfig c;
  if (j.contains("scenario")) {
    if (!j.at("scenario").is_string()) config_error("scenario", "must be a string");
    c.scenario = j.at("scenario").get<std::string>();
  }
  if (j.contains("species")) {
    const json& s = j.at("species");
    if (!s.is_object()) config_error("species", "must be an object");
    c.species.m = positive_or(s, "m", "species.", 1.0);
    c.species.q = positive_or(s, "q", "species.", 1.0);
    c.species.c = positive_or(s, "c", "species.", 1.0);
  }
  c.eps = number(require(j, "eps", ""), "eps");
  if (!(c.eps > 0.0 && c.eps <= 0.5)) config_error("eps", "must lie in (0, 0.5]");
  c.field = parse_field(require(j, "field", ""));

  if (j.contains("initial_state")) {
    const json& is = j.at("initial_state");
    if (!is.is_object()) config_error("initial_state", "must be an object");
    if (is.contains("full") == is.contains("gc")) {
      config_error("initial_state", "must contain exactly one of 'full' or 'gc'");
    }
    if (is.contains("full")) {
      const json& f = is.at("full");
      FullState s;
      s.r = vec3(require(f, "r", "initial_state.full."), "initial_state.full.r");
      s.v = vec3(require(f, "v", "initial_state.full."), "initial_state.full.v");
      s.t = number_or(f, "t", "initial_state.full.", 0.0);
      c.full_initial = s;
    } else {
      const json& g = is.at("gc");
      GCInitial s;
      s.r = vec3(require(g, "r", "initial_state.gc."), "initial_state.gc.r");
      s.u = number(require(g, "u", "initial_state.gc."), "initial_state.gc.u");
      s.mu = number(require(g, "mu", "initial_state.gc."), "initial_state.gc.mu");
      if (s.mu < 0.0) config_error("initial_state.gc.mu", "must be non-negative");
      s.phi = number_or(g, "phi", "initial_state.gc.", 0.0);
      c.gc_initial = s;
    }
  }

  if (j.contains("integrator")) {
    const json& in = j.at("integrator");
    const std::string p = "integrator.";
    if (!in.is_object()) config_error("integrator", "must be an object");
    if (in.contains("scheme")) {
      const json& sj = in.at("scheme");
      const std::string s = sj.is_string() ? sj.get<std::string>() : std::string();
      if (s == "rk4") c.integrator.scheme = Scheme::RK4;
      else if (s == "boris") c.integrator.scheme = Scheme::Boris;
      else config_error("integrator.scheme", "must be 'rk4' or 'boris'");
    }
    c.integrator.dt = positive(require(in, "dt", p), "integrator.dt");
    c.integrator.t_end = number(require(in, "t_end", p), "integrator.t_end");
    if (!(c.integrator.t_end > c.integrator.dt)) config_error("integrator.t_end", "must exceed integrator.dt");
    c.integrator.sample_stride = integer_or(in, "sample_stride", p, 1, 1);
    if (in.contains("gc_dt")) c.integrator.gc_dt = positive(in.at("gc_dt"), "integrator.gc_dt");
  }

  if (j.contains("scan")) {
    const json& sj = j.at("scan");
    const std::string p = "scan.";
    if (!sj.is_object()) config_error("scan", "must be an object");
    ScanConfig s;
    const json& list = require(sj, "eps_list", p);
    if (!list.is_array() || list.size() < 3) config_error("scan.eps_list", "must be an array of at least 3 numbers");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const double e = positive(list[i], "scan.eps_list[" + std::to_string(i) + "]");
      if (!s.eps_list.empty() && !(e < s.eps_list.back())) config_error("scan.eps_list", "must be strictly decreasing");
      s.eps_list.push_back(e);
    }
    const json& mj = require(sj, "metric", p);
    const auto metric = mj.is_string() ? parse_metric(mj.get<std::string>()) : std::nullopt;
    if (!metric) config_error("scan.metric", "must be one of round_trip, mu_drift, constraint_residual, tracking_error");
    s.metric = *metric;
    s.omega_dt = positive_or(sj, "omega_dt", p, s.omega_dt);
    s.gc_omega_dt = positive_or(sj, "gc_omega_dt", p, s.gc_omega_dt);
    s.gyrophases = integer_or(sj, "gyrophases", p, s.gyrophases, 1);
    c.scan = s;
  }

  if (j.contains("probe")) {
    const json& pj = j.at("probe");
    const std::string p = "probe.";
    if (!pj.is_object()) config_error("probe", "must be an object");
    ProbeConfig pc;
    pc.n_states = integer_or(pj, "n_states", p, pc.n_states, kMinProbeStates);
    pc.speed = positive_or(pj, "speed", p, pc.speed);
    if (pj.contains("box_lo")) pc.box_lo = vec3(pj.at("box_lo"), p + "box_lo");
    if (pj.contains("box_hi")) pc.box_hi = vec3(pj.at("box_hi"), p + "box_hi");
    c.probe = pc;
  }

  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) config_error("seed", "must be a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  c.fd_step = positive_or(j, "fd_step", "", c.fd_step);
  c.check_points = integer_or(j, "check_points", "", c.check_points, 1);
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, std::string("parse error: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace gcanon
