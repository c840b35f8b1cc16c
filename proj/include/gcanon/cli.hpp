#pragma once

// Subcommand driver: config in, trajectory.csv / diagnostics.csv /
// summary.json out. Exit codes: 0 success, 1 config error, 2 numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gcanon/canonchecks.hpp"
#include "gcanon/config.hpp"
#include "gcanon/diagnostics.hpp"
#include "gcanon/error.hpp"
#include "gcanon/fields.hpp"
#include "gcanon/fullorbit.hpp"
#include "gcanon/gcmotion.hpp"
#include "gcanon/gyrotransform.hpp"

namespace gcanon::cli {

using nlohmann::json;

inline constexpr std::string_view kSubcommands[] = {"fields-check", "orbit",        "gc",          "transform",
                                                    "compare",      "scan",         "action-check", "canon-check"};

inline constexpr std::string_view kTrajectoryHeader =
    "t,rx,ry,rz,vx_or_prx,vy_or_pry,vz_or_prz,phi,p_phi,mu,energy_or_K,constraint_residual";

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : std::string(); }

/// One trajectory.csv row. Full-orbit rows carry v and leave phi, p_phi and
/// constraint_residual empty; guiding-center rows carry p_r'.
struct Row {
  double t = 0.0;
  Vec3 r = Vec3::Zero();
  Vec3 v_or_p = Vec3::Zero();
  std::optional<double> phi, p_phi, mu, energy, residual;
};

inline Row full_row(const FullState& s, const FieldContext& ctx, std::optional<double> energy) {
  Row row{s.t, s.r, s.v, std::nullopt, std::nullopt, std::nullopt, energy, std::nullopt};
  try {
    row.mu = magnetic_moment(to_guiding_center(s, ctx), ctx.species);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoConvergence) throw;
  }
  return row;
}

inline Row gc_row(const GCState& g, const FieldContext& ctx, std::optional<double> K, std::optional<double> residual) {
  return Row{g.t, g.r_gc, g.p_r, g.phi, g.p_phi, magnetic_moment(g, ctx.species), K, residual};
}

/// Tabular output kept in memory until the run finishes.
struct Table {
  std::string header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

struct Outputs {
  std::vector<Row> trajectory;
  std::optional<Table> diagnostics;
  json summary = json::object();
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Config, "cannot write '" + path.string() + "'");
  out << text;
}

inline std::string trajectory_csv(const std::vector<Row>& rows) {
  std::string s(kTrajectoryHeader);
  s += '\n';
  for (const Row& r : rows) {
    s += fmt(r.t);
    for (int i = 0; i < 3; ++i) s += ',' + fmt(r.r(i));
    for (int i = 0; i < 3; ++i) s += ',' + fmt(r.v_or_p(i));
    for (const auto* x : {&r.phi, &r.p_phi, &r.mu, &r.energy, &r.residual}) s += ',' + fmt(*x);
    s += '\n';
  }
  return s;
}

inline std::string table_csv(const Table& t) {
  std::string s = t.header + '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + row[i];
    s += '\n';
  }
  return s;
}

namespace detail {

inline FieldContext context(const RunConfig& c) { return FieldContext{c.field, c.eps, c.species}; }

inline const IntegratorConfig& integrator(const RunConfig& c) {
  if (!(c.integrator.dt > 0.0)) throw Error(ErrorKind::Config, "'integrator' is required for this subcommand");
  return c.integrator;
}

inline FullState initial_full(const RunConfig& c, const FieldContext& ctx) {
  if (c.full_initial) return *c.full_initial;
  if (c.gc_initial) {
    const auto& g = *c.gc_initial;
    return from_guiding_center(make_gc_state(g.r, g.u, g.mu, g.phi, 0.0, ctx), ctx);
  }
  throw Error(ErrorKind::Config, "'initial_state' is required for this subcommand");
}

inline GCState initial_gc(const RunConfig& c, const FieldContext& ctx) {
  if (c.gc_initial) {
    const auto& g = *c.gc_initial;
    return make_gc_state(g.r, g.u, g.mu, g.phi, 0.0, ctx);
  }
  if (c.full_initial) return to_guiding_center(*c.full_initial, ctx);
  throw Error(ErrorKind::Config, "'initial_state' is required for this subcommand");
}

inline double max_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  return m;
}

inline json ledger_json(const ConservationReport& r) {
  json j = json::object();
  if (r.energy_drift) j["energy_drift"] = *r.energy_drift;
  if (r.K_drift) j["K_drift"] = *r.K_drift;
  if (r.p_phi_drift) j["p_phi_drift"] = *r.p_phi_drift;
  if (r.mu_drift) j["mu_drift"] = *r.mu_drift;
  return j;
}

inline std::vector<double> halvings(double dt) { return {dt, dt / 2.0, dt / 4.0}; }

}  // namespace detail

// Subcommands ---------------------------------------------------------------

inline void fields_check(const RunConfig& c, Outputs& out) {
  std::mt19937_64 rng(c.seed);
  ProbeConfig box;
  box.box_lo = Vec3::Constant(-1.0);
  box.box_hi = Vec3::Constant(1.0);
  if (c.probe) box = *c.probe;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec3> points;
  for (int i = 0; i < c.check_points; ++i) {
    Vec3 r;
    for (int d = 0; d < 3; ++d) r(d) = box.box_lo(d) + (box.box_hi(d) - box.box_lo(d)) * unit(rng);
    points.push_back(r);
  }
  const double h = std::max(c.fd_step, 1e-4);
  Table t{"x,y,z,curl_residual_h,curl_residual_h2,electric_residual_h,electric_residual_h2", {}};
  for (const Vec3& r : points) {
    const std::span<const Vec3> one(&r, 1);
    const auto a = consistency_residuals(c.field, one, 0.0, h, c.species.c);
    const auto b = consistency_residuals(c.field, one, 0.0, h / 2.0, c.species.c);
    t.add({fmt(r.x()), fmt(r.y()), fmt(r.z()), fmt(a.curl_residual), fmt(b.curl_residual), fmt(a.electric_residual),
           fmt(b.electric_residual)});
  }
  out.diagnostics = t;
  const auto report = consistency_residuals(c.field, points, 0.0, h, c.species.c);
  out.summary["residual_maxima"] = {{"curl", report.curl_residual}, {"electric", report.electric_residual}};
  out.summary["fd_step"] = h;
  verify_model(c.field, points, 0.0, h, c.species.c);
}

inline void orbit(const RunConfig& c, Outputs& out) {
  const FieldContext ctx = detail::context(c);
  const auto& in = detail::integrator(c);
  const auto traj = integrate_full(detail::initial_full(c, ctx), in.t_end, in.dt, ctx, {in.scheme, in.sample_stride});
  for (std::size_t i = 0; i < traj.size(); ++i) out.trajectory.push_back(full_row(traj.states[i], ctx, traj.energy[i]));
  out.summary["residual_maxima"] = detail::ledger_json(conservation_ledger(traj, ctx));
  out.summary["warnings"] = traj.warnings;
}

inline void gc(const RunConfig& c, Outputs& out) {
  const FieldContext ctx = detail::context(c);
  const auto& in = detail::integrator(c);
  const auto traj = integrate_gc(detail::initial_gc(c, ctx), in.t_end, in.gc_dt.value_or(in.dt), ctx,
                                 {in.sample_stride, 10.0});
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out.trajectory.push_back(gc_row(traj.states[i], ctx, traj.energy[i], traj.constraint_residual[i]));
  }
  json m = detail::ledger_json(conservation_ledger(traj, ctx));
  m["constraint_residual"] = detail::max_of(traj.constraint_residual);
  out.summary["residual_maxima"] = m;
}

inline void transform(const RunConfig& c, Outputs& out) {
  const FieldContext ctx = detail::context(c);
  const FullState s = detail::initial_full(c, ctx);
  const GCState g = to_guiding_center(s, ctx);
  const FullState back = from_guiding_center(g, ctx);
  const FieldSample f = ctx.at(g.r_gc, g.t);
  const auto& sp = ctx.species;
  out.trajectory.push_back(full_row(s, ctx, full_energy(s, ctx)));
  out.trajectory.push_back(gc_row(g, ctx, hamiltonian_K(g, f, sp), canonical_rhs(g, f, sp).constraint_residual.norm()));
  out.trajectory.push_back(full_row(back, ctx, full_energy(back, ctx)));

  Table t{"quantity,value", {}};
  auto put = [&](const std::string& k, double v) { t.add({k, fmt(v)}); };
  put("u", parallel_velocity(g, f));
  put("mu", magnetic_moment(g, sp));
  put("w", perpendicular_speed(g, f, sp));
  put("phi", g.phi);
  put("p_phi", g.p_phi);
  put("larmor_radius", (s.r - g.r_gc).norm());
  put("round_trip_position_error", (back.r - s.r).norm());
  put("round_trip_velocity_error", (back.v - s.v).norm());
  json m = {{"round_trip_position", (back.r - s.r).norm()}, {"round_trip_velocity", (back.v - s.v).norm()}};

  if (c.probe) {
    ProbeOptions opt;
    opt.box_lo = c.probe->box_lo;
    opt.box_hi = c.probe->box_hi;
    opt.speed = c.probe->speed;
    const auto p = single_valuedness_probe(ctx, c.probe->n_states, c.seed, opt);
    put("probe_states", p.n_states);
    put("probe_converged", p.converged);
    put("probe_success_rate", p.success_rate);
    put("probe_same_state_discrepancy", p.same_state_discrepancy);
    put("probe_excursion_discrepancy", p.excursion_discrepancy);
    m["probe_same_state"] = p.same_state_discrepancy;
    m["probe_excursion"] = p.excursion_discrepancy;
    out.summary["probe_success_rate"] = p.success_rate;
    out.summary["probe_failures"] = p.failures;
  }
  out.diagnostics = t;
  out.summary["residual_maxima"] = m;
}

inline void compare(const RunConfig& c, Outputs& out) {
  const FieldContext ctx = detail::context(c);
  const auto& in = detail::integrator(c);
  const FullState s0 = detail::initial_full(c, ctx);
  const double omega = ctx.at(s0.r, s0.t).Omega;
  const double gc_dt = in.gc_dt.value_or(10.0 * in.dt);
  const auto cmp = tracking_comparison(s0, in.t_end, ctx, omega * in.dt, omega * gc_dt);

  const auto traj = integrate_gc(to_guiding_center(s0, ctx), in.t_end, gc_dt, ctx, {in.sample_stride, 10.0});
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out.trajectory.push_back(gc_row(traj.states[i], ctx, traj.energy[i], traj.constraint_residual[i]));
  }
  Table t{"t,gc_rx,gc_ry,gc_rz,avg_rx,avg_ry,avg_rz,error", {}};
  for (std::size_t i = 0; i < cmp.t.size(); ++i) {
    t.add({fmt(cmp.t[i]), fmt(cmp.gc[i].x()), fmt(cmp.gc[i].y()), fmt(cmp.gc[i].z()), fmt(cmp.averaged[i].x()),
           fmt(cmp.averaged[i].y()), fmt(cmp.averaged[i].z()), fmt((cmp.gc[i] - cmp.averaged[i]).norm())});
  }
  out.diagnostics = t;
  out.summary["residual_maxima"] = {{"tracking_error", cmp.max_error},
                                    {"constraint_residual", detail::max_of(traj.constraint_residual)}};
}

inline void scan_cmd(const RunConfig& c, Outputs& out, int jobs) {
  if (!c.scan) throw Error(ErrorKind::Config, "'scan' is required for this subcommand");
  const FieldContext ctx = detail::context(c);
  Scenario sc;
  sc.name = c.scenario;
  sc.model = c.field;
  sc.species = c.species;
  sc.initial = detail::initial_full(c, ctx);
  if (c.integrator.dt > 0.0) sc.t_end = c.integrator.t_end;
  sc.omega_dt = c.scan->omega_dt;
  sc.gc_omega_dt = c.scan->gc_omega_dt;
  sc.gyrophases = c.scan->gyrophases;
  const auto r = scan(c.scan->metric, sc, c.scan->eps_list, jobs);

  Table t{"eps," + std::string(to_string(c.scan->metric)), {}};
  for (std::size_t i = 0; i < r.eps_values.size(); ++i) t.add({fmt(r.eps_values[i]), fmt(r.metric_values[i])});
  out.diagnostics = t;
  const std::string name(to_string(c.scan->metric));
  out.summary["slopes"] = {{name, {{"loglog_slope", r.loglog_slope}, {"slope_stderr", r.slope_stderr}}}};
  out.summary["residual_maxima"] = {{name, *std::max_element(r.metric_values.begin(), r.metric_values.end())}};
  out.summary["eps_list"] = r.eps_values;
}

inline constexpr double kELDelta = 1e-6;

inline void action_check(const RunConfig& c, Outputs& out) {
  const FieldContext ctx = detail::context(c);
  const auto& in = detail::integrator(c);
  const FullState s0 = detail::initial_full(c, ctx);
  const GCState g0 = to_guiding_center(s0, ctx);
  const ActionFn full = [&](std::span<const VectorXd> n, double t0, double dt) { return action_full(n, t0, dt, ctx); };
  const ActionFn gcs = [&](std::span<const VectorXd> n, double t0, double dt) { return action_gc(n, t0, dt, ctx); };

  Table t{"dt,full_el_residual,gc_el_residual,negative_control_el_residual", {}};
  std::vector<double> rf, rg, rn;
  for (double dt : detail::halvings(in.dt)) {
    const auto tf = integrate_full(s0, in.t_end, dt, ctx, {in.scheme, 1});
    const auto nodes = full_action_nodes(tf, ctx);
    rf.push_back(el_residual(full, nodes, s0.t, dt, kELDelta).max_residual);
    const auto tg = integrate_gc(g0, in.t_end, dt, ctx);
    rg.push_back(el_residual(gcs, gc_action_nodes(tg, ctx), g0.t, dt, kELDelta).max_residual);
    rn.push_back(el_residual(full, straight_line_nodes(s0, nodes.size(), dt, ctx), s0.t, dt, kELDelta).max_residual);
    t.add({fmt(dt), fmt(rf.back()), fmt(rg.back()), fmt(rn.back())});
  }
  out.diagnostics = t;
  out.summary["slopes"] = {{"full_el_halving_ratio", rf[1] / rf[2]},
                           {"gc_el_halving_ratio", rg[1] / rg[2]},
                           {"negative_control_halving_ratio", rn[1] / rn[2]}};
  out.summary["residual_maxima"] = {{"full_el", rf.back()}, {"gc_el", rg.back()}, {"negative_control_el", rn.back()}};
}

inline void canon_check(const RunConfig& c, Outputs& out) {
  const FieldContext ctx = detail::context(c);
  const auto& in = detail::integrator(c);
  const GCState g0 = detail::initial_gc(c, ctx);
  const auto sys = gyrokinetic_system(ctx);

  Table t{"dt,hamilton_residual,constraint_residual_path,constraint_residual_drift_form", {}};
  std::vector<double> rh, rc, rd;
  for (double dt : detail::halvings(in.gc_dt.value_or(in.dt))) {
    const auto traj = integrate_gc(g0, in.t_end, dt, ctx);
    const auto a = verify_generalized_canonical(sys, superabundant_series(traj, ctx, VelocitySource::PathDerivative), c.fd_step);
    const auto b = verify_generalized_canonical(sys, superabundant_series(traj, ctx, VelocitySource::DriftForm), c.fd_step);
    rh.push_back(a.hamilton_residual_max);
    rc.push_back(a.constraint_residual_max);
    rd.push_back(b.constraint_residual_max);
    t.add({fmt(dt), fmt(rh.back()), fmt(rc.back()), fmt(rd.back())});
  }
  const FullState s0 = from_guiding_center(g0, ctx);
  Eigen::VectorXd x0(6);
  x0 << s0.r, canonical_momentum(s0, ctx);
  const double symp = symplectic_residual(hybrid_map(ctx, s0.t), x0, c.fd_step).symplectic_residual;

  out.diagnostics = t;
  out.summary["slopes"] = {{"hamilton_halving_ratio", rh[1] / rh[2]}, {"constraint_halving_ratio", rc[1] / rc[2]}};
  out.summary["residual_maxima"] = {{"hamilton", rh.back()},
                                    {"constraint_path", rc.back()},
                                    {"constraint_drift_form", rd.back()},
                                    {"hybrid_map_symplectic", symp}};
}

inline bool known_subcommand(std::string_view s) {
  for (auto k : kSubcommands) {
    if (k == s) return true;
  }
  return false;
}

/// Runs one subcommand and writes its outputs into out_dir. On a numerical
/// failure summary.json is still written with the error.
inline int run(std::string_view subcommand, const std::string& config_path, const std::filesystem::path& out_dir,
               int jobs = 1, bool quiet = false, std::ostream& err = std::cerr) {
  Outputs out;
  out.summary["subcommand"] = std::string(subcommand);
  int status = 0;
  std::optional<RunConfig> cfg;
  try {
    if (!known_subcommand(subcommand)) {
      throw Error(ErrorKind::Config, "unknown subcommand '" + std::string(subcommand) + "'");
    }
    cfg = load_config(config_path);
    out.summary["scenario"] = cfg->scenario;
    out.summary["eps"] = cfg->eps;
    out.summary["seed"] = cfg->seed;
    if (subcommand == "fields-check") fields_check(*cfg, out);
    else if (subcommand == "orbit") orbit(*cfg, out);
    else if (subcommand == "gc") gc(*cfg, out);
    else if (subcommand == "transform") transform(*cfg, out);
    else if (subcommand == "compare") compare(*cfg, out);
    else if (subcommand == "scan") scan_cmd(*cfg, out, jobs);
    else if (subcommand == "action-check") action_check(*cfg, out);
    else if (subcommand == "canon-check") canon_check(*cfg, out);
  } catch (const Error& e) {
    status = e.numerical() ? 2 : 1;
    out.summary["error"] = e.what();
    err << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    status = 1;
    out.summary["error"] = e.what();
    err << "error: " << e.what() << '\n';
  }
  if (!out.summary.contains("scenario")) out.summary["scenario"] = nullptr;
  if (!out.summary.contains("eps")) out.summary["eps"] = nullptr;
  if (!out.summary.contains("slopes")) out.summary["slopes"] = json::object();
  if (!out.summary.contains("residual_maxima")) out.summary["residual_maxima"] = json::object();
  out.summary["exit_status"] = status;

  try {
    std::filesystem::create_directories(out_dir);
    if (!out.trajectory.empty()) write_text(out_dir / "trajectory.csv", trajectory_csv(out.trajectory));
    if (out.diagnostics) write_text(out_dir / "diagnostics.csv", table_csv(*out.diagnostics));
    write_text(out_dir / "summary.json", out.summary.dump(2) + '\n');
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return status == 0 ? 1 : status;
  }
  if (!quiet && status == 0) {
    std::cout << subcommand << ": wrote " << out_dir.string() << '\n';
  }
  return status;
}

}  // namespace gcanon::cli
