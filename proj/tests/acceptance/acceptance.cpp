#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "gcanon/canonchecks.hpp"
#include "gcanon/diagnostics.hpp"

using namespace gcanon;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

FieldContext make(FieldGeometry g, double eps) {
  FieldModel m;
  m.geometry = g;
  return {m, eps, {}};
}

Outcome golden_orbits() {
  // gyroradius: half the largest chord across one period
  const double eps = 0.01, w = 0.6;
  const auto u = make(UniformB{1.0}, eps);
  const double omega = u.at(Vec3::Zero(), 0).Omega;
  const int n = 2000;
  const double period = 2 * std::numbers::pi / omega;
  const auto traj = integrate_full(FullState{Vec3(0.1, 0.2, 0.0), Vec3(w, 0.0, 0.3), 0.0}, period, period / n, u);
  double diameter = 0.0;
  for (int k = 0; k < n / 2; ++k) {
    const Vec3 d = traj.states[k].r - traj.states[k + n / 2].r;
    diameter = std::max(diameter, std::hypot(d.x(), d.y()));
  }
  const double rho_expected = w * eps / 1.0;
  const double rho_err = std::abs(diameter / 2 / rho_expected - 1.0);

  const double E0 = 0.1;
  const auto x = make(CrossedEB{1.0, Vec3(E0, 0, 0)}, eps);
  const double px = 2 * std::numbers::pi / x.at(Vec3::Zero(), 0).Omega;
  const auto tx = integrate_full(FullState{Vec3::Zero(), Vec3(0.3, 0.2, 0.1), 0.0}, px, px / n, x);
  const Vec3 mean = (tx.states.back().r - tx.states.front().r) / px;
  const double drift_err = std::abs(-mean.y() / E0 - 1.0) + std::abs(mean.x()) / E0;
  return {rho_err < 1e-6 && drift_err < 1e-6,
          fmt("gyroradius rel err %.2e, ExB drift rel err %.2e (tol 1e-6)", rho_err, drift_err)};
}

Outcome round_trip() {
  const auto r = scan(Metric::RoundTrip, mirror_scenario(), default_eps_ladder(), 4);
  return {std::abs(r.loglog_slope - 2.0) <= 0.2,
          fmt("mirror round-trip slope %.3f +- %.3f (want 2 +- 0.2)", r.loglog_slope, r.slope_stderr)};
}

Outcome adiabatic() {
  const auto m = scan(Metric::MuDrift, mirror_scenario(), default_eps_ladder(), 4);
  const auto a = scan(Metric::MuDrift, abc_scenario(), default_eps_ladder(), 4);
  const auto probe = single_valuedness_probe(make(ABCField{1.0, 0.5, 0.5, 1.0}, 0.02), 1000, 20240601);
  const bool ok = m.loglog_slope >= 0.7 && a.loglog_slope >= 0.7 && probe.converged == probe.n_states;
  return {ok, fmt("mu_drift slope mirror %.3f, ABC %.3f (want >= 0.7); ABC probe %d/%d converged, excursion "
                  "discrepancy %.1e",
                  m.loglog_slope, a.loglog_slope, probe.converged, probe.n_states, probe.excursion_discrepancy)};
}

Outcome canonical_gc() {
  const auto ctx = make(MagneticMirror{1.0, 1.0}, 0.01);
  const double dt = 0.005;
  const int steps = 10000;
  const GCState g0 = to_guiding_center(mirror_scenario().initial, ctx);
  const auto traj = integrate_gc(g0, steps * dt, dt, ctx);
  const auto led = conservation_ledger(traj, ctx);

  GCState shifted = g0;
  shifted.phi = wrap_phase(g0.phi + 1.234);
  const auto other = integrate_gc(shifted, steps * dt, dt, ctx);
  bool identical = other.size() == traj.size();
  for (std::size_t i = 0; identical && i < traj.size(); ++i) {
    const auto& a = traj.states[i];
    const auto& b = other.states[i];
    identical = a.r_gc == b.r_gc && a.p_r == b.p_r && a.v_gc == b.v_gc && a.p_phi == b.p_phi &&
                traj.energy[i] == other.energy[i];
    const auto f = ctx.at(a.r_gc, a.t);
    const auto da = canonical_rhs(a, f, ctx.species);
    const auto db = canonical_rhs(b, f, ctx.species);
    identical = identical && da.dr_gc == db.dr_gc && da.dp_r == db.dp_r && da.dphi == db.dphi;
  }
  const bool ok = traj.size() == steps + 1u && *led.p_phi_drift == 0.0 && *led.K_drift < 1e-8 && identical;
  return {ok, fmt("%zu samples; p_phi drift %.1e (want 0), K drift %.2e (want < 1e-8), phase-shifted run %s",
                  traj.size(), *led.p_phi_drift, *led.K_drift, identical ? "bit-identical" : "DIFFERS")};
}

struct C5Result {
  Outcome outcome;
  bool pass = false;
};

C5Result generalized_canonical() {
  const auto ctx = make(MagneticMirror{1.0, 1.0}, 0.05);
  const GCState g0 = to_guiding_center(mirror_scenario().initial, ctx);
  const double omega = ctx.at(g0.r_gc, 0).Omega;
  const auto sys = gyrokinetic_system(ctx);
  std::vector<double> rh, rc;
  for (double odt : {0.05, 0.025}) {
    const auto traj = integrate_gc(g0, 2.0, odt / omega, ctx);
    const auto rep = verify_generalized_canonical(sys, superabundant_series(traj, ctx, VelocitySource::PathDerivative), 1e-5);
    rh.push_back(rep.hamilton_residual_max);
    rc.push_back(rep.constraint_residual_max);
  }
  const double ratio_h = rh[0] / rh[1], ratio_c = rc[0] / rc[1];
  const auto eps_scan = scan(Metric::ConstraintResidual, mirror_scenario(), default_eps_ladder(), 4);
  const bool ok = std::abs(ratio_h - 4.0) <= 1.0 && std::abs(ratio_c - 4.0) <= 1.0 && eps_scan.loglog_slope >= 1.0;
  Outcome o{ok, fmt("dt-halving ratio Hamilton %.3f, constraint %.3f (want 4 +- 1); constraint eps slope %.3f (want >= 1)",
                    ratio_h, ratio_c, eps_scan.loglog_slope)};
  return {o, ok};
}

Outcome tracking() {
  const auto r = scan(Metric::TrackingError, mirror_scenario(), default_eps_ladder(), 4);
  return {std::abs(r.loglog_slope - 1.0) <= 0.3,
          fmt("mirror tracking-error slope %.3f +- %.3f (want 1 +- 0.3)", r.loglog_slope, r.slope_stderr)};
}

Outcome variational() {
  const auto ctx = make(MagneticMirror{1.0, 1.0}, 0.1);
  const FullState s0 = mirror_scenario().initial;
  const GCState g0 = to_guiding_center(s0, ctx);
  const double omega = ctx.at(s0.r, 0).Omega;
  const double T = 20 * 2 * std::numbers::pi / omega;
  const ActionFn full = [&](std::span<const VectorXd> n, double t0, double dt) { return action_full(n, t0, dt, ctx); };
  const ActionFn gca = [&](std::span<const VectorXd> n, double t0, double dt) { return action_gc(n, t0, dt, ctx); };
  std::vector<double> rf, rg, rn;
  for (double odt : {0.05, 0.025}) {
    const double dt = odt / omega;
    const auto nodes = full_action_nodes(integrate_full(s0, T, dt, ctx), ctx);
    rf.push_back(el_residual(full, nodes, 0.0, dt, 1e-6).max_residual);
    rg.push_back(el_residual(gca, gc_action_nodes(integrate_gc(g0, T, dt, ctx), ctx), 0.0, dt, 1e-6).max_residual);
    rn.push_back(el_residual(full, straight_line_nodes(s0, nodes.size(), dt, ctx), 0.0, dt, 1e-6).max_residual);
  }
  const double qf = rf[0] / rf[1], qg = rg[0] / rg[1], qn = rn[0] / rn[1];
  // non-convergent: no better than first order and far above the extremals
  const bool control = qn < 2.0 && rn[1] > 100.0 * std::max(rf[1], rg[1]);
  const bool ok = std::abs(qf - 4.0) <= 1.0 && std::abs(qg - 4.0) <= 1.0 && control;
  return {ok, fmt("halving ratio full %.3f, GC %.3f (want 4 +- 1); negative control ratio %.3f at residual %.2e vs "
                  "%.2e",
                  qf, qg, qn, rn[1], std::max(rf[1], rg[1]))};
}

Outcome hybrid(bool c5) {
  const auto ctx = make(MagneticMirror{1.0, 1.0}, 0.1);
  const FullState s0 = mirror_scenario().initial;
  Eigen::VectorXd x0(6);
  x0 << s0.r, canonical_momentum(s0, ctx);
  const double r = symplectic_residual(hybrid_map(ctx), x0, 1e-5).symplectic_residual;
  return {r > 1e-2 && c5,
          fmt("hybrid map symplectic residual %.3e (want > 1e-2); generalized-canonical checks %s", r,
              c5 ? "pass" : "FAIL")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path configs = GCANON_CONFIG_DIR;
  const fs::path root = fs::temp_directory_path() / ("gcanon_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::vector<std::pair<std::string, std::string>> runs{{"orbit", "mirror_orbit.json"},
                                                              {"gc", "mirror_gc.json"},
                                                              {"transform", "mirror_transform.json"},
                                                              {"compare", "mirror_compare.json"},
                                                              {"scan", "mirror_scan.json"}};
  int files = 0, mismatches = 0, failures = 0;
  for (const auto& [sub, cfg] : runs) {
    for (const char* tag : {"a", "b"}) {
      const fs::path out = root / (sub + "_" + tag);
      const std::string cmd = std::string("\"") + GCANON_CLI_PATH + "\" " + sub + " --config \"" +
                              (configs / cfg).string() + "\" --out-dir \"" + out.string() + "\" --quiet --jobs 2";
      if (std::system(cmd.c_str()) != 0) ++failures;
    }
    for (const char* f : {"trajectory.csv", "diagnostics.csv"}) {
      const fs::path a = root / (sub + "_a") / f, b = root / (sub + "_b") / f;
      if (!fs::exists(a) && !fs::exists(b)) continue;
      ++files;
      if (!fs::exists(a) || !fs::exists(b) || slurp(a) != slurp(b)) ++mismatches;
    }
  }
  fs::remove_all(root);
  return {failures == 0 && files > 0 && mismatches == 0,
          fmt("%d CSV files compared across two runs, %d differ, %d failed runs", files, mismatches, failures)};
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("%s C%d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  };
  report(1, "golden orbits", guarded(golden_orbits));
  report(2, "round-trip transformation", guarded(round_trip));
  report(3, "adiabatic invariance", guarded(adiabatic));
  report(4, "canonical GC integration", guarded(canonical_gc));
  bool c5 = false;
  report(5, "generalized-canonical verification", guarded([&] {
           const auto r = generalized_canonical();
           c5 = r.pass;
           return r.outcome;
         }));
  report(6, "drift-formula agreement", guarded(tracking));
  report(7, "variational principle", guarded(variational));
  report(8, "hybrid map not canonical", guarded([&] { return hybrid(c5); }));
  report(9, "determinism", guarded(determinism));
  std::printf("%d of 9 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
