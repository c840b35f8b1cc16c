#pragma once

// Ordering diagnostics: every O(eps^n) statement becomes a least-squares
// slope on (ln eps, ln metric).

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gcanon/error.hpp"
#include "gcanon/fields.hpp"
#include "gcanon/fullorbit.hpp"
#include "gcanon/gcmotion.hpp"
#include "gcanon/gyrotransform.hpp"
#include "gcanon/types.hpp"

namespace gcanon {

struct ScanResult {
  std::vector<double> eps_values;
  std::vector<double> metric_values;
  double loglog_slope = 0.0;
  double slope_stderr = 0.0;
};

inline constexpr double kMetricFloor = 1e-14;

/// Least-squares slope of ln(metric) against ln(eps), with its standard error.
inline ScanResult loglog_fit(std::span<const double> eps, std::span<const double> metric) {
  if (eps.size() != metric.size()) throw Error(ErrorKind::InvalidArgument, "loglog_fit: size mismatch");
  if (eps.size() < 3) throw Error(ErrorKind::InvalidArgument, "loglog_fit: need at least 3 points");
  for (std::size_t i = 1; i < eps.size(); ++i) {
    if (!(eps[i] < eps[i - 1])) throw Error(ErrorKind::InvalidArgument, "loglog_fit: eps must be strictly decreasing");
  }
  for (double m : metric) {
    if (!(m >= kMetricFloor) || !std::isfinite(m)) {
      throw Error(ErrorKind::FitDegenerate, "loglog_fit: metric value at or below the 1e-14 floor");
    }
  }
  ScanResult r;
  r.eps_values.assign(eps.begin(), eps.end());
  r.metric_values.assign(metric.begin(), metric.end());
  const auto n = static_cast<double>(eps.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    mx += std::log(eps[i]);
    my += std::log(metric[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double dx = std::log(eps[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(metric[i]) - my);
  }
  r.loglog_slope = sxy / sxx;
  double sse = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double e = std::log(metric[i]) - (my + r.loglog_slope * (std::log(eps[i]) - mx));
    sse += e * e;
  }
  r.slope_stderr = n > 2 ? std::sqrt(sse / (n - 2) / sxx) : 0.0;
  return r;
}

inline constexpr double kMinMu = 1e-14;
inline constexpr double kMinGyroperiods = 50.0;

/// max_t |mu'(t) - mu'(0)| / mu'(0), mu' from the forward transformation at
/// every recorded sample.
inline double mu_drift(const Trajectory<FullState>& traj, const FieldContext& ctx, const TransformOptions& opt = {}) {
  if (traj.size() < 2) throw Error(ErrorKind::InvalidArgument, "mu_drift: trajectory too short");
  const auto& first = traj.states.front();
  const double span = traj.states.back().t - first.t;
  const double periods = span * ctx.at(first.r, first.t).Omega / (2.0 * std::numbers::pi);
  if (periods < kMinGyroperiods) {
    throw Error(ErrorKind::InvalidArgument, "mu_drift: trajectory spans fewer than 50 gyroperiods");
  }
  const double mu0 = magnetic_moment(to_guiding_center(first, ctx, opt), ctx.species);
  if (mu0 < kMinMu) throw Error(ErrorKind::ZeroMu, "mu_drift: initial magnetic moment below 1e-14");
  double worst = 0.0;
  for (const auto& s : traj.states) {
    const double mu = magnetic_moment(to_guiding_center(s, ctx, opt), ctx.species);
    worst = std::max(worst, std::abs(mu - mu0) / mu0);
  }
  return worst;
}

struct ConservationReport {
  std::optional<double> energy_drift;  ///< full orbit: max |H - H0|/|H0|
  std::optional<double> K_drift;       ///< guiding center: max |K - K0|/|K0|
  std::optional<double> p_phi_drift;   ///< guiding center: max |p_phi - p_phi0|
  std::optional<double> mu_drift;      ///< max |mu - mu0|/mu0 (unset when mu0 ~ 0)
};

namespace detail {
inline double max_relative_drift(const std::vector<double>& series) {
  double worst = 0.0;
  const double ref = std::max(std::abs(series.front()), 1e-300);
  for (double x : series) worst = std::max(worst, std::abs(x - series.front()) / ref);
  return worst;
}
}  // namespace detail

inline ConservationReport conservation_ledger(const Trajectory<FullState>& traj, const FieldContext& ctx) {
  ConservationReport r;
  if (traj.empty()) return r;
  r.energy_drift = detail::max_relative_drift(traj.energy);
  try {
    std::vector<double> mu;
    for (const auto& s : traj.states) mu.push_back(magnetic_moment(to_guiding_center(s, ctx), ctx.species));
    if (mu.front() >= kMinMu) r.mu_drift = detail::max_relative_drift(mu);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoConvergence) throw;
  }
  return r;
}

inline ConservationReport conservation_ledger(const Trajectory<GCState>& traj, const FieldContext& ctx) {
  ConservationReport r;
  if (traj.empty()) return r;
  r.K_drift = detail::max_relative_drift(traj.energy);
  double dp = 0.0;
  std::vector<double> mu;
  for (const auto& g : traj.states) {
    dp = std::max(dp, std::abs(g.p_phi - traj.states.front().p_phi));
    mu.push_back(magnetic_moment(g, ctx.species));
  }
  r.p_phi_drift = dp;
  if (mu.front() >= kMinMu) r.mu_drift = detail::max_relative_drift(mu);
  return r;
}

// Single-valuedness probe -------------------------------------------------------

struct ProbeOptions {
  Vec3 box_lo = Vec3::Zero();
  Vec3 box_hi = Vec3::Constant(2.0 * std::numbers::pi);
  double speed = 1.0;
  int excursion_steps = 100;
  double omega_dt = 0.05;
  /// Skip the integrate-forward-then-back check (the expensive path).
  bool excursion = true;
};

struct ProbeReport {
  int n_states = 0;
  int converged = 0;
  double success_rate = 0.0;
  double same_state_discrepancy = 0.0;  ///< max relative |mu_a - mu_b|, identical inputs
  double excursion_discrepancy = 0.0;   ///< max relative |mu_a - mu_b| after a round-trip excursion
  double excursion_return_error = 0.0;  ///< max |state after excursion - state|
  std::vector<std::string> failures;
};

inline constexpr int kMinProbeStates = 100;

/// Evaluates mu' for seeded pseudo-random states twice through independent
/// paths: a repeated direct evaluation, and an evaluation after integrating
/// the exact orbit forward and back to the starting state.
inline ProbeReport single_valuedness_probe(const FieldContext& ctx, int n_states, std::uint64_t seed,
                                           const ProbeOptions& opt = {}) {
  if (n_states < kMinProbeStates) {
    throw Error(ErrorKind::InvalidArgument, "single_valuedness_probe: need at least 100 states");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ProbeReport report;
  report.n_states = n_states;
  for (int i = 0; i < n_states; ++i) {
    FullState s;
    for (int d = 0; d < 3; ++d) s.r(d) = opt.box_lo(d) + (opt.box_hi(d) - opt.box_lo(d)) * unit(rng);
    Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
    s.v = opt.speed * dir.normalized();
    try {
      const double mu_a = magnetic_moment(to_guiding_center(s, ctx), ctx.species);
      const double mu_b = magnetic_moment(to_guiding_center(s, ctx), ctx.species);
      const double scale = std::max(mu_a, 1e-300);
      report.same_state_discrepancy = std::max(report.same_state_discrepancy, std::abs(mu_a - mu_b) / scale);
      if (opt.excursion) {
        const double dt = opt.omega_dt / ctx.at(s.r, s.t).Omega;
        FullState x = s;
        for (int k = 0; k < opt.excursion_steps; ++k) x = step_rk4(x, dt, ctx);
        for (int k = 0; k < opt.excursion_steps; ++k) x = step_rk4(x, -dt, ctx);
        x.t = s.t;
        report.excursion_return_error =
            std::max(report.excursion_return_error, std::max((x.r - s.r).norm(), (x.v - s.v).norm()));
        const double mu_c = magnetic_moment(to_guiding_center(x, ctx), ctx.species);
        report.excursion_discrepancy = std::max(report.excursion_discrepancy, std::abs(mu_a - mu_c) / scale);
      }
      ++report.converged;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoConvergence && e.kind() != ErrorKind::FieldNull) throw;
      report.failures.push_back("state " + std::to_string(i) + ": " + e.what());
    }
  }
  report.success_rate = static_cast<double>(report.converged) / n_states;
  return report;
}

// Scenarios and eps scans -----------------------------------------------------

enum class Metric { RoundTrip, MuDrift, ConstraintResidual, TrackingError };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::RoundTrip: return "round_trip";
    case Metric::MuDrift: return "mu_drift";
    case Metric::ConstraintResidual: return "constraint_residual";
    case Metric::TrackingError: return "tracking_error";
  }
  return "unknown";
}

inline std::optional<Metric> parse_metric(std::string_view name) {
  for (Metric m : {Metric::RoundTrip, Metric::MuDrift, Metric::ConstraintResidual, Metric::TrackingError}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

/// A fixed physical setup whose ordering is varied by eps alone. The particle
/// speed is held fixed, so eps tracks 1/B_phys; integration time is fixed
/// in physical units.
struct Scenario {
  std::string name = "custom";
  FieldModel model;
  Species species{};
  FullState initial;
  double t_end = 10.0;
  double omega_dt = 0.05;     ///< full-orbit step as a fraction of the gyroperiod/2pi
  double gc_omega_dt = 0.5;   ///< guiding-center step in the same units
  int gyrophases = 4;         ///< initial gyrophases sampled by phase-sensitive metrics
};

/// Mirror B0 = 1, L = 1; particle off axis with pitch (w, u) = (0.4, 0.3).
inline Scenario mirror_scenario() {
  Scenario s;
  s.name = "mirror";
  s.model.geometry = MagneticMirror{1.0, 1.0};
  s.initial.r = Vec3(0.3, 0.1, 0.0);
  s.initial.v = Vec3(0.4, 0.0, 0.3);
  s.t_end = 10.0;
  return s;
}

/// ABC field A = 1, B = C = 1/2 (chaotic field lines, |B| >= 0.29).
inline Scenario abc_scenario() {
  Scenario s;
  s.name = "abc";
  s.model.geometry = ABCField{1.0, 0.5, 0.5, 1.0};
  s.initial.r = Vec3(1.0, 2.0, 3.0);
  s.initial.v = Vec3(0.3, 0.24, 0.32);
  s.t_end = 40.0;
  return s;
}

namespace detail {

/// Initial state with its perpendicular velocity rotated about b by `angle`.
inline FullState rotate_gyrophase(const FullState& s, const FieldContext& ctx, double angle) {
  const FieldSample f = ctx.at(s.r, s.t);
  const Vec3 vpar = f.b.dot(s.v) * f.b;
  const Vec3 vperp = s.v - vpar;
  FullState out = s;
  out.v = vpar + std::cos(angle) * vperp + std::sin(angle) * f.b.cross(vperp);
  return out;
}

inline double phase_angle(int k, int n) { return 2.0 * std::numbers::pi * k / n; }

}  // namespace detail

/// max over 2x gyrophases of |from_gc(to_gc(s)).r - s.r|.
inline double round_trip_error(const Scenario& sc, double eps) {
  const FieldContext ctx{sc.model, eps, sc.species};
  const int n = 2 * sc.gyrophases;
  double worst = 0.0;
  for (int k = 0; k < n; ++k) {
    const FullState s = detail::rotate_gyrophase(sc.initial, ctx, detail::phase_angle(k, n));
    worst = std::max(worst, (from_guiding_center(to_guiding_center(s, ctx), ctx).r - s.r).norm());
  }
  return worst;
}

inline double mu_drift_metric(const Scenario& sc, double eps) {
  const FieldContext ctx{sc.model, eps, sc.species};
  const double omega = ctx.at(sc.initial.r, sc.initial.t).Omega;
  const double dt = sc.omega_dt / omega;
  // at least 52 local gyroperiods
  const double t_end = std::max(sc.t_end, sc.initial.t + 1.04 * kMinGyroperiods * 2.0 * std::numbers::pi / omega);
  const auto traj = integrate_full(sc.initial, t_end, dt, ctx, {Scheme::RK4, 4});
  return mu_drift(traj, ctx);
}

/// max_t |dr'/dt - (u b + vE + vD)| / max_t |v'| along integrate_gc.
inline double constraint_residual_metric(const Scenario& sc, double eps) {
  const FieldContext ctx{sc.model, eps, sc.species};
  const GCState g0 = to_guiding_center(sc.initial, ctx);
  const double dt = sc.gc_omega_dt / ctx.at(g0.r_gc, g0.t).Omega;
  const auto traj = integrate_gc(g0, sc.t_end, dt, ctx);
  double res = 0.0, speed = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    res = std::max(res, traj.constraint_residual[i]);
    speed = std::max(speed, traj.states[i].v_gc.norm());
  }
  return res / speed;
}

struct TrackingComparison {
  std::vector<double> t;
  std::vector<Vec3> gc;
  std::vector<Vec3> averaged;
  double max_error = 0.0;
};

/// Integrates the exact orbit and the canonical guiding-center equations from
/// the same initial condition and compares r'_GC(t) with the gyro-averaged
/// orbit on a common time grid.
inline TrackingComparison tracking_comparison(const FullState& s0, double t_end, const FieldContext& ctx,
                                              double omega_dt, double gc_omega_dt) {
  const double omega = ctx.at(s0.r, s0.t).Omega;
  const int ratio = std::max(1, static_cast<int>(std::lround(gc_omega_dt / omega_dt)));
  long n_full = std::lround((t_end - s0.t) / (omega_dt / omega));
  n_full = (n_full / ratio + 1) * ratio;
  const double dt_full = (t_end - s0.t) / static_cast<double>(n_full);
  const double dt_gc = dt_full * ratio;

  const GCState g0 = to_guiding_center(s0, ctx);
  const auto gc = integrate_gc(g0, t_end, dt_gc, ctx);
  const auto full = integrate_full(s0, t_end, dt_full, ctx, {Scheme::RK4, 1});
  const auto avg = gc_from_orbit_average(full, ctx, ratio);

  TrackingComparison out;
  for (const auto& a : avg) {
    const auto k = static_cast<std::size_t>(std::lround((a.t - s0.t) / dt_gc));
    if (k >= gc.size()) continue;
    out.t.push_back(a.t);
    out.gc.push_back(gc.states[k].r_gc);
    out.averaged.push_back(a.r_gc);
    out.max_error = std::max(out.max_error, (gc.states[k].r_gc - a.r_gc).norm());
  }
  return out;
}

/// max over gyrophases of max_t |r'_GC(t) - <r>_gyro(t)|.
inline double tracking_error(const Scenario& sc, double eps) {
  const FieldContext ctx{sc.model, eps, sc.species};
  double worst = 0.0;
  for (int k = 0; k < sc.gyrophases; ++k) {
    const FullState s = detail::rotate_gyrophase(sc.initial, ctx, detail::phase_angle(k, sc.gyrophases));
    worst = std::max(worst, tracking_comparison(s, sc.t_end, ctx, sc.omega_dt, sc.gc_omega_dt).max_error);
  }
  return worst;
}

inline double evaluate_metric(Metric metric, const Scenario& sc, double eps) {
  switch (metric) {
    case Metric::RoundTrip: return round_trip_error(sc, eps);
    case Metric::MuDrift: return mu_drift_metric(sc, eps);
    case Metric::ConstraintResidual: return constraint_residual_metric(sc, eps);
    case Metric::TrackingError: return tracking_error(sc, eps);
  }
  throw Error(ErrorKind::InvalidArgument, "evaluate_metric: unknown metric");
}

inline const std::vector<double>& default_eps_ladder() {
  static const std::vector<double> ladder{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  return ladder;
}

/// Runs the scenario at each eps (up to `jobs` at a time) and fits the slope.
/// Results are gathered by eps index, so output does not depend on `jobs`.
inline ScanResult scan(Metric metric, const Scenario& sc, std::span<const double> eps_list, int jobs = 1) {
  std::vector<double> values(eps_list.size());
  const std::size_t width = static_cast<std::size_t>(std::max(1, jobs));
  for (std::size_t start = 0; start < eps_list.size(); start += width) {
    const std::size_t stop = std::min(eps_list.size(), start + width);
    std::vector<std::future<double>> pending;
    for (std::size_t i = start; i < stop; ++i) {
      pending.push_back(std::async(width > 1 ? std::launch::async : std::launch::deferred,
                                   [&, i] { return evaluate_metric(metric, sc, eps_list[i]); }));
    }
    for (std::size_t i = start; i < stop; ++i) values[i] = pending[i - start].get();
  }
  return loglog_fit(eps_list, values);
}

}  // namespace gcanon
