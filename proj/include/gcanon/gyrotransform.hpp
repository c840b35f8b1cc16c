#pragma once

// Leading-order gyrokinetic transformation between full particle states and
// the superabundant guiding-center state X' = (r', p_r', phi', p_phi', v').
//
//   r   = r' + rho',            rho' = -w' x b' / Omega'
//   v   = v' + w',              w'   = w' (e1' cos phi' + e2' sin phi')
//   v'  = u' b' + vE' + vD'
//   p_r'  = m v' + (q/c) A'
//   p_phi' = -(m c/q) mu',      mu'  = m w'^2 / (2 B')
//
// Every primed quantity is evaluated at r', so the forward map is solved by
// fixed-point iteration on r'.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "gcanon/drifts.hpp"
#include "gcanon/error.hpp"
#include "gcanon/fields.hpp"
#include "gcanon/fullorbit.hpp"
#include "gcanon/trajectory.hpp"
#include "gcanon/types.hpp"

namespace gcanon {

struct GCState {
  Vec3 r_gc = Vec3::Zero();
  Vec3 p_r = Vec3::Zero();
  double phi = 0.0;  ///< gyrophase in [0, 2pi)
  double p_phi = 0.0;
  Vec3 v_gc = Vec3::Zero();
  double t = 0.0;
};

/// mu' = -(q/(m c)) p_phi'.
inline double magnetic_moment(const GCState& g, const Species& sp) { return -sp.q / (sp.m * sp.c) * g.p_phi; }

/// u' = b' . v', with b' taken from a sample at r'.
inline double parallel_velocity(const GCState& g, const FieldSample& at_gc) { return at_gc.b.dot(g.v_gc); }

/// w' = sqrt(2 B' mu' / m).
inline double perpendicular_speed(const GCState& g, const FieldSample& at_gc, const Species& sp) {
  return std::sqrt(std::max(0.0, 2.0 * at_gc.Bmag * magnetic_moment(g, sp) / sp.m));
}

inline Vec3 larmor_vector(const Vec3& w, const Vec3& b, double Omega) { return -w.cross(b) / Omega; }

inline double wrap_phase(double phi) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(phi, two_pi);
  if (r < 0.0) r += two_pi;
  return r >= two_pi ? 0.0 : r;
}

struct TransformOptions {
  double tol = 1e-12;  ///< on |r'_{k+1} - r'_k|, in model length units
  int max_iter = 50;
  /// Rotates the gyrophase reference (e1, e2) about b by a fixed angle.
  double frame_rotation = 0.0;
};

/// Gyrophase reference pair at a sample, optionally rotated.
inline std::pair<Vec3, Vec3> gyro_frame(const FieldSample& f, double rotation) {
  if (rotation == 0.0) return {f.e1, f.e2};
  const double c = std::cos(rotation), s = std::sin(rotation);
  return {c * f.e1 + s * f.e2, -s * f.e1 + c * f.e2};
}

/// v' = u b + vE + vD at the given sample.
inline Vec3 drift_velocity(const FieldSample& f, double u, double mu, const Species& sp) {
  return u * f.b + v_E(f, sp) + v_D(f, u, mu, sp);
}

/// Builds X' from (r', u', mu', phi'): v' from the drift form, p_r' and
/// p_phi' from their definitions.
inline GCState make_gc_state(const Vec3& r_gc, double u, double mu, double phi, double t,
                             const FieldContext& ctx) {
  if (mu < 0.0) throw Error(ErrorKind::InvalidArgument, "make_gc_state: negative mu");
  const auto& sp = ctx.species;
  const FieldSample f = ctx.at(r_gc, t);
  GCState g;
  g.r_gc = r_gc;
  g.t = t;
  g.phi = wrap_phase(phi);
  g.v_gc = drift_velocity(f, u, mu, sp);
  g.p_r = sp.m * g.v_gc + (sp.q / sp.c) * f.A;
  g.p_phi = -(sp.m * sp.c / sp.q) * mu;
  return g;
}

namespace detail {

struct GyroDecomposition {
  double u;
  double mu;
  Vec3 w;    ///< v - v'
  Vec3 rel;  ///< v - vE'
};

inline GyroDecomposition decompose(const FullState& s, const FieldSample& f, double mu_guess,
                                   const Species& sp) {
  GyroDecomposition d;
  d.rel = s.v - v_E(f, sp);
  d.u = f.b.dot(s.v);
  const Vec3 perp = d.rel - d.u * f.b;
  const double mu_in = mu_guess >= 0.0 ? mu_guess : sp.m * perp.squaredNorm() / (2.0 * f.Bmag);
  d.w = perp - v_D(f, d.u, mu_in, sp);
  d.mu = sp.m * d.w.squaredNorm() / (2.0 * f.Bmag);
  return d;
}

}  // namespace detail

/// Forward transformation. The Larmor vector is built from w' = v - v', the
/// gyrophase from v - vE'. Iterates r' and mu' jointly because vD' depends
/// on mu'.
inline GCState to_guiding_center(const FullState& s, const FieldContext& ctx, const TransformOptions& opt = {}) {
  const auto& sp = ctx.species;
  const double mu_scale = sp.m * s.v.squaredNorm() + 1e-300;

  Vec3 r_gc = s.r;
  double mu = -1.0;
  bool converged = false;
  for (int k = 0; k < opt.max_iter; ++k) {
    const FieldSample f = ctx.at(r_gc, s.t);
    const detail::GyroDecomposition d = detail::decompose(s, f, mu, sp);
    const Vec3 next = s.r - larmor_vector(d.w, f.b, f.Omega);
    if (!next.allFinite()) throw Error(ErrorKind::NoConvergence, "to_guiding_center: iterate diverged");
    const double dr = (next - r_gc).norm();
    const double dmu = mu < 0.0 ? std::abs(d.mu) : std::abs(d.mu - mu);
    r_gc = next;
    mu = d.mu;
    if (dr < opt.tol && dmu * 2.0 * f.Bmag <= opt.tol * mu_scale) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw Error(ErrorKind::NoConvergence,
                "to_guiding_center: fixed point not reached in " + std::to_string(opt.max_iter) +
                    " iterations (eps too large for the local field)");
  }

  const FieldSample f = ctx.at(r_gc, s.t);
  const detail::GyroDecomposition d = detail::decompose(s, f, mu, sp);
  const auto [e1, e2] = gyro_frame(f, opt.frame_rotation);

  GCState g;
  g.r_gc = r_gc;
  g.t = s.t;
  g.phi = wrap_phase(std::atan2(d.rel.dot(e2), d.rel.dot(e1)));
  g.v_gc = drift_velocity(f, d.u, mu, sp);
  g.p_r = sp.m * g.v_gc + (sp.q / sp.c) * f.A;
  g.p_phi = -(sp.m * sp.c / sp.q) * mu;
  return g;
}

/// Inverse transformation; explicit because all primed quantities live at r'.
inline FullState from_guiding_center(const GCState& g, const FieldContext& ctx, const TransformOptions& opt = {}) {
  const auto& sp = ctx.species;
  const double mu = magnetic_moment(g, sp);
  if (mu < 0.0) throw Error(ErrorKind::InvalidArgument, "from_guiding_center: negative mu");
  const FieldSample f = ctx.at(g.r_gc, g.t);
  const auto [e1, e2] = gyro_frame(f, opt.frame_rotation);
  const double w = std::sqrt(2.0 * f.Bmag * mu / sp.m);
  const Vec3 w_vec = w * (std::cos(g.phi) * e1 + std::sin(g.phi) * e2);
  return {g.r_gc + larmor_vector(w_vec, f.b, f.Omega), g.v_gc + w_vec, g.t};
}

// Orbit averaging -----------------------------------------------------------

struct OrbitAverage {
  double t = 0.0;
  Vec3 r_gc = Vec3::Zero();
  double mu = 0.0;
};

inline constexpr int kMinSamplesPerGyroperiod = 32;

namespace detail {

/// Cubic Hermite interpolation of position and velocity over one sample
/// interval, using the Lorentz acceleration as the velocity slope.
struct HermiteSegment {
  double t0, h;
  Vec3 r0, r1, v0, v1, a0, a1;

  Vec3 position(double s) const {
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * r0 + (s3 - 2 * s2 + s) * h * v0 + (-2 * s3 + 3 * s2) * r1 +
           (s3 - s2) * h * v1;
  }
  Vec3 velocity(double s) const {
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * v0 + (s3 - 2 * s2 + s) * h * a0 + (-2 * s3 + 3 * s2) * v1 +
           (s3 - s2) * h * a1;
  }
};

struct WindowMoments {
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double v2 = 0.0;
  double length = 0.0;
};

/// Four-point Gauss-Legendre over [s_a, s_b] of one segment: exact for the
/// cubic r and v and for the degree-6 |v|^2.
inline void accumulate(const HermiteSegment& seg, double sa, double sb, WindowMoments& m) {
  static constexpr double x[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                  0.8611363115940526};
  static constexpr double w[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                  0.3478548451374538};
  const double half = 0.5 * (sb - sa) * seg.h;
  for (int i = 0; i < 4; ++i) {
    const double s = 0.5 * (sa + sb) + 0.5 * (sb - sa) * x[i];
    const Vec3 v = seg.velocity(s);
    m.r += w[i] * half * seg.position(s);
    m.v += w[i] * half * v;
    m.v2 += w[i] * half * v.squaredNorm();
  }
  m.length += (sb - sa) * seg.h;
}

}  // namespace detail

/// Averages the exact orbit over one local gyroperiod centred on each
/// recorded sample (every `output_stride`-th one whose window fits inside the
/// trajectory): r' = <r>, mu = m <|v - <v>|^2> / (2 B(r')).
inline std::vector<OrbitAverage> gc_from_orbit_average(const Trajectory<FullState>& traj, const FieldContext& ctx,
                                                       int output_stride = 1) {
  const auto& sp = ctx.species;
  const auto n = traj.states.size();
  std::vector<OrbitAverage> out;
  if (n < 2) return out;

  std::vector<Vec3> accel(n);
  std::vector<double> omega(n);
  for (std::size_t i = 0; i < n; ++i) {
    const FieldSample f = ctx.at(traj.states[i].r, traj.states[i].t);
    accel[i] = lorentz_rhs(traj.states[i], f, sp).dv;
    omega[i] = f.Omega;
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dt = traj.states[i + 1].t - traj.states[i].t;
    if (omega[i] * dt > 2.0 * std::numbers::pi / kMinSamplesPerGyroperiod) {
      throw Error(ErrorKind::WindowTooCoarse, "gc_from_orbit_average: fewer than 32 samples per gyroperiod");
    }
  }

  auto segment = [&](std::size_t k) {
    const auto& a = traj.states[k];
    const auto& b = traj.states[k + 1];
    return detail::HermiteSegment{a.t, b.t - a.t, a.r, b.r, a.v, b.v, accel[k], accel[k + 1]};
  };
  const double t_first = traj.states.front().t;
  const double t_last = traj.states.back().t;

  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(std::max(1, output_stride))) {
    const double tc = traj.states[i].t;
    const double period = 2.0 * std::numbers::pi / omega[i];
    const double ta = tc - 0.5 * period, tb = tc + 0.5 * period;
    if (ta < t_first || tb > t_last) continue;

    std::size_t k = i;
    while (k > 0 && traj.states[k].t > ta) --k;
    detail::WindowMoments m;
    for (; k + 1 < n && traj.states[k].t < tb; ++k) {
      const auto seg = segment(k);
      const double sa = std::max(0.0, (ta - seg.t0) / seg.h);
      const double sb = std::min(1.0, (tb - seg.t0) / seg.h);
      if (sb > sa) detail::accumulate(seg, sa, sb, m);
    }
    OrbitAverage avg;
    avg.t = tc;
    avg.r_gc = m.r / m.length;
    const Vec3 vbar = m.v / m.length;
    const double spread = std::max(0.0, m.v2 / m.length - vbar.squaredNorm());
    avg.mu = sp.m * spread / (2.0 * ctx.at(avg.r_gc, tc).Bmag);
    out.push_back(avg);
  }
  return out;
}

}  // namespace gcanon
