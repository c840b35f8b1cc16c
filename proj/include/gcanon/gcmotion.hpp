#pragma once

// Canonical guiding-center dynamics in the superabundant variables.
//
//   K = -p_phi Omega + |p_r - (q/c) A|^2 / (2m) + q Phi
//   dr'/dt     =  dK/dp_r   = (p_r - (q/c) A) / m
//   dp_r/dt    = -dK/dr'    = (q/c) (grad A) . v' + p_phi grad Omega - q grad Phi
//   dphi/dt    =  dK/dp_phi = -Omega
//   dp_phi/dt  = -dK/dphi   = 0
//
// together with the finite constraint v' = (p_r - (q/c) A)/m. The drift form
// u b + vE + vD is not integrated; it is the per-step residual diagnostic.

#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "gcanon/drifts.hpp"
#include "gcanon/error.hpp"
#include "gcanon/fields.hpp"
#include "gcanon/gyrotransform.hpp"
#include "gcanon/trajectory.hpp"
#include "gcanon/types.hpp"

namespace gcanon {

struct GCDerivative {
  Vec3 dr_gc;
  Vec3 dp_r;
  double dphi = 0.0;
  double dp_phi = 0.0;
  /// dr_gc - (u b + vE + vD) at r'.
  Vec3 constraint_residual;
};

/// Kinetic velocity (p_r - (q/c) A)/m at r'.
inline Vec3 constraint_velocity(const GCState& g, const FieldSample& f, const Species& sp) {
  return (g.p_r - (sp.q / sp.c) * f.A) / sp.m;
}

inline double hamiltonian_K(const GCState& g, const FieldSample& f, const Species& sp) {
  const Vec3 kinetic = g.p_r - (sp.q / sp.c) * f.A;
  return -g.p_phi * f.Omega + kinetic.squaredNorm() / (2.0 * sp.m) + sp.q * f.Phi;
}

inline GCDerivative canonical_rhs(const GCState& g, const FieldSample& f, const Species& sp) {
  GCDerivative d;
  d.dr_gc = constraint_velocity(g, f, sp);
  const Vec3 grad_omega = (sp.q / (sp.m * sp.c)) * f.gradBmag;
  d.dp_r = (sp.q / sp.c) * (f.gradA_tensor * d.dr_gc) + g.p_phi * grad_omega - sp.q * f.gradPhi;
  d.dphi = -f.Omega;
  d.dp_phi = 0.0;
  const double u = f.b.dot(d.dr_gc);
  d.constraint_residual = d.dr_gc - drift_velocity(f, u, magnetic_moment(g, sp), sp);
  return d;
}

struct GCIntegrationOptions {
  int sample_stride = 1;
  /// Residual allowed to grow to this multiple of max(initial residual, eps^2 |v'|).
  double blowup_factor = 10.0;
};

/// RK4 on (r', p_r', phi'); p_phi' is carried unchanged. Each recorded state
/// stores v' = (p_r - (q/c) A)/m, K and the drift-form residual norm.
inline Trajectory<GCState> integrate_gc(const GCState& g0, double t_end, double dt, const FieldContext& ctx,
                                        const GCIntegrationOptions& opt = {}) {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "integrate_gc: dt must be positive");
  if (opt.sample_stride < 1) throw Error(ErrorKind::InvalidArgument, "integrate_gc: sample_stride < 1");
  const Species& sp = ctx.species;

  struct Phase {
    Vec3 r, p;
    double phi;
  };
  auto eval = [&](const Phase& x, double t) {
    GCState g;
    g.r_gc = x.r;
    g.p_r = x.p;
    g.phi = x.phi;
    g.p_phi = g0.p_phi;
    g.t = t;
    return canonical_rhs(g, ctx.at(x.r, t), sp);
  };
  auto shift = [](const Phase& x, const GCDerivative& d, double h) {
    return Phase{x.r + h * d.dr_gc, x.p + h * d.dp_r, x.phi + h * d.dphi};
  };

  Trajectory<GCState> traj;
  double band = 0.0;
  auto record = [&](const Phase& x, double t) {
    const FieldSample f = ctx.at(x.r, t);
    GCState g;
    g.r_gc = x.r;
    g.p_r = x.p;
    g.phi = wrap_phase(x.phi);
    g.p_phi = g0.p_phi;
    g.t = t;
    g.v_gc = constraint_velocity(g, f, sp);
    const double residual = canonical_rhs(g, f, sp).constraint_residual.norm();
    if (traj.states.empty()) {
      band = opt.blowup_factor * std::max(residual, ctx.eps * ctx.eps * std::max(g.v_gc.norm(), 1e-300));
    } else if (residual > band) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "constraint residual %.3e exceeds band %.3e at t = %.6g", residual, band, t);
      throw Error(ErrorKind::ResidualBlowup, buf);
    }
    traj.states.push_back(g);
    traj.energy.push_back(hamiltonian_K(g, f, sp));
    traj.constraint_residual.push_back(residual);
  };

  Phase x{g0.r_gc, g0.p_r, g0.phi};
  record(x, g0.t);
  const long n = std::lround((t_end - g0.t) / dt);
  for (long k = 1; k <= n; ++k) {
    const double t = g0.t + static_cast<double>(k - 1) * dt;
    const GCDerivative k1 = eval(x, t);
    const GCDerivative k2 = eval(shift(x, k1, 0.5 * dt), t + 0.5 * dt);
    const GCDerivative k3 = eval(shift(x, k2, 0.5 * dt), t + 0.5 * dt);
    const GCDerivative k4 = eval(shift(x, k3, dt), t + dt);
    x.r += dt / 6.0 * (k1.dr_gc + 2.0 * k2.dr_gc + 2.0 * k3.dr_gc + k4.dr_gc);
    x.p += dt / 6.0 * (k1.dp_r + 2.0 * k2.dp_r + 2.0 * k3.dp_r + k4.dp_r);
    x.phi += dt / 6.0 * (k1.dphi + 2.0 * k2.dphi + 2.0 * k3.dphi + k4.dphi);
    if (!x.r.allFinite() || !x.p.allFinite()) throw Error(ErrorKind::NonFinite, "integrate_gc: state diverged");
    if (k % opt.sample_stride == 0 || k == n) record(x, g0.t + static_cast<double>(k) * dt);
  }
  return traj;
}

}  // namespace gcanon
