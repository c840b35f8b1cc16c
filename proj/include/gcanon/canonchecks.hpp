#pragma once

// Checks of generalized-canonical structure: extended Hamilton equations plus
// finite-term constraints on a superabundant trajectory, discrete actions of
// the constrained Lagrangians, and first-variation (Euler-Lagrange) residuals.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "gcanon/error.hpp"
#include "gcanon/fields.hpp"
#include "gcanon/fullorbit.hpp"
#include "gcanon/gcmotion.hpp"
#include "gcanon/gyrotransform.hpp"
#include "gcanon/types.hpp"

namespace gcanon {

using Eigen::VectorXd;

/// z = (q_1..q_g', p_1..p_g') obeys dz/dt = J' grad_z K; u (k entries) is
/// fixed by f_s(z, u, t) = 0.
struct GeneralizedSystem {
  int z_dim = 0;
  int u_dim = 0;
  std::function<double(const VectorXd& z, const VectorXd& u, double t)> hamiltonian;
  std::function<VectorXd(const VectorXd& z, const VectorXd& u, double t)> constraints;
};

struct SuperabundantSample {
  double t = 0.0;
  VectorXd z;
  VectorXd u;
};

struct ResidualReport {
  double hamilton_residual_max = 0.0;
  double constraint_residual_max = 0.0;
  std::vector<double> hamilton_series;    ///< interior samples only
  std::vector<double> constraint_series;  ///< every sample
};

/// Hamilton residual max_i |dz_i/dt - sum_j J'_ij dK/dz_j| at interior
/// samples (central differences in time and in z with step h); constraint
/// residual max_s |f_s|.
inline ResidualReport verify_generalized_canonical(const GeneralizedSystem& sys,
                                                   std::span<const SuperabundantSample> traj, double h) {
  if (sys.z_dim <= 0 || sys.z_dim % 2 != 0) {
    throw Error(ErrorKind::InvalidArgument, "verify_generalized_canonical: z_dim must be even and positive");
  }
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "verify_generalized_canonical: h must be positive");
  const int g = sys.z_dim / 2;
  ResidualReport report;

  for (std::size_t i = 1; i + 1 < traj.size(); ++i) {
    const auto& prev = traj[i - 1];
    const auto& cur = traj[i];
    const auto& next = traj[i + 1];
    const VectorXd zdot = (next.z - prev.z) / (next.t - prev.t);
    VectorXd gradK(sys.z_dim);
    for (int j = 0; j < sys.z_dim; ++j) {
      VectorXd zp = cur.z, zm = cur.z;
      zp(j) += h;
      zm(j) -= h;
      gradK(j) = (sys.hamiltonian(zp, cur.u, cur.t) - sys.hamiltonian(zm, cur.u, cur.t)) / (2.0 * h);
    }
    VectorXd flow(sys.z_dim);
    flow.head(g) = gradK.tail(g);
    flow.tail(g) = -gradK.head(g);
    const double r = (zdot - flow).cwiseAbs().maxCoeff();
    if (!std::isfinite(r)) throw Error(ErrorKind::NonFinite, "verify_generalized_canonical: non-finite residual");
    report.hamilton_series.push_back(r);
    report.hamilton_residual_max = std::max(report.hamilton_residual_max, r);
  }
  for (const auto& s : traj) {
    double r = 0.0;
    if (sys.u_dim > 0 && sys.constraints) r = sys.constraints(s.z, s.u, s.t).cwiseAbs().maxCoeff();
    if (!std::isfinite(r)) throw Error(ErrorKind::NonFinite, "verify_generalized_canonical: non-finite constraint");
    report.constraint_series.push_back(r);
    report.constraint_residual_max = std::max(report.constraint_residual_max, r);
  }
  return report;
}

// Gyrokinetic instance --------------------------------------------------------

/// z = (r', phi', p_r', p_phi'), u = v', K from the guiding-center
/// Hamiltonian, f = (p_r' - (q/c) A')/m - v'.
inline GeneralizedSystem gyrokinetic_system(const FieldContext& ctx) {
  GeneralizedSystem sys;
  sys.z_dim = 8;
  sys.u_dim = 3;
  sys.hamiltonian = [ctx](const VectorXd& z, const VectorXd&, double t) {
    GCState g;
    g.r_gc = z.segment<3>(0);
    g.phi = z(3);
    g.p_r = z.segment<3>(4);
    g.p_phi = z(7);
    g.t = t;
    return hamiltonian_K(g, ctx.at(g.r_gc, t), ctx.species);
  };
  sys.constraints = [ctx](const VectorXd& z, const VectorXd& u, double t) -> VectorXd {
    const auto& sp = ctx.species;
    const Vec3 r = z.segment<3>(0);
    const Vec3 p = z.segment<3>(4);
    return (p - (sp.q / sp.c) * ctx.potentials(r, t).A) / sp.m - Vec3(u);
  };
  return sys;
}

/// Which series stands in for the superabundant velocity v'.
enum class VelocitySource {
  Stored,          ///< v' recorded by the integrator, (p_r - (q/c)A)/m
  DriftForm,       ///< u' b' + vE' + vD' recomputed from fields at r'
  PathDerivative,  ///< central difference of r'(t), i.e. dr'/dt = v'
};

/// Unwraps the gyrophase; requires |Omega| times the sample spacing < pi.
inline std::vector<SuperabundantSample> superabundant_series(const Trajectory<GCState>& traj,
                                                             const FieldContext& ctx, VelocitySource source) {
  const auto& sp = ctx.species;
  const auto n = traj.states.size();
  std::vector<SuperabundantSample> out(n);
  double unwrapped = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const GCState& g = traj.states[i];
    if (i == 0) {
      unwrapped = g.phi;
    } else {
      double step = g.phi - traj.states[i - 1].phi;
      step -= 2.0 * std::numbers::pi * std::round(step / (2.0 * std::numbers::pi));
      unwrapped += step;
    }
    auto& s = out[i];
    s.t = g.t;
    s.z.resize(8);
    s.z << g.r_gc, unwrapped, g.p_r, g.p_phi;
    Vec3 v = g.v_gc;
    if (source == VelocitySource::DriftForm) {
      const FieldSample f = ctx.at(g.r_gc, g.t);
      v = drift_velocity(f, f.b.dot(g.v_gc), magnetic_moment(g, sp), sp);
    } else if (source == VelocitySource::PathDerivative) {
      const std::size_t a = i == 0 ? 0 : i - 1;
      const std::size_t b = i + 1 == n ? i : i + 1;
      if (b > a) v = (traj.states[b].r_gc - traj.states[a].r_gc) / (traj.states[b].t - traj.states[a].t);
    }
    s.u = v;
  }
  if (source == VelocitySource::PathDerivative && n > 2) {
    // one-sided ends are first order; report interior samples only
    out.erase(out.end() - 1);
    out.erase(out.begin());
  }
  return out;
}

// Discrete actions --------------------------------------------------------------

/// Action of a window of uniformly spaced nodes starting at t0.
using ActionFn = std::function<double(std::span<const VectorXd> nodes, double t0, double dt)>;

/// Node layout (r, p, v), 9 entries.
inline std::vector<VectorXd> full_action_nodes(const Trajectory<FullState>& traj, const FieldContext& ctx) {
  std::vector<VectorXd> nodes;
  nodes.reserve(traj.size());
  for (const auto& s : traj.states) {
    VectorXd x(9);
    x << s.r, canonical_momentum(s, ctx), s.v;
    nodes.push_back(std::move(x));
  }
  return nodes;
}

/// Node layout (r', phi', p_r', p_phi', v'), 11 entries, gyrophase unwrapped.
inline std::vector<VectorXd> gc_action_nodes(const Trajectory<GCState>& traj, const FieldContext& ctx) {
  std::vector<VectorXd> nodes;
  nodes.reserve(traj.size());
  for (const auto& s : superabundant_series(traj, ctx, VelocitySource::Stored)) {
    VectorXd x(11);
    x << s.z.segment<3>(0), s.z(3), s.z.segment<3>(4), s.z(7), s.u;
    nodes.push_back(std::move(x));
  }
  return nodes;
}

/// Trapezoid rule on L dt = dr.p - H dt - [dr - v dt].[p - m v - (q/c) A]
/// with H = |p - (q/c)A|^2/(2m) + q Phi; dr/dt is the forward difference of
/// each interval.
inline double action_full(std::span<const VectorXd> nodes, double t0, double dt, const FieldContext& ctx) {
  const auto& sp = ctx.species;
  auto lagrangian = [&](const VectorXd& x, const Vec3& rdot, double t) {
    const Vec3 r = x.segment<3>(0), p = x.segment<3>(3), v = x.segment<3>(6);
    const ReferenceFields pot = ctx.potentials(r, t);
    const Vec3 kinetic = p - (sp.q / sp.c) * pot.A;
    const double H = kinetic.squaredNorm() / (2.0 * sp.m) + sp.q * pot.Phi;
    return rdot.dot(p) - H - (rdot - v).dot(kinetic - sp.m * v);
  };
  double S = 0.0;
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    const double ta = t0 + static_cast<double>(k) * dt;
    const Vec3 rdot = (nodes[k + 1].segment<3>(0) - nodes[k].segment<3>(0)) / dt;
    S += 0.5 * dt * (lagrangian(nodes[k], rdot, ta) + lagrangian(nodes[k + 1], rdot, ta + dt));
  }
  return S;
}

/// Trapezoid rule on L' = r'dot.p_r + phi'dot p_phi - K - [r'dot - v'].[p_r - m v' - (q/c) A'].
inline double action_gc(std::span<const VectorXd> nodes, double t0, double dt, const FieldContext& ctx) {
  const auto& sp = ctx.species;
  auto lagrangian = [&](const VectorXd& x, const Vec3& rdot, double phidot, double t) {
    const Vec3 r = x.segment<3>(0), p = x.segment<3>(4), v = x.segment<3>(8);
    const double p_phi = x(7);
    const ReferenceFields pot = ctx.potentials(r, t);
    const Vec3 kinetic = p - (sp.q / sp.c) * pot.A;
    const double omega = sp.q * pot.B.norm() / (sp.m * sp.c);
    const double K = kinetic.squaredNorm() / (2.0 * sp.m) - omega * p_phi + sp.q * pot.Phi;
    return rdot.dot(p) + phidot * p_phi - K - (rdot - v).dot(kinetic - sp.m * v);
  };
  double S = 0.0;
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    const double ta = t0 + static_cast<double>(k) * dt;
    const Vec3 rdot = (nodes[k + 1].segment<3>(0) - nodes[k].segment<3>(0)) / dt;
    const double phidot = (nodes[k + 1](3) - nodes[k](3)) / dt;
    S += 0.5 * dt * (lagrangian(nodes[k], rdot, phidot, ta) + lagrangian(nodes[k + 1], rdot, phidot, ta + dt));
  }
  return S;
}

/// Straight line r0 + v0 t with p = m v0 + (q/c) A, laid out as full_action_nodes.
/// Not an extremal of the full action unless the field is uniform.
inline std::vector<VectorXd> straight_line_nodes(const FullState& s0, std::size_t n, double dt,
                                                 const FieldContext& ctx) {
  std::vector<VectorXd> nodes;
  nodes.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    FullState s = s0;
    s.t = s0.t + static_cast<double>(k) * dt;
    s.r = s0.r + s0.v * (static_cast<double>(k) * dt);
    VectorXd x(9);
    x << s.r, canonical_momentum(s, ctx), s.v;
    nodes.push_back(std::move(x));
  }
  return nodes;
}

struct ELReport {
  double max_residual = 0.0;
  std::size_t node = 0;
  int component = 0;
  std::size_t basis_size = 0;
};

/// First-variation residual. The basis holds one hat function per interior
/// node and component, normalised to unit time integral; displacing node j
/// by +-delta in one component therefore gives
///   |S(x + delta e) - S(x - delta e)| / (2 delta dt).
/// Only the two intervals touching node j change, so the action is evaluated
/// on that three-node window. `node_stride` thins the basis.
inline ELReport el_residual(const ActionFn& action, std::span<const VectorXd> nodes, double t0, double dt,
                            double delta, std::size_t node_stride = 1) {
  if (!(delta > 0.0) || !(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "el_residual: delta and dt must be positive");
  ELReport report;
  if (nodes.size() < 3) return report;
  const auto dim = nodes.front().size();
  std::vector<VectorXd> window(3);
  for (std::size_t j = 1; j + 1 < nodes.size(); j += std::max<std::size_t>(1, node_stride)) {
    const double tw = t0 + static_cast<double>(j - 1) * dt;
    for (Eigen::Index c = 0; c < dim; ++c) {
      window = {nodes[j - 1], nodes[j], nodes[j + 1]};
      window[1](c) += delta;
      const double plus = action(window, tw, dt);
      window[1](c) -= 2.0 * delta;
      const double minus = action(window, tw, dt);
      const double r = std::abs(plus - minus) / (2.0 * delta * dt);
      ++report.basis_size;
      if (r > report.max_residual || !std::isfinite(r)) {
        report.max_residual = r;
        report.node = j;
        report.component = static_cast<int>(c);
      }
    }
  }
  return report;
}

/// The truncated hybrid map (r, p) -> (r', p_r') at time t: v = (p - (q/c) A)/m,
/// then the forward transformation, keeping 6 of the 8 outputs.
inline PhaseMap hybrid_map(const FieldContext& ctx, double t = 0.0) {
  return [ctx, t](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const auto& sp = ctx.species;
    FullState s;
    s.t = t;
    s.r = x.head<3>();
    s.v = (Vec3(x.tail<3>()) - (sp.q / sp.c) * ctx.potentials(s.r, t).A) / sp.m;
    const GCState g = to_guiding_center(s, ctx);
    Eigen::VectorXd y(6);
    y << g.r_gc, g.p_r;
    return y;
  };
}

}  // namespace gcanon
