#pragma once

// Exact Newton-Lorentz dynamics: the ground truth every guiding-center
// result is checked against.

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "gcanon/error.hpp"
#include "gcanon/fields.hpp"
#include "gcanon/trajectory.hpp"
#include "gcanon/types.hpp"

namespace gcanon {

struct FullState {
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double t = 0.0;
};

/// p = m v + (q/c) A.
inline Vec3 canonical_momentum(const FullState& s, const FieldContext& ctx) {
  const auto& sp = ctx.species;
  return sp.m * s.v + (sp.q / sp.c) * ctx.potentials(s.r, s.t).A;
}

/// H = m|v|^2/2 + q Phi.
inline double full_energy(const FullState& s, const FieldContext& ctx) {
  const auto& sp = ctx.species;
  return 0.5 * sp.m * s.v.squaredNorm() + sp.q * ctx.potentials(s.r, s.t).Phi;
}

struct StateDerivative {
  Vec3 dr;
  Vec3 dv;
};

inline StateDerivative lorentz_rhs(const FullState& s, const FieldSample& f, const Species& sp) {
  return {s.v, (sp.q / sp.m) * (f.E + s.v.cross(f.B) / sp.c)};
}

/// Classical RK4. A negative dt integrates backwards in time.
inline FullState step_rk4(const FullState& s, double dt, const FieldContext& ctx) {
  auto rhs = [&](const FullState& x) { return lorentz_rhs(x, ctx.at(x.r, x.t), ctx.species); };
  auto shift = [](const FullState& x, const StateDerivative& d, double h) {
    return FullState{x.r + h * d.dr, x.v + h * d.dv, x.t + h};
  };
  const StateDerivative k1 = rhs(s);
  const StateDerivative k2 = rhs(shift(s, k1, 0.5 * dt));
  const StateDerivative k3 = rhs(shift(s, k2, 0.5 * dt));
  const StateDerivative k4 = rhs(shift(s, k3, dt));
  return {s.r + dt / 6.0 * (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr),
          s.v + dt / 6.0 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv), s.t + dt};
}

/// Boris push: half electric kick, exact-norm magnetic rotation, half kick,
/// then drift. Fields are taken at the start-of-step position.
inline FullState step_boris(const FullState& s, double dt, const FieldContext& ctx) {
  const auto& sp = ctx.species;
  const FieldSample f = ctx.at(s.r, s.t);
  const double kick = 0.5 * dt * sp.q / sp.m;
  const Vec3 v_minus = s.v + kick * f.E;
  const Vec3 tvec = (kick / sp.c) * f.B;
  const Vec3 svec = 2.0 * tvec / (1.0 + tvec.squaredNorm());
  const Vec3 v_prime = v_minus + v_minus.cross(tvec);
  const Vec3 v_plus = v_minus + v_prime.cross(svec);
  const Vec3 v_new = v_plus + kick * f.E;
  return {s.r + dt * v_new, v_new, s.t + dt};
}

enum class Scheme { RK4, Boris };

struct OrbitOptions {
  Scheme scheme = Scheme::RK4;
  int sample_stride = 1;
};

inline constexpr double kStepTooLargeOmegaDt = 0.5;

/// Fixed-step integration over round((t_end - t0)/dt) steps, recording every
/// `sample_stride` steps (the initial state always, the final state always).
inline Trajectory<FullState> integrate_full(const FullState& s0, double t_end, double dt,
                                            const FieldContext& ctx, const OrbitOptions& opt = {}) {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "integrate_full: dt must be positive");
  if (opt.sample_stride < 1) throw Error(ErrorKind::InvalidArgument, "integrate_full: sample_stride < 1");

  Trajectory<FullState> traj;
  const double omega_dt = ctx.at(s0.r, s0.t).Omega * dt;
  if (omega_dt > kStepTooLargeOmegaDt) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "StepTooLarge: dt*Omega = %.3g exceeds %.2g", omega_dt, kStepTooLargeOmegaDt);
    traj.warnings.emplace_back(buf);
  }

  const long n = std::lround((t_end - s0.t) / dt);
  auto record = [&](const FullState& s) {
    traj.states.push_back(s);
    traj.energy.push_back(full_energy(s, ctx));
  };
  traj.states.reserve(static_cast<std::size_t>(n / opt.sample_stride + 2));
  FullState s = s0;
  record(s);
  for (long k = 1; k <= n; ++k) {
    s = opt.scheme == Scheme::RK4 ? step_rk4(s, dt, ctx) : step_boris(s, dt, ctx);
    s.t = s0.t + static_cast<double>(k) * dt;
    if (!s.r.allFinite() || !s.v.allFinite()) throw Error(ErrorKind::NonFinite, "integrate_full: state diverged");
    if (k % opt.sample_stride == 0 || k == n) record(s);
  }
  return traj;
}

struct MapJacobianReport {
  Eigen::MatrixXd M;
  double symplectic_residual = 0.0;
};

using PhaseMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Canonical Poisson matrix [[0, I], [-I, 0]] of size 2g.
inline Eigen::MatrixXd poisson_matrix(int two_g) {
  const int g = two_g / 2;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(two_g, two_g);
  J.topRightCorner(g, g) = Eigen::MatrixXd::Identity(g, g);
  J.bottomLeftCorner(g, g) = -Eigen::MatrixXd::Identity(g, g);
  return J;
}

/// Central-difference Jacobian M of `map` at x0 and max|M J M^T - J|.
inline MapJacobianReport symplectic_residual(const PhaseMap& map, const Eigen::VectorXd& x0, double h_jac) {
  const auto n = x0.size();
  if (n % 2 != 0) throw Error(ErrorKind::InvalidArgument, "symplectic_residual: odd phase-space dimension");
  MapJacobianReport report;
  report.M.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x0, xm = x0;
    xp(j) += h_jac;
    xm(j) -= h_jac;
    const Eigen::VectorXd fp = map(xp), fm = map(xm);
    if (fp.size() != n || fm.size() != n) {
      throw Error(ErrorKind::InvalidArgument, "symplectic_residual: map must preserve dimension");
    }
    report.M.col(j) = (fp - fm) / (2.0 * h_jac);
  }
  if (!report.M.allFinite()) throw Error(ErrorKind::NonFinite, "symplectic_residual: divergent map");
  const Eigen::MatrixXd J = poisson_matrix(static_cast<int>(n));
  report.symplectic_residual = (report.M * J * report.M.transpose() - J).cwiseAbs().maxCoeff();
  return report;
}

}  // namespace gcanon
