#pragma once

// Analytic electromagnetic field models.
//
// Every model returns O(1) reference fields in its own length unit (L = 1).
// `sample` applies the 1/eps scaling of the strong-field ordering uniformly,
// so downstream code works with physical fields and ordinary formulas.

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "gcanon/error.hpp"
#include "gcanon/types.hpp"

namespace gcanon {

/// B = B0 z.
struct UniformB {
  double B0 = 1.0;
};

/// B = B0 (1 + x/L) z, A = B0 (x + x^2/(2L)) y.
struct GradBSlab {
  double B0 = 1.0;
  double L = 1.0;
};

/// Axisymmetric mirror with on-axis Bz(z) = B0 (1 + z^2/L^2).
/// A = Bz(z)/2 (-y, x, 0), which gives B_perp = -(1/2) Bz'(z) (x, y).
struct MagneticMirror {
  double B0 = 1.0;
  double L = 1.0;
};

/// Straight screw pinch: uniform axial Bz plus a poloidal field Bp r/a
/// (uniform current density).
struct ScrewPinch {
  double Bz = 1.0;
  double Bp = 0.5;
  double a = 1.0;
};

/// Arnold-Beltrami-Childress field. It is a Beltrami field (curl B = k B),
/// so A = B/k.
struct ABCField {
  double A = 1.0;
  double B = 1.0;
  double C = 1.0;
  double k = 1.0;
};

/// Uniform B0 z with a uniform electric field E.
struct CrossedEB {
  double B0 = 1.0;
  Vec3 E = Vec3(0.1, 0.0, 0.0);
};

enum class FieldKind { UniformB, GradBSlab, MagneticMirror, ScrewPinch, ABCFlowField, CrossedEB };

using FieldGeometry =
    std::variant<UniformB, GradBSlab, MagneticMirror, ScrewPinch, ABCField, CrossedEB>;

struct FieldModel {
  FieldGeometry geometry = UniformB{};
  /// Optional uniform electric field superposed on any geometry.
  Vec3 E_background = Vec3::Zero();

  FieldKind kind() const { return static_cast<FieldKind>(geometry.index()); }
  bool time_dependent() const { return false; }
};

inline std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::UniformB: return "UniformB";
    case FieldKind::GradBSlab: return "GradBSlab";
    case FieldKind::MagneticMirror: return "MagneticMirror";
    case FieldKind::ScrewPinch: return "ScrewPinch";
    case FieldKind::ABCFlowField: return "ABCFlowField";
    case FieldKind::CrossedEB: return "CrossedEB";
  }
  return "Unknown";
}

/// Unscaled potentials, fields and first derivatives at a point.
struct ReferenceFields {
  Vec3 B = Vec3::Zero();
  Mat3 gradB = Mat3::Zero();
  Vec3 A = Vec3::Zero();
  Mat3 gradA = Mat3::Zero();
  double Phi = 0.0;
  Vec3 gradPhi = Vec3::Zero();
  Mat3 hessPhi = Mat3::Zero();
  Vec3 dA_dt = Vec3::Zero();
};

namespace detail {

inline void add_uniform_axial(ReferenceFields& f, const Vec3& r, double B0) {
  f.B.z() += B0;
  f.A += 0.5 * B0 * Vec3(-r.y(), r.x(), 0.0);
  f.gradA(1, 0) += -0.5 * B0;
  f.gradA(0, 1) += 0.5 * B0;
}

inline ReferenceFields evaluate(const UniformB& g, const Vec3& r) {
  ReferenceFields f;
  add_uniform_axial(f, r, g.B0);
  return f;
}

inline ReferenceFields evaluate(const CrossedEB& g, const Vec3& r) {
  ReferenceFields f;
  add_uniform_axial(f, r, g.B0);
  f.Phi = -g.E.dot(r);
  f.gradPhi = -g.E;
  return f;
}

inline ReferenceFields evaluate(const GradBSlab& g, const Vec3& r) {
  ReferenceFields f;
  const double x = r.x();
  f.B = Vec3(0.0, 0.0, g.B0 * (1.0 + x / g.L));
  f.gradB(0, 2) = g.B0 / g.L;
  f.A = Vec3(0.0, g.B0 * (x + x * x / (2.0 * g.L)), 0.0);
  f.gradA(0, 1) = g.B0 * (1.0 + x / g.L);
  return f;
}

inline ReferenceFields evaluate(const MagneticMirror& g, const Vec3& r) {
  ReferenceFields f;
  const double x = r.x(), y = r.y(), z = r.z();
  const double L2 = g.L * g.L;
  const double bz = g.B0 * (1.0 + z * z / L2);
  const double dbz = 2.0 * g.B0 * z / L2;
  const double d2bz = 2.0 * g.B0 / L2;

  f.B = Vec3(-0.5 * x * dbz, -0.5 * y * dbz, bz);
  f.gradB(0, 0) = -0.5 * dbz;
  f.gradB(2, 0) = -0.5 * x * d2bz;
  f.gradB(1, 1) = -0.5 * dbz;
  f.gradB(2, 1) = -0.5 * y * d2bz;
  f.gradB(2, 2) = dbz;

  f.A = 0.5 * bz * Vec3(-y, x, 0.0);
  f.gradA(1, 0) = -0.5 * bz;
  f.gradA(2, 0) = -0.5 * y * dbz;
  f.gradA(0, 1) = 0.5 * bz;
  f.gradA(2, 1) = 0.5 * x * dbz;
  return f;
}

inline ReferenceFields evaluate(const ScrewPinch& g, const Vec3& r) {
  ReferenceFields f;
  const double x = r.x(), y = r.y();
  const double s = g.Bp / g.a;
  add_uniform_axial(f, r, g.Bz);
  f.B.x() += -s * y;
  f.B.y() += s * x;
  f.gradB(1, 0) = -s;
  f.gradB(0, 1) = s;
  f.A.z() += -0.5 * s * (x * x + y * y);
  f.gradA(0, 2) = -s * x;
  f.gradA(1, 2) = -s * y;
  return f;
}

inline ReferenceFields evaluate(const ABCField& g, const Vec3& r) {
  ReferenceFields f;
  const double k = g.k;
  const double sx = std::sin(k * r.x()), cx = std::cos(k * r.x());
  const double sy = std::sin(k * r.y()), cy = std::cos(k * r.y());
  const double sz = std::sin(k * r.z()), cz = std::cos(k * r.z());

  f.B = Vec3(g.A * sz + g.C * cy, g.B * sx + g.A * cz, g.C * sy + g.B * cx);
  f.gradB(0, 1) = g.B * k * cx;
  f.gradB(0, 2) = -g.B * k * sx;
  f.gradB(1, 0) = -g.C * k * sy;
  f.gradB(1, 2) = g.C * k * cy;
  f.gradB(2, 0) = g.A * k * cz;
  f.gradB(2, 1) = -g.A * k * sz;
  f.A = f.B / k;
  f.gradA = f.gradB / k;
  return f;
}

}  // namespace detail

inline ReferenceFields reference_fields(const FieldModel& model, const Vec3& r, double /*t*/) {
  ReferenceFields f = std::visit([&](const auto& g) { return detail::evaluate(g, r); }, model.geometry);
  if (!model.E_background.isZero(0.0)) {
    f.Phi -= model.E_background.dot(r);
    f.gradPhi -= model.E_background;
  }
  return f;
}

/// E = -grad(Phi) - (1/c) dA/dt.
inline Vec3 electric_field(const ReferenceFields& f, double c) { return -f.gradPhi - f.dA_dt / c; }

/// Local fields at one point, physical scaling applied.
struct FieldSample {
  Vec3 B, E, A;
  double Phi = 0.0;
  Vec3 b;
  double Bmag = 0.0;
  Vec3 gradBmag;
  Mat3 gradB_tensor;
  Mat3 gradb_tensor;
  Mat3 grad_vE_tensor;
  Mat3 gradA_tensor;
  Vec3 gradPhi;
  double Omega = 0.0;
  Vec3 e1, e2;
};

inline constexpr double kFieldNullThreshold = 1e-10;

/// Right-handed perpendicular pair (e1, e2) with e1 x e2 = b. Built by
/// projecting z out of b, switching to x near the poles.
inline std::pair<Vec3, Vec3> frame(const Vec3& b) {
  if (std::abs(b.norm() - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidArgument, "frame: b is not a unit vector");
  }
  const Vec3 axis = std::abs(b.z()) > 1.0 - 1e-6 ? Vec3::UnitX() : Vec3::UnitZ();
  const Vec3 e1 = (axis - axis.dot(b) * b).normalized();
  return {e1, b.cross(e1)};
}

inline FieldSample sample(const FieldModel& model, const Vec3& r, double t, double eps,
                          const Species& sp = {}) {
  if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "sample: eps must be positive");
  if (!r.allFinite() || !std::isfinite(t)) throw Error(ErrorKind::NonFinite, "sample: non-finite position");

  const ReferenceFields ref = reference_fields(model, r, t);
  const double bref = ref.B.norm();
  if (!(bref >= kFieldNullThreshold)) {
    throw Error(ErrorKind::FieldNull, "|B| below threshold at the requested point");
  }
  const double inv = 1.0 / eps;

  FieldSample s;
  s.B = ref.B * inv;
  s.A = ref.A * inv;
  s.Phi = ref.Phi * inv;
  s.gradPhi = ref.gradPhi * inv;
  s.E = electric_field(ref, sp.c) * inv;
  s.gradB_tensor = ref.gradB * inv;
  s.gradA_tensor = ref.gradA * inv;
  s.Bmag = bref * inv;
  s.b = ref.B / bref;
  s.gradBmag = s.gradB_tensor * s.b;
  s.gradb_tensor = (ref.gradB - (ref.gradB * s.b) * s.b.transpose()) / bref;

  // d_i vE_j with vE = c E x B / |B|^2; static models have grad E = -hess(Phi).
  const Mat3 gradE = -ref.hessPhi * inv;
  const double B2 = s.Bmag * s.Bmag;
  const Vec3 ExB = s.E.cross(s.B);
  for (int i = 0; i < 3; ++i) {
    const Vec3 dExB = Vec3(gradE.row(i)).cross(s.B) + s.E.cross(Vec3(s.gradB_tensor.row(i)));
    s.grad_vE_tensor.row(i) = sp.c * (dExB / B2 - 2.0 * ExB * s.gradBmag(i) / (B2 * s.Bmag)).transpose();
  }

  s.Omega = sp.q * s.Bmag / (sp.m * sp.c);
  std::tie(s.e1, s.e2) = frame(s.b);

  const bool finite = s.B.allFinite() && s.E.allFinite() && s.A.allFinite() && std::isfinite(s.Phi) &&
                      s.gradB_tensor.allFinite() && s.gradA_tensor.allFinite() &&
                      s.gradb_tensor.allFinite() && s.grad_vE_tensor.allFinite();
  if (!finite) throw Error(ErrorKind::NonFinite, "sample: non-finite field component");
  return s;
}

/// Field model plus the ordering parameter and species: everything needed to
/// evaluate physical fields. Immutable and cheap to copy.
struct FieldContext {
  FieldModel model;
  double eps = 0.1;
  Species species{};

  FieldSample at(const Vec3& r, double t) const { return sample(model, r, t, eps, species); }

  /// Physical potentials without the magnetic-null guard.
  ReferenceFields potentials(const Vec3& r, double t) const {
    ReferenceFields f = reference_fields(model, r, t);
    const double inv = 1.0 / eps;
    f.B *= inv;
    f.gradB *= inv;
    f.A *= inv;
    f.gradA *= inv;
    f.Phi *= inv;
    f.gradPhi *= inv;
    f.hessPhi *= inv;
    f.dA_dt *= inv;
    return f;
  }
};

struct ConsistencyReport {
  double curl_residual = 0.0;      ///< max |B - curl_fd(A)|
  double electric_residual = 0.0;  ///< max |E + grad_fd(Phi) + (1/c) d_t A|
  double h = 0.0;
};

inline constexpr double kModelConsistencyTolerance = 1e-4;

/// max |B - curl A| and max |E + grad Phi + (1/c) dA/dt| on the reference
/// fields, central differences of step h (truncation error O(h^2)).
inline ConsistencyReport consistency_residuals(const FieldModel& model, std::span<const Vec3> points, double t,
                                               double h, double c = 1.0) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "verify_model: h must be positive");
  ConsistencyReport report;
  report.h = h;
  for (const Vec3& r : points) {
    const ReferenceFields f = reference_fields(model, r, t);
    Mat3 dA;  // dA(i, j) = d_i A_j
    Vec3 dPhi;
    for (int i = 0; i < 3; ++i) {
      Vec3 step = Vec3::Zero();
      step(i) = h;
      const ReferenceFields fp = reference_fields(model, r + step, t);
      const ReferenceFields fm = reference_fields(model, r - step, t);
      dA.row(i) = ((fp.A - fm.A) / (2.0 * h)).transpose();
      dPhi(i) = (fp.Phi - fm.Phi) / (2.0 * h);
    }
    const Vec3 curl(dA(1, 2) - dA(2, 1), dA(2, 0) - dA(0, 2), dA(0, 1) - dA(1, 0));
    const Vec3 dAdt =
        (reference_fields(model, r, t + h).A - reference_fields(model, r, t - h).A) / (2.0 * h);
    report.curl_residual = std::max(report.curl_residual, (f.B - curl).norm());
    report.electric_residual =
        std::max(report.electric_residual, (electric_field(f, c) + dPhi + dAdt / c).norm());
  }
  return report;
}

/// consistency_residuals, throwing InconsistentModel above tolerance.
inline ConsistencyReport verify_model(const FieldModel& model, std::span<const Vec3> points, double t,
                                      double h, double c = 1.0) {
  const ConsistencyReport report = consistency_residuals(model, points, t, h, c);
  if (!(std::max(report.curl_residual, report.electric_residual) <= kModelConsistencyTolerance)) {
    throw Error(ErrorKind::InconsistentModel,
                std::string(to_string(model.kind())) + ": potentials do not reproduce the fields");
  }
  return report;
}

}  // namespace gcanon
