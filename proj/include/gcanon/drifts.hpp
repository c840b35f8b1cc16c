#pragma once

#include "gcanon/fields.hpp"
#include "gcanon/types.hpp"

namespace gcanon {

/// Electric drift c E x b / |B|.
inline Vec3 v_E(const FieldSample& f, const Species& sp) { return sp.c * f.E.cross(f.b) / f.Bmag; }

/// First-order drift
///   (b/Omega) x { (mu/m) grad|B| + (u b + vE) . (u grad b + grad vE) },
/// with the vector-tensor product contracted on the derivative index:
/// (V . G)_j = V_i d_i W_j. Covers grad-B, curvature and the
/// convective electric-drift terms.
inline Vec3 v_D(const FieldSample& f, double u, double mu, const Species& sp) {
  const Vec3 carrier = u * f.b + v_E(f, sp);
  const Mat3 shear = u * f.gradb_tensor + f.grad_vE_tensor;
  const Vec3 force = (mu / sp.m) * f.gradBmag + shear.transpose() * carrier;
  return f.b.cross(force) / f.Omega;
}

}  // namespace gcanon
