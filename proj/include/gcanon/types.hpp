#pragma once

#include <Eigen/Dense>

namespace gcanon {

using Vec3 = Eigen::Vector3d;

/// Gradient tensors are stored as G(i, j) = d_i X_j.
using Mat3 = Eigen::Matrix3d;

/// Normalized Gaussian-style units: m = q = c = 1 unless configured.
struct Species {
  double m = 1.0;
  double q = 1.0;
  double c = 1.0;
};

}  // namespace gcanon
