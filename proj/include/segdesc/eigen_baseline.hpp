#pragma once

#include <array>

#include "segdesc/geometry.hpp"

namespace segdesc {

/// Hand-crafted shape features from the sorted eigenvalues of a segment's
/// point covariance; the comparison baseline for the learned descriptors.
struct EigenDescriptor {
  static constexpr int kDim = 7;
  // linearity, planarity, scattering, omnivariance, anisotropy,
  // eigenentropy, change-of-curvature
  std::array<double, kDim> values{};

  double linearity() const { return values[0]; }
  double planarity() const { return values[1]; }
  double scattering() const { return values[2]; }
  double omnivariance() const { return values[3]; }
  double anisotropy() const { return values[4]; }
  double eigenentropy() const { return values[5]; }
  double change_of_curvature() const { return values[6]; }
};

/// Eigenvalues of a symmetric 3x3 matrix packed as (xx, xy, xz, yy, yz, zz),
/// sorted descending. Analytic solution with a cyclic-Jacobi fallback at
/// residual tolerance 1e-12.
std::array<double, 3> symmetric3x3_eigenvalues(
    const std::array<double, 6>& packed);

/// Raw eigenvalues (meters squared) of the point covariance about the
/// centroid, sorted descending. Throws DataError("degenerate-segment") for
/// fewer than 4 points or zero total variance.
std::array<double, 3> covariance_eigenvalues(const Segment& segment);

/// Features computed from eigenvalues normalized to sum 1.
EigenDescriptor eigen_descriptor(const Segment& segment);

}  // namespace segdesc
