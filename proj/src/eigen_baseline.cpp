#include "segdesc/eigen_baseline.hpp"

#include <algorithm>
#include <cmath>

#include "segdesc/error.hpp"

namespace segdesc {

namespace {

// Characteristic-polynomial residual |p(x)| / scale^3 for the packed matrix.
double char_poly_residual(const std::array<double, 6>& a,
                          const std::array<double, 3>& eig) {
  const double xx = a[0], xy = a[1], xz = a[2], yy = a[3], yz = a[4], zz = a[5];
  const double c2 = -(xx + yy + zz);
  const double c1 = xx * yy + xx * zz + yy * zz - xy * xy - xz * xz - yz * yz;
  const double c0 = -(xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) +
                      xz * (xy * yz - yy * xz));
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  double worst = 0.0;
  for (double x : eig) {
    const double p = ((x + c2) * x + c1) * x + c0;
    worst = std::max(worst, std::abs(p) / (scale * scale * scale));
  }
  return worst;
}

std::array<double, 3> jacobi_eigenvalues(const std::array<double, 6>& packed) {
  double m[3][3] = {{packed[0], packed[1], packed[2]},
                    {packed[1], packed[3], packed[4]},
                    {packed[2], packed[4], packed[5]}};
  double scale = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) scale = std::max(scale, std::abs(m[i][j]));
  }
  if (scale == 0.0) return {0.0, 0.0, 0.0};

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = std::abs(m[0][1]) + std::abs(m[0][2]) + std::abs(m[1][2]);
    if (off <= 1e-12 * scale) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(m[p][q]) <= 1e-300) continue;
        const double theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        double rot[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
        rot[p][p] = c;
        rot[q][q] = c;
        rot[p][q] = s;
        rot[q][p] = -s;
        double tmp[3][3];
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) {
            tmp[i][j] = rot[0][i] * m[0][j] + rot[1][i] * m[1][j] +
                        rot[2][i] * m[2][j];
          }
        }
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) {
            m[i][j] = tmp[i][0] * rot[0][j] + tmp[i][1] * rot[1][j] +
                      tmp[i][2] * rot[2][j];
          }
        }
      }
    }
  }
  std::array<double, 3> eig{m[0][0], m[1][1], m[2][2]};
  std::sort(eig.begin(), eig.end(), std::greater<double>());
  return eig;
}

}  // namespace

std::array<double, 3> symmetric3x3_eigenvalues(
    const std::array<double, 6>& packed) {
  const double xx = packed[0], xy = packed[1], xz = packed[2];
  const double yy = packed[3], yz = packed[4], zz = packed[5];

  // Trigonometric solution for the symmetric 3x3 eigenproblem.
  const double q = (xx + yy + zz) / 3.0;
  const double dxx = xx - q, dyy = yy - q, dzz = zz - q;
  const double p2 = dxx * dxx + dyy * dyy + dzz * dzz +
                    2.0 * (xy * xy + xz * xz + yz * yz);
  if (p2 <= 0.0) return {q, q, q};
  const double p = std::sqrt(p2 / 6.0);

  // r = det((A - qI) / p) / 2, clamped against rounding
  const double b00 = dxx / p, b01 = xy / p, b02 = xz / p;
  const double b11 = dyy / p, b12 = yz / p, b22 = dzz / p;
  double r = (b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) +
              b02 * (b01 * b12 - b11 * b02)) /
             2.0;
  r = std::clamp(r, -1.0, 1.0);

  const double phi = std::acos(r) / 3.0;
  std::array<double, 3> eig;
  eig[0] = q + 2.0 * p * std::cos(phi);
  eig[2] = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
  eig[1] = 3.0 * q - eig[0] - eig[2];
  std::sort(eig.begin(), eig.end(), std::greater<double>());

  if (char_poly_residual(packed, eig) > 1e-12) {
    return jacobi_eigenvalues(packed);
  }
  return eig;
}

std::array<double, 3> covariance_eigenvalues(const Segment& segment) {
  if (segment.points.size() < 4) {
    throw DataError("degenerate-segment: fewer than 4 points (segment " +
                    std::to_string(segment.segment_id) + ")");
  }
  const Point c = centroid(segment);
  double xx = 0, xy = 0, xz = 0, yy = 0, yz = 0, zz = 0;
  for (const Point& p : segment.points) {
    const double dx = p.x - c.x, dy = p.y - c.y, dz = p.z - c.z;
    xx += dx * dx;
    xy += dx * dy;
    xz += dx * dz;
    yy += dy * dy;
    yz += dy * dz;
    zz += dz * dz;
  }
  const double inv_n = 1.0 / static_cast<double>(segment.points.size());
  std::array<double, 6> cov{xx * inv_n, xy * inv_n, xz * inv_n,
                            yy * inv_n, yz * inv_n, zz * inv_n};
  if (cov[0] + cov[3] + cov[5] <= 0.0) {
    throw DataError("degenerate-segment: zero total variance (segment " +
                    std::to_string(segment.segment_id) + ")");
  }
  std::array<double, 3> eig = symmetric3x3_eigenvalues(cov);
  // Covariances are positive semidefinite; clip rounding noise.
  for (double& e : eig) e = std::max(0.0, e);
  return eig;
}

EigenDescriptor eigen_descriptor(const Segment& segment) {
  std::array<double, 3> eig = covariance_eigenvalues(segment);
  const double total = eig[0] + eig[1] + eig[2];
  const double l1 = eig[0] / total, l2 = eig[1] / total, l3 = eig[2] / total;

  EigenDescriptor d;
  d.values[0] = (l1 - l2) / l1;
  d.values[1] = (l2 - l3) / l1;
  d.values[2] = l3 / l1;
  d.values[3] = std::cbrt(l1 * l2 * l3);
  d.values[4] = (l1 - l3) / l1;
  d.values[5] = -(l1 * std::log(l1 + 1e-12) + l2 * std::log(l2 + 1e-12) +
                  l3 * std::log(l3 + 1e-12));
  d.values[6] = l3 / (l1 + l2 + l3);
  return d;
}

}  // namespace segdesc
