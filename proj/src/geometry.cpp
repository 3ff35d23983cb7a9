#include "segdesc/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace segdesc {

Point operator+(const Point& a, const Point& b) {
  return {a.x + b.x, a.y + b.y, a.z + b.z};
}

Point operator-(const Point& a, const Point& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}

Point operator*(const Point& a, double s) { return {a.x * s, a.y * s, a.z * s}; }

bool is_finite(const Point& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

double squared_distance(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

double distance(const Point& a, const Point& b) {
  return std::sqrt(squared_distance(a, b));
}

double horizontal_distance(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

Point centroid(const Segment& segment) {
  if (segment.points.empty()) {
    throw std::invalid_argument("centroid: segment has no points");
  }
  double sx = 0.0, sy = 0.0, sz = 0.0;
  for (const Point& p : segment.points) {
    sx += p.x;
    sy += p.y;
    sz += p.z;
  }
  const double n = static_cast<double>(segment.points.size());
  return {sx / n, sy / n, sz / n};
}

Point rotate_point_about_z(const Point& p, RigidZRotation r, const Point& pivot) {
  if (r.angle == 0.0) return p;
  const double c = std::cos(r.angle);
  const double s = std::sin(r.angle);
  const double dx = p.x - pivot.x;
  const double dy = p.y - pivot.y;
  return {pivot.x + c * dx - s * dy, pivot.y + s * dx + c * dy, p.z};
}

std::vector<Point> rotate_about_z(const std::vector<Point>& points,
                                  RigidZRotation r, const Point& pivot) {
  if (r.angle == 0.0) return points;  // exact identity
  std::vector<Point> out;
  out.reserve(points.size());
  const double c = std::cos(r.angle);
  const double s = std::sin(r.angle);
  for (const Point& p : points) {
    const double dx = p.x - pivot.x;
    const double dy = p.y - pivot.y;
    out.push_back({pivot.x + c * dx - s * dy, pivot.y + s * dx + c * dy, p.z});
  }
  return out;
}

}  // namespace segdesc
