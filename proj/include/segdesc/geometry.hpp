#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace segdesc {

/// Cartesian coordinates in meters.
struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

Point operator+(const Point& a, const Point& b);
Point operator-(const Point& a, const Point& b);
Point operator*(const Point& a, double s);
bool is_finite(const Point& p);
double distance(const Point& a, const Point& b);
double squared_distance(const Point& a, const Point& b);
/// Distance in the xy plane only.
double horizontal_distance(const Point& a, const Point& b);

/// A contiguous cluster of points from one frame together with the sensor
/// origin that observed it. Coordinates are double precision throughout;
/// single precision only appears at the voxel/tensor level.
struct Segment {
  std::int64_t segment_id = 0;
  std::vector<Point> points;
  Point observer_position;
  int frame_index = 0;
  std::string run_id;
};

/// Segments across frames that belong to the same physical surface; the
/// ground-truth matching unit.
struct SegmentGroup {
  std::int64_t group_id = 0;
  std::vector<std::int64_t> member_ids;
};

/// Rotation about the world z axis, radians.
struct RigidZRotation {
  double angle = 0.0;
};

/// Arithmetic mean of the segment's points. Throws on an empty segment.
Point centroid(const Segment& segment);

/// Maps every point p to pivot + R_z(angle) * (p - pivot).
std::vector<Point> rotate_about_z(const std::vector<Point>& points,
                                  RigidZRotation r, const Point& pivot);

Point rotate_point_about_z(const Point& p, RigidZRotation r, const Point& pivot);

}  // namespace segdesc
