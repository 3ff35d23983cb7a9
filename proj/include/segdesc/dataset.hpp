#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "segdesc/geometry.hpp"

namespace segdesc {

/// Desk-scale stand-in for a segmented LiDAR drive: each group is one
/// primitive instance observed from several viewpoints with back-face
/// culling, sector occlusion and additive noise.
struct SyntheticSpec {
  int n_groups = 300;
  int views_per_group = 8;
  // primitive mix weights
  double box_weight = 1.0;
  double cylinder_weight = 1.0;
  double l_shape_weight = 1.0;
  double wall_weight = 1.0;
  // instance extents, meters
  double size_min = 0.8;
  double size_max = 4.0;
  double occlusion_fraction = 0.3;     // [0, 0.6]
  double view_angle_range = 2.0 * M_PI;  // radians
  double point_density = 140.0;        // points per square meter
  double noise_sigma = 0.02;           // meters
  int min_view_points = 40;            // views below this are dropped
  std::uint64_t seed = 1;
  std::string run_id = "synth";

  void validate() const;  // throws UsageError naming the offending field
};

struct GeneratedData {
  std::vector<Segment> segments;
  std::vector<SegmentGroup> groups;
  int dropped_views = 0;
  int dropped_groups = 0;
};

/// Deterministic per seed: per-group and per-view streams are derived from
/// the spec seed, so regeneration is byte-identical.
GeneratedData generate_synthetic(const SyntheticSpec& spec);

/// Stream tag for the per-view occlusion sector start angle:
/// Engine(mix(seed, group, view, kOcclusionStreamTag)).uniform(0, 2*pi).
inline constexpr std::uint64_t kOcclusionStreamTag = 0x0CC1;

/// True when the point's azimuth about the center falls inside the sector
/// [start, start + fraction * 2*pi), wrapping at 2*pi.
bool in_occlusion_sector(const Point& p, const Point& center, double start,
                         double fraction);

}  // namespace segdesc
