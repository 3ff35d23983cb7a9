#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "segdesc/geometry.hpp"

namespace segdesc {

struct VoxelGridSpec {
  std::array<int, 3> dims{38, 38, 18};
  double voxel_size = 0.2;  // meters

  int cell_count() const { return dims[0] * dims[1] * dims[2]; }
  /// Linear index of cell (ix, iy, iz), x-major.
  int cell_index(int ix, int iy, int iz) const {
    return (ix * dims[1] + iy) * dims[2] + iz;
  }
};

enum class VoxelStage { binary, normalized };

/// Dense voxel occupancy of one segment. Binary stage holds {0,1} values;
/// the normalized stage holds per-cell standardized reals.
struct VoxelizedSegment {
  std::int64_t segment_id = 0;
  std::array<int, 3> dims{0, 0, 0};
  VoxelStage stage = VoxelStage::binary;
  int occupied_count = 0;
  std::vector<float> values;
};

/// Per-cell mean and population standard deviation over a training set.
struct NormalizationStats {
  std::array<int, 3> dims{0, 0, 0};
  double epsilon = 1e-8;
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct PreprocessConfig {
  double d_same = 1.5;        // group-chaining centroid threshold, meters
  int th_h = 50;              // Hamming dedup threshold, strict "<"
  double cluster_radius = 0.2;
  int min_cluster_points = 100;
  std::vector<double> augmentation_angles;  // radians
  double norm_epsilon = 1e-8;

  PreprocessConfig();
};

/// Connected components of the graph linking points within cluster_radius.
/// Components smaller than min_cluster_points are dropped. Returned segments
/// carry the provided observer position and sequential ids from
/// first_segment_id, ordered by the smallest input point index they contain.
std::vector<Segment> euclidean_cluster(const std::vector<Point>& points,
                                       const Point& observer_position,
                                       const PreprocessConfig& cfg,
                                       int frame_index = 0,
                                       const std::string& run_id = {},
                                       std::int64_t first_segment_id = 0);

/// Chains segments across frames: a segment joins the lowest-id group that
/// has a member from an earlier frame with centroid closer than d_same,
/// otherwise founds a new group. Input must be sorted by frame_index.
std::vector<SegmentGroup> build_groups(const std::vector<Segment>& segments,
                                       const PreprocessConfig& cfg);

/// Rotates points and observer about the z axis through the centroid so the
/// observer lands on the positive x side of the centroid (y offset zero).
/// Throws DataError("alignment-undefined") when the observer sits within
/// 1e-6 m horizontally of the centroid.
Segment align_segment(const Segment& segment);

/// One rotated copy per angle about the z axis through the centroid. Copies
/// keep the input's segment_id; callers assign fresh ids and extend group
/// membership.
std::vector<Segment> augment_rotations(const Segment& segment,
                                       const std::vector<double>& angles);

/// Bins points into a grid whose center cell holds the segment centroid.
/// Points outside the grid are discarded; throws DataError
/// ("empty-voxelization") when nothing remains.
VoxelizedSegment voxelize(const Segment& segment, const VoxelGridSpec& spec);

/// Count of cells where two binary grids differ.
int hamming_distance(const VoxelizedSegment& a, const VoxelizedSegment& b);

/// Greedy scan in ascending segment_id order, dropping members whose Hamming
/// distance to an already kept member is strictly below th_h.
std::vector<VoxelizedSegment> hamming_dedup(
    const std::vector<VoxelizedSegment>& group_members, int th_h);

NormalizationStats fit_normalizer(const std::vector<VoxelizedSegment>& train,
                                  double epsilon = 1e-8);

VoxelizedSegment apply_normalizer(const NormalizationStats& stats,
                                  const VoxelizedSegment& v);

/// Fits per-cell stats on the training set only and applies them to both
/// lists.
std::pair<NormalizationStats,
          std::pair<std::vector<VoxelizedSegment>, std::vector<VoxelizedSegment>>>
fit_and_apply_normalizer(const std::vector<VoxelizedSegment>& train,
                         const std::vector<VoxelizedSegment>& rest,
                         double epsilon = 1e-8);

}  // namespace segdesc
